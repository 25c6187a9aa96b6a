#include "regionlm/region_model.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include <json.hpp>

#include "regionlm/rng.hpp"

namespace regionlm {

EncoderMode encoder_mode_from_string(const std::string& s) {
    if (s == "local_only") return EncoderMode::LocalOnly;
    if (s == "global_plus_crop") return EncoderMode::GlobalPlusCrop;
    if (s == "roi_replay") return EncoderMode::RoiReplay;
    throw std::invalid_argument("unknown encoder mode: " + s);
}

std::string encoder_mode_to_string(EncoderMode mode) {
    switch (mode) {
        case EncoderMode::LocalOnly: return "local_only";
        case EncoderMode::GlobalPlusCrop: return "global_plus_crop";
        case EncoderMode::RoiReplay: return "roi_replay";
    }
    throw std::logic_error("unreachable");
}

std::string segment_kind_to_string(SegmentKind k) {
    switch (k) {
        case SegmentKind::Global: return "global";
        case SegmentKind::Tile: return "tile";
        case SegmentKind::PromptOpen: return "prompt_open";
        case SegmentKind::PromptTokens: return "prompt_tokens";
        case SegmentKind::PromptClose: return "prompt_close";
        case SegmentKind::Instruction: return "instruction";
    }
    throw std::logic_error("unreachable");
}

void ModelConfig::validate() const {
    vit.validate();
    if (tile_side % vit.patch_size != 0) {
        throw std::invalid_argument("ModelConfig: tile_side must divide by patch_size");
    }
    if (decoder.vision_dim != vit.embed_dim) {
        throw std::invalid_argument("ModelConfig: decoder.vision_dim must equal vit.embed_dim");
    }
    if (tile_budget < 1) throw std::invalid_argument("ModelConfig: tile_budget must be >= 1");
}

ModelWeights init_model(const ModelConfig& cfg, uint64_t seed, bool zero_init_prompt) {
    cfg.validate();
    ModelWeights w;
    w.prompt_encoder = init_prompt_encoder(cfg.vit.patch_size, cfg.prompt_hidden,
                                           cfg.vit.embed_dim, seed * 3 + 1, zero_init_prompt);
    w.vit = init_vit(cfg.vit, 3, seed * 3 + 2);
    w.decoder = init_decoder(cfg.decoder, seed * 3 + 3);
    return w;
}

void save_model(const std::string& path, const ModelWeights& w) {
    WeightMap m = vit_to_sections(w.vit, "vit");
    const WeightMap dec = decoder_to_sections(w.decoder, "decoder");
    m.insert(dec.begin(), dec.end());
    m["prompt.conv1_w"] = w.prompt_encoder.conv1_w;
    m["prompt.conv1_b"] = w.prompt_encoder.conv1_b;
    m["prompt.conv2_w"] = w.prompt_encoder.conv2_w;
    m["prompt.conv2_b"] = w.prompt_encoder.conv2_b;
    m["prompt.meta"] = Tensor({3}, {static_cast<double>(w.prompt_encoder.stride1),
                                    static_cast<double>(w.prompt_encoder.stride2),
                                    w.prompt_encoder.zero_init ? 1.0 : 0.0});
    save_weights(path, m);
}

ModelWeights load_model(const std::string& path, const ModelConfig& cfg) {
    const WeightMap m = load_weights(path);
    const auto need = [&m](const std::string& name) -> const Tensor& {
        const auto it = m.find(name);
        if (it == m.end()) throw std::runtime_error("model bundle: missing section " + name);
        return it->second;
    };
    ModelWeights w;
    w.vit = vit_from_sections(m, "vit", cfg.vit);
    w.decoder = decoder_from_sections(m, "decoder", cfg.decoder);
    w.prompt_encoder.conv1_w = need("prompt.conv1_w");
    w.prompt_encoder.conv1_b = need("prompt.conv1_b");
    w.prompt_encoder.conv2_w = need("prompt.conv2_w");
    w.prompt_encoder.conv2_b = need("prompt.conv2_b");
    const Tensor& meta = need("prompt.meta");
    w.prompt_encoder.stride1 = static_cast<int64_t>(meta[0]);
    w.prompt_encoder.stride2 = static_cast<int64_t>(meta[1]);
    w.prompt_encoder.zero_init = meta[2] != 0.0;
    return w;
}

namespace {

void validate_request(const Request& req) {
    if (req.image.rank() != 3 || req.image.dim(0) != 3) {
        throw std::invalid_argument("request: image must be [3xHxW], got " +
                                    req.image.shape_str());
    }
    if (req.prompts.size() < 1) throw std::invalid_argument("request: at least one prompt required");
    if (req.prompts.size() > kMaxPromptSlots) {
        throw std::invalid_argument("request: too many prompts (max " +
                                    std::to_string(kMaxPromptSlots) + ")");
    }
    for (int64_t i = 0; i < req.prompts.size(); ++i) {
        const MaskImage& m = req.prompts.masks[static_cast<size_t>(i)];
        if (m.height != req.image.dim(1) || m.width != req.image.dim(2)) {
            throw std::invalid_argument("request: mask " + std::to_string(i) +
                                        " dims do not match the image");
        }
        if (m.empty_mask()) {
            throw std::invalid_argument("request: empty mask at prompt " + std::to_string(i));
        }
    }
}

std::vector<double> token_row(const Tensor& tokens, int64_t row) {
    std::vector<double> v(static_cast<size_t>(tokens.dim(1)));
    for (int64_t d = 0; d < tokens.dim(1); ++d) v[static_cast<size_t>(d)] = tokens.at(row, d);
    return v;
}

// [D x p x p] map -> row-major token rows
void append_map_tokens(std::vector<SequenceItem>& items, const Tensor& map) {
    const int64_t D = map.dim(0), pr = map.dim(1), pc = map.dim(2);
    for (int64_t y = 0; y < pr; ++y) {
        for (int64_t x = 0; x < pc; ++x) {
            std::vector<double> v(static_cast<size_t>(D));
            for (int64_t d = 0; d < D; ++d) v[static_cast<size_t>(d)] = map.at(d, y, x);
            items.push_back(SequenceItem::from_vector(std::move(v)));
        }
    }
}

// Per-prompt crop encoding used by LocalOnly and GlobalPlusCrop: the bbox
// crop resized to tile_side, encoded with the shared backbone and the
// prompt's own mask crop.
Tensor encode_prompt_crop(const Request& req, int64_t prompt_index, const ModelConfig& cfg,
                          const ModelWeights& w) {
    const MaskImage& mask = req.prompts.masks[static_cast<size_t>(prompt_index)];
    const BBox box = mask_to_bbox(mask);
    const Tensor crop = resize_bilinear(crop_image(req.image, box), cfg.tile_side, cfg.tile_side);
    const MaskImage mask_crop =
        resize_mask_nearest(crop_mask(mask, box), cfg.tile_side, cfg.tile_side);
    const int64_t p = cfg.tile_side / cfg.vit.patch_size;
    const Tensor emb = encode_mask(mask_crop, w.prompt_encoder, p, p);
    const Tensor map = encode_single_view(crop, emb, cfg.vit, w.vit);
    // flatten back to tokens
    Tensor tokens({p * p, cfg.vit.embed_dim});
    for (int64_t y = 0; y < p; ++y)
        for (int64_t x = 0; x < p; ++x)
            for (int64_t d = 0; d < cfg.vit.embed_dim; ++d)
                tokens.at(y * p + x, d) = map.at(d, y, x);
    return tokens;
}

struct GlobalPass {
    TilePlan plan;
    std::vector<FeatureMap> maps;  // global first, then tiles
};

GlobalPass run_global_pass(const Request& req, const ModelConfig& cfg, const ModelWeights& w) {
    GlobalPass gp;
    gp.plan = plan_tiles(req.image.dim(1), req.image.dim(2), cfg.tile_side, cfg.tile_budget);
    const TileBatch batch = apply_plan(req.image, req.prompts.union_mask(), gp.plan);
    const int64_t p = cfg.tile_side / cfg.vit.patch_size;

    std::vector<Tensor> mask_embs;
    mask_embs.push_back(encode_mask(batch.global_mask, w.prompt_encoder, p, p));
    for (const auto& tm : batch.tile_masks) {
        mask_embs.push_back(encode_mask(tm, w.prompt_encoder, p, p));
    }
    gp.maps = encode_views(batch, mask_embs, cfg.vit, w.vit);
    return gp;
}

Tensor replay_source_map(const GlobalPass& gp, const ModelConfig& cfg) {
    if (cfg.replay_source == ReplaySource::Thumbnail) return gp.maps[0].features;
    std::vector<Tensor> tile_maps;
    for (size_t i = 1; i < gp.maps.size(); ++i) tile_maps.push_back(gp.maps[i].features);
    return stitch_features(tile_maps, gp.plan);
}

}  // namespace

EncodedPrompts encode_prompts(const Request& req, const ModelConfig& cfg, const ModelWeights& w) {
    validate_request(req);
    EncodedPrompts out;
    if (req.mode == EncoderMode::LocalOnly) {
        out.plan = plan_tiles(req.image.dim(1), req.image.dim(2), cfg.tile_side, cfg.tile_budget);
        for (int64_t i = 0; i < req.prompts.size(); ++i) {
            out.prompt_tokens.push_back(encode_prompt_crop(req, i, cfg, w));
        }
        return out;
    }
    const GlobalPass gp = run_global_pass(req, cfg, w);
    out.plan = gp.plan;
    if (req.mode == EncoderMode::GlobalPlusCrop) {
        for (int64_t i = 0; i < req.prompts.size(); ++i) {
            out.prompt_tokens.push_back(encode_prompt_crop(req, i, cfg, w));
        }
        return out;
    }
    const Tensor source = replay_source_map(gp, cfg);
    const int64_t canvas_h =
        cfg.replay_source == ReplaySource::Thumbnail ? cfg.tile_side : gp.plan.canvas_h;
    const int64_t canvas_w =
        cfg.replay_source == ReplaySource::Thumbnail ? cfg.tile_side : gp.plan.canvas_w;
    for (int64_t i = 0; i < req.prompts.size(); ++i) {
        const BBox box = mask_to_bbox(req.prompts.masks[static_cast<size_t>(i)]);
        const RoiRect rect = map_bbox_to_feature_coords(box, req.image.dim(1), req.image.dim(2),
                                                        canvas_h, canvas_w, cfg.vit.patch_size);
        const Tensor pooled = roi_align(source, rect, cfg.roi);
        Tensor tokens({cfg.roi.bins_r * cfg.roi.bins_c, pooled.dim(0)});
        for (int64_t r = 0; r < cfg.roi.bins_r; ++r)
            for (int64_t c = 0; c < cfg.roi.bins_c; ++c)
                for (int64_t d = 0; d < pooled.dim(0); ++d)
                    tokens.at(r * cfg.roi.bins_c + c, d) = pooled.at(d, r, c);
        out.prompt_tokens.push_back(std::move(tokens));
    }
    return out;
}

ModelInputSequence assemble(const Request& req, const ModelConfig& cfg, const ModelWeights& w) {
    cfg.validate();
    validate_request(req);

    ModelInputSequence seq;
    const auto mark = [&seq](SegmentKind kind, int64_t index, int64_t begin) {
        seq.segments.push_back(Segment{kind, index, begin, seq.length()});
    };

    const bool has_global = req.mode != EncoderMode::LocalOnly;
    if (has_global) {
        const GlobalPass gp = run_global_pass(req, cfg, w);
        int64_t begin = seq.length();
        append_map_tokens(seq.items, gp.maps[0].features);
        mark(SegmentKind::Global, -1, begin);
        for (size_t t = 1; t < gp.maps.size(); ++t) {
            begin = seq.length();
            append_map_tokens(seq.items, gp.maps[t].features);
            mark(SegmentKind::Tile, gp.maps[t].view_id, begin);
        }
        if (req.mode == EncoderMode::RoiReplay) {
            const Tensor source = replay_source_map(gp, cfg);
            const int64_t canvas_h =
                cfg.replay_source == ReplaySource::Thumbnail ? cfg.tile_side : gp.plan.canvas_h;
            const int64_t canvas_w =
                cfg.replay_source == ReplaySource::Thumbnail ? cfg.tile_side : gp.plan.canvas_w;
            for (int64_t i = 0; i < req.prompts.size(); ++i) {
                begin = seq.length();
                seq.items.push_back(SequenceItem::from_token(prompt_open_token(i)));
                mark(SegmentKind::PromptOpen, i, begin);

                const BBox box = mask_to_bbox(req.prompts.masks[static_cast<size_t>(i)]);
                const RoiRect rect =
                    map_bbox_to_feature_coords(box, req.image.dim(1), req.image.dim(2), canvas_h,
                                               canvas_w, cfg.vit.patch_size);
                const Tensor pooled = roi_align(source, rect, cfg.roi);
                begin = seq.length();
                append_map_tokens(seq.items, pooled);
                mark(SegmentKind::PromptTokens, i, begin);

                begin = seq.length();
                seq.items.push_back(SequenceItem::from_token(prompt_close_token(i)));
                mark(SegmentKind::PromptClose, i, begin);
            }
        }
    }
    if (req.mode != EncoderMode::RoiReplay) {
        for (int64_t i = 0; i < req.prompts.size(); ++i) {
            int64_t begin = seq.length();
            seq.items.push_back(SequenceItem::from_token(prompt_open_token(i)));
            mark(SegmentKind::PromptOpen, i, begin);

            const Tensor tokens = encode_prompt_crop(req, i, cfg, w);
            begin = seq.length();
            for (int64_t r = 0; r < tokens.dim(0); ++r) {
                seq.items.push_back(SequenceItem::from_vector(token_row(tokens, r)));
            }
            mark(SegmentKind::PromptTokens, i, begin);

            begin = seq.length();
            seq.items.push_back(SequenceItem::from_token(prompt_close_token(i)));
            mark(SegmentKind::PromptClose, i, begin);
        }
    }

    const std::vector<int64_t> instr = tokenize(req.instruction, req.prompts.size());
    const int64_t begin = seq.length();
    for (int64_t t : instr) seq.items.push_back(SequenceItem::from_token(t));
    mark(SegmentKind::Instruction, -1, begin);
    return seq;
}

Tensor model_forward(const ModelInputSequence& seq, const ModelConfig& cfg,
                     const ModelWeights& w) {
    if (seq.items.empty()) throw std::invalid_argument("model_forward: empty sequence");
    return decoder_forward(seq.items, cfg.decoder, w.decoder);
}

RespondResult respond(const Request& req, const ModelConfig& cfg, const ModelWeights& w,
                      int64_t max_tokens) {
    const ModelInputSequence seq = assemble(req, cfg, w);
    const std::vector<int64_t> generated = greedy_decode(seq.items, cfg.decoder, w.decoder,
                                                         max_tokens);
    RespondResult result;
    result.text = detokenize(generated);
    result.segments = seq.segments;
    result.prefix_tokens = seq.length();
    result.generated_tokens = static_cast<int64_t>(generated.size());
    return result;
}

std::vector<int64_t> sample_frames(int64_t frame_count, int64_t target) {
    if (frame_count < 1) throw std::invalid_argument("sample_frames: frame_count must be >= 1");
    if (target < 1) throw std::invalid_argument("sample_frames: target must be >= 1");
    std::vector<int64_t> indices;
    if (frame_count <= target) {
        for (int64_t i = 0; i < frame_count; ++i) indices.push_back(i);
        return indices;
    }
    for (int64_t i = 0; i < target; ++i) {
        const double t = target == 1 ? 0.0
                                     : static_cast<double>(i) * static_cast<double>(frame_count - 1) /
                                           static_cast<double>(target - 1);
        const int64_t idx = static_cast<int64_t>(std::llround(t));
        if (indices.empty() || indices.back() != idx) indices.push_back(idx);
    }
    return indices;
}

Request load_request_json(const std::string& json_text, const std::string& base_dir) {
    const nlohmann::json j = nlohmann::json::parse(json_text);
    Request req;
    const std::filesystem::path base(base_dir);
    req.image = load_image_png((base / j.at("image_path").get<std::string>()).string());
    for (const auto& m : j.at("masks")) {
        const std::string s = m.get<std::string>();
        if (s.find(';') != std::string::npos) {
            req.prompts.masks.push_back(mask_from_rle(s));
        } else {
            req.prompts.masks.push_back(load_mask_png((base / s).string()));
        }
    }
    req.instruction = j.at("instruction").get<std::string>();
    req.mode = j.contains("mode") ? encoder_mode_from_string(j.at("mode").get<std::string>())
                                  : EncoderMode::RoiReplay;
    return req;
}

std::string respond_result_to_json(const RespondResult& result) {
    nlohmann::json j;
    j["text"] = result.text;
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : result.segments) {
        segs.push_back({{"kind", segment_kind_to_string(s.kind)},
                        {"index", s.index},
                        {"begin", s.begin},
                        {"end", s.end}});
    }
    j["segments"] = segs;
    j["token_counts"] = {{"prefix", result.prefix_tokens},
                         {"generated", result.generated_tokens}};
    // byte-level decoder output may not be valid UTF-8
    return j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace regionlm
