// regionlm command-line entry point. Exit codes: 0 success, 1 check or
// tolerance failure, 2 usage/input error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "regionlm/eval.hpp"
#include "regionlm/gradcheck.hpp"
#include "regionlm/image.hpp"
#include "regionlm/judge_client.hpp"
#include "regionlm/pipeline.hpp"
#include "regionlm/region_model.hpp"

namespace {

using namespace regionlm;

struct CommonOpts {
    uint64_t seed = 42;
    std::string config_path;
    int verbosity = 0;
    std::string output_path;
};

std::map<std::string, std::string> maybe_config(const CommonOpts& common) {
    if (common.config_path.empty()) return {};
    return load_kv_config(common.config_path);
}

void emit(const CommonOpts& common, const std::string& text) {
    if (common.output_path.empty()) {
        std::cout << text << "\n";
        return;
    }
    std::ofstream os(common.output_path);
    if (!os) throw std::runtime_error("cannot write output: " + common.output_path);
    os << text << "\n";
}

// Desk-scale defaults; the config file can override the geometry knobs.
ModelConfig model_config_from(const std::map<std::string, std::string>& kv) {
    ModelConfig cfg;
    const auto get_int = [&kv](const char* key, int64_t fallback) {
        const auto it = kv.find(key);
        return it == kv.end() ? fallback : std::stoll(it->second);
    };
    cfg.vit.patch_size = get_int("patch_size", cfg.vit.patch_size);
    cfg.vit.embed_dim = get_int("embed_dim", cfg.vit.embed_dim);
    cfg.vit.depth = get_int("depth", cfg.vit.depth);
    cfg.vit.heads = get_int("heads", cfg.vit.heads);
    cfg.tile_side = get_int("tile_side", cfg.tile_side);
    cfg.tile_budget = get_int("max_num_tiles", cfg.tile_budget);
    cfg.roi.bins_r = get_int("roi_bins", cfg.roi.bins_r);
    cfg.roi.bins_c = cfg.roi.bins_r;
    cfg.roi.sampling_ratio = get_int("roi_sampling_ratio", cfg.roi.sampling_ratio);
    cfg.decoder.d_model = get_int("decoder_dim", cfg.decoder.d_model);
    cfg.decoder.depth = get_int("decoder_depth", cfg.decoder.depth);
    cfg.decoder.heads = get_int("decoder_heads", cfg.decoder.heads);
    cfg.decoder.vision_dim = cfg.vit.embed_dim;
    const auto it = kv.find("replay_source");
    if (it != kv.end()) {
        cfg.replay_source =
            it->second == "thumbnail" ? ReplaySource::Thumbnail : ReplaySource::Stitched;
    }
    return cfg;
}

int cmd_describe(const CommonOpts& common, const std::string& request_path,
                 const std::string& image_path, const std::vector<std::string>& mask_paths,
                 const std::string& instruction, const std::string& mode_name,
                 int64_t max_tokens, const std::string& weights_path,
                 const std::string& dump_samples_path) {
    const auto kv = maybe_config(common);
    const ModelConfig cfg = model_config_from(kv);

    Request req;
    if (!request_path.empty()) {
        std::ifstream is(request_path);
        if (!is) throw std::invalid_argument("cannot open request file: " + request_path);
        std::ostringstream buf;
        buf << is.rdbuf();
        req = load_request_json(buf.str(),
                                std::filesystem::path(request_path).parent_path().string());
    } else {
        if (image_path.empty() || mask_paths.empty()) {
            throw std::invalid_argument("describe needs --request or --image plus >= 1 --mask");
        }
        req.image = load_image_png(image_path);
        for (const auto& m : mask_paths) {
            if (m.find(';') != std::string::npos) {
                req.prompts.masks.push_back(mask_from_rle(m));
            } else {
                req.prompts.masks.push_back(load_mask_png(m));
            }
        }
        req.instruction = instruction;
        req.mode = encoder_mode_from_string(mode_name);
    }

    const ModelWeights weights = weights_path.empty()
                                     ? init_model(cfg, common.seed)
                                     : load_model(weights_path, cfg);

    if (!dump_samples_path.empty()) {
        std::ofstream os(dump_samples_path);
        if (!os) throw std::runtime_error("cannot write " + dump_samples_path);
        const TilePlan plan = plan_tiles(req.image.dim(1), req.image.dim(2), cfg.tile_side,
                                         cfg.tile_budget);
        const int64_t p = cfg.tile_side / cfg.vit.patch_size;
        for (int64_t i = 0; i < req.prompts.size(); ++i) {
            const BBox box = mask_to_bbox(req.prompts.masks[static_cast<size_t>(i)]);
            const RoiRect rect = map_bbox_to_feature_coords(box, req.image.dim(1),
                                                            req.image.dim(2), plan,
                                                            cfg.vit.patch_size);
            os << "prompt " << i << " rect " << rect.x0 << " " << rect.y0 << " " << rect.x1
               << " " << rect.y1 << "\n";
            for (const auto& [y, x] : roi_sample_points(rect, cfg.roi, plan.grid_rows * p,
                                                        plan.grid_cols * p)) {
                os << y << " " << x << "\n";
            }
        }
    }

    const RespondResult result = respond(req, cfg, weights, max_tokens);
    emit(common, respond_result_to_json(result));
    return 0;
}

int cmd_gradcheck(const CommonOpts& common, const std::string& scope, int seeds) {
    const auto results = run_gradchecks(scope, seeds);
    if (results.empty()) throw std::invalid_argument("gradcheck: no checks match scope " + scope);
    std::ostringstream os;
    bool all_passed = true;
    os << "check                      max_error   tolerance  status\n";
    for (const auto& r : results) {
        os << "  " << r.name;
        for (size_t pad = r.name.size(); pad < 24; ++pad) os << ' ';
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%11.3e %11.0e  %s", r.max_error, r.tolerance,
                      r.passed ? "pass" : "FAIL");
        os << buf << "\n";
        all_passed &= r.passed;
    }
    emit(common, os.str());
    return all_passed ? 0 : 1;
}

std::map<std::string, std::string> load_predictions(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open predictions: " + path);
    std::map<std::string, std::string> preds;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        preds[j.at("id").get<std::string>()] = j.at("text").get<std::string>();
    }
    return preds;
}

// Answer source: a predictions file when given, otherwise the local model.
struct AnswerSource {
    std::map<std::string, std::string> predictions;
    const ModelConfig* cfg = nullptr;
    const ModelWeights* weights = nullptr;
    std::string image_dir;
    int64_t max_tokens = 32;

    std::string answer(const BenchItem& item, const Tensor& image,
                       const std::vector<MaskImage>& masks) const {
        if (!predictions.empty()) {
            const auto it = predictions.find(item.id);
            if (it == predictions.end()) {
                throw std::invalid_argument("no prediction for item " + item.id);
            }
            return it->second;
        }
        Request req;
        req.image = image;
        req.prompts.masks = masks;
        std::ostringstream q;
        q << item.question;
        if (item.kind == ItemKind::Mcq) {
            for (const auto& [label, text] : item.choices) q << "\n" << label << ". " << text;
        }
        req.instruction = q.str();
        return respond(req, *cfg, *weights, max_tokens).text;
    }
};

Tensor item_image(const BenchItem& item, const std::string& image_dir) {
    return load_image_png((std::filesystem::path(image_dir) / item.image_ref).string());
}

std::vector<MaskImage> item_masks(const BenchItem& item, const std::string& image_dir) {
    std::vector<MaskImage> masks;
    for (const auto& m : item.masks) {
        if (m.find(';') != std::string::npos) {
            masks.push_back(mask_from_rle(m));
        } else {
            masks.push_back(load_mask_png((std::filesystem::path(image_dir) / m).string()));
        }
    }
    return masks;
}

int cmd_eval_vqa(const CommonOpts& common, const std::string& dataset_path,
                 const std::string& predictions_path, const std::string& image_dir,
                 const std::string& table_path) {
    const auto items = load_bench_items(dataset_path);
    const auto kv = maybe_config(common);

    AnswerSource source;
    ModelConfig cfg;
    ModelWeights weights;
    if (!predictions_path.empty()) {
        source.predictions = load_predictions(predictions_path);
    } else {
        cfg = model_config_from(kv);
        weights = init_model(cfg, common.seed);
        source.cfg = &cfg;
        source.weights = &weights;
        source.image_dir = image_dir;
    }

    std::vector<ItemResult> results;
    for (const auto& item : items) {
        if (item.kind != ItemKind::Mcq) {
            throw std::invalid_argument("eval-vqa: item " + item.id + " is not MCQ");
        }
        Tensor image;
        std::vector<MaskImage> masks;
        if (source.predictions.empty()) {
            image = item_image(item, image_dir);
            masks = item_masks(item, image_dir);
        }
        const McqScore score = score_mcq(source.answer(item, image, masks), item);
        ItemResult r;
        r.id = item.id;
        r.subtask = item.subtask;
        r.kind = ItemKind::Mcq;
        r.score = score.score;
        r.parse_failure = score.parse_failure;
        r.ambiguous = score.ambiguous;
        results.push_back(std::move(r));
    }
    const Report report = aggregate(results);
    emit(common, report_to_json(report));
    const std::string table = report_to_table(report);
    if (table_path.empty()) {
        std::cout << table;
    } else {
        std::ofstream os(table_path);
        os << table;
    }
    return 0;
}

int cmd_eval_cap(const CommonOpts& common, const std::string& dataset_path,
                 const std::string& predictions_path, const std::string& image_dir,
                 const std::string& judge_config_path, const std::string& table_path) {
    const auto items = load_bench_items(dataset_path);
    bool any_caption = false;
    for (const auto& item : items) any_caption |= item.kind == ItemKind::Caption;
    if (any_caption && judge_config_path.empty()) {
        throw std::invalid_argument("eval-cap: caption items need --judge-config");
    }
    const auto judge_kv = load_kv_config(judge_config_path);
    HttpJudgeClient judge(judge_config_from(judge_kv));

    const auto kv = maybe_config(common);
    AnswerSource source;
    ModelConfig cfg;
    ModelWeights weights;
    if (!predictions_path.empty()) {
        source.predictions = load_predictions(predictions_path);
    } else {
        cfg = model_config_from(kv);
        weights = init_model(cfg, common.seed);
        source.cfg = &cfg;
        source.weights = &weights;
    }

    std::vector<ItemResult> results;
    for (const auto& item : items) {
        const Tensor image = item_image(item, image_dir);
        const std::vector<MaskImage> masks = item_masks(item, image_dir);
        const std::string candidate = source.answer(item, image, masks);
        ItemResult r;
        r.id = item.id;
        r.subtask = item.subtask;
        r.kind = item.kind;
        if (item.kind == ItemKind::Mcq) {
            const McqScore score = score_mcq(candidate, item);
            r.score = score.score;
            r.parse_failure = score.parse_failure;
            r.ambiguous = score.ambiguous;
        } else {
            try {
                r.score = judge_caption(item, candidate, judge, image, masks).score;
            } catch (const MalformedVerdictError& e) {
                std::cerr << "judge failure for " << item.id << ": " << e.what() << "\n";
                r.judge_failed = true;
            }
        }
        results.push_back(std::move(r));
    }
    const Report report = aggregate(results);
    emit(common, report_to_json(report));
    const std::string table = report_to_table(report);
    if (table_path.empty()) {
        std::cout << table;
    } else {
        std::ofstream os(table_path);
        os << table;
    }
    return 0;
}

int cmd_tile_debug(const CommonOpts& common, const std::string& image_path,
                   const std::string& mask_path, int64_t tile_side, int64_t budget,
                   const std::string& out_dir) {
    const Tensor image = load_image_png(image_path);
    MaskImage mask = mask_path.empty() ? MaskImage(image.dim(1), image.dim(2))
                                       : load_mask_png(mask_path);
    const TilePlan plan = plan_tiles(image.dim(1), image.dim(2), tile_side, budget);
    const TileBatch batch = apply_plan(image, mask, plan);

    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    save_image_png((dir / "global.png").string(), batch.global_view);
    for (int64_t ty = 0; ty < plan.grid_rows; ++ty) {
        for (int64_t tx = 0; tx < plan.grid_cols; ++tx) {
            std::ostringstream name;
            name << "tile_r" << ty << "_c" << tx << ".png";
            save_image_png((dir / name.str()).string(),
                           batch.tiles[static_cast<size_t>(ty * plan.grid_cols + tx)]);
        }
    }
    nlohmann::json j;
    j["grid_rows"] = plan.grid_rows;
    j["grid_cols"] = plan.grid_cols;
    j["tile_side"] = plan.tile_side;
    j["canvas_h"] = plan.canvas_h;
    j["canvas_w"] = plan.canvas_w;
    j["crops_total"] = plan.tile_count() + 1;
    emit(common, j.dump(2));
    return 0;
}

// Deterministic offline clients for build-data --clients stub: the judge
// keeps a caption iff it mentions the category, the merger echoes a minimal
// valid structure, the captioner describes the region geometrically.
class StubJudgeText : public TextClient {
public:
    std::string complete(const std::string& prompt) override {
        // the rendered template carries "category: X" and "caption: Y" lines
        const auto find_line = [&prompt](const std::string& key) {
            const auto pos = prompt.find(key);
            if (pos == std::string::npos) return std::string();
            const auto end = prompt.find('\n', pos);
            return prompt.substr(pos + key.size(),
                                 end == std::string::npos ? std::string::npos
                                                          : end - pos - key.size());
        };
        std::string caption = find_line("caption:");
        std::string category = find_line("category:");
        for (auto* s : {&caption, &category}) {
            for (char& c : *s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        const bool keep = !category.empty() && caption.find(category) != std::string::npos;
        nlohmann::json j;
        j["verdict"] = keep ? "keep" : "drop";
        j["rationale"] = keep ? "caption mentions the category" : "category absent from caption";
        return j.dump();
    }
};

class StubMergerText : public TextClient {
public:
    std::string complete(const std::string& prompt) override {
        nlohmann::json j;
        if (prompt.find("question-answer") != std::string::npos) {
            j["qa_pairs"] = nlohmann::json::array(
                {{{"question", "What is <Prompt0> doing?"}, {"answer", "See the relations."}}});
        } else if (prompt.find("multiple-choice") != std::string::npos) {
            j["mcqs"] = nlohmann::json::array(
                {{{"question", "Which statement fits <Prompt0>?"},
                  {"choices", {{"A", "unrelated"}, {"B", "as described"}}},
                  {"gold", "B"}}});
        } else {
            j["descriptions"] = nlohmann::json::array({"<Prompt0> anchors the described scene."});
        }
        return j.dump();
    }
};

class StubCaptioner : public CaptionClient {
public:
    std::string caption(const std::string& image_ref, const std::string& region_rle) override {
        const MaskImage mask = mask_from_rle(region_rle);
        const BBox box = mask_to_bbox(mask);
        std::ostringstream os;
        os << "region of " << image_ref << " spanning " << box.width() << "x" << box.height()
           << " pixels";
        return os.str();
    }
};

int cmd_build_data(const CommonOpts& common, const std::string& manifest_path,
                   const std::string& journal_path, const std::string& target,
                   int64_t batch_size, const std::string& prompts_dir,
                   const std::string& clients) {
    PipelineConfig cfg;
    cfg.journal_path = journal_path;
    cfg.target = target == "round1" ? Stage::Validated : Stage::Merged;
    cfg.batch_size = batch_size;
    cfg.templates = load_prompt_templates(prompts_dir);

    StubJudgeText stub_judge;
    StubMergerText stub_merger;
    StubCaptioner stub_captioner;
    std::unique_ptr<HttpTextClient> http_judge, http_merger;
    std::unique_ptr<HttpCaptionClient> http_captioner;

    if (clients == "stub") {
        cfg.judge = &stub_judge;
        cfg.merger = &stub_merger;
        cfg.captioner = &stub_captioner;
    } else {
        const auto kv = maybe_config(common);
        http_judge = std::make_unique<HttpTextClient>(text_endpoint_from(kv, "judge_model"));
        http_merger = std::make_unique<HttpTextClient>(text_endpoint_from(kv, "merger_model"));
        http_captioner =
            std::make_unique<HttpCaptionClient>(text_endpoint_from(kv, "captioner_model"));
        cfg.judge = http_judge.get();
        cfg.merger = http_merger.get();
        cfg.captioner = http_captioner.get();
    }

    const PipelineSummary summary = run_pipeline(manifest_path, cfg);
    emit(common, summary_to_json(summary));
    return 0;
}

int cmd_sample_frames(const CommonOpts& common, int64_t frames, int64_t target) {
    const auto indices = sample_frames(frames, target);
    nlohmann::json j;
    j["frame_count"] = frames;
    j["target"] = target;
    j["indices"] = indices;
    emit(common, j.dump());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"region-prompted multimodal model toolkit"};
    app.require_subcommand(1);

    CommonOpts common;
    app.add_option("--seed", common.seed, "seed for all randomized initialization");
    app.add_option("--config", common.config_path, "key=value config file");
    app.add_flag("-v,--verbose", common.verbosity, "verbosity");
    app.add_option("-o,--output", common.output_path, "write the primary output here");

    auto* describe = app.add_subcommand("describe", "run the model on an image + mask prompts");
    std::string request_path, image_path, instruction, mode_name = "roi_replay";
    std::string weights_path, dump_samples;
    std::vector<std::string> mask_paths;
    int64_t max_tokens = 32;
    describe->add_option("--request", request_path, "request JSON file");
    describe->add_option("--image", image_path, "image PNG");
    describe->add_option("--mask", mask_paths, "mask PNG path or RLE string (repeatable)");
    describe->add_option("--instruction", instruction, "instruction text");
    describe->add_option("--mode", mode_name, "local_only|global_plus_crop|roi_replay");
    describe->add_option("--max-tokens", max_tokens, "decode budget");
    describe->add_option("--weights", weights_path, "model weight bundle");
    describe->add_option("--dump-samples", dump_samples, "write RoI sample coordinates here");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    std::string scope = "all";
    int gradcheck_seeds = 3;
    gradcheck->add_option("--scope", scope, "all or a module prefix (tensor, prompt, vit, roi)");
    gradcheck->add_option("--seeds", gradcheck_seeds, "seeded inputs per check");

    auto* eval_vqa = app.add_subcommand("eval-vqa", "score a multiple-choice dataset");
    std::string dataset_path, predictions_path, image_dir = ".", table_path;
    eval_vqa->add_option("--dataset", dataset_path, "JSONL dataset")->required();
    eval_vqa->add_option("--predictions", predictions_path, "JSONL {id, text} answers");
    eval_vqa->add_option("--image-dir", image_dir, "base directory for image/mask refs");
    eval_vqa->add_option("--table", table_path, "write the text table here");

    auto* eval_cap = app.add_subcommand("eval-cap", "judge a captioning dataset");
    std::string judge_config_path;
    eval_cap->add_option("--dataset", dataset_path, "JSONL dataset")->required();
    eval_cap->add_option("--predictions", predictions_path, "JSONL {id, text} answers");
    eval_cap->add_option("--image-dir", image_dir, "base directory for image/mask refs");
    eval_cap->add_option("--judge-config", judge_config_path, "judge endpoint key=value file");
    eval_cap->add_option("--table", table_path, "write the text table here");

    auto* tile_debug = app.add_subcommand("tile-debug", "dump the tile decomposition as PNGs");
    std::string tile_image, tile_mask, tile_out = "tiles";
    int64_t tile_side = 336, budget = 16;
    tile_debug->add_option("--image", tile_image, "image PNG")->required();
    tile_debug->add_option("--mask", tile_mask, "mask PNG");
    tile_debug->add_option("--tile-side", tile_side, "tile side in pixels");
    tile_debug->add_option("--budget", budget, "max tiles");
    tile_debug->add_option("--out", tile_out, "output directory");

    auto* build_data = app.add_subcommand("build-data", "run the dataset construction pipeline");
    std::string manifest_path, journal_path, target = "round2", prompts_dir = "data/prompts";
    std::string clients = "http";
    int64_t batch_size = 4;
    build_data->add_option("--manifest", manifest_path, "JSONL manifest")->required();
    build_data->add_option("--journal", journal_path, "append-only journal")->required();
    build_data->add_option("--target", target, "round1|round2");
    build_data->add_option("--batch", batch_size, "records per checkpoint batch");
    build_data->add_option("--prompts", prompts_dir, "prompt template directory");
    build_data->add_option("--clients", clients, "http|stub");

    auto* frames = app.add_subcommand("sample-frames", "uniform frame sampling for videos");
    int64_t frame_count = 0, frame_target = 16;
    frames->add_option("--frames", frame_count, "total frames")->required();
    frames->add_option("--target", frame_target, "frames to keep");

    CLI11_PARSE(app, argc, argv);

    try {
        if (describe->parsed()) {
            return cmd_describe(common, request_path, image_path, mask_paths, instruction,
                                mode_name, max_tokens, weights_path, dump_samples);
        }
        if (gradcheck->parsed()) return cmd_gradcheck(common, scope, gradcheck_seeds);
        if (eval_vqa->parsed()) {
            return cmd_eval_vqa(common, dataset_path, predictions_path, image_dir, table_path);
        }
        if (eval_cap->parsed()) {
            return cmd_eval_cap(common, dataset_path, predictions_path, image_dir,
                                judge_config_path, table_path);
        }
        if (tile_debug->parsed()) {
            return cmd_tile_debug(common, tile_image, tile_mask, tile_side, budget, tile_out);
        }
        if (build_data->parsed()) {
            return cmd_build_data(common, manifest_path, journal_path, target, batch_size,
                                  prompts_dir, clients);
        }
        if (frames->parsed()) return cmd_sample_frames(common, frame_count, frame_target);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
