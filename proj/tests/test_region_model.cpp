#include <doctest.h>

#include <cstdio>

#include "regionlm/region_model.hpp"
#include "regionlm/rng.hpp"
#include "test_oracles.hpp"

using namespace regionlm;

namespace {

// 64x64 images, 32px tiles, 8px patches -> 2x2 grid, 16 tokens per view
ModelConfig small_cfg() {
    ModelConfig cfg;
    cfg.vit.patch_size = 8;
    cfg.vit.embed_dim = 16;
    cfg.vit.depth = 1;
    cfg.vit.heads = 2;
    cfg.vit.mlp_ratio = 2;
    cfg.tile_side = 32;
    cfg.tile_budget = 4;
    cfg.roi.bins_r = cfg.roi.bins_c = 2;
    cfg.roi.sampling_ratio = 2;
    cfg.decoder.d_model = 16;
    cfg.decoder.depth = 1;
    cfg.decoder.heads = 2;
    cfg.decoder.mlp_ratio = 2;
    cfg.decoder.vision_dim = 16;
    cfg.prompt_hidden = 4;
    return cfg;
}

MaskImage block_mask(int64_t h, int64_t w, int64_t y0, int64_t x0, int64_t y1, int64_t x1) {
    MaskImage m(h, w);
    for (int64_t y = y0; y <= y1; ++y)
        for (int64_t x = x0; x <= x1; ++x) m.set(y, x, 1);
    return m;
}

Request small_request(int n_prompts, Lcg& rng, EncoderMode mode = EncoderMode::RoiReplay) {
    Request req;
    req.image = oracles::random_tensor({3, 64, 64}, rng, 0.0, 1.0);
    for (int i = 0; i < n_prompts; ++i) {
        const int64_t y0 = static_cast<int64_t>(rng.next_below(40));
        const int64_t x0 = static_cast<int64_t>(rng.next_below(40));
        req.prompts.masks.push_back(block_mask(64, 64, y0, x0, y0 + 16, x0 + 16));
    }
    req.instruction = "describe <Prompt0> briefly";
    req.mode = mode;
    return req;
}

int64_t count_kind(const ModelInputSequence& seq, SegmentKind kind) {
    int64_t n = 0;
    for (const auto& s : seq.segments) n += s.kind == kind;
    return n;
}

}  // namespace

TEST_CASE("tokenizer maps placeholders to the reserved range and back") {
    const auto tokens = tokenize("describe <Prompt0> and <Prompt2>, not </Prompt1>", 3);
    CHECK(std::count(tokens.begin(), tokens.end(), prompt_open_token(0)) == 1);
    CHECK(std::count(tokens.begin(), tokens.end(), prompt_open_token(2)) == 1);
    CHECK(std::count(tokens.begin(), tokens.end(), prompt_close_token(1)) == 1);
    CHECK(detokenize(tokens) == "describe <Prompt0> and <Prompt2>, not </Prompt1>");
}

TEST_CASE("tokenizer rejects out-of-range placeholders") {
    CHECK_THROWS_AS(tokenize("see <Prompt3>", 3), std::invalid_argument);
    CHECK_NOTHROW(tokenize("see <Prompt2>", 3));
    // malformed placeholders pass through as bytes
    const auto tokens = tokenize("<Promptx> <Prompt> <Prompt99", 1);
    for (int64_t t : tokens) CHECK(t < kByteVocab);
}

TEST_CASE("assemble in RoI mode lays out global, tiles, prompts, instruction") {
    Lcg rng(91);
    const ModelConfig cfg = small_cfg();
    const ModelWeights w = init_model(cfg, 5);
    Request req = small_request(1, rng);
    const ModelInputSequence seq = assemble(req, cfg, w);

    REQUIRE(!seq.segments.empty());
    CHECK(seq.segments.front().kind == SegmentKind::Global);
    CHECK(seq.segments.back().kind == SegmentKind::Instruction);
    CHECK(count_kind(seq, SegmentKind::Tile) == 4);  // 2x2 grid
    CHECK(count_kind(seq, SegmentKind::PromptOpen) == 1);
    CHECK(count_kind(seq, SegmentKind::PromptTokens) == 1);
    CHECK(count_kind(seq, SegmentKind::PromptClose) == 1);

    // the segment map partitions the item range exactly
    int64_t cursor = 0;
    for (const auto& s : seq.segments) {
        CHECK(s.begin == cursor);
        CHECK(s.end >= s.begin);
        cursor = s.end;
    }
    CHECK(cursor == seq.length());
}

TEST_CASE("token accounting identity holds for N in {1,2,7,9}") {
    Lcg rng(92);
    const ModelConfig cfg = small_cfg();
    const ModelWeights w = init_model(cfg, 6);
    const int64_t p_tokens = (cfg.tile_side / cfg.vit.patch_size) * (cfg.tile_side / cfg.vit.patch_size);
    for (int n : {1, 2, 7, 9}) {
        Request req = small_request(n, rng);
        const ModelInputSequence seq = assemble(req, cfg, w);
        const int64_t views = 1 + 4;
        const int64_t instr = static_cast<int64_t>(tokenize(req.instruction, n).size());
        const int64_t expected =
            views * p_tokens + n * (cfg.roi.bins_r * cfg.roi.bins_c + 2) + instr;
        CHECK(seq.length() == expected);
        CHECK(count_kind(seq, SegmentKind::PromptOpen) == n);
        // prompt segments appear in index order
        int64_t last = -1;
        for (const auto& s : seq.segments) {
            if (s.kind == SegmentKind::PromptOpen) {
                CHECK(s.index == last + 1);
                last = s.index;
            }
        }
    }
}

TEST_CASE("swapping two masks swaps exactly the two prompt token spans") {
    Lcg rng(93);
    const ModelConfig cfg = small_cfg();
    const ModelWeights w = init_model(cfg, 7);
    Request req = small_request(3, rng);
    const ModelInputSequence base = assemble(req, cfg, w);

    Request swapped = req;
    std::swap(swapped.prompts.masks[0], swapped.prompts.masks[2]);
    const ModelInputSequence out = assemble(swapped, cfg, w);

    REQUIRE(base.length() == out.length());
    const auto span_of = [](const ModelInputSequence& s, int64_t idx) {
        for (const auto& seg : s.segments) {
            if (seg.kind == SegmentKind::PromptTokens && seg.index == idx) return seg;
        }
        FAIL("missing prompt span");
        return s.segments[0];
    };
    const Segment b0 = span_of(base, 0), b2 = span_of(base, 2);
    const Segment o0 = span_of(out, 0), o2 = span_of(out, 2);

    for (int64_t i = 0; i < base.length(); ++i) {
        const bool in_b0 = i >= b0.begin && i < b0.end;
        const bool in_b2 = i >= b2.begin && i < b2.end;
        const auto& lhs = base.items[static_cast<size_t>(i)];
        const SequenceItem& rhs = in_b0 ? out.items[static_cast<size_t>(o2.begin + (i - b0.begin))]
                                : in_b2 ? out.items[static_cast<size_t>(o0.begin + (i - b2.begin))]
                                        : out.items[static_cast<size_t>(i)];
        CHECK(lhs.token == rhs.token);
        CHECK(lhs.vector == rhs.vector);
    }
}

TEST_CASE("local-only mode drops the global pass; global-plus-crop keeps it") {
    Lcg rng(94);
    const ModelConfig cfg = small_cfg();
    const ModelWeights w = init_model(cfg, 8);

    Request local = small_request(2, rng, EncoderMode::LocalOnly);
    const ModelInputSequence ls = assemble(local, cfg, w);
    CHECK(count_kind(ls, SegmentKind::Global) == 0);
    CHECK(count_kind(ls, SegmentKind::Tile) == 0);
    CHECK(count_kind(ls, SegmentKind::PromptTokens) == 2);
    const int64_t p_tokens = 16;
    const int64_t instr = static_cast<int64_t>(tokenize(local.instruction, 2).size());
    CHECK(ls.length() == 2 * (p_tokens + 2) + instr);

    Request both = local;
    both.mode = EncoderMode::GlobalPlusCrop;
    const ModelInputSequence gs = assemble(both, cfg, w);
    CHECK(count_kind(gs, SegmentKind::Global) == 1);
    CHECK(count_kind(gs, SegmentKind::Tile) == 4);
    CHECK(gs.length() == 5 * p_tokens + 2 * (p_tokens + 2) + instr);
}

TEST_CASE("requests with empty masks or bad placeholders are rejected") {
    Lcg rng(95);
    const ModelConfig cfg = small_cfg();
    const ModelWeights w = init_model(cfg, 9);

    Request req = small_request(1, rng);
    req.prompts.masks[0] = MaskImage(64, 64);  // empty
    CHECK_THROWS_AS(assemble(req, cfg, w), std::invalid_argument);

    Request oob = small_request(1, rng);
    oob.instruction = "relate <Prompt0> to <Prompt1>";
    CHECK_THROWS_AS(assemble(oob, cfg, w), std::invalid_argument);

    Request none = small_request(1, rng);
    none.prompts.masks.clear();
    CHECK_THROWS_AS(assemble(none, cfg, w), std::invalid_argument);
}

TEST_CASE("zero decoder weights give uniform next-token distributions") {
    ModelConfig cfg = small_cfg();
    DecoderWeights w = init_decoder(cfg.decoder, 3);
    for (Tensor* t : {&w.token_embed, &w.vision_w, &w.vision_b, &w.head_w, &w.head_b,
                      &w.final_ln.beta}) {
        for (int64_t i = 0; i < t->numel(); ++i) (*t)[i] = 0.0;
    }
    for (auto& b : w.blocks) {
        for (Tensor* t : {&b.attn.wq, &b.attn.wk, &b.attn.wv, &b.attn.wo, &b.attn.bq, &b.attn.bk,
                          &b.attn.bv, &b.attn.bo, &b.mlp.w1, &b.mlp.b1, &b.mlp.w2, &b.mlp.b2}) {
            for (int64_t i = 0; i < t->numel(); ++i) (*t)[i] = 0.0;
        }
    }
    std::vector<SequenceItem> items = {SequenceItem::from_token(65),
                                       SequenceItem::from_token(66)};
    const Tensor dist = decoder_forward(items, cfg.decoder, w);
    const double uniform = 1.0 / static_cast<double>(kVocabSize);
    for (int64_t i = 0; i < dist.numel(); ++i) {
        CHECK(dist[i] == doctest::Approx(uniform).epsilon(1e-12));
    }
}

TEST_CASE("distributions are normalized at every position") {
    Lcg rng(96);
    const ModelConfig cfg = small_cfg();
    const ModelWeights w = init_model(cfg, 10);
    Request req = small_request(1, rng);
    const ModelInputSequence seq = assemble(req, cfg, w);
    const Tensor dist = model_forward(seq, cfg, w);
    REQUIRE(dist.dim(0) == seq.length());
    for (int64_t i = 0; i < dist.dim(0); ++i) {
        double s = 0.0;
        for (int64_t v = 0; v < dist.dim(1); ++v) s += dist.at(i, v);
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("causal mask: position t ignores changes at positions after t") {
    const ModelConfig cfg = small_cfg();
    const DecoderWeights w = init_decoder(cfg.decoder, 11);
    std::vector<SequenceItem> items;
    for (int64_t t : {72, 101, 108, 108, 111}) items.push_back(SequenceItem::from_token(t));
    const Tensor base = decoder_forward(items, cfg.decoder, w);
    auto changed = items;
    changed[4] = SequenceItem::from_token(33);
    const Tensor out = decoder_forward(changed, cfg.decoder, w);
    for (int64_t t = 0; t < 4; ++t) {
        for (int64_t v = 0; v < kVocabSize; ++v) {
            CHECK(out.at(t, v) == base.at(t, v));
        }
    }
    CHECK(oracles::max_abs_diff(base, out) > 0.0);
}

TEST_CASE("respond is deterministic") {
    Lcg rng(97);
    const ModelConfig cfg = small_cfg();
    const ModelWeights w = init_model(cfg, 12);
    Request req = small_request(2, rng);
    const RespondResult a = respond(req, cfg, w, 8);
    const RespondResult b = respond(req, cfg, w, 8);
    CHECK(a.text == b.text);
    CHECK(a.prefix_tokens == b.prefix_tokens);
    CHECK(a.generated_tokens == b.generated_tokens);
    CHECK(a.generated_tokens <= 8);
}

TEST_CASE("zero-init prompt encoder makes the global pass mask-blind, bit-exactly") {
    Lcg rng(98);
    const ModelConfig cfg = small_cfg();
    const ModelWeights w = init_model(cfg, 13);  // zero-init by default

    const Tensor img = oracles::random_tensor({3, 64, 64}, rng, 0.0, 1.0);
    const MaskImage mask = block_mask(64, 64, 5, 5, 40, 40);
    const MaskImage empty(64, 64);
    const TilePlan plan = plan_tiles(64, 64, cfg.tile_side, cfg.tile_budget);
    const int64_t p = cfg.tile_side / cfg.vit.patch_size;

    const auto run = [&](const MaskImage& m) {
        const TileBatch batch = apply_plan(img, m, plan);
        std::vector<Tensor> embs;
        embs.push_back(encode_mask(batch.global_mask, w.prompt_encoder, p, p));
        for (const auto& tm : batch.tile_masks) {
            embs.push_back(encode_mask(tm, w.prompt_encoder, p, p));
        }
        return encode_views(batch, embs, cfg.vit, w.vit);
    };
    const auto with_mask = run(mask);
    const auto without = run(empty);
    REQUIRE(with_mask.size() == without.size());
    for (size_t i = 0; i < with_mask.size(); ++i) {
        CHECK(oracles::bit_equal(with_mask[i].features, without[i].features));
    }

    // a randomized (non-zero-init) encoder is mask-sensitive
    const ModelWeights wr = init_model(cfg, 13, /*zero_init_prompt=*/false);
    const TileBatch batch = apply_plan(img, mask, plan);
    std::vector<Tensor> embs;
    embs.push_back(encode_mask(batch.global_mask, wr.prompt_encoder, p, p));
    for (const auto& tm : batch.tile_masks) {
        embs.push_back(encode_mask(tm, wr.prompt_encoder, p, p));
    }
    const auto sensitive = encode_views(batch, embs, cfg.vit, wr.vit);
    bool any_diff = false;
    for (size_t i = 0; i < sensitive.size(); ++i) {
        any_diff |= !oracles::bit_equal(sensitive[i].features, without[i].features);
    }
    CHECK(any_diff);
}

TEST_CASE("sample_frames contract") {
    std::vector<int64_t> all16 = sample_frames(16);
    REQUIRE(all16.size() == 16);
    for (int64_t i = 0; i < 16; ++i) CHECK(all16[static_cast<size_t>(i)] == i);

    CHECK(sample_frames(1) == std::vector<int64_t>{0});

    const auto idx = sample_frames(32);
    REQUIRE(idx.size() == 16);
    CHECK(idx.front() == 0);
    CHECK(idx.back() == 31);
    const double ideal = 31.0 / 15.0;
    for (size_t i = 1; i < idx.size(); ++i) {
        const double gap = static_cast<double>(idx[i] - idx[i - 1]);
        CHECK(std::abs(gap - ideal) <= 1.0);
    }
    CHECK_THROWS_AS(sample_frames(0), std::invalid_argument);
}

TEST_CASE("model weights save/load round trip preserves respond output") {
    Lcg rng(99);
    const ModelConfig cfg = small_cfg();
    const ModelWeights w = init_model(cfg, 14);
    const std::string path = "model_test.bin";
    save_model(path, w);
    const ModelWeights back = load_model(path, cfg);
    Request req = small_request(1, rng);
    CHECK(respond(req, cfg, w, 6).text == respond(req, cfg, back, 6).text);
    CHECK(back.prompt_encoder.stride1 == w.prompt_encoder.stride1);
    std::remove(path.c_str());
}

TEST_CASE("respond result serializes segments and counts") {
    Lcg rng(100);
    const ModelConfig cfg = small_cfg();
    const ModelWeights w = init_model(cfg, 15);
    Request req = small_request(1, rng);
    const RespondResult result = respond(req, cfg, w, 4);
    const std::string json = respond_result_to_json(result);
    CHECK(json.find("\"text\"") != std::string::npos);
    CHECK(json.find("\"segments\"") != std::string::npos);
    CHECK(json.find("\"token_counts\"") != std::string::npos);
    CHECK(json.find("\"prompt_tokens\"") != std::string::npos);
}
