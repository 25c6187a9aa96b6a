// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria run in order and print their runtime where a budget
// applies.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>
#include <vector>

#include "regionlm/eval.hpp"
#include "regionlm/gradcheck.hpp"
#include "regionlm/pipeline.hpp"
#include "regionlm/region_model.hpp"
#include "regionlm/rng.hpp"
#include "test_oracles.hpp"

using namespace regionlm;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& what, bool ok, const std::string& detail = "") {
    std::printf("%s  criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", criterion, what.c_str(),
                detail.empty() ? "" : " -- ", detail.c_str());
    if (!ok) ++g_failures;
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---------------------------------------------------------------- criterion 1
void criterion_roi_oracle() {
    const auto start = Clock::now();
    Lcg rng(1001);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int64_t h = 2 + static_cast<int64_t>(rng.next_below(15));
        const int64_t w = 2 + static_cast<int64_t>(rng.next_below(15));
        const Tensor fmap = oracles::random_tensor({1 + static_cast<int64_t>(rng.next_below(3)), h, w}, rng, -3.0, 3.0);
        RoiConfig cfg;
        cfg.bins_r = 1 + static_cast<int64_t>(rng.next_below(4));
        cfg.bins_c = 1 + static_cast<int64_t>(rng.next_below(4));
        cfg.sampling_ratio = 1 + static_cast<int64_t>(rng.next_below(3));
        cfg.aligned = rng.next_below(2) == 0;
        RoiRect rect;
        rect.x0 = rng.uniform(-1.0, w - 1.0);
        rect.y0 = rng.uniform(-1.0, h - 1.0);
        rect.x1 = std::max(rect.x0, 0.0) + rng.uniform(0.5, 5.0);
        rect.y1 = std::max(rect.y0, 0.0) + rng.uniform(0.5, 5.0);
        const Tensor got = roi_align(fmap, rect, cfg);
        const Tensor want = oracles::roi_align_oracle(fmap, rect.x0, rect.y0, rect.x1, rect.y1,
                                                      cfg.bins_r, cfg.bins_c, cfg.sampling_ratio,
                                                      cfg.aligned);
        worst = std::max(worst, oracles::max_abs_diff(got, want));
    }
    const double elapsed = seconds_since(start);
    char detail[128];
    std::snprintf(detail, sizeof(detail), "max |diff| %.2e over 200 cases, %.2fs", worst, elapsed);
    report(1, "roi_align matches the brute-force oracle (<= 1e-9, < 5s)",
           worst <= 1e-9 && elapsed < 5.0, detail);
}

// ---------------------------------------------------------------- criterion 2
void criterion_gradient_suite() {
    const auto start = Clock::now();
    const auto results = run_gradchecks("all", 20);
    bool ok = true;
    double worst = 0.0;
    for (const auto& r : results) {
        ok &= r.max_error < 1e-5;
        worst = std::max(worst, r.max_error);
    }
    const double elapsed = seconds_since(start);
    char detail[160];
    std::snprintf(detail, sizeof(detail), "%zu checks x 20 seeds, worst %.2e, %.1fs",
                  results.size(), worst, elapsed);
    report(2, "gradient suite under 1e-5 relative error (< 60s)", ok && elapsed < 60.0, detail);
}

// ---------------------------------------------------------------- criterion 3
ModelConfig desk_cfg() {
    ModelConfig cfg;
    cfg.vit.patch_size = 8;
    cfg.vit.embed_dim = 32;
    cfg.vit.depth = 2;
    cfg.vit.heads = 4;
    cfg.vit.mlp_ratio = 2;
    cfg.tile_side = 32;
    cfg.tile_budget = 4;
    cfg.roi.bins_r = cfg.roi.bins_c = 4;
    cfg.roi.sampling_ratio = 2;
    cfg.decoder.d_model = 32;
    cfg.decoder.depth = 1;
    cfg.decoder.heads = 4;
    cfg.decoder.mlp_ratio = 2;
    cfg.decoder.vision_dim = 32;
    cfg.prompt_hidden = 8;
    return cfg;
}

void criterion_zero_init() {
    const ModelConfig cfg = desk_cfg();
    Lcg rng(1003);
    bool ok = true;
    const int64_t p = cfg.tile_side / cfg.vit.patch_size;
    for (int trial = 0; trial < 50 && ok; ++trial) {
        const ModelWeights w = init_model(cfg, 100 + trial);  // fresh zero-init encoder
        const int64_t h = 32 + static_cast<int64_t>(rng.next_below(65));
        const int64_t wdt = 32 + static_cast<int64_t>(rng.next_below(65));
        const Tensor img = oracles::random_tensor({3, h, wdt}, rng, 0.0, 1.0);
        MaskImage mask(h, wdt);
        for (auto& b : mask.bits) b = rng.next_below(4) == 0;
        if (mask.empty_mask()) mask.set(0, 0, 1);

        const TilePlan plan = plan_tiles(h, wdt, cfg.tile_side, cfg.tile_budget);
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
        const auto without = run(MaskImage(h, wdt));
        for (size_t i = 0; i < with_mask.size(); ++i) {
            ok &= oracles::bit_equal(with_mask[i].features, without[i].features);
        }
    }
    report(3, "zero-initialized prompt encoder is a bit-exact no-op (50 cases)", ok);
}

// ---------------------------------------------------------------- criterion 4
void criterion_anyres_budget() {
    Lcg rng(1004);
    bool budget_ok = true, roundtrip_ok = true;
    for (int trial = 0; trial < 500; ++trial) {
        const int64_t h = 1 + static_cast<int64_t>(rng.next_below(4096));
        const int64_t w = 1 + static_cast<int64_t>(rng.next_below(4096));
        const TilePlan plan = plan_tiles(h, w, 336, 16);
        budget_ok &= plan.tile_count() + 1 <= 17;
        budget_ok &= plan.canvas_h == plan.grid_rows * plan.tile_side;
        budget_ok &= plan.canvas_w == plan.grid_cols * plan.tile_side;

        // feature-level slice -> stitch round trip for this plan's grid
        const Tensor f = oracles::random_tensor(
            {2, plan.grid_rows * 3, plan.grid_cols * 3}, rng);
        roundtrip_ok &= oracles::bit_equal(stitch_features(slice_features(f, plan), plan), f);
    }
    // pixel-level: slicing the canvas and stitching reproduces it bit-exactly
    for (int trial = 0; trial < 5; ++trial) {
        const int64_t h = 16 + static_cast<int64_t>(rng.next_below(80));
        const int64_t w = 16 + static_cast<int64_t>(rng.next_below(80));
        const TilePlan plan = plan_tiles(h, w, 8, 16);
        const Tensor img = oracles::random_tensor({3, h, w}, rng, 0.0, 1.0);
        const TileBatch batch = apply_plan(img, MaskImage(h, w), plan);
        const Tensor canvas = resize_bilinear(img, plan.canvas_h, plan.canvas_w);
        roundtrip_ok &= oracles::bit_equal(stitch_features(batch.tiles, plan), canvas);
    }
    report(4, "tile budget <= 17 crops over 500 sizes; slice->stitch bit-exact",
           budget_ok && roundtrip_ok);
}

// ---------------------------------------------------------------- criterion 5
struct Sample {
    Tensor image;
    int label;
};

Sample make_context_sample(Lcg& rng) {
    Sample s;
    s.label = static_cast<int>(rng.next_below(2));
    s.image = Tensor({3, 64, 64});
    // the class marker is a frame covering everything outside the central
    // 16..47 square; the prompt bbox (24..39) lies strictly inside it, so the
    // pixels under the prompt carry no label information
    const double marker = s.label == 1 ? 0.85 : 0.15;
    for (int64_t c = 0; c < 3; ++c) {
        for (int64_t y = 0; y < 64; ++y) {
            for (int64_t x = 0; x < 64; ++x) {
                const bool inside = y >= 16 && y < 48 && x >= 16 && x < 48;
                s.image.at(c, y, x) = (inside ? 0.5 : marker) + rng.uniform(-0.1, 0.1);
            }
        }
    }
    return s;
}

// mean-pooled prompt tokens for one sample under the given mode
std::vector<double> pooled_features(const Sample& s, const MaskImage& prompt_mask,
                                    EncoderMode mode, const ModelConfig& cfg,
                                    const ModelWeights& w) {
    Request req;
    req.image = s.image;
    req.prompts.masks = {prompt_mask};
    req.instruction = "classify <Prompt0>";
    req.mode = mode;
    const EncodedPrompts enc = encode_prompts(req, cfg, w);
    const Tensor& tokens = enc.prompt_tokens[0];
    std::vector<double> mean(static_cast<size_t>(tokens.dim(1)), 0.0);
    for (int64_t t = 0; t < tokens.dim(0); ++t)
        for (int64_t d = 0; d < tokens.dim(1); ++d)
            mean[static_cast<size_t>(d)] += tokens.at(t, d) / static_cast<double>(tokens.dim(0));
    return mean;
}

// two-class logistic probe trained by full-batch gradient descent
struct Probe {
    std::vector<double> w;  // [dim*2]
    double b[2] = {0, 0};
    int dim = 0;

    void train(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int epochs,
               double lr) {
        dim = static_cast<int>(x[0].size());
        w.assign(static_cast<size_t>(dim) * 2, 0.0);
        const size_t n = x.size();
        for (int epoch = 0; epoch < epochs; ++epoch) {
            std::vector<double> gw(w.size(), 0.0);
            double gb[2] = {0, 0};
            for (size_t i = 0; i < n; ++i) {
                double logits[2];
                for (int k = 0; k < 2; ++k) {
                    logits[k] = b[k];
                    for (int d = 0; d < dim; ++d) logits[k] += w[static_cast<size_t>(k * dim + d)] * x[i][static_cast<size_t>(d)];
                }
                const double mx = std::max(logits[0], logits[1]);
                const double z = std::exp(logits[0] - mx) + std::exp(logits[1] - mx);
                for (int k = 0; k < 2; ++k) {
                    const double p = std::exp(logits[k] - mx) / z;
                    const double g = (p - (y[i] == k ? 1.0 : 0.0)) / static_cast<double>(n);
                    gb[k] += g;
                    for (int d = 0; d < dim; ++d) gw[static_cast<size_t>(k * dim + d)] += g * x[i][static_cast<size_t>(d)];
                }
            }
            for (size_t j = 0; j < w.size(); ++j) w[j] -= lr * gw[j];
            for (int k = 0; k < 2; ++k) b[k] -= lr * gb[k];
        }
    }

    int predict(const std::vector<double>& x) const {
        double best = -1e300;
        int arg = 0;
        for (int k = 0; k < 2; ++k) {
            double logit = b[k];
            for (int d = 0; d < dim; ++d) logit += w[static_cast<size_t>(k * dim + d)] * x[static_cast<size_t>(d)];
            if (logit > best) {
                best = logit;
                arg = k;
            }
        }
        return arg;
    }
};

double mode_accuracy(EncoderMode mode, const std::vector<Sample>& train,
                     const std::vector<Sample>& test, const MaskImage& prompt_mask,
                     const ModelConfig& cfg, const ModelWeights& w) {
    const auto extract = [&](const std::vector<Sample>& samples) {
        std::vector<std::vector<double>> features(samples.size());
        const size_t workers = std::min<size_t>(8, samples.size());
        std::vector<std::thread> threads;
        std::atomic<size_t> next{0};
        for (size_t t = 0; t < workers; ++t) {
            threads.emplace_back([&]() {
                while (true) {
                    const size_t i = next.fetch_add(1);
                    if (i >= samples.size()) return;
                    features[i] = pooled_features(samples[i], prompt_mask, mode, cfg, w);
                }
            });
        }
        for (auto& th : threads) th.join();
        return features;
    };

    auto train_x = extract(train);
    auto test_x = extract(test);

    // standardize with train statistics
    const size_t dim = train_x[0].size();
    std::vector<double> mean(dim, 0.0), stddev(dim, 0.0);
    for (const auto& f : train_x) {
        for (size_t d = 0; d < dim; ++d) mean[d] += f[d] / static_cast<double>(train_x.size());
    }
    for (const auto& f : train_x) {
        for (size_t d = 0; d < dim; ++d) {
            stddev[d] += (f[d] - mean[d]) * (f[d] - mean[d]) / static_cast<double>(train_x.size());
        }
    }
    for (size_t d = 0; d < dim; ++d) stddev[d] = std::sqrt(stddev[d]) + 1e-8;
    for (auto* set : {&train_x, &test_x}) {
        for (auto& f : *set) {
            for (size_t d = 0; d < dim; ++d) f[d] = (f[d] - mean[d]) / stddev[d];
        }
    }

    std::vector<int> train_y;
    for (const auto& s : train) train_y.push_back(s.label);
    Probe probe;
    probe.train(train_x, train_y, 400, 1.0);

    int correct = 0;
    for (size_t i = 0; i < test.size(); ++i) {
        correct += probe.predict(test_x[i]) == test[i].label;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

void criterion_context_differential() {
    const auto start = Clock::now();
    const ModelConfig cfg = desk_cfg();
    const ModelWeights w = init_model(cfg, 77);

    MaskImage prompt_mask(64, 64);
    for (int64_t y = 24; y < 40; ++y)
        for (int64_t x = 24; x < 40; ++x) prompt_mask.set(y, x, 1);

    Lcg rng(1005);
    std::vector<Sample> train, test;
    for (int i = 0; i < 2000; ++i) train.push_back(make_context_sample(rng));
    for (int i = 0; i < 400; ++i) test.push_back(make_context_sample(rng));

    const double roi_acc = mode_accuracy(EncoderMode::RoiReplay, train, test, prompt_mask, cfg, w);
    const double local_acc =
        mode_accuracy(EncoderMode::LocalOnly, train, test, prompt_mask, cfg, w);
    const double elapsed = seconds_since(start);

    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "replay %.1f%%, local-crop %.1f%% on 400 held-out samples, %.0fs", roi_acc * 100,
                  local_acc * 100, elapsed);
    report(5, "context differential: replay >= 90%, local-only <= 60% (<= 10 min)",
           roi_acc >= 0.90 && local_acc <= 0.60 && elapsed < 600.0, detail);
}

// ---------------------------------------------------------------- criterion 6
void criterion_multi_prompt() {
    const ModelConfig cfg = desk_cfg();
    const ModelWeights w = init_model(cfg, 88);
    Lcg rng(1006);
    bool ok = true;
    const int64_t p_tokens =
        (cfg.tile_side / cfg.vit.patch_size) * (cfg.tile_side / cfg.vit.patch_size);

    for (int n : {1, 2, 7, 9}) {
        Request req;
        req.image = oracles::random_tensor({3, 64, 64}, rng, 0.0, 1.0);
        for (int i = 0; i < n; ++i) {
            MaskImage m(64, 64);
            const int64_t y0 = static_cast<int64_t>(rng.next_below(44));
            const int64_t x0 = static_cast<int64_t>(rng.next_below(44));
            for (int64_t y = y0; y < y0 + 18; ++y)
                for (int64_t x = x0; x < x0 + 18; ++x) m.set(y, x, 1);
            req.prompts.masks.push_back(m);
        }
        req.instruction = "relate <Prompt0> to the rest";
        const ModelInputSequence seq = assemble(req, cfg, w);

        const int64_t views = 5;  // 2x2 grid + global
        const int64_t instr = static_cast<int64_t>(tokenize(req.instruction, n).size());
        const int64_t expected =
            views * p_tokens + n * (cfg.roi.bins_r * cfg.roi.bins_c + 2) + instr;
        ok &= seq.length() == expected;

        // prompt segments appear in order 0..N-1 and partition correctly
        int64_t expect_index = 0;
        int64_t cursor = 0;
        for (const auto& s : seq.segments) {
            ok &= s.begin == cursor;
            cursor = s.end;
            if (s.kind == SegmentKind::PromptOpen) ok &= s.index == expect_index++;
        }
        ok &= cursor == seq.length();
        ok &= expect_index == n;

        if (n >= 2) {
            // swapping masks 0 and n-1 swaps exactly the two token spans
            Request swapped = req;
            std::swap(swapped.prompts.masks.front(), swapped.prompts.masks.back());
            const ModelInputSequence out = assemble(swapped, cfg, w);
            ok &= out.length() == seq.length();
            const auto span = [](const ModelInputSequence& s, int64_t idx) {
                for (const auto& seg : s.segments) {
                    if (seg.kind == SegmentKind::PromptTokens && seg.index == idx) return seg;
                }
                return s.segments.front();
            };
            const Segment a = span(seq, 0), b = span(seq, n - 1);
            for (int64_t i = 0; i < seq.length() && ok; ++i) {
                const bool in_a = i >= a.begin && i < a.end;
                const bool in_b = i >= b.begin && i < b.end;
                const SequenceItem& lhs = seq.items[static_cast<size_t>(i)];
                const SequenceItem& rhs =
                    in_a ? out.items[static_cast<size_t>(b.begin + (i - a.begin))]
                    : in_b ? out.items[static_cast<size_t>(a.begin + (i - b.begin))]
                           : out.items[static_cast<size_t>(i)];
                ok &= lhs.token == rhs.token && lhs.vector == rhs.vector;
            }
        }
    }
    report(6, "multi-prompt assembly: token identity + order covariance for N in {1,2,7,9}", ok);
}

// ---------------------------------------------------------------- criterion 7
void criterion_harness() {
    bool ok = true;

    // difficulty filter vs a one-line oracle on a 100-item random matrix
    Lcg rng(1007);
    PanelMatrix matrix;
    matrix.models = {"m1", "m2", "m3", "m4"};
    for (int i = 0; i < 100; ++i) {
        std::vector<bool> row;
        for (int j = 0; j < 4; ++j) row.push_back(rng.next_below(3) > 0);
        matrix.rows["item" + std::to_string(i)] = row;
    }
    const auto kept = difficulty_filter(matrix);
    std::vector<std::string> oracle;
    for (const auto& [id, row] : matrix.rows) {
        if (!std::all_of(row.begin(), row.end(), [](bool b) { return b; })) oracle.push_back(id);
    }
    ok &= kept == oracle;

    // 30-case MCQ normalization fixture: {prediction, gold, score, parse_fail, ambiguous}
    struct Case {
        const char* pred;
        const char* gold;
        int score;
        bool fail;
        bool ambiguous;
    };
    const Case fixture[30] = {
        {"A", "A", 1, false, false},
        {"a", "A", 1, false, false},
        {"A.", "A", 1, false, false},
        {"(A)", "A", 1, false, false},
        {"Answer: A", "A", 1, false, false},
        {"answer: b", "B", 1, false, false},
        {"The answer is (b).", "B", 1, false, false},
        {" C", "C", 1, false, false},
        {"C)", "C", 1, false, false},
        {"[D]", "D", 1, false, false},
        {"choice A", "A", 1, false, false},
        {"A,", "A", 1, false, false},
        {"The best option is B", "B", 1, false, false},
        {"I think it is D", "D", 1, false, false},
        {"b and c are both wrong, so a", "A", 0, false, true},
        {"both A and C seem right", "C", 0, false, true},
        {"", "A", 0, true, false},
        {"no letter here", "A", 0, true, false},
        {"answer", "A", 0, true, false},
        {"A B C D", "A", 1, false, true},
        {"(c) because it fits", "C", 1, false, false},
        {"D.", "D", 1, false, false},
        {"option (B) matches", "B", 1, false, false},
        {"Answer:C", "C", 1, false, false},
        {"e", "A", 0, true, false},
        {"the grass is tall, so B", "B", 1, false, false},
        {"b.", "B", 1, false, false},
        {"A: the first one", "A", 1, false, false},
        {"*C*", "C", 1, false, false},
        {"my answer is\nA", "A", 1, false, false},
    };
    BenchItem item;
    item.id = "fixture";
    item.kind = ItemKind::Mcq;
    item.choices = {{"A", "1"}, {"B", "2"}, {"C", "3"}, {"D", "4"}};
    item.subtask = "shape";
    item.masks = {"2 2; 0:1"};
    int fixture_failures = 0;
    for (const auto& c : fixture) {
        BenchItem local = item;
        local.gold = c.gold;
        const McqScore s = score_mcq(c.pred, local);
        const bool match = s.score == c.score && s.parse_failure == c.fail &&
                           s.ambiguous == c.ambiguous;
        if (!match) {
            ++fixture_failures;
            std::printf("      fixture miss: pred=\"%s\" got score=%d fail=%d amb=%d\n", c.pred,
                        s.score, static_cast<int>(s.parse_failure), static_cast<int>(s.ambiguous));
        }
    }
    ok &= fixture_failures == 0;

    // aggregate vs hand arithmetic: perception 2/4, reasoning 1/1 -> 0.5, 1.0, 3/5
    std::vector<ItemResult> results;
    const auto push = [&results](const char* sub, double score) {
        ItemResult r;
        r.id = std::to_string(results.size());
        r.subtask = sub;
        r.score = score;
        results.push_back(r);
    };
    push("color", 1);
    push("color", 0);
    push("shape", 1);
    push("material", 0);
    push("relation", 1);
    const Report rep = aggregate(results);
    ok &= rep.buckets.at("perception").count == 4;
    ok &= std::abs(rep.buckets.at("perception").accuracy() - 0.5) < 1e-12;
    ok &= std::abs(rep.buckets.at("reasoning").accuracy() - 1.0) < 1e-12;
    ok &= rep.overall.count == 5;
    ok &= std::abs(rep.overall.accuracy() - 0.6) < 1e-12;

    report(7, "harness: difficulty filter oracle, 30-case MCQ fixture, bucket arithmetic", ok);
}

// ---------------------------------------------------------------- criterion 8
struct AcceptKeepJudge : TextClient {
    std::atomic<int> calls{0};
    std::string complete(const std::string&) override {
        ++calls;
        return R"({"verdict": "keep", "rationale": "ok"})";
    }
};
struct AcceptMerger : TextClient {
    std::atomic<int> calls{0};
    std::string complete(const std::string& prompt) override {
        ++calls;
        if (prompt.find("question-answer") != std::string::npos) {
            return R"({"qa_pairs": [{"question": "q about <Prompt0>", "answer": "a"}]})";
        }
        if (prompt.find("multiple-choice") != std::string::npos) {
            return R"({"mcqs": [{"question": "pick", "choices": {"A": "x", "B": "y"}, "gold": "A"}]})";
        }
        return R"({"descriptions": ["<Prompt0> beside <Prompt1>"]})";
    }
};
struct AcceptCaptioner : CaptionClient {
    std::atomic<int> calls{0};
    int crash_after = -1;
    std::string caption(const std::string&, const std::string&) override {
        const int n = ++calls;
        if (crash_after >= 0 && n > crash_after) throw std::runtime_error("injected crash");
        return "a region";
    }
};

void criterion_pipeline() {
    bool ok = true;
    const auto make_manifest = [](const std::string& path) {
        std::ofstream os(path);
        for (int i = 0; i < 12; ++i) {
            nlohmann::json j;
            j["id"] = "rec" + std::to_string(i);
            j["image"] = "img.png";
            j["category"] = "thing";
            j["regions"] = {"4 4; 0:2", "4 4; 8:2"};
            j["relations"] = {{0, "by", 1}};
            j["stage"] = "seed_caption";
            j["payload"] = {{"caption", "a thing"}};
            os << j.dump() << "\n";
        }
    };
    PromptTemplates templates;
    templates.validate = "caption: {caption}\ncategory: {category}";
    templates.merge_caption = "{region_captions}{relations} descriptions";
    templates.merge_qa = "{region_captions}{relations} question-answer";
    templates.merge_mcq = "{region_captions}{relations} multiple-choice";

    const auto run_once = [&](const std::string& dir, int crash_after,
                              std::map<std::string, int64_t>* final_counts) {
        std::filesystem::create_directories(dir);
        const std::string manifest = dir + "/manifest.jsonl";
        make_manifest(manifest);
        AcceptKeepJudge judge;
        AcceptMerger merger;
        AcceptCaptioner captioner;
        PipelineConfig cfg;
        cfg.journal_path = dir + "/journal.jsonl";
        cfg.target = Stage::Merged;
        cfg.batch_size = 3;
        cfg.templates = templates;
        cfg.judge = &judge;
        cfg.merger = &merger;
        cfg.captioner = &captioner;

        bool conserved = true;
        if (crash_after >= 0) {
            captioner.crash_after = crash_after;
            try {
                run_pipeline(manifest, cfg);
                return false;  // the crash must surface
            } catch (const std::runtime_error&) {
            }
            captioner.crash_after = -1;
        }
        const PipelineSummary summary = run_pipeline(manifest, cfg);
        conserved &= summary.conserved();

        // idempotent re-run performs zero client calls
        const int j0 = judge.calls, m0 = merger.calls, c0 = captioner.calls;
        const PipelineSummary again = run_pipeline(manifest, cfg);
        conserved &= again.conserved();
        conserved &= judge.calls == j0 && merger.calls == m0 && captioner.calls == c0;
        conserved &= again.advanced == 0;

        for (const auto& r : load_manifest(manifest)) {
            (*final_counts)[stage_to_string(r.stage)]++;
        }
        return conserved;
    };

    std::map<std::string, int64_t> clean_counts, resumed_counts;
    ok &= run_once("acc_pipeline_clean", -1, &clean_counts);
    ok &= run_once("acc_pipeline_crash", 9, &resumed_counts);
    ok &= clean_counts == resumed_counts;
    ok &= clean_counts.at("merged") == 12;
    std::filesystem::remove_all("acc_pipeline_clean");
    std::filesystem::remove_all("acc_pipeline_crash");

    report(8, "pipeline: crash-resume parity, idempotent re-run, conservation", ok);
}

// ---------------------------------------------------------------- criterion 9
void criterion_frame_sampler() {
    bool ok = true;
    for (int64_t n : {1, 15, 16, 17, 160}) {
        const auto idx = sample_frames(n, 16);
        if (n <= 16) {
            ok &= static_cast<int64_t>(idx.size()) == n;
            for (int64_t i = 0; i < n; ++i) ok &= idx[static_cast<size_t>(i)] == i;
        } else {
            ok &= idx.size() == 16;
            ok &= idx.front() == 0;
            ok &= idx.back() == n - 1;
            const double ideal = static_cast<double>(n - 1) / 15.0;
            for (size_t i = 1; i < idx.size(); ++i) {
                ok &= std::abs(static_cast<double>(idx[i] - idx[i - 1]) - ideal) <= 1.0;
            }
            // strictly increasing (deduplicated)
            for (size_t i = 1; i < idx.size(); ++i) ok &= idx[i] > idx[i - 1];
        }
    }
    const auto exact = sample_frames(16, 16);
    ok &= exact.size() == 16 && exact.front() == 0 && exact.back() == 15;
    report(9, "frame sampler linspace contract for {1,15,16,17,160}", ok);
}

}  // namespace

int main() {
    criterion_roi_oracle();
    criterion_gradient_suite();
    criterion_zero_init();
    criterion_anyres_budget();
    criterion_context_differential();
    criterion_multi_prompt();
    criterion_harness();
    criterion_pipeline();
    criterion_frame_sampler();
    if (g_failures == 0) {
        std::printf("all 9 acceptance criteria passed\n");
        return 0;
    }
    std::printf("%d acceptance criteria FAILED\n", g_failures);
    return 1;
}
