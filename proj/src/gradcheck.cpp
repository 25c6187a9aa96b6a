#include "regionlm/gradcheck.hpp"

#include <algorithm>

#include "regionlm/prompt_encoder.hpp"
#include "regionlm/rng.hpp"
#include "regionlm/roi_align.hpp"
#include "regionlm/tensor.hpp"
#include "regionlm/transformer.hpp"

namespace regionlm {

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Lcg& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

constexpr double kEps = 1e-5;

double check_matmul(uint64_t seed) {
    Lcg rng(seed);
    std::vector<Tensor> inputs = {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng)};
    return backward_check(
        [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
        [](const std::vector<Tensor>& in, const Tensor& g) {
            return std::vector<Tensor>{matmul_backward_a(g, in[1]), matmul_backward_b(in[0], g)};
        },
        std::move(inputs), kEps, seed);
}

double check_conv2d(uint64_t seed) {
    Lcg rng(seed);
    std::vector<Tensor> inputs = {random_tensor({2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng),
                                  random_tensor({3}, rng)};
    return backward_check(
        [](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], 1, 1); },
        [](const std::vector<Tensor>& in, const Tensor& g) {
            const Conv2dGrads c = conv2d_backward(in[0], in[1], true, 1, 1, g);
            return std::vector<Tensor>{c.input, c.kernel, c.bias};
        },
        std::move(inputs), kEps, seed);
}

double check_conv_stack(uint64_t seed) {
    PromptEncoderWeights w = init_prompt_encoder(/*patch_size=*/4, /*hidden=*/3,
                                                 /*embed_dim=*/5, seed, /*zero_init=*/false);
    Lcg rng(seed ^ 0x9e3779b9);
    std::vector<Tensor> inputs = {random_tensor({1, 8, 8}, rng), w.conv1_w, w.conv1_b, w.conv2_w,
                                  w.conv2_b};
    const int64_t s1 = w.stride1, s2 = w.stride2;
    const auto pack = [s1, s2](const std::vector<Tensor>& in) {
        PromptEncoderWeights pw;
        pw.conv1_w = in[1];
        pw.conv1_b = in[2];
        pw.conv2_w = in[3];
        pw.conv2_b = in[4];
        pw.stride1 = s1;
        pw.stride2 = s2;
        return pw;
    };
    return backward_check(
        [pack](const std::vector<Tensor>& in) { return conv_stack_apply(in[0], pack(in)); },
        [pack](const std::vector<Tensor>& in, const Tensor& g) {
            const ConvStackGrads cg = conv_stack_backward(in[0], pack(in), g);
            return std::vector<Tensor>{cg.input, cg.conv1_w, cg.conv1_b, cg.conv2_w, cg.conv2_b};
        },
        std::move(inputs), kEps, seed);
}

double check_patch_proj(uint64_t seed) {
    Lcg rng(seed);
    std::vector<Tensor> inputs = {random_tensor({4, 12}, rng), random_tensor({12, 6}, rng),
                                  random_tensor({6}, rng)};
    return backward_check(
        [](const std::vector<Tensor>& in) { return linear(in[0], in[1], in[2]); },
        [](const std::vector<Tensor>& in, const Tensor& g) {
            const LinearGrads lg = linear_backward(in[0], in[1], g);
            return std::vector<Tensor>{lg.x, lg.w, lg.b};
        },
        std::move(inputs), kEps, seed);
}

double check_layernorm(uint64_t seed) {
    Lcg rng(seed);
    std::vector<Tensor> inputs = {random_tensor({4, 6}, rng),
                                  random_tensor({6}, rng, 0.5, 1.5),
                                  random_tensor({6}, rng)};
    return backward_check(
        [](const std::vector<Tensor>& in) {
            return layernorm(in[0], LnWeights{in[1], in[2]});
        },
        [](const std::vector<Tensor>& in, const Tensor& g) {
            const LayerNormGrads lg = layernorm_backward(in[0], LnWeights{in[1], in[2]}, g);
            return std::vector<Tensor>{lg.x, lg.gamma, lg.beta};
        },
        std::move(inputs), kEps, seed);
}

double check_attention(uint64_t seed, bool causal) {
    Lcg rng(seed);
    const int64_t n = 5, d = 8, heads = 2;
    std::vector<Tensor> inputs = {random_tensor({n, d}, rng),
                                  random_tensor({d, d}, rng, -0.5, 0.5),
                                  random_tensor({d}, rng, -0.1, 0.1),
                                  random_tensor({d, d}, rng, -0.5, 0.5),
                                  random_tensor({d}, rng, -0.1, 0.1),
                                  random_tensor({d, d}, rng, -0.5, 0.5),
                                  random_tensor({d}, rng, -0.1, 0.1),
                                  random_tensor({d, d}, rng, -0.5, 0.5),
                                  random_tensor({d}, rng, -0.1, 0.1)};
    const auto pack = [](const std::vector<Tensor>& in) {
        return AttnWeights{in[1], in[3], in[5], in[7], in[2], in[4], in[6], in[8]};
    };
    return backward_check(
        [pack, heads, causal](const std::vector<Tensor>& in) {
            return attention(in[0], pack(in), heads, causal);
        },
        [pack, heads, causal](const std::vector<Tensor>& in, const Tensor& g) {
            const AttentionGrads ag = attention_backward(in[0], pack(in), heads, causal, g);
            return std::vector<Tensor>{ag.x,    ag.w.wq, ag.w.bq, ag.w.wk, ag.w.bk,
                                       ag.w.wv, ag.w.bv, ag.w.wo, ag.w.bo};
        },
        std::move(inputs), kEps, seed);
}

double check_mlp(uint64_t seed) {
    Lcg rng(seed);
    std::vector<Tensor> inputs = {random_tensor({4, 6}, rng), random_tensor({6, 12}, rng),
                                  random_tensor({12}, rng, -0.1, 0.1),
                                  random_tensor({12, 6}, rng), random_tensor({6}, rng, -0.1, 0.1)};
    return backward_check(
        [](const std::vector<Tensor>& in) {
            return mlp(in[0], MlpWeights{in[1], in[2], in[3], in[4]});
        },
        [](const std::vector<Tensor>& in, const Tensor& g) {
            const MlpGrads mg = mlp_backward(in[0], MlpWeights{in[1], in[2], in[3], in[4]}, g);
            return std::vector<Tensor>{mg.x, mg.w.w1, mg.w.b1, mg.w.w2, mg.w.b2};
        },
        std::move(inputs), kEps, seed);
}

double check_block(uint64_t seed, bool causal) {
    Lcg rng(seed);
    const int64_t d = 8;
    const BlockWeights w = init_block(d, 2 * d, rng);
    std::vector<Tensor> inputs = {random_tensor({4, d}, rng)};
    return backward_check(
        [&w, causal](const std::vector<Tensor>& in) {
            return block_forward(in[0], w, /*heads=*/2, causal);
        },
        [&w, causal](const std::vector<Tensor>& in, const Tensor& g) {
            return std::vector<Tensor>{block_backward(in[0], w, 2, causal, g).x};
        },
        std::move(inputs), kEps, seed);
}

double check_roi_align(uint64_t seed) {
    Lcg rng(seed);
    const int64_t h = 6, w = 7;
    std::vector<Tensor> inputs = {random_tensor({2, h, w}, rng)};
    RoiRect rect;
    rect.x0 = rng.uniform(0.0, 3.0);
    rect.y0 = rng.uniform(0.0, 2.5);
    rect.x1 = rect.x0 + rng.uniform(1.0, 3.5);
    rect.y1 = rect.y0 + rng.uniform(1.0, 3.0);
    RoiConfig cfg;
    cfg.bins_r = 3;
    cfg.bins_c = 2;
    cfg.sampling_ratio = 2;
    return backward_check(
        [rect, cfg](const std::vector<Tensor>& in) { return roi_align(in[0], rect, cfg); },
        [rect, cfg, h, w](const std::vector<Tensor>&, const Tensor& g) {
            return std::vector<Tensor>{roi_align_backward(g, rect, cfg, h, w)};
        },
        std::move(inputs), kEps, seed);
}

}  // namespace

std::vector<GradCheckCase> gradcheck_registry() {
    return {
        {"tensor.matmul", check_matmul, 1e-5},
        {"tensor.conv2d", check_conv2d, 1e-5},
        {"prompt.conv_stack", check_conv_stack, 1e-5},
        {"vit.patch_proj", check_patch_proj, 1e-5},
        {"vit.layernorm", check_layernorm, 1e-5},
        {"vit.attention", [](uint64_t s) { return check_attention(s, false); }, 1e-5},
        {"vit.mlp", check_mlp, 1e-5},
        {"vit.block", [](uint64_t s) { return check_block(s, false); }, 1e-5},
        {"decoder.block", [](uint64_t s) { return check_block(s, true); }, 1e-5},
        {"roi.roi_align", check_roi_align, 1e-5},
    };
}

std::vector<GradCheckResult> run_gradchecks(const std::string& scope, int seeds) {
    std::vector<GradCheckResult> results;
    for (const auto& c : gradcheck_registry()) {
        if (scope != "all" && c.name.rfind(scope, 0) != 0) continue;
        GradCheckResult r;
        r.name = c.name;
        r.tolerance = c.tolerance;
        for (int s = 1; s <= seeds; ++s) {
            r.max_error = std::max(r.max_error, c.run(static_cast<uint64_t>(s)));
        }
        r.passed = r.max_error < c.tolerance;
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace regionlm
