#include "regionlm/prompt_encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "regionlm/rng.hpp"

namespace regionlm {

void prompt_encoder_strides(int64_t patch_size, int64_t* s1, int64_t* s2) {
    if (patch_size < 1) throw std::invalid_argument("prompt_encoder_strides: patch_size must be >= 1");
    int64_t best = 1;
    for (int64_t d = 1; d <= 4; ++d) {
        if (patch_size % d == 0) best = d;
    }
    *s1 = best;
    *s2 = patch_size / best;
}

PromptEncoderWeights init_prompt_encoder(int64_t patch_size, int64_t hidden, int64_t embed_dim,
                                         uint64_t seed, bool zero_init) {
    PromptEncoderWeights w;
    prompt_encoder_strides(patch_size, &w.stride1, &w.stride2);
    w.zero_init = zero_init;

    Lcg rng(seed);
    const double scale1 = 1.0 / std::sqrt(static_cast<double>(w.stride1 * w.stride1));
    w.conv1_w = Tensor({hidden, 1, w.stride1, w.stride1});
    for (int64_t i = 0; i < w.conv1_w.numel(); ++i) w.conv1_w[i] = rng.uniform(-scale1, scale1);
    w.conv1_b = Tensor({hidden});
    for (int64_t i = 0; i < hidden; ++i) w.conv1_b[i] = rng.uniform(-0.1, 0.1);

    w.conv2_w = Tensor({embed_dim, hidden, w.stride2, w.stride2});
    w.conv2_b = Tensor({embed_dim});
    if (!zero_init) {
        const double scale2 = 1.0 / std::sqrt(static_cast<double>(hidden * w.stride2 * w.stride2));
        for (int64_t i = 0; i < w.conv2_w.numel(); ++i) w.conv2_w[i] = rng.uniform(-scale2, scale2);
        for (int64_t i = 0; i < embed_dim; ++i) w.conv2_b[i] = rng.uniform(-0.1, 0.1);
    }
    return w;
}

Tensor conv_stack_apply(const Tensor& input, const PromptEncoderWeights& weights) {
    const Tensor h1 = conv2d(input, weights.conv1_w, weights.conv1_b, weights.stride1, 0);
    const Tensor a1 = gelu(h1);
    return conv2d(a1, weights.conv2_w, weights.conv2_b, weights.stride2, 0);
}

ConvStackGrads conv_stack_backward(const Tensor& input, const PromptEncoderWeights& weights,
                                   const Tensor& grad_out) {
    const Tensor h1 = conv2d(input, weights.conv1_w, weights.conv1_b, weights.stride1, 0);
    const Tensor a1 = gelu(h1);

    ConvStackGrads g;
    const Conv2dGrads g2 = conv2d_backward(a1, weights.conv2_w, true, weights.stride2, 0, grad_out);
    g.conv2_w = g2.kernel;
    g.conv2_b = g2.bias;
    const Tensor grad_h1 = gelu_backward(h1, g2.input);
    const Conv2dGrads g1 = conv2d_backward(input, weights.conv1_w, true, weights.stride1, 0, grad_h1);
    g.conv1_w = g1.kernel;
    g.conv1_b = g1.bias;
    g.input = g1.input;
    return g;
}

Tensor encode_mask(const MaskImage& mask_view, const PromptEncoderWeights& weights,
                   int64_t p_rows, int64_t p_cols) {
    const int64_t total_stride = weights.stride1 * weights.stride2;
    if (mask_view.height != p_rows * total_stride || mask_view.width != p_cols * total_stride) {
        throw std::invalid_argument(
            "encode_mask: mask " + std::to_string(mask_view.height) + "x" +
            std::to_string(mask_view.width) + " does not divide into patch grid " +
            std::to_string(p_rows) + "x" + std::to_string(p_cols) + " at stride " +
            std::to_string(total_stride));
    }

    Tensor input({1, mask_view.height, mask_view.width});
    for (int64_t y = 0; y < mask_view.height; ++y)
        for (int64_t x = 0; x < mask_view.width; ++x)
            input.at(0, y, x) = mask_view.at(y, x) ? 1.0 : 0.0;

    const Tensor fmap = conv_stack_apply(input, weights);  // [embed x p_rows x p_cols]
    const int64_t embed = fmap.dim(0);
    Tensor tokens({p_rows * p_cols, embed});
    for (int64_t y = 0; y < p_rows; ++y)
        for (int64_t x = 0; x < p_cols; ++x)
            for (int64_t d = 0; d < embed; ++d)
                tokens.at(y * p_cols + x, d) = fmap.at(d, y, x);
    return tokens;
}

PatchEmbedding inject(const PatchEmbedding& patches, const Tensor& mask_emb) {
    if (!patches.tokens.same_shape(mask_emb)) {
        throw std::invalid_argument("inject: shape mismatch " + patches.tokens.shape_str() +
                                    " vs " + mask_emb.shape_str());
    }
    PatchEmbedding out;
    out.tokens = add(patches.tokens, mask_emb);
    out.p_rows = patches.p_rows;
    out.p_cols = patches.p_cols;
    return out;
}

}  // namespace regionlm
