#pragma once

#include <cstdint>

#include "regionlm/image.hpp"
#include "regionlm/tensor.hpp"

namespace regionlm {

// Per-patch token embeddings for one square view.
struct PatchEmbedding {
    Tensor tokens;  // [num_patches x embed_dim]
    int64_t p_rows = 0;
    int64_t p_cols = 0;
};

// Two-layer conv stack that turns a binary mask view into one embedding per
// patch position. The stride schedule (s1, s2) factors the patch size so the
// conv output grid equals the patch grid exactly; the second conv is the
// final projection and starts at exactly zero so a freshly initialized
// encoder is a no-op on the backbone.
struct PromptEncoderWeights {
    Tensor conv1_w;  // [hidden x 1 x s1 x s1]
    Tensor conv1_b;  // [hidden]
    Tensor conv2_w;  // [embed_dim x hidden x s2 x s2]
    Tensor conv2_b;  // [embed_dim]
    int64_t stride1 = 4;
    int64_t stride2 = 4;
    bool zero_init = true;
};

// Picks (s1, s2) with s1 * s2 == patch_size, s1 the largest divisor <= 4.
void prompt_encoder_strides(int64_t patch_size, int64_t* s1, int64_t* s2);

// zero_init=true zeroes the final projection (the default); false gives a
// fully random stack for differential tests.
PromptEncoderWeights init_prompt_encoder(int64_t patch_size, int64_t hidden, int64_t embed_dim,
                                         uint64_t seed, bool zero_init = true);

// mask view as a [1 x S x S] tensor -> [num_patches x embed_dim], aligned
// with the view's patchification. Throws on geometry mismatch.
Tensor encode_mask(const MaskImage& mask_view, const PromptEncoderWeights& weights,
                   int64_t p_rows, int64_t p_cols);

// Same stack on an arbitrary real-valued [1 x S x S] input; keeps the op
// differentiable for gradient checks.
Tensor conv_stack_apply(const Tensor& input, const PromptEncoderWeights& weights);

struct ConvStackGrads {
    Tensor input, conv1_w, conv1_b, conv2_w, conv2_b;
};
ConvStackGrads conv_stack_backward(const Tensor& input, const PromptEncoderWeights& weights,
                                   const Tensor& grad_out);

// Elementwise sum of mask embedding into patch tokens; inputs unmodified.
PatchEmbedding inject(const PatchEmbedding& patches, const Tensor& mask_emb);

}  // namespace regionlm
