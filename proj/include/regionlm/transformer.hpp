#pragma once

#include <cstdint>
#include <vector>

#include "regionlm/tensor.hpp"

namespace regionlm {

// Pre-norm transformer block primitives shared by the vision backbone
// (bidirectional) and the toy decoder (causal). Backward passes recompute
// forward intermediates; fine at this scale and keeps every op a pure
// function.

struct LnWeights {
    Tensor gamma, beta;  // [D]
};

struct AttnWeights {
    Tensor wq, wk, wv, wo;  // [D x D]
    Tensor bq, bk, bv, bo;  // [D]
};

struct MlpWeights {
    Tensor w1, b1;  // [D x H], [H]
    Tensor w2, b2;  // [H x D], [D]
};

struct BlockWeights {
    LnWeights ln1;
    AttnWeights attn;
    LnWeights ln2;
    MlpWeights mlp;
};

constexpr double kLayerNormEps = 1e-5;

// y = x @ w + b (bias broadcast over rows)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
struct LinearGrads {
    Tensor x, w, b;
};
LinearGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out);

Tensor layernorm(const Tensor& x, const LnWeights& w);
struct LayerNormGrads {
    Tensor x, gamma, beta;
};
LayerNormGrads layernorm_backward(const Tensor& x, const LnWeights& w, const Tensor& grad_out);

// Multi-head softmax attention over a [n x D] sequence.
Tensor attention(const Tensor& x, const AttnWeights& w, int64_t heads, bool causal);
// Row-stochastic attention matrices, one [n x n] map per head; for
// normalization checks.
std::vector<Tensor> attention_probs(const Tensor& x, const AttnWeights& w, int64_t heads,
                                    bool causal);
struct AttentionGrads {
    Tensor x;
    AttnWeights w;
};
AttentionGrads attention_backward(const Tensor& x, const AttnWeights& w, int64_t heads,
                                  bool causal, const Tensor& grad_out);

Tensor mlp(const Tensor& x, const MlpWeights& w);
struct MlpGrads {
    Tensor x;
    MlpWeights w;
};
MlpGrads mlp_backward(const Tensor& x, const MlpWeights& w, const Tensor& grad_out);

// x + Attn(LN1(x)) followed by + MLP(LN2(.)).
Tensor block_forward(const Tensor& x, const BlockWeights& w, int64_t heads, bool causal);
struct BlockGrads {
    Tensor x;
    BlockWeights w;
};
BlockGrads block_backward(const Tensor& x, const BlockWeights& w, int64_t heads, bool causal,
                          const Tensor& grad_out);

// Uniform(-1/sqrt(fan_in), +) weights, zero biases, identity layernorm.
BlockWeights init_block(int64_t embed_dim, int64_t mlp_hidden, class Lcg& rng);

// Fixed sinusoidal position encodings, [n x dim].
Tensor sinusoidal_positions(int64_t n, int64_t dim);

}  // namespace regionlm
