#include "regionlm/transformer.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "regionlm/rng.hpp"

namespace regionlm {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = matmul(x, w);
    if (b.numel() > 0) {
        if (b.dim(0) != y.dim(1)) {
            throw std::invalid_argument("linear: bias " + b.shape_str() + " vs output " +
                                        y.shape_str());
        }
        for (int64_t i = 0; i < y.dim(0); ++i)
            for (int64_t j = 0; j < y.dim(1); ++j) y.at(i, j) += b[j];
    }
    return y;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out) {
    LinearGrads g;
    g.x = matmul_backward_a(grad_out, w);
    g.w = matmul_backward_b(x, grad_out);
    g.b = Tensor({grad_out.dim(1)});
    for (int64_t i = 0; i < grad_out.dim(0); ++i)
        for (int64_t j = 0; j < grad_out.dim(1); ++j) g.b[j] += grad_out.at(i, j);
    return g;
}

Tensor layernorm(const Tensor& x, const LnWeights& w) {
    const int64_t n = x.dim(0), d = x.dim(1);
    Tensor y(x.shape());
    for (int64_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += x.at(i, j);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = x.at(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv_sigma = 1.0 / std::sqrt(var + kLayerNormEps);
        for (int64_t j = 0; j < d; ++j) {
            y.at(i, j) = (x.at(i, j) - mean) * inv_sigma * w.gamma[j] + w.beta[j];
        }
    }
    return y;
}

LayerNormGrads layernorm_backward(const Tensor& x, const LnWeights& w, const Tensor& grad_out) {
    const int64_t n = x.dim(0), d = x.dim(1);
    LayerNormGrads g;
    g.x = Tensor(x.shape());
    g.gamma = Tensor({d});
    g.beta = Tensor({d});
    for (int64_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += x.at(i, j);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = x.at(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv_sigma = 1.0 / std::sqrt(var + kLayerNormEps);

        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        std::vector<double> xhat(static_cast<size_t>(d)), dxhat(static_cast<size_t>(d));
        for (int64_t j = 0; j < d; ++j) {
            xhat[static_cast<size_t>(j)] = (x.at(i, j) - mean) * inv_sigma;
            dxhat[static_cast<size_t>(j)] = grad_out.at(i, j) * w.gamma[j];
            g.gamma[j] += grad_out.at(i, j) * xhat[static_cast<size_t>(j)];
            g.beta[j] += grad_out.at(i, j);
            mean_dxhat += dxhat[static_cast<size_t>(j)];
            mean_dxhat_xhat += dxhat[static_cast<size_t>(j)] * xhat[static_cast<size_t>(j)];
        }
        mean_dxhat /= static_cast<double>(d);
        mean_dxhat_xhat /= static_cast<double>(d);
        for (int64_t j = 0; j < d; ++j) {
            g.x.at(i, j) = inv_sigma * (dxhat[static_cast<size_t>(j)] - mean_dxhat -
                                        xhat[static_cast<size_t>(j)] * mean_dxhat_xhat);
        }
    }
    return g;
}

namespace {

void check_attn(const Tensor& x, int64_t heads) {
    if (x.rank() != 2) throw std::invalid_argument("attention: rank-2 input required");
    if (heads < 1 || x.dim(1) % heads != 0) {
        throw std::invalid_argument("attention: embed dim " + std::to_string(x.dim(1)) +
                                    " not divisible by " + std::to_string(heads) + " heads");
    }
}

// scores for one head, [n x n]
Tensor head_scores(const Tensor& q, const Tensor& k, int64_t h, int64_t dh, bool causal) {
    const int64_t n = q.dim(0);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor s({n, n});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            if (causal && j > i) {
                s.at(i, j) = -std::numeric_limits<double>::infinity();
                continue;
            }
            double acc = 0.0;
            for (int64_t e = 0; e < dh; ++e) acc += q.at(i, h * dh + e) * k.at(j, h * dh + e);
            s.at(i, j) = acc * inv_sqrt;
        }
    }
    return s;
}

}  // namespace

std::vector<Tensor> attention_probs(const Tensor& x, const AttnWeights& w, int64_t heads,
                                    bool causal) {
    check_attn(x, heads);
    const int64_t dh = x.dim(1) / heads;
    const Tensor q = linear(x, w.wq, w.bq);
    const Tensor k = linear(x, w.wk, w.bk);
    std::vector<Tensor> probs;
    for (int64_t h = 0; h < heads; ++h) {
        probs.push_back(softmax_rows(head_scores(q, k, h, dh, causal)));
    }
    return probs;
}

Tensor attention(const Tensor& x, const AttnWeights& w, int64_t heads, bool causal) {
    check_attn(x, heads);
    const int64_t n = x.dim(0), d = x.dim(1), dh = d / heads;
    const Tensor q = linear(x, w.wq, w.bq);
    const Tensor k = linear(x, w.wk, w.bk);
    const Tensor v = linear(x, w.wv, w.bv);

    Tensor concat({n, d});
    for (int64_t h = 0; h < heads; ++h) {
        const Tensor probs = softmax_rows(head_scores(q, k, h, dh, causal));
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t e = 0; e < dh; ++e) {
                double acc = 0.0;
                for (int64_t j = 0; j < n; ++j) acc += probs.at(i, j) * v.at(j, h * dh + e);
                concat.at(i, h * dh + e) = acc;
            }
        }
    }
    return linear(concat, w.wo, w.bo);
}

AttentionGrads attention_backward(const Tensor& x, const AttnWeights& w, int64_t heads,
                                  bool causal, const Tensor& grad_out) {
    check_attn(x, heads);
    const int64_t n = x.dim(0), d = x.dim(1), dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    const Tensor q = linear(x, w.wq, w.bq);
    const Tensor k = linear(x, w.wk, w.bk);
    const Tensor v = linear(x, w.wv, w.bv);

    std::vector<Tensor> probs;
    Tensor concat({n, d});
    for (int64_t h = 0; h < heads; ++h) {
        probs.push_back(softmax_rows(head_scores(q, k, h, dh, causal)));
        const Tensor& p = probs.back();
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t e = 0; e < dh; ++e) {
                double acc = 0.0;
                for (int64_t j = 0; j < n; ++j) acc += p.at(i, j) * v.at(j, h * dh + e);
                concat.at(i, h * dh + e) = acc;
            }
        }
    }

    const LinearGrads go = linear_backward(concat, w.wo, grad_out);
    const Tensor& dconcat = go.x;

    Tensor dq({n, d}), dk({n, d}), dv({n, d});
    for (int64_t h = 0; h < heads; ++h) {
        const Tensor& p = probs[static_cast<size_t>(h)];
        // dprobs = dconcat_h @ v_h^T ; dv_h = p^T @ dconcat_h
        Tensor dprobs({n, n});
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int64_t e = 0; e < dh; ++e)
                    acc += dconcat.at(i, h * dh + e) * v.at(j, h * dh + e);
                dprobs.at(i, j) = acc;
            }
        }
        for (int64_t j = 0; j < n; ++j) {
            for (int64_t e = 0; e < dh; ++e) {
                double acc = 0.0;
                for (int64_t i = 0; i < n; ++i) acc += p.at(i, j) * dconcat.at(i, h * dh + e);
                dv.at(j, h * dh + e) = acc;
            }
        }
        const Tensor dscores = softmax_rows_backward(p, dprobs);
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t e = 0; e < dh; ++e) {
                double acc_q = 0.0;
                for (int64_t j = 0; j < n; ++j) acc_q += dscores.at(i, j) * k.at(j, h * dh + e);
                dq.at(i, h * dh + e) = acc_q * inv_sqrt;
            }
        }
        for (int64_t j = 0; j < n; ++j) {
            for (int64_t e = 0; e < dh; ++e) {
                double acc_k = 0.0;
                for (int64_t i = 0; i < n; ++i) acc_k += dscores.at(i, j) * q.at(i, h * dh + e);
                dk.at(j, h * dh + e) = acc_k * inv_sqrt;
            }
        }
    }

    const LinearGrads gq = linear_backward(x, w.wq, dq);
    const LinearGrads gk = linear_backward(x, w.wk, dk);
    const LinearGrads gv = linear_backward(x, w.wv, dv);

    AttentionGrads g;
    g.x = add(add(gq.x, gk.x), gv.x);
    g.w.wq = gq.w;
    g.w.bq = gq.b;
    g.w.wk = gk.w;
    g.w.bk = gk.b;
    g.w.wv = gv.w;
    g.w.bv = gv.b;
    g.w.wo = go.w;
    g.w.bo = go.b;
    return g;
}

Tensor mlp(const Tensor& x, const MlpWeights& w) {
    return linear(gelu(linear(x, w.w1, w.b1)), w.w2, w.b2);
}

MlpGrads mlp_backward(const Tensor& x, const MlpWeights& w, const Tensor& grad_out) {
    const Tensor h = linear(x, w.w1, w.b1);
    const Tensor a = gelu(h);

    const LinearGrads g2 = linear_backward(a, w.w2, grad_out);
    const Tensor dh = gelu_backward(h, g2.x);
    const LinearGrads g1 = linear_backward(x, w.w1, dh);

    MlpGrads g;
    g.x = g1.x;
    g.w.w1 = g1.w;
    g.w.b1 = g1.b;
    g.w.w2 = g2.w;
    g.w.b2 = g2.b;
    return g;
}

Tensor block_forward(const Tensor& x, const BlockWeights& w, int64_t heads, bool causal) {
    const Tensor a = attention(layernorm(x, w.ln1), w.attn, heads, causal);
    const Tensor x2 = add(x, a);
    const Tensor m = mlp(layernorm(x2, w.ln2), w.mlp);
    return add(x2, m);
}

BlockGrads block_backward(const Tensor& x, const BlockWeights& w, int64_t heads, bool causal,
                          const Tensor& grad_out) {
    const Tensor h1 = layernorm(x, w.ln1);
    const Tensor a = attention(h1, w.attn, heads, causal);
    const Tensor x2 = add(x, a);
    const Tensor h2 = layernorm(x2, w.ln2);

    BlockGrads g;
    const MlpGrads gm = mlp_backward(h2, w.mlp, grad_out);
    const LayerNormGrads gl2 = layernorm_backward(x2, w.ln2, gm.x);
    const Tensor dx2 = add(grad_out, gl2.x);

    const AttentionGrads ga = attention_backward(h1, w.attn, heads, causal, dx2);
    const LayerNormGrads gl1 = layernorm_backward(x, w.ln1, ga.x);
    g.x = add(dx2, gl1.x);

    g.w.ln1.gamma = gl1.gamma;
    g.w.ln1.beta = gl1.beta;
    g.w.attn = ga.w;
    g.w.ln2.gamma = gl2.gamma;
    g.w.ln2.beta = gl2.beta;
    g.w.mlp = gm.w;
    return g;
}

namespace {

Tensor uniform_init(std::vector<int64_t> shape, int64_t fan_in, Lcg& rng) {
    Tensor t(std::move(shape));
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-scale, scale);
    return t;
}

}  // namespace

BlockWeights init_block(int64_t embed_dim, int64_t mlp_hidden, Lcg& rng) {
    BlockWeights w;
    w.ln1.gamma = Tensor::full({embed_dim}, 1.0);
    w.ln1.beta = Tensor({embed_dim});
    w.attn.wq = uniform_init({embed_dim, embed_dim}, embed_dim, rng);
    w.attn.wk = uniform_init({embed_dim, embed_dim}, embed_dim, rng);
    w.attn.wv = uniform_init({embed_dim, embed_dim}, embed_dim, rng);
    w.attn.wo = uniform_init({embed_dim, embed_dim}, embed_dim, rng);
    w.attn.bq = Tensor({embed_dim});
    w.attn.bk = Tensor({embed_dim});
    w.attn.bv = Tensor({embed_dim});
    w.attn.bo = Tensor({embed_dim});
    w.ln2.gamma = Tensor::full({embed_dim}, 1.0);
    w.ln2.beta = Tensor({embed_dim});
    w.mlp.w1 = uniform_init({embed_dim, mlp_hidden}, embed_dim, rng);
    w.mlp.b1 = Tensor({mlp_hidden});
    w.mlp.w2 = uniform_init({mlp_hidden, embed_dim}, mlp_hidden, rng);
    w.mlp.b2 = Tensor({embed_dim});
    return w;
}

Tensor sinusoidal_positions(int64_t n, int64_t dim) {
    Tensor pos({n, dim});
    for (int64_t t = 0; t < n; ++t) {
        for (int64_t j = 0; j < dim; ++j) {
            const double exponent = static_cast<double>(2 * (j / 2)) / static_cast<double>(dim);
            const double angle = static_cast<double>(t) / std::pow(10000.0, exponent);
            pos.at(t, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pos;
}

}  // namespace regionlm
