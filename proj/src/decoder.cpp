#include "regionlm/decoder.hpp"

#include <cmath>
#include <stdexcept>

#include "regionlm/rng.hpp"

namespace regionlm {

int64_t prompt_open_token(int64_t k) {
    if (k < 0 || k >= kMaxPromptSlots) {
        throw std::invalid_argument("prompt slot " + std::to_string(k) + " out of range");
    }
    return 257 + 2 * k;
}

int64_t prompt_close_token(int64_t k) { return prompt_open_token(k) + 1; }

namespace {

// Parses "<PromptK>" or "</PromptK>" at position i; returns the token id and
// advances *i past the placeholder, or returns -1.
int64_t try_parse_placeholder(const std::string& text, size_t* i) {
    size_t p = *i;
    if (text[p] != '<') return -1;
    ++p;
    bool closing = false;
    if (p < text.size() && text[p] == '/') {
        closing = true;
        ++p;
    }
    const std::string word = "Prompt";
    if (text.compare(p, word.size(), word) != 0) return -1;
    p += word.size();
    size_t digits = 0;
    int64_t k = 0;
    while (p < text.size() && text[p] >= '0' && text[p] <= '9') {
        k = k * 10 + (text[p] - '0');
        ++p;
        ++digits;
        if (digits > 6) return -1;
    }
    if (digits == 0 || p >= text.size() || text[p] != '>') return -1;
    *i = p + 1;
    return closing ? ~(k + 1) : k;  // encode closing as negative, disambiguated from "no match"
}

}  // namespace

std::vector<int64_t> tokenize(const std::string& text, int64_t n_prompts) {
    std::vector<int64_t> out;
    size_t i = 0;
    while (i < text.size()) {
        size_t j = i;
        const int64_t parsed = try_parse_placeholder(text, &j);
        if (j != i) {
            const bool closing = parsed < 0;
            const int64_t k = closing ? (~parsed) - 1 : parsed;
            if (k >= n_prompts) {
                throw std::invalid_argument("placeholder <Prompt" + std::to_string(k) +
                                            "> out of range for " + std::to_string(n_prompts) +
                                            " prompts");
            }
            out.push_back(closing ? prompt_close_token(k) : prompt_open_token(k));
            i = j;
        } else {
            out.push_back(static_cast<unsigned char>(text[i]));
            ++i;
        }
    }
    return out;
}

std::string detokenize(const std::vector<int64_t>& tokens) {
    std::string out;
    for (int64_t t : tokens) {
        if (t >= 0 && t < kByteVocab) {
            out.push_back(static_cast<char>(t));
        } else if (t == kEndToken) {
            break;
        } else if (t > kEndToken && t < kVocabSize) {
            const int64_t rel = t - 257;
            const int64_t k = rel / 2;
            out += (rel % 2 == 0) ? "<Prompt" + std::to_string(k) + ">"
                                  : "</Prompt" + std::to_string(k) + ">";
        } else {
            throw std::invalid_argument("detokenize: invalid token id " + std::to_string(t));
        }
    }
    return out;
}

DecoderWeights init_decoder(const DecoderConfig& cfg, uint64_t seed) {
    if (cfg.heads < 1 || cfg.d_model % cfg.heads != 0) {
        throw std::invalid_argument("DecoderConfig: d_model must divide by heads");
    }
    Lcg rng(seed);
    DecoderWeights w;
    const double es = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    w.token_embed = Tensor({kVocabSize, cfg.d_model});
    for (int64_t i = 0; i < w.token_embed.numel(); ++i) w.token_embed[i] = rng.uniform(-es, es);
    const double vs = 1.0 / std::sqrt(static_cast<double>(cfg.vision_dim));
    w.vision_w = Tensor({cfg.vision_dim, cfg.d_model});
    for (int64_t i = 0; i < w.vision_w.numel(); ++i) w.vision_w[i] = rng.uniform(-vs, vs);
    w.vision_b = Tensor({cfg.d_model});
    for (int64_t i = 0; i < cfg.depth; ++i) {
        w.blocks.push_back(init_block(cfg.d_model, cfg.d_model * cfg.mlp_ratio, rng));
    }
    w.final_ln.gamma = Tensor::full({cfg.d_model}, 1.0);
    w.final_ln.beta = Tensor({cfg.d_model});
    w.head_w = Tensor({cfg.d_model, kVocabSize});
    for (int64_t i = 0; i < w.head_w.numel(); ++i) w.head_w[i] = rng.uniform(-es, es);
    w.head_b = Tensor({kVocabSize});
    return w;
}

namespace {

Tensor embed_items(const std::vector<SequenceItem>& items, const DecoderConfig& cfg,
                   const DecoderWeights& w) {
    const int64_t n = static_cast<int64_t>(items.size());
    Tensor x({n, cfg.d_model});
    for (int64_t i = 0; i < n; ++i) {
        const SequenceItem& item = items[static_cast<size_t>(i)];
        if (item.is_token()) {
            if (item.token >= kVocabSize) {
                throw std::invalid_argument("token id " + std::to_string(item.token) +
                                            " outside vocabulary");
            }
            for (int64_t d = 0; d < cfg.d_model; ++d) x.at(i, d) = w.token_embed.at(item.token, d);
        } else {
            if (static_cast<int64_t>(item.vector.size()) != cfg.vision_dim) {
                throw std::invalid_argument("vision item width " +
                                            std::to_string(item.vector.size()) + " != " +
                                            std::to_string(cfg.vision_dim));
            }
            for (int64_t d = 0; d < cfg.d_model; ++d) {
                double acc = w.vision_b[d];
                for (int64_t e = 0; e < cfg.vision_dim; ++e) {
                    acc += item.vector[static_cast<size_t>(e)] * w.vision_w.at(e, d);
                }
                x.at(i, d) = acc;
            }
        }
    }
    return add(x, sinusoidal_positions(n, cfg.d_model));
}

}  // namespace

Tensor decoder_forward(const std::vector<SequenceItem>& items, const DecoderConfig& cfg,
                       const DecoderWeights& weights) {
    if (items.empty()) throw std::invalid_argument("decoder_forward: empty sequence");
    Tensor x = embed_items(items, cfg, weights);
    for (const auto& block : weights.blocks) {
        x = block_forward(x, block, cfg.heads, /*causal=*/true);
    }
    x = layernorm(x, weights.final_ln);
    const Tensor logits = linear(x, weights.head_w, weights.head_b);
    return softmax_rows(logits);
}

std::vector<int64_t> greedy_decode(std::vector<SequenceItem> prefix, const DecoderConfig& cfg,
                                   const DecoderWeights& weights, int64_t max_tokens) {
    std::vector<int64_t> generated;
    for (int64_t step = 0; step < max_tokens; ++step) {
        const Tensor dist = decoder_forward(prefix, cfg, weights);
        const int64_t last = dist.dim(0) - 1;
        int64_t best = 0;
        for (int64_t v = 1; v < kVocabSize; ++v) {
            if (dist.at(last, v) > dist.at(last, best)) best = v;
        }
        if (best == kEndToken) break;
        generated.push_back(best);
        prefix.push_back(SequenceItem::from_token(best));
    }
    return generated;
}

namespace {

const Tensor& section(const WeightMap& m, const std::string& name) {
    const auto it = m.find(name);
    if (it == m.end()) throw std::runtime_error("weight bundle: missing section " + name);
    return it->second;
}

}  // namespace

WeightMap decoder_to_sections(const DecoderWeights& w, const std::string& prefix) {
    WeightMap m;
    m[prefix + ".token_embed"] = w.token_embed;
    m[prefix + ".vision_w"] = w.vision_w;
    m[prefix + ".vision_b"] = w.vision_b;
    m[prefix + ".final_ln.gamma"] = w.final_ln.gamma;
    m[prefix + ".final_ln.beta"] = w.final_ln.beta;
    m[prefix + ".head_w"] = w.head_w;
    m[prefix + ".head_b"] = w.head_b;
    for (size_t i = 0; i < w.blocks.size(); ++i) {
        const std::string p = prefix + ".block" + std::to_string(i);
        const BlockWeights& b = w.blocks[i];
        m[p + ".ln1.gamma"] = b.ln1.gamma;
        m[p + ".ln1.beta"] = b.ln1.beta;
        m[p + ".attn.wq"] = b.attn.wq;
        m[p + ".attn.bq"] = b.attn.bq;
        m[p + ".attn.wk"] = b.attn.wk;
        m[p + ".attn.bk"] = b.attn.bk;
        m[p + ".attn.wv"] = b.attn.wv;
        m[p + ".attn.bv"] = b.attn.bv;
        m[p + ".attn.wo"] = b.attn.wo;
        m[p + ".attn.bo"] = b.attn.bo;
        m[p + ".ln2.gamma"] = b.ln2.gamma;
        m[p + ".ln2.beta"] = b.ln2.beta;
        m[p + ".mlp.w1"] = b.mlp.w1;
        m[p + ".mlp.b1"] = b.mlp.b1;
        m[p + ".mlp.w2"] = b.mlp.w2;
        m[p + ".mlp.b2"] = b.mlp.b2;
    }
    return m;
}

DecoderWeights decoder_from_sections(const WeightMap& sections, const std::string& prefix,
                                     const DecoderConfig& cfg) {
    DecoderWeights w;
    w.token_embed = section(sections, prefix + ".token_embed");
    w.vision_w = section(sections, prefix + ".vision_w");
    w.vision_b = section(sections, prefix + ".vision_b");
    w.final_ln.gamma = section(sections, prefix + ".final_ln.gamma");
    w.final_ln.beta = section(sections, prefix + ".final_ln.beta");
    w.head_w = section(sections, prefix + ".head_w");
    w.head_b = section(sections, prefix + ".head_b");
    for (int64_t i = 0; i < cfg.depth; ++i) {
        const std::string p = prefix + ".block" + std::to_string(i);
        BlockWeights b;
        b.ln1.gamma = section(sections, p + ".ln1.gamma");
        b.ln1.beta = section(sections, p + ".ln1.beta");
        b.attn.wq = section(sections, p + ".attn.wq");
        b.attn.bq = section(sections, p + ".attn.bq");
        b.attn.wk = section(sections, p + ".attn.wk");
        b.attn.bk = section(sections, p + ".attn.bk");
        b.attn.wv = section(sections, p + ".attn.wv");
        b.attn.bv = section(sections, p + ".attn.bv");
        b.attn.wo = section(sections, p + ".attn.wo");
        b.attn.bo = section(sections, p + ".attn.bo");
        b.ln2.gamma = section(sections, p + ".ln2.gamma");
        b.ln2.beta = section(sections, p + ".ln2.beta");
        b.mlp.w1 = section(sections, p + ".mlp.w1");
        b.mlp.b1 = section(sections, p + ".mlp.b1");
        b.mlp.w2 = section(sections, p + ".mlp.w2");
        b.mlp.b2 = section(sections, p + ".mlp.b2");
        w.blocks.push_back(std::move(b));
    }
    return w;
}

}  // namespace regionlm
