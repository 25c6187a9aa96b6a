#include "regionlm/vit.hpp"

#include <cmath>
#include <stdexcept>

#include "regionlm/rng.hpp"

namespace regionlm {

void VitConfig::validate() const {
    if (depth < 0) throw std::invalid_argument("VitConfig: depth must be >= 0");
    if (heads < 1 || embed_dim % heads != 0) {
        throw std::invalid_argument("VitConfig: embed_dim must divide by heads");
    }
    if (patch_size < 1 || mlp_ratio < 1) {
        throw std::invalid_argument("VitConfig: patch_size and mlp_ratio must be >= 1");
    }
}

VitWeights init_vit(const VitConfig& cfg, int64_t channels, uint64_t seed) {
    cfg.validate();
    Lcg rng(seed);
    VitWeights w;
    const int64_t fan_in = channels * cfg.patch_size * cfg.patch_size;
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    w.patch_w = Tensor({fan_in, cfg.embed_dim});
    for (int64_t i = 0; i < w.patch_w.numel(); ++i) w.patch_w[i] = rng.uniform(-scale, scale);
    w.patch_b = Tensor({cfg.embed_dim});
    for (int64_t i = 0; i < cfg.depth; ++i) {
        w.blocks.push_back(init_block(cfg.embed_dim, cfg.mlp_hidden(), rng));
    }
    return w;
}

Tensor unfold_patches(const Tensor& view, int64_t patch_size) {
    if (view.rank() != 3) throw std::invalid_argument("unfold_patches: expected [CxHxW]");
    const int64_t C = view.dim(0), H = view.dim(1), W = view.dim(2);
    if (H % patch_size != 0 || W % patch_size != 0) {
        throw std::invalid_argument("unfold_patches: view " + view.shape_str() +
                                    " not divisible by patch size " + std::to_string(patch_size));
    }
    const int64_t pr = H / patch_size, pc = W / patch_size;
    Tensor out({pr * pc, C * patch_size * patch_size});
    for (int64_t py = 0; py < pr; ++py) {
        for (int64_t px = 0; px < pc; ++px) {
            const int64_t row = py * pc + px;
            int64_t col = 0;
            for (int64_t c = 0; c < C; ++c)
                for (int64_t y = 0; y < patch_size; ++y)
                    for (int64_t x = 0; x < patch_size; ++x)
                        out.at(row, col++) = view.at(c, py * patch_size + y, px * patch_size + x);
        }
    }
    return out;
}

PatchEmbedding patchify(const Tensor& view, const VitConfig& cfg, const VitWeights& weights) {
    const Tensor unfolded = unfold_patches(view, cfg.patch_size);
    Tensor tokens = linear(unfolded, weights.patch_w, weights.patch_b);
    const Tensor pos = sinusoidal_positions(tokens.dim(0), tokens.dim(1));
    tokens = add(tokens, pos);

    PatchEmbedding pe;
    pe.p_rows = view.dim(1) / cfg.patch_size;
    pe.p_cols = view.dim(2) / cfg.patch_size;
    pe.tokens = std::move(tokens);
    return pe;
}

Tensor tokens_to_map(const Tensor& tokens, int64_t p_rows, int64_t p_cols) {
    if (tokens.rank() != 2 || tokens.dim(0) != p_rows * p_cols) {
        throw std::invalid_argument("tokens_to_map: tokens " + tokens.shape_str() +
                                    " vs grid " + std::to_string(p_rows) + "x" +
                                    std::to_string(p_cols));
    }
    const int64_t D = tokens.dim(1);
    Tensor map({D, p_rows, p_cols});
    for (int64_t y = 0; y < p_rows; ++y)
        for (int64_t x = 0; x < p_cols; ++x)
            for (int64_t d = 0; d < D; ++d) map.at(d, y, x) = tokens.at(y * p_cols + x, d);
    return map;
}

Tensor encode_single_view(const Tensor& view, const Tensor& mask_emb, const VitConfig& cfg,
                          const VitWeights& weights) {
    PatchEmbedding pe = patchify(view, cfg, weights);
    pe = inject(pe, mask_emb);
    Tensor x = pe.tokens;
    for (const auto& block : weights.blocks) {
        x = block_forward(x, block, cfg.heads, /*causal=*/false);
    }
    return tokens_to_map(x, pe.p_rows, pe.p_cols);
}

std::vector<FeatureMap> encode_views(const TileBatch& batch, const std::vector<Tensor>& mask_embs,
                                     const VitConfig& cfg, const VitWeights& weights) {
    if (mask_embs.size() != static_cast<size_t>(batch.view_count())) {
        throw std::invalid_argument("encode_views: " + std::to_string(mask_embs.size()) +
                                    " mask embeddings for " + std::to_string(batch.view_count()) +
                                    " views");
    }
    std::vector<FeatureMap> maps;
    maps.push_back(FeatureMap{
        encode_single_view(batch.global_view, mask_embs[0], cfg, weights), -1});
    for (size_t i = 0; i < batch.tiles.size(); ++i) {
        maps.push_back(FeatureMap{
            encode_single_view(batch.tiles[i], mask_embs[i + 1], cfg, weights),
            static_cast<int64_t>(i)});
    }
    return maps;
}

namespace {

void put_block(WeightMap& m, const std::string& p, const BlockWeights& b) {
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

const Tensor& section(const WeightMap& m, const std::string& name) {
    const auto it = m.find(name);
    if (it == m.end()) throw std::runtime_error("weight bundle: missing section " + name);
    return it->second;
}

BlockWeights get_block(const WeightMap& m, const std::string& p) {
    BlockWeights b;
    b.ln1.gamma = section(m, p + ".ln1.gamma");
    b.ln1.beta = section(m, p + ".ln1.beta");
    b.attn.wq = section(m, p + ".attn.wq");
    b.attn.bq = section(m, p + ".attn.bq");
    b.attn.wk = section(m, p + ".attn.wk");
    b.attn.bk = section(m, p + ".attn.bk");
    b.attn.wv = section(m, p + ".attn.wv");
    b.attn.bv = section(m, p + ".attn.bv");
    b.attn.wo = section(m, p + ".attn.wo");
    b.attn.bo = section(m, p + ".attn.bo");
    b.ln2.gamma = section(m, p + ".ln2.gamma");
    b.ln2.beta = section(m, p + ".ln2.beta");
    b.mlp.w1 = section(m, p + ".mlp.w1");
    b.mlp.b1 = section(m, p + ".mlp.b1");
    b.mlp.w2 = section(m, p + ".mlp.w2");
    b.mlp.b2 = section(m, p + ".mlp.b2");
    return b;
}

}  // namespace

WeightMap vit_to_sections(const VitWeights& w, const std::string& prefix) {
    WeightMap m;
    m[prefix + ".patch_w"] = w.patch_w;
    m[prefix + ".patch_b"] = w.patch_b;
    for (size_t i = 0; i < w.blocks.size(); ++i) {
        put_block(m, prefix + ".block" + std::to_string(i), w.blocks[i]);
    }
    return m;
}

VitWeights vit_from_sections(const WeightMap& sections, const std::string& prefix,
                             const VitConfig& cfg) {
    VitWeights w;
    w.patch_w = section(sections, prefix + ".patch_w");
    w.patch_b = section(sections, prefix + ".patch_b");
    for (int64_t i = 0; i < cfg.depth; ++i) {
        w.blocks.push_back(get_block(sections, prefix + ".block" + std::to_string(i)));
    }
    return w;
}

}  // namespace regionlm
