#pragma once

#include <cstdint>
#include <vector>

#include "regionlm/anyres.hpp"
#include "regionlm/prompt_encoder.hpp"
#include "regionlm/tensor.hpp"
#include "regionlm/tensor_io.hpp"
#include "regionlm/transformer.hpp"

namespace regionlm {

struct VitConfig {
    int64_t patch_size = 14;
    int64_t embed_dim = 64;
    int64_t depth = 2;
    int64_t heads = 4;
    int64_t mlp_ratio = 4;

    int64_t mlp_hidden() const { return embed_dim * mlp_ratio; }
    void validate() const;
};

struct VitWeights {
    Tensor patch_w;  // [(C*ps*ps) x embed_dim]
    Tensor patch_b;  // [embed_dim]
    std::vector<BlockWeights> blocks;
};

// One encoded view. view_id -1 is the global thumbnail; >= 0 indexes the
// tile grid row-major.
struct FeatureMap {
    Tensor features;  // [D x p x p]
    int64_t view_id = -1;
};

VitWeights init_vit(const VitConfig& cfg, int64_t channels, uint64_t seed);

// Non-overlapping patches, linear projection, fixed sinusoidal positions.
PatchEmbedding patchify(const Tensor& view, const VitConfig& cfg, const VitWeights& weights);

// Patch extraction without projection: [num_patches x C*ps*ps], patch
// features ordered (c, y, x).
Tensor unfold_patches(const Tensor& view, int64_t patch_size);

// Per-view transformer forward over [global, tiles...]; mask_embs parallel
// to views. Output ordered global first, then tiles row-major.
std::vector<FeatureMap> encode_views(const TileBatch& batch, const std::vector<Tensor>& mask_embs,
                                     const VitConfig& cfg, const VitWeights& weights);

// Single-view encode used by the crop modes.
Tensor encode_single_view(const Tensor& view, const Tensor& mask_emb, const VitConfig& cfg,
                          const VitWeights& weights);

// [n x D] tokens of a p x p grid -> [D x p x p]
Tensor tokens_to_map(const Tensor& tokens, int64_t p_rows, int64_t p_cols);

// Weight bundle round trip (named sections).
WeightMap vit_to_sections(const VitWeights& w, const std::string& prefix);
VitWeights vit_from_sections(const WeightMap& sections, const std::string& prefix,
                             const VitConfig& cfg);

}  // namespace regionlm
