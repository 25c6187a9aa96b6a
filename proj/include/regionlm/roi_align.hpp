#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "regionlm/anyres.hpp"
#include "regionlm/image.hpp"
#include "regionlm/tensor.hpp"

namespace regionlm {

// Continuous rectangle in feature-map units.
struct RoiRect {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
};

struct RoiConfig {
    int64_t bins_r = 16;
    int64_t bins_c = 16;
    int64_t sampling_ratio = 2;  // samples per bin axis
    bool aligned = true;         // -0.5 half-pixel convention
};

// Fixed-budget feature tokens for one prompt: bins_r*bins_c rows regardless
// of the box size.
struct ReplayTokens {
    Tensor tokens;  // [(bins_r*bins_c) x D]
    int64_t prompt_index = 0;
};

// Scales an inclusive pixel box by (canvas/orig) and divides by patch_size;
// continuous output, no rounding or clamping.
RoiRect map_bbox_to_feature_coords(const BBox& bbox, int64_t orig_h, int64_t orig_w,
                                   const TilePlan& plan, int64_t patch_size);
// Same chain onto an arbitrary target canvas (used for thumbnail replay).
RoiRect map_bbox_to_feature_coords(const BBox& bbox, int64_t orig_h, int64_t orig_w,
                                   int64_t canvas_h, int64_t canvas_w, int64_t patch_size);

// Average of sampling_ratio^2 regularly spaced bilinear samples per bin.
// The rect is clamped to the map bounds first; a rect with no extent left
// afterwards throws. fmap: [D x Hf x Wf] -> [D x bins_r x bins_c].
Tensor roi_align(const Tensor& fmap, const RoiRect& rect, const RoiConfig& cfg);

// Scatters each output gradient to the 4 bilinear source cells of every
// sample with the forward weights, scaled by 1/samples-per-bin.
Tensor roi_align_backward(const Tensor& grad_out, const RoiRect& rect, const RoiConfig& cfg,
                          int64_t fmap_h, int64_t fmap_w);

// The (y, x) sample locations the forward pass uses, row-major by bin then
// sample; for debug dumps and oracle cross-checks.
std::vector<std::array<double, 2>> roi_sample_points(const RoiRect& rect, const RoiConfig& cfg,
                                                     int64_t fmap_h, int64_t fmap_w);

// mask -> bbox -> feature coords -> roi_align -> row-major tokens.
ReplayTokens replay(const Tensor& fmap, const MaskImage& mask, int64_t prompt_index,
                    int64_t orig_h, int64_t orig_w, const TilePlan& plan, int64_t patch_size,
                    const RoiConfig& cfg);

}  // namespace regionlm
