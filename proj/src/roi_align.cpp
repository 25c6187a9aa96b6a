#include "regionlm/roi_align.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace regionlm {

RoiRect map_bbox_to_feature_coords(const BBox& bbox, int64_t orig_h, int64_t orig_w,
                                   const TilePlan& plan, int64_t patch_size) {
    return map_bbox_to_feature_coords(bbox, orig_h, orig_w, plan.canvas_h, plan.canvas_w,
                                      patch_size);
}

RoiRect map_bbox_to_feature_coords(const BBox& bbox, int64_t orig_h, int64_t orig_w,
                                   int64_t canvas_h, int64_t canvas_w, int64_t patch_size) {
    const double sx = static_cast<double>(canvas_w) / static_cast<double>(orig_w);
    const double sy = static_cast<double>(canvas_h) / static_cast<double>(orig_h);
    const double p = static_cast<double>(patch_size);
    return RoiRect{static_cast<double>(bbox.x0) * sx / p, static_cast<double>(bbox.y0) * sy / p,
                   static_cast<double>(bbox.x1) * sx / p, static_cast<double>(bbox.y1) * sy / p};
}

namespace {

struct BilinearTaps {
    int64_t y_low = 0, y_high = 0, x_low = 0, x_high = 0;
    double w_ll = 0, w_lh = 0, w_hl = 0, w_hh = 0;  // (y,x): low-low, low-high, high-low, high-high
    bool inside = false;
};

// torchvision-style border rule: points below -1 or beyond the map size
// contribute nothing; points in the half-open border band snap to the edge.
BilinearTaps bilinear_taps(double y, double x, int64_t h, int64_t w) {
    BilinearTaps t;
    if (y < -1.0 || y > static_cast<double>(h) || x < -1.0 || x > static_cast<double>(w)) {
        return t;
    }
    if (y <= 0) y = 0;
    if (x <= 0) x = 0;
    t.y_low = static_cast<int64_t>(y);
    t.x_low = static_cast<int64_t>(x);
    if (t.y_low >= h - 1) {
        t.y_low = t.y_high = h - 1;
        y = static_cast<double>(t.y_low);
    } else {
        t.y_high = t.y_low + 1;
    }
    if (t.x_low >= w - 1) {
        t.x_low = t.x_high = w - 1;
        x = static_cast<double>(t.x_low);
    } else {
        t.x_high = t.x_low + 1;
    }
    const double ly = y - static_cast<double>(t.y_low);
    const double lx = x - static_cast<double>(t.x_low);
    t.w_ll = (1.0 - ly) * (1.0 - lx);
    t.w_lh = (1.0 - ly) * lx;
    t.w_hl = ly * (1.0 - lx);
    t.w_hh = ly * lx;
    t.inside = true;
    return t;
}

struct ClampedRoi {
    double x0, y0, x1, y1;  // after clamping and the aligned shift
    double bin_h, bin_w;
};

ClampedRoi prepare_roi(const RoiRect& rect, const RoiConfig& cfg, int64_t h, int64_t w) {
    if (cfg.bins_r < 1 || cfg.bins_c < 1 || cfg.sampling_ratio < 1) {
        throw std::invalid_argument("roi_align: bins and sampling_ratio must be >= 1");
    }
    double x0 = std::clamp(rect.x0, 0.0, static_cast<double>(w));
    double x1 = std::clamp(rect.x1, 0.0, static_cast<double>(w));
    double y0 = std::clamp(rect.y0, 0.0, static_cast<double>(h));
    double y1 = std::clamp(rect.y1, 0.0, static_cast<double>(h));
    if (!(x1 > x0) || !(y1 > y0)) {
        throw std::invalid_argument("roi_align: empty RoI after clamping (degenerate prompt)");
    }
    if (cfg.aligned) {
        x0 -= 0.5;
        x1 -= 0.5;
        y0 -= 0.5;
        y1 -= 0.5;
    }
    ClampedRoi r{x0, y0, x1, y1, 0.0, 0.0};
    r.bin_h = (y1 - y0) / static_cast<double>(cfg.bins_r);
    r.bin_w = (x1 - x0) / static_cast<double>(cfg.bins_c);
    return r;
}

}  // namespace

Tensor roi_align(const Tensor& fmap, const RoiRect& rect, const RoiConfig& cfg) {
    if (fmap.rank() != 3) throw std::invalid_argument("roi_align: expected [DxHfxWf] map");
    const int64_t D = fmap.dim(0), H = fmap.dim(1), W = fmap.dim(2);
    const ClampedRoi roi = prepare_roi(rect, cfg, H, W);
    const int64_t n = cfg.sampling_ratio;
    const double inv_count = 1.0 / static_cast<double>(n * n);

    Tensor out({D, cfg.bins_r, cfg.bins_c});
    for (int64_t by = 0; by < cfg.bins_r; ++by) {
        for (int64_t bx = 0; bx < cfg.bins_c; ++bx) {
            for (int64_t iy = 0; iy < n; ++iy) {
                const double y = roi.y0 + static_cast<double>(by) * roi.bin_h +
                                 (static_cast<double>(iy) + 0.5) * roi.bin_h / static_cast<double>(n);
                for (int64_t ix = 0; ix < n; ++ix) {
                    const double x = roi.x0 + static_cast<double>(bx) * roi.bin_w +
                                     (static_cast<double>(ix) + 0.5) * roi.bin_w / static_cast<double>(n);
                    const BilinearTaps t = bilinear_taps(y, x, H, W);
                    if (!t.inside) continue;
                    for (int64_t d = 0; d < D; ++d) {
                        const double v = t.w_ll * fmap.at(d, t.y_low, t.x_low) +
                                         t.w_lh * fmap.at(d, t.y_low, t.x_high) +
                                         t.w_hl * fmap.at(d, t.y_high, t.x_low) +
                                         t.w_hh * fmap.at(d, t.y_high, t.x_high);
                        out.at(d, by, bx) += v * inv_count;
                    }
                }
            }
        }
    }
    return out;
}

Tensor roi_align_backward(const Tensor& grad_out, const RoiRect& rect, const RoiConfig& cfg,
                          int64_t fmap_h, int64_t fmap_w) {
    if (grad_out.rank() != 3 || grad_out.dim(1) != cfg.bins_r || grad_out.dim(2) != cfg.bins_c) {
        throw std::invalid_argument("roi_align_backward: grad " + grad_out.shape_str() +
                                    " does not match " + std::to_string(cfg.bins_r) + "x" +
                                    std::to_string(cfg.bins_c) + " bins");
    }
    const int64_t D = grad_out.dim(0);
    const ClampedRoi roi = prepare_roi(rect, cfg, fmap_h, fmap_w);
    const int64_t n = cfg.sampling_ratio;
    const double inv_count = 1.0 / static_cast<double>(n * n);

    Tensor grad_in({D, fmap_h, fmap_w});
    for (int64_t by = 0; by < cfg.bins_r; ++by) {
        for (int64_t bx = 0; bx < cfg.bins_c; ++bx) {
            for (int64_t iy = 0; iy < n; ++iy) {
                const double y = roi.y0 + static_cast<double>(by) * roi.bin_h +
                                 (static_cast<double>(iy) + 0.5) * roi.bin_h / static_cast<double>(n);
                for (int64_t ix = 0; ix < n; ++ix) {
                    const double x = roi.x0 + static_cast<double>(bx) * roi.bin_w +
                                     (static_cast<double>(ix) + 0.5) * roi.bin_w / static_cast<double>(n);
                    const BilinearTaps t = bilinear_taps(y, x, fmap_h, fmap_w);
                    if (!t.inside) continue;
                    for (int64_t d = 0; d < D; ++d) {
                        const double g = grad_out.at(d, by, bx) * inv_count;
                        grad_in.at(d, t.y_low, t.x_low) += g * t.w_ll;
                        grad_in.at(d, t.y_low, t.x_high) += g * t.w_lh;
                        grad_in.at(d, t.y_high, t.x_low) += g * t.w_hl;
                        grad_in.at(d, t.y_high, t.x_high) += g * t.w_hh;
                    }
                }
            }
        }
    }
    return grad_in;
}

std::vector<std::array<double, 2>> roi_sample_points(const RoiRect& rect, const RoiConfig& cfg,
                                                     int64_t fmap_h, int64_t fmap_w) {
    const ClampedRoi roi = prepare_roi(rect, cfg, fmap_h, fmap_w);
    const int64_t n = cfg.sampling_ratio;
    std::vector<std::array<double, 2>> points;
    points.reserve(static_cast<size_t>(cfg.bins_r * cfg.bins_c * n * n));
    for (int64_t by = 0; by < cfg.bins_r; ++by) {
        for (int64_t bx = 0; bx < cfg.bins_c; ++bx) {
            for (int64_t iy = 0; iy < n; ++iy) {
                for (int64_t ix = 0; ix < n; ++ix) {
                    points.push_back({roi.y0 + static_cast<double>(by) * roi.bin_h +
                                          (static_cast<double>(iy) + 0.5) * roi.bin_h /
                                              static_cast<double>(n),
                                      roi.x0 + static_cast<double>(bx) * roi.bin_w +
                                          (static_cast<double>(ix) + 0.5) * roi.bin_w /
                                              static_cast<double>(n)});
                }
            }
        }
    }
    return points;
}

ReplayTokens replay(const Tensor& fmap, const MaskImage& mask, int64_t prompt_index,
                    int64_t orig_h, int64_t orig_w, const TilePlan& plan, int64_t patch_size,
                    const RoiConfig& cfg) {
    const BBox box = mask_to_bbox(mask);  // throws on an empty mask
    const RoiRect rect = map_bbox_to_feature_coords(box, orig_h, orig_w, plan, patch_size);
    const Tensor pooled = roi_align(fmap, rect, cfg);  // [D x r x c]

    const int64_t D = pooled.dim(0);
    ReplayTokens out;
    out.prompt_index = prompt_index;
    out.tokens = Tensor({cfg.bins_r * cfg.bins_c, D});
    for (int64_t i = 0; i < cfg.bins_r; ++i)
        for (int64_t j = 0; j < cfg.bins_c; ++j)
            for (int64_t d = 0; d < D; ++d)
                out.tokens.at(i * cfg.bins_c + j, d) = pooled.at(d, i, j);
    return out;
}

}  // namespace regionlm
