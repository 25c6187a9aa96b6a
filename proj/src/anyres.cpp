#include "regionlm/anyres.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace regionlm {

TilePlan plan_tiles(int64_t h, int64_t w, int64_t tile_side, int64_t budget) {
    if (h < 1 || w < 1) throw std::invalid_argument("plan_tiles: image dims must be >= 1");
    if (tile_side < 1) throw std::invalid_argument("plan_tiles: tile_side must be >= 1");
    if (budget < 1) throw std::invalid_argument("plan_tiles: budget must be >= 1");

    const double image_log_aspect = std::log(static_cast<double>(w) / static_cast<double>(h));
    const double image_area = static_cast<double>(h) * static_cast<double>(w);

    int64_t best_r = 1, best_c = 1;
    double best_distortion = 0.0, best_coverage = -1.0;
    bool have = false;
    for (int64_t r = 1; r <= budget; ++r) {
        for (int64_t c = 1; r * c <= budget; ++c) {
            const double distortion =
                std::abs(std::log(static_cast<double>(c) / static_cast<double>(r)) - image_log_aspect);
            const double coverage = std::min(
                static_cast<double>(r * c * tile_side * tile_side), image_area);
            bool better = false;
            if (!have) {
                better = true;
            } else if (distortion != best_distortion) {
                better = distortion < best_distortion;
            } else if (coverage != best_coverage) {
                better = coverage > best_coverage;
            } else if (r * c != best_r * best_c) {
                better = r * c < best_r * best_c;
            } else {
                better = r > best_r;
            }
            if (better) {
                best_r = r;
                best_c = c;
                best_distortion = distortion;
                best_coverage = coverage;
                have = true;
            }
        }
    }

    TilePlan plan;
    plan.grid_rows = best_r;
    plan.grid_cols = best_c;
    plan.tile_side = tile_side;
    plan.canvas_h = best_r * tile_side;
    plan.canvas_w = best_c * tile_side;
    plan.budget = budget;
    return plan;
}

TileBatch apply_plan(const Tensor& img, const MaskImage& mask, const TilePlan& plan) {
    if (img.rank() != 3) throw std::invalid_argument("apply_plan: expected [CxHxW] image");
    if (mask.height != img.dim(1) || mask.width != img.dim(2)) {
        throw std::invalid_argument("apply_plan: mask " + std::to_string(mask.height) + "x" +
                                    std::to_string(mask.width) + " does not match image " +
                                    img.shape_str());
    }

    TileBatch batch;
    batch.plan = plan;
    batch.global_view = resize_bilinear(img, plan.tile_side, plan.tile_side);
    batch.global_mask = resize_mask_nearest(mask, plan.tile_side, plan.tile_side);

    const Tensor canvas = resize_bilinear(img, plan.canvas_h, plan.canvas_w);
    const MaskImage canvas_mask = resize_mask_nearest(mask, plan.canvas_h, plan.canvas_w);
    const int64_t C = img.dim(0), side = plan.tile_side;

    for (int64_t ty = 0; ty < plan.grid_rows; ++ty) {
        for (int64_t tx = 0; tx < plan.grid_cols; ++tx) {
            Tensor tile({C, side, side});
            MaskImage tile_mask(side, side);
            for (int64_t y = 0; y < side; ++y) {
                for (int64_t x = 0; x < side; ++x) {
                    for (int64_t c = 0; c < C; ++c) {
                        tile.at(c, y, x) = canvas.at(c, ty * side + y, tx * side + x);
                    }
                    tile_mask.set(y, x, canvas_mask.at(ty * side + y, tx * side + x));
                }
            }
            batch.tiles.push_back(std::move(tile));
            batch.tile_masks.push_back(std::move(tile_mask));
        }
    }
    return batch;
}

Tensor stitch_features(const std::vector<Tensor>& per_tile_maps, const TilePlan& plan) {
    if (static_cast<int64_t>(per_tile_maps.size()) != plan.tile_count()) {
        throw std::invalid_argument("stitch_features: got " +
                                    std::to_string(per_tile_maps.size()) + " maps for a " +
                                    std::to_string(plan.grid_rows) + "x" +
                                    std::to_string(plan.grid_cols) + " grid");
    }
    const Tensor& first = per_tile_maps[0];
    if (first.rank() != 3 || first.dim(1) != first.dim(2)) {
        throw std::invalid_argument("stitch_features: maps must be [Dxpxp], got " +
                                    first.shape_str());
    }
    const int64_t D = first.dim(0), p = first.dim(1);
    for (const auto& m : per_tile_maps) {
        if (!m.same_shape(first)) {
            throw std::invalid_argument("stitch_features: shape mismatch " + m.shape_str() +
                                        " vs " + first.shape_str());
        }
    }
    Tensor out({D, plan.grid_rows * p, plan.grid_cols * p});
    for (int64_t ty = 0; ty < plan.grid_rows; ++ty) {
        for (int64_t tx = 0; tx < plan.grid_cols; ++tx) {
            const Tensor& m = per_tile_maps[static_cast<size_t>(ty * plan.grid_cols + tx)];
            for (int64_t d = 0; d < D; ++d)
                for (int64_t y = 0; y < p; ++y)
                    for (int64_t x = 0; x < p; ++x)
                        out.at(d, ty * p + y, tx * p + x) = m.at(d, y, x);
        }
    }
    return out;
}

std::vector<Tensor> slice_features(const Tensor& stitched, const TilePlan& plan) {
    if (stitched.rank() != 3 || stitched.dim(1) % plan.grid_rows != 0 ||
        stitched.dim(2) % plan.grid_cols != 0) {
        throw std::invalid_argument("slice_features: map " + stitched.shape_str() +
                                    " not divisible by grid");
    }
    const int64_t D = stitched.dim(0);
    const int64_t p = stitched.dim(1) / plan.grid_rows;
    if (stitched.dim(2) / plan.grid_cols != p) {
        throw std::invalid_argument("slice_features: non-square tiles in " + stitched.shape_str());
    }
    std::vector<Tensor> out;
    for (int64_t ty = 0; ty < plan.grid_rows; ++ty) {
        for (int64_t tx = 0; tx < plan.grid_cols; ++tx) {
            Tensor m({D, p, p});
            for (int64_t d = 0; d < D; ++d)
                for (int64_t y = 0; y < p; ++y)
                    for (int64_t x = 0; x < p; ++x)
                        m.at(d, y, x) = stitched.at(d, ty * p + y, tx * p + x);
            out.push_back(std::move(m));
        }
    }
    return out;
}

}  // namespace regionlm
