#pragma once

#include <cstdint>
#include <vector>

#include "regionlm/image.hpp"
#include "regionlm/tensor.hpp"

namespace regionlm {

// Decomposition of one image into a global thumbnail plus a grid of
// high-resolution square tiles under a tile budget.
struct TilePlan {
    int64_t grid_rows = 1;
    int64_t grid_cols = 1;
    int64_t tile_side = 336;
    int64_t canvas_h = 336;  // grid_rows * tile_side
    int64_t canvas_w = 336;  // grid_cols * tile_side
    int64_t budget = 16;

    int64_t tile_count() const { return grid_rows * grid_cols; }
};

struct TileBatch {
    Tensor global_view;              // [C x tile_side x tile_side]
    std::vector<Tensor> tiles;       // row-major grid order
    TilePlan plan;
    MaskImage global_mask;           // mask resized to the global view
    std::vector<MaskImage> tile_masks;  // parallel to tiles

    int64_t view_count() const { return 1 + static_cast<int64_t>(tiles.size()); }
};

// Selects the tile grid for an h x w image. All grids with rows*cols <=
// budget are enumerated and ranked by: smaller aspect-ratio distortion
// |ln(cols/rows) - ln(w/h)|, then larger pixel coverage
// min(rows*cols*tile_side^2, h*w), then fewer tiles, then more rows.
TilePlan plan_tiles(int64_t h, int64_t w, int64_t tile_side, int64_t budget);

// Resizes the image bilinearly to the plan's canvas and slices it row-major
// into tiles; the global view is the full image resized to tile_side^2. The
// mask follows the identical geometry via nearest-neighbor.
TileBatch apply_plan(const Tensor& img, const MaskImage& mask, const TilePlan& plan);

// Places per-tile [D x p x p] maps row-major into [D x rows*p x cols*p].
Tensor stitch_features(const std::vector<Tensor>& per_tile_maps, const TilePlan& plan);

// Inverse of stitch_features; used for round-trip checks and tile slicing.
std::vector<Tensor> slice_features(const Tensor& stitched, const TilePlan& plan);

}  // namespace regionlm
