#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "regionlm/tensor.hpp"

namespace regionlm {

// Binary {0,1} grid paired with an image of the same dimensions.
struct MaskImage {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<uint8_t> bits;  // row-major, each element 0 or 1

    MaskImage() = default;
    MaskImage(int64_t h, int64_t w) : height(h), width(w), bits(static_cast<size_t>(h * w), 0) {}

    uint8_t at(int64_t y, int64_t x) const { return bits[static_cast<size_t>(y * width + x)]; }
    void set(int64_t y, int64_t x, uint8_t v) { bits[static_cast<size_t>(y * width + x)] = v; }
    int64_t count_set() const;
    bool empty_mask() const { return count_set() == 0; }
};

// Inclusive pixel box: 0 <= x0 <= x1 < W, 0 <= y0 <= y1 < H.
struct BBox {
    int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int64_t width() const { return x1 - x0 + 1; }
    int64_t height() const { return y1 - y0 + 1; }
    bool operator==(const BBox&) const = default;
};

// Half-pixel-center bilinear resize of a [C x H x W] tensor; border samples
// clamp to the edge.
Tensor resize_bilinear(const Tensor& img, int64_t out_h, int64_t out_w);

// Tight covering box over all set pixels. Throws on an empty mask.
BBox mask_to_bbox(const MaskImage& mask);

// Nearest-neighbor (pixel-center) resample; output stays strictly binary.
MaskImage resize_mask_nearest(const MaskImage& mask, int64_t out_h, int64_t out_w);

// Union (pixelwise OR) of same-sized masks.
MaskImage mask_union(const std::vector<MaskImage>& masks);

// Crop helpers used by the local-crop encoder modes.
Tensor crop_image(const Tensor& img, const BBox& box);
MaskImage crop_mask(const MaskImage& mask, const BBox& box);

// ---- run-length encoding over the flattened row-major grid ----
// Format: "H W; start:len start:len ..." with runs of set pixels.
std::string mask_to_rle(const MaskImage& mask);
MaskImage mask_from_rle(const std::string& rle);

// ---- PNG I/O ----
// Images are 8-bit PNG, normalized to [0,1] floats as [3 x H x W] on load
// (gray and RGBA inputs are converted). Masks are 8-bit single-channel PNG
// with 0/255; on load any value >= 128 counts as set.
Tensor load_image_png(const std::string& path);
void save_image_png(const std::string& path, const Tensor& img);
MaskImage load_mask_png(const std::string& path);
void save_mask_png(const std::string& path, const MaskImage& mask);

// In-memory PNG encoding, same pixel formats as the file variants.
std::string encode_image_png(const Tensor& img);
std::string encode_mask_png(const MaskImage& mask);

}  // namespace regionlm
