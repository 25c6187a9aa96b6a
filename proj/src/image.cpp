#include "regionlm/image.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace regionlm {

int64_t MaskImage::count_set() const {
    int64_t n = 0;
    for (uint8_t b : bits) n += (b != 0);
    return n;
}

Tensor resize_bilinear(const Tensor& img, int64_t out_h, int64_t out_w) {
    if (img.rank() != 3) {
        throw std::invalid_argument("resize_bilinear: expected [CxHxW], got " + img.shape_str());
    }
    if (out_h < 1 || out_w < 1) {
        throw std::invalid_argument("resize_bilinear: output dims must be >= 1");
    }
    const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor out({C, out_h, out_w});
    const double sy = static_cast<double>(H) / static_cast<double>(out_h);
    const double sx = static_cast<double>(W) / static_cast<double>(out_w);
    for (int64_t oy = 0; oy < out_h; ++oy) {
        // half-pixel centers, clamped at the borders
        double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(H - 1));
        const int64_t y0 = static_cast<int64_t>(std::floor(fy));
        const int64_t y1 = std::min(y0 + 1, H - 1);
        const double wy = fy - static_cast<double>(y0);
        for (int64_t ox = 0; ox < out_w; ++ox) {
            double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(W - 1));
            const int64_t x0 = static_cast<int64_t>(std::floor(fx));
            const int64_t x1 = std::min(x0 + 1, W - 1);
            const double wx = fx - static_cast<double>(x0);
            for (int64_t c = 0; c < C; ++c) {
                const double top = img.at(c, y0, x0) * (1.0 - wx) + img.at(c, y0, x1) * wx;
                const double bot = img.at(c, y1, x0) * (1.0 - wx) + img.at(c, y1, x1) * wx;
                out.at(c, oy, ox) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

BBox mask_to_bbox(const MaskImage& mask) {
    int64_t x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
    for (int64_t y = 0; y < mask.height; ++y) {
        for (int64_t x = 0; x < mask.width; ++x) {
            if (mask.at(y, x)) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
        }
    }
    if (x1 < 0) throw std::invalid_argument("mask_to_bbox: empty mask");
    return BBox{x0, y0, x1, y1};
}

MaskImage resize_mask_nearest(const MaskImage& mask, int64_t out_h, int64_t out_w) {
    if (out_h < 1 || out_w < 1) {
        throw std::invalid_argument("resize_mask_nearest: output dims must be >= 1");
    }
    MaskImage out(out_h, out_w);
    const double sy = static_cast<double>(mask.height) / static_cast<double>(out_h);
    const double sx = static_cast<double>(mask.width) / static_cast<double>(out_w);
    for (int64_t oy = 0; oy < out_h; ++oy) {
        int64_t iy = static_cast<int64_t>(std::floor((static_cast<double>(oy) + 0.5) * sy));
        iy = std::min(std::max<int64_t>(iy, 0), mask.height - 1);
        for (int64_t ox = 0; ox < out_w; ++ox) {
            int64_t ix = static_cast<int64_t>(std::floor((static_cast<double>(ox) + 0.5) * sx));
            ix = std::min(std::max<int64_t>(ix, 0), mask.width - 1);
            out.set(oy, ox, mask.at(iy, ix) ? 1 : 0);
        }
    }
    return out;
}

MaskImage mask_union(const std::vector<MaskImage>& masks) {
    if (masks.empty()) throw std::invalid_argument("mask_union: no masks");
    MaskImage out(masks[0].height, masks[0].width);
    for (const auto& m : masks) {
        if (m.height != out.height || m.width != out.width) {
            throw std::invalid_argument("mask_union: dimension mismatch");
        }
        for (size_t i = 0; i < out.bits.size(); ++i) out.bits[i] |= (m.bits[i] != 0);
    }
    return out;
}

Tensor crop_image(const Tensor& img, const BBox& box) {
    if (img.rank() != 3) throw std::invalid_argument("crop_image: expected [CxHxW]");
    if (box.x0 < 0 || box.y0 < 0 || box.x1 >= img.dim(2) || box.y1 >= img.dim(1) ||
        box.x0 > box.x1 || box.y0 > box.y1) {
        throw std::invalid_argument("crop_image: box out of bounds");
    }
    Tensor out({img.dim(0), box.height(), box.width()});
    for (int64_t c = 0; c < img.dim(0); ++c)
        for (int64_t y = 0; y < box.height(); ++y)
            for (int64_t x = 0; x < box.width(); ++x)
                out.at(c, y, x) = img.at(c, box.y0 + y, box.x0 + x);
    return out;
}

MaskImage crop_mask(const MaskImage& mask, const BBox& box) {
    if (box.x0 < 0 || box.y0 < 0 || box.x1 >= mask.width || box.y1 >= mask.height ||
        box.x0 > box.x1 || box.y0 > box.y1) {
        throw std::invalid_argument("crop_mask: box out of bounds");
    }
    MaskImage out(box.height(), box.width());
    for (int64_t y = 0; y < box.height(); ++y)
        for (int64_t x = 0; x < box.width(); ++x)
            out.set(y, x, mask.at(box.y0 + y, box.x0 + x));
    return out;
}

std::string mask_to_rle(const MaskImage& mask) {
    std::ostringstream os;
    os << mask.height << " " << mask.width << ";";
    const int64_t n = mask.height * mask.width;
    int64_t i = 0;
    while (i < n) {
        if (mask.bits[static_cast<size_t>(i)]) {
            int64_t start = i;
            while (i < n && mask.bits[static_cast<size_t>(i)]) ++i;
            os << " " << start << ":" << (i - start);
        } else {
            ++i;
        }
    }
    return os.str();
}

MaskImage mask_from_rle(const std::string& rle) {
    const auto semi = rle.find(';');
    if (semi == std::string::npos) throw std::invalid_argument("rle: missing ';' in \"" + rle + "\"");
    std::istringstream head(rle.substr(0, semi));
    int64_t h = 0, w = 0;
    if (!(head >> h >> w) || h < 1 || w < 1) {
        throw std::invalid_argument("rle: bad dimensions in \"" + rle + "\"");
    }
    MaskImage mask(h, w);
    const int64_t n = h * w;
    std::istringstream runs(rle.substr(semi + 1));
    std::string tok;
    while (runs >> tok) {
        const auto colon = tok.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("rle: bad run \"" + tok + "\"");
        const int64_t start = std::stoll(tok.substr(0, colon));
        const int64_t len = std::stoll(tok.substr(colon + 1));
        if (start < 0 || len < 0 || start + len > n) {
            throw std::invalid_argument("rle: run out of range \"" + tok + "\"");
        }
        for (int64_t i = start; i < start + len; ++i) mask.bits[static_cast<size_t>(i)] = 1;
    }
    return mask;
}

}  // namespace regionlm
