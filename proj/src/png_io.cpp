#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

#include "regionlm/image.hpp"

namespace regionlm {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

// Reads any 8/16-bit PNG as 8-bit RGBA rows.
std::vector<std::vector<png_byte>> read_png_rgba(const std::string& path, png_uint_32* out_w,
                                                 png_uint_32* out_h) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open PNG: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("malformed PNG: " + path);
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_gray_to_rgb(png);
    png_set_filler(png, 0xff, PNG_FILLER_AFTER);
    png_read_update_info(png, info);

    *out_w = png_get_image_width(png, info);
    *out_h = png_get_image_height(png, info);
    std::vector<std::vector<png_byte>> rows(*out_h, std::vector<png_byte>(*out_w * 4));
    std::vector<png_bytep> row_ptrs(*out_h);
    for (png_uint_32 y = 0; y < *out_h; ++y) row_ptrs[y] = rows[y].data();
    png_read_image(png, row_ptrs.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return rows;
}

void memory_write_cb(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), length);
}

void memory_flush_cb(png_structp) {}

// sink: either an open FILE* or a string buffer for in-memory encoding
void write_png_rows_sink(FILE* file, std::string* buffer, png_uint_32 w, png_uint_32 h,
                         int color_type, std::vector<std::vector<png_byte>>& rows) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("PNG write failed");
    }

    if (file) {
        png_init_io(png, file);
    } else {
        png_set_write_fn(png, buffer, memory_write_cb, memory_flush_cb);
    }
    png_set_IHDR(png, info, w, h, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> row_ptrs(h);
    for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = rows[y].data();
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_png_rows(const std::string& path, png_uint_32 w, png_uint_32 h, int color_type,
                    std::vector<std::vector<png_byte>>& rows) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open PNG for writing: " + path);
    write_png_rows_sink(fp.get(), nullptr, w, h, color_type, rows);
}

png_byte to_byte(double v) {
    const double clamped = std::min(std::max(v, 0.0), 1.0);
    return static_cast<png_byte>(std::lround(clamped * 255.0));
}

}  // namespace

Tensor load_image_png(const std::string& path) {
    png_uint_32 w = 0, h = 0;
    const auto rows = read_png_rgba(path, &w, &h);
    Tensor img({3, static_cast<int64_t>(h), static_cast<int64_t>(w)});
    for (png_uint_32 y = 0; y < h; ++y) {
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(c, y, x) = static_cast<double>(rows[y][x * 4 + c]) / 255.0;
            }
        }
    }
    return img;
}

namespace {

std::vector<std::vector<png_byte>> image_rows(const Tensor& img) {
    if (img.rank() != 3 || img.dim(0) != 3) {
        throw std::invalid_argument("PNG encode: expected [3xHxW], got " + img.shape_str());
    }
    const auto h = static_cast<png_uint_32>(img.dim(1));
    const auto w = static_cast<png_uint_32>(img.dim(2));
    std::vector<std::vector<png_byte>> rows(h, std::vector<png_byte>(w * 3));
    for (png_uint_32 y = 0; y < h; ++y) {
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) rows[y][x * 3 + c] = to_byte(img.at(c, y, x));
        }
    }
    return rows;
}

std::vector<std::vector<png_byte>> mask_rows(const MaskImage& mask) {
    const auto h = static_cast<png_uint_32>(mask.height);
    const auto w = static_cast<png_uint_32>(mask.width);
    std::vector<std::vector<png_byte>> rows(h, std::vector<png_byte>(w));
    for (png_uint_32 y = 0; y < h; ++y) {
        for (png_uint_32 x = 0; x < w; ++x) rows[y][x] = mask.at(y, x) ? 255 : 0;
    }
    return rows;
}

}  // namespace

void save_image_png(const std::string& path, const Tensor& img) {
    auto rows = image_rows(img);
    write_png_rows(path, static_cast<png_uint_32>(img.dim(2)),
                   static_cast<png_uint_32>(img.dim(1)), PNG_COLOR_TYPE_RGB, rows);
}

std::string encode_image_png(const Tensor& img) {
    auto rows = image_rows(img);
    std::string out;
    write_png_rows_sink(nullptr, &out, static_cast<png_uint_32>(img.dim(2)),
                        static_cast<png_uint_32>(img.dim(1)), PNG_COLOR_TYPE_RGB, rows);
    return out;
}

std::string encode_mask_png(const MaskImage& mask) {
    auto rows = mask_rows(mask);
    std::string out;
    write_png_rows_sink(nullptr, &out, static_cast<png_uint_32>(mask.width),
                        static_cast<png_uint_32>(mask.height), PNG_COLOR_TYPE_GRAY, rows);
    return out;
}

MaskImage load_mask_png(const std::string& path) {
    png_uint_32 w = 0, h = 0;
    const auto rows = read_png_rgba(path, &w, &h);
    MaskImage mask(static_cast<int64_t>(h), static_cast<int64_t>(w));
    for (png_uint_32 y = 0; y < h; ++y) {
        for (png_uint_32 x = 0; x < w; ++x) {
            mask.set(y, x, rows[y][x * 4] >= 128 ? 1 : 0);
        }
    }
    return mask;
}

void save_mask_png(const std::string& path, const MaskImage& mask) {
    auto rows = mask_rows(mask);
    write_png_rows(path, static_cast<png_uint_32>(mask.width),
                   static_cast<png_uint_32>(mask.height), PNG_COLOR_TYPE_GRAY, rows);
}

}  // namespace regionlm
