#include <doctest.h>

#include <cstdio>

#include "regionlm/image.hpp"
#include "regionlm/rng.hpp"
#include "test_oracles.hpp"

using namespace regionlm;

TEST_CASE("resize_bilinear identity dims returns identical tensor") {
    Lcg rng(31);
    const Tensor img = oracles::random_tensor({3, 5, 7}, rng, 0.0, 1.0);
    CHECK(oracles::bit_equal(resize_bilinear(img, 5, 7), img));
}

TEST_CASE("resize_bilinear keeps constants constant") {
    const Tensor img = Tensor::full({2, 3, 3}, 0.42);
    for (auto [h, w] : {std::pair<int64_t, int64_t>{1, 1}, {2, 5}, {9, 4}}) {
        const Tensor out = resize_bilinear(img, h, w);
        for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == doctest::Approx(0.42).epsilon(1e-15));
    }
}

TEST_CASE("resize_bilinear 2x2 to 4x4 matches per-pixel oracle") {
    Lcg rng(32);
    const Tensor img = oracles::random_tensor({1, 2, 2}, rng, 0.0, 1.0);
    CHECK(oracles::max_abs_diff(resize_bilinear(img, 4, 4),
                                oracles::resize_bilinear_oracle(img, 4, 4)) <= 1e-12);
}

TEST_CASE("resize_bilinear random sizes match oracle") {
    Lcg rng(33);
    const Tensor img = oracles::random_tensor({2, 7, 5}, rng, -2.0, 2.0);
    for (auto [h, w] : {std::pair<int64_t, int64_t>{3, 11}, {14, 2}, {7, 5}}) {
        CHECK(oracles::max_abs_diff(resize_bilinear(img, h, w),
                                    oracles::resize_bilinear_oracle(img, h, w)) <= 1e-12);
    }
}

TEST_CASE("resize_bilinear stays within input bounds") {
    Lcg rng(34);
    const Tensor img = oracles::random_tensor({1, 6, 6}, rng, -3.0, 3.0);
    double lo = img[0], hi = img[0];
    for (int64_t i = 0; i < img.numel(); ++i) {
        lo = std::min(lo, img[i]);
        hi = std::max(hi, img[i]);
    }
    const Tensor out = resize_bilinear(img, 13, 4);
    for (int64_t i = 0; i < out.numel(); ++i) {
        CHECK(out[i] >= lo - 1e-12);
        CHECK(out[i] <= hi + 1e-12);
    }
}

TEST_CASE("resize_bilinear rejects zero dims") {
    CHECK_THROWS_AS(resize_bilinear(Tensor({1, 2, 2}), 0, 2), std::invalid_argument);
    CHECK_THROWS_AS(resize_bilinear(Tensor({1, 2, 2}), 2, 0), std::invalid_argument);
}

TEST_CASE("mask_to_bbox point, full, and covering-box cases") {
    MaskImage point(8, 8);
    point.set(3, 5, 1);
    CHECK(mask_to_bbox(point) == BBox{5, 3, 5, 3});

    MaskImage full(4, 6);
    for (auto& b : full.bits) b = 1;
    CHECK(mask_to_bbox(full) == BBox{0, 0, 5, 3});

    MaskImage two(8, 8);
    two.set(1, 1, 1);
    two.set(6, 4, 1);
    CHECK(mask_to_bbox(two) == BBox{1, 1, 4, 6});
}

TEST_CASE("mask_to_bbox rejects the empty mask") {
    CHECK_THROWS_AS(mask_to_bbox(MaskImage(4, 4)), std::invalid_argument);
}

TEST_CASE("mask_to_bbox is monotone under adding pixels") {
    Lcg rng(35);
    MaskImage mask(10, 10);
    mask.set(4, 4, 1);
    BBox prev = mask_to_bbox(mask);
    for (int step = 0; step < 20; ++step) {
        mask.set(static_cast<int64_t>(rng.next_below(10)), static_cast<int64_t>(rng.next_below(10)), 1);
        const BBox cur = mask_to_bbox(mask);
        CHECK(cur.x0 <= prev.x0);
        CHECK(cur.y0 <= prev.y0);
        CHECK(cur.x1 >= prev.x1);
        CHECK(cur.y1 >= prev.y1);
        prev = cur;
    }
}

TEST_CASE("resize_mask_nearest identity and all-ones") {
    Lcg rng(36);
    MaskImage mask(6, 6);
    for (auto& b : mask.bits) b = rng.next_below(2);
    const MaskImage same = resize_mask_nearest(mask, 6, 6);
    CHECK(same.bits == mask.bits);

    MaskImage ones(3, 3);
    for (auto& b : ones.bits) b = 1;
    for (auto [h, w] : {std::pair<int64_t, int64_t>{1, 1}, {7, 2}, {9, 9}}) {
        const MaskImage out = resize_mask_nearest(ones, h, w);
        CHECK(out.count_set() == h * w);
    }
}

TEST_CASE("resize_mask_nearest checkerboard matches nearest-center oracle") {
    MaskImage board(4, 4);
    for (int64_t y = 0; y < 4; ++y)
        for (int64_t x = 0; x < 4; ++x) board.set(y, x, (y + x) % 2);
    const MaskImage out = resize_mask_nearest(board, 2, 2);
    const MaskImage expect = oracles::resize_nearest_oracle(board, 2, 2);
    CHECK(out.bits == expect.bits);
}

TEST_CASE("resize_mask_nearest output is strictly binary") {
    Lcg rng(37);
    MaskImage mask(9, 5);
    for (auto& b : mask.bits) b = rng.next_below(2);
    const MaskImage out = resize_mask_nearest(mask, 13, 17);
    for (uint8_t b : out.bits) CHECK((b == 0 || b == 1));
}

TEST_CASE("rle round trip") {
    Lcg rng(38);
    MaskImage mask(7, 9);
    for (auto& b : mask.bits) b = rng.next_below(3) == 0;
    const std::string rle = mask_to_rle(mask);
    const MaskImage back = mask_from_rle(rle);
    CHECK(back.height == mask.height);
    CHECK(back.width == mask.width);
    CHECK(back.bits == mask.bits);
}

TEST_CASE("rle format shape") {
    MaskImage mask(2, 3);
    mask.set(0, 1, 1);
    mask.set(0, 2, 1);
    mask.set(1, 2, 1);
    CHECK(mask_to_rle(mask) == "2 3; 1:2 5:1");
}

TEST_CASE("rle rejects malformed strings") {
    CHECK_THROWS_AS(mask_from_rle("no dims"), std::invalid_argument);
    CHECK_THROWS_AS(mask_from_rle("2 2; 3:4"), std::invalid_argument);
    CHECK_THROWS_AS(mask_from_rle("0 2; 0:1"), std::invalid_argument);
}

TEST_CASE("png image round trip at 8-bit resolution") {
    Tensor img({3, 4, 5});
    Lcg rng(39);
    for (int64_t i = 0; i < img.numel(); ++i) {
        img[i] = static_cast<double>(rng.next_below(256)) / 255.0;
    }
    const std::string path = "png_test_img.png";
    save_image_png(path, img);
    const Tensor back = load_image_png(path);
    CHECK(back.shape() == img.shape());
    CHECK(oracles::max_abs_diff(back, img) <= 1e-12);
    std::remove(path.c_str());
}

TEST_CASE("png mask round trip") {
    Lcg rng(40);
    MaskImage mask(6, 8);
    for (auto& b : mask.bits) b = rng.next_below(2);
    const std::string path = "png_test_mask.png";
    save_mask_png(path, mask);
    const MaskImage back = load_mask_png(path);
    CHECK(back.bits == mask.bits);
    std::remove(path.c_str());
}

TEST_CASE("in-memory png encode matches file encode") {
    Tensor img = Tensor::full({3, 2, 2}, 0.5);
    const std::string bytes = encode_image_png(img);
    CHECK(bytes.size() > 8);
    // PNG signature
    CHECK(static_cast<unsigned char>(bytes[0]) == 0x89);
    CHECK(bytes.substr(1, 3) == "PNG");
}

TEST_CASE("crop helpers") {
    Lcg rng(41);
    const Tensor img = oracles::random_tensor({3, 6, 6}, rng);
    const BBox box{1, 2, 4, 5};
    const Tensor crop = crop_image(img, box);
    CHECK(crop.dim(1) == 4);
    CHECK(crop.dim(2) == 4);
    CHECK(crop.at(0, 0, 0) == img.at(0, 2, 1));
    CHECK_THROWS_AS(crop_image(img, BBox{0, 0, 6, 2}), std::invalid_argument);
}
