#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mg/image.hpp"
#include "mg/synthetic.hpp"
#include "mg/tensor.hpp"

namespace fs = std::filesystem;
using namespace mg;

namespace {

fs::path tmp(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "mg_tests";
    fs::create_directories(dir);
    return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
    std::ofstream f(p, std::ios::binary);
    f.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
}

}  // namespace

TEST(Mgt1, TwoByTwoIs32Bytes) {
    const Tensor t({2, 2}, {1, 2, 3, 4});
    const auto p = tmp("t22.mgt");
    save_tensor(t, p);
    EXPECT_EQ(fs::file_size(p), 32u);
    const auto bytes = encode_tensor(t);
    EXPECT_EQ(std::memcmp(bytes.data(), "MGT1", 4), 0);
    EXPECT_EQ(bytes[4], 2);  // rank, little endian
    EXPECT_EQ(bytes[8], 2);
    float first;
    std::memcpy(&first, bytes.data() + 16, 4);
    EXPECT_EQ(first, 1.0f);
}

TEST(Mgt1, RoundTripIsBitwise) {
    Tensor t({3, 5, 2});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::ldexp(float(i) - 7.3f, int(i % 9) - 4);
    const auto p = tmp("rt.mgt");
    save_tensor(t, p);
    const Tensor u = load_tensor(p);
    EXPECT_EQ(u.shape(), t.shape());
    EXPECT_EQ(std::memcmp(u.data(), t.data(), t.size() * 4), 0);
}

TEST(Mgt1, EmptyAndSingleElement) {
    const auto p = tmp("empty.mgt");
    save_tensor(Tensor({0}), p);
    EXPECT_EQ(fs::file_size(p), 12u);
    const Tensor e = load_tensor(p);
    EXPECT_EQ(e.shape(), Shape{0});
    EXPECT_EQ(e.size(), 0u);

    save_tensor(Tensor({1}, {-0.0f}), p);
    const Tensor s = load_tensor(p);
    EXPECT_TRUE(std::signbit(s[0]));
}

TEST(Mgt1, ZerosLoad) {
    const auto p = tmp("zeros.mgt");
    save_tensor(Tensor({3}), p);
    EXPECT_EQ(load_tensor(p), Tensor({3}));
}

TEST(Mgt1, BadMagicIsFormatError) {
    auto b = encode_tensor(Tensor({2}, {1, 2}));
    std::memcpy(b.data(), "XXXX", 4);
    const auto p = tmp("magic.mgt");
    write_bytes(p, b);
    EXPECT_THROW(load_tensor(p), FormatError);
}

TEST(Mgt1, TruncatedPayloadIsFormatError) {
    auto b = encode_tensor(Tensor({10}));
    b.resize(b.size() - 8);  // 8 floats instead of 10
    EXPECT_THROW(decode_tensor(b), FormatError);
}

TEST(Mgt1, NanPayloadIsDataError) {
    const Tensor t({2}, {1.0f, std::nanf("")});
    EXPECT_THROW(decode_tensor(encode_tensor(t)), DataError);
}

TEST(Mgt1, MissingFileIsReported) {
    EXPECT_THROW(load_tensor(tmp("does_not_exist.mgt")), Error);
}

TEST(Normalize, ByteRangeToSymmetric) {
    const ImageBatch b(Tensor({1, 1, 1, 3}, {0.0f, 255.0f, 127.5f}), 0, 255);
    const auto r = normalize_minmax(b, -1, 1);
    EXPECT_FALSE(r.degenerate);
    EXPECT_EQ(r.batch.pixels[0], -1.0f);
    EXPECT_EQ(r.batch.pixels[1], 1.0f);
    EXPECT_NEAR(r.batch.pixels[2], 0.0f, 1e-7);
    EXPECT_EQ(r.batch.lo, -1.0f);
    EXPECT_EQ(r.batch.hi, 1.0f);
}

TEST(Normalize, AlreadyNormalizedIsIdentity) {
    const ImageBatch b(Tensor({1, 1, 2, 2}, {-1.0f, 0.25f, 1.0f, -0.5f}), -1, 1);
    EXPECT_EQ(normalize_minmax(b, -1, 1).batch.pixels, b.pixels);
}

TEST(Normalize, ConstantBatchMapsToMidpoint) {
    const ImageBatch b(Tensor({2, 1, 2, 2}, 5.0f), 0, 10);
    const auto r = normalize_minmax(b, -1, 1);
    EXPECT_TRUE(r.degenerate);
    for (float v : r.batch.pixels.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Normalize, IdempotentWithinOneUlp) {
    const auto s = make_shape_images(4, 12, 12, 3);
    const auto once = normalize_minmax(s.images, -1, 1).batch;
    const auto twice = normalize_minmax(once, -1, 1).batch;
    for (std::size_t i = 0; i < once.pixels.size(); ++i)
        EXPECT_LE(std::abs(once.pixels[i] - twice.pixels[i]),
                  std::nextafter(std::abs(once.pixels[i]), 2.0f) - std::abs(once.pixels[i]));
}

TEST(Resize, TwoByTwoToOne) {
    const ImageBatch b(Tensor({1, 1, 2, 2}, {0, 1, 2, 3}), 0, 3);
    const auto r = resize_bilinear(b, 1, 1);
    EXPECT_EQ(r.pixels.shape(), (Shape{1, 1, 1, 1}));
    EXPECT_FLOAT_EQ(r.pixels[0], 1.5f);
}

TEST(Resize, SameSizeIsIdentity) {
    const auto s = make_shape_images(2, 9, 7, 1);
    EXPECT_EQ(resize_bilinear(s.images, 9, 7).pixels, s.images.pixels);
}

TEST(Resize, ConstantImageIsFixedPoint) {
    const ImageBatch b(Tensor({1, 3, 5, 4}, 0.3f), 0, 1);
    for (auto [h, w] : {std::pair{1, 1}, {7, 3}, {16, 16}}) {
        const auto r = resize_bilinear(b, h, w);
        for (float v : r.pixels.values()) EXPECT_FLOAT_EQ(v, 0.3f);
    }
}

TEST(Resize, StaysInsideRange) {
    const auto s = make_shape_images(3, 10, 10, 9);
    const auto r = resize_bilinear(s.images, 23, 17);
    for (float v : r.pixels.values()) {
        EXPECT_GE(v, s.images.lo);
        EXPECT_LE(v, s.images.hi);
    }
}

TEST(Flatten, ShapesAndRoundTrip) {
    EXPECT_EQ(flatten_images(ImageBatch(Tensor({1, 3, 64, 64}), 0, 1)).shape(), (Shape{1, 12288}));
    const auto s = make_shape_images(5, 28, 28, 2);
    const Tensor f = flatten_images(s.images);
    EXPECT_EQ(f.shape(), (Shape{5, 784}));
    const auto back = unflatten_images(f, 1, 28, 28, s.images.lo, s.images.hi);
    EXPECT_EQ(back.pixels, s.images.pixels);
}

TEST(ImageBatch, RejectsBadChannels) {
    EXPECT_THROW(ImageBatch(Tensor({1, 2, 4, 4}), 0, 1), Error);
}

TEST(Pnm, GrayRoundTrip) {
    Tensor px({1, 1, 3, 4});
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = float(i * 20);
    const ImageBatch img(px, 0, 255);
    const auto p = tmp("g.pgm");
    write_pnm(img, p);
    const auto back = read_pnm(p);
    EXPECT_EQ(back.pixels, px);
}

TEST(Pnm, GridTilesImages) {
    const auto s = make_shape_images(5, 6, 4, 4);
    const auto g = tile_grid(s.images, 3);
    EXPECT_EQ(g.count(), 1u);
    EXPECT_EQ(g.height(), 12u);
    EXPECT_EQ(g.width(), 12u);
}

TEST(SwissRoll, NoiseFreePointsLieOnSurface) {
    const auto s = make_swiss_roll(200, 0.0, 5);
    for (std::size_t i = 0; i < 200; ++i) {
        const double t = s.intrinsic.at(i, 0), h = s.intrinsic.at(i, 1);
        EXPECT_NEAR(s.points.at(i, 0), t * std::cos(t), 1e-5);
        EXPECT_NEAR(s.points.at(i, 1), h, 1e-5);
        EXPECT_NEAR(s.points.at(i, 2), t * std::sin(t), 1e-5);
        EXPECT_GE(t, 1.5 * M_PI - 1e-6);
        EXPECT_LE(t, 4.5 * M_PI + 1e-6);
    }
}

TEST(SwissRoll, SingleNoiseFreePoint) {
    const auto s = make_swiss_roll(1, 0.0, 11);
    const double t = s.intrinsic.at(0, 0);
    EXPECT_NEAR(s.points.at(0, 0), t * std::cos(t), 1e-5);
}

TEST(SwissRoll, Deterministic) {
    EXPECT_EQ(make_swiss_roll(50, 0.1, 3).points, make_swiss_roll(50, 0.1, 3).points);
    EXPECT_NE(make_swiss_roll(50, 0.1, 3).points, make_swiss_roll(50, 0.1, 4).points);
}

TEST(SwissRoll, ArcLengthExceedsChord) {
    // Arc length of the spiral r = t between t0 and t1 (height equal) versus
    // the straight chord between the endpoints.
    auto arc = [](double a, double b) {
        auto F = [](double t) { return 0.5 * (t * std::sqrt(1 + t * t) + std::asinh(t)); };
        return F(b) - F(a);
    };
    for (double t0 : {1.5 * M_PI, 2.0 * M_PI, 2.5 * M_PI})
        for (double t1 : {3.5 * M_PI, 4.0 * M_PI, 4.5 * M_PI}) {
            const double chord = std::hypot(t1 * std::cos(t1) - t0 * std::cos(t0), t1 * std::sin(t1) - t0 * std::sin(t0));
            EXPECT_GT(arc(t0, t1), chord);
        }
}

TEST(ShapeImages, RangeAndFactors) {
    const auto s = make_shape_images(8, 28, 28, 1);
    EXPECT_EQ(s.images.pixels.shape(), (Shape{8, 1, 28, 28}));
    EXPECT_EQ(s.factors.shape(), (Shape{8, 7}));
    for (float v : s.images.pixels.values()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
}
