#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mg/metrics.hpp"
#include "mg/recon.hpp"
#include "mg/rng.hpp"
#include "mg/synthetic.hpp"
#include "oracles.hpp"

using namespace mg;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
    Rng rng(seed);
    Tensor t(std::move(s));
    for (auto& v : t.storage()) v = static_cast<float>(uniform(rng, lo, hi));
    return t;
}

ImageBatch random_images(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
    return ImageBatch(random_tensor({n, c, h, w}, seed, 0, 1), 0, 1);
}

ImageBatch plus_constant(const ImageBatch& a, float d) {
    ImageBatch b = a;
    for (auto& v : b.pixels.storage()) v += d;
    return b;
}

// Affine images of 2-D coordinates, kept inside (-1, 1).
struct AffineData {
    Embedding e;
    ImageBatch images;
};

AffineData affine_data(std::size_t n, std::uint64_t seed) {
    AffineData d;
    d.e.method = Method::Isomap;
    d.e.coords = random_tensor({n, 2}, seed);
    const Tensor A = random_tensor({16, 2}, seed + 1, -0.3, 0.3), b = random_tensor({16}, seed + 2, -0.3, 0.3);
    Tensor px({n, 1, 4, 4});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < 16; ++j)
            px[i * 16 + j] = A.at(j, 0) * d.e.coords.at(i, 0) + A.at(j, 1) * d.e.coords.at(i, 1) + b[j];
    d.images = ImageBatch(px, -1, 1);
    return d;
}

}  // namespace

TEST(PaperDecoder, StageShapesAt64) {
    const auto net = build_paper_decoder(50, {3, 64, 64});
    std::vector<Shape> expect{{50}, {512}, {8, 8, 8}, {128, 16, 16}, {64, 32, 32}, {32, 64, 64}, {3, 64, 64}};
    std::vector<Shape> got;
    for (const auto& s : net.shapes())
        if (got.empty() || shape_numel(s) != shape_numel(got.back()) || s.size() != got.back().size()) got.push_back(s);
    // Layers that keep the shape (BatchNorm, ReLU, Tanh) collapse out of the list.
    EXPECT_EQ(got, expect);
    EXPECT_EQ(net.output_shape(), (Shape{3, 64, 64}));
}

TEST(PaperDecoder, ThreeDimensionalEmbeddingAndRange) {
    const auto net = build_paper_decoder(3, {1, 28, 28}, {32, 16});
    EXPECT_EQ(net.output_shape(), (Shape{1, 28, 28}));
    const auto p = nn::init_parameters(net, 1);
    const Tensor y = nn::predict(net, p, random_tensor({4, 3}, 2, -20, 20));
    for (float v : y.storage()) {
        EXPECT_GT(v, -1.0f);
        EXPECT_LT(v, 1.0f);
    }
}

TEST(PaperDecoder, UnreachableShape) {
    EXPECT_THROW(build_paper_decoder(3, {1, 7, 9}), ShapeError);
    EXPECT_THROW(build_paper_decoder(3, {1, 8, 8}, {4}), ShapeError);
}

TEST(Autoencoder, StageCountFollowsImageSize) {
    const auto ae = build_autoencoder({1, 28, 28}, 50);
    EXPECT_EQ(ae.net.shapes()[ae.encoder_layers], (Shape{50}));
    EXPECT_EQ(ae.net.output_shape(), (Shape{1, 28, 28}));
    const auto rgb = build_autoencoder({3, 64, 64}, 16);
    EXPECT_EQ(rgb.net.shapes()[rgb.encoder_layers], (Shape{16}));
    EXPECT_THROW(build_autoencoder({1, 7, 7}, 4), ShapeError);
}

TEST(Loss, Examples) {
    TrainConfig cfg;
    const Tensor a = random_tensor({2, 1, 3, 3}, 1);
    const auto same = total_loss(a, a, cfg);
    EXPECT_EQ(same.loss, 0.0);
    for (float g : same.grad.storage()) EXPECT_EQ(g, 0.0f);
    Tensor b = a;
    for (auto& v : b.storage()) v -= 0.1f;
    EXPECT_NEAR(total_loss(a, b, cfg).loss, 0.01, 1e-7);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
    TrainConfig cfg;
    cfg.lambda_mse = 1.7;
    const Tensor target = random_tensor({3, 5}, 2);
    Tensor pred = random_tensor({3, 5}, 3);
    const auto lv = total_loss(pred, target, cfg);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const float o = pred[i];
        const float h = 1.0f / 1024;  // exact in f32, so the step is exact
        pred[i] = o + h;
        const double up = total_loss(pred, target, cfg).loss;
        pred[i] = o - h;
        const double dn = total_loss(pred, target, cfg).loss;
        pred[i] = o;
        EXPECT_NEAR(lv.grad[i], (up - dn) / (2 * h), 1e-6);
    }
}

TEST(Loss, PerceptualWithoutBackendIsConfigError) {
    TrainConfig cfg;
    cfg.lambda_perceptual = 0.5;
    const Tensor a({1, 4});
    EXPECT_THROW(total_loss(a, a, cfg), ConfigError);
    const PerceptualLoss zero = [](const Tensor& p, const Tensor&) { return std::pair{1.0, Tensor(p.shape())}; };
    EXPECT_DOUBLE_EQ(total_loss(a, a, cfg, zero).loss, 0.5);
}

TEST(CoordinateDropout, RateIdentityDeterminism) {
    const Tensor c = random_tensor({1000, 1000}, 1, 0.5, 1.5);
    EXPECT_EQ(coordinate_dropout(c, 0.0, 3), c);
    const Tensor d = coordinate_dropout(c, 0.1, 3);
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] == 0) ++zeros;
        else ASSERT_EQ(d[i], c[i]);
    }
    EXPECT_NEAR(double(zeros) / 1e6, 0.1, 0.002);
    EXPECT_EQ(coordinate_dropout(c, 0.1, 3), d);
}

TEST(Split, DisjointCoverAndSeeded) {
    const auto s = split_indices(100, 0.2, 4);
    EXPECT_EQ(s.val.size(), 20u);
    EXPECT_EQ(s.train.size(), 80u);
    std::vector<int> seen(100, 0);
    for (auto i : s.train) ++seen[i];
    for (auto i : s.val) ++seen[i];
    for (int v : seen) EXPECT_EQ(v, 1);
    EXPECT_EQ(split_indices(100, 0.2, 4).val, s.val);
    EXPECT_NE(split_indices(100, 0.2, 5).val, s.val);
}

TEST(TrainConfigJson, RoundTripAndValidation) {
    TrainConfig c;
    c.epochs = 7;
    c.lr = 1e-3;
    const TrainConfig d = train_config_from_json(to_json(c));
    EXPECT_EQ(d.epochs, 7u);
    EXPECT_EQ(d.lr, 1e-3);
    EXPECT_THROW(train_config_from_json({{"epochs", 3}, {"learning_rat", 1}}), ConfigError);
    TrainConfig bad;
    bad.val_fraction = 1.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = {};
    bad.coord_dropout_p = 1.0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(TrainDecoder, DeterministicUnderSeed) {
    const auto d = affine_data(32, 1);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 9;
    const auto net = build_paper_decoder(2, {1, 4, 4}, {4, 3});
    const auto a = train_decoder(d.e, d.images, cfg, net);
    const auto b = train_decoder(d.e, d.images, cfg, net);
    EXPECT_EQ(a.report.train_loss, b.report.train_loss);
    EXPECT_EQ(a.report.val_loss, b.report.val_loss);
    EXPECT_EQ(a.params.flat, b.params.flat);
    EXPECT_EQ(to_json(a.report, false), to_json(b.report, false));
}

TEST(TrainDecoder, BestEpochContractAndLossDecreases) {
    const auto shapes = make_shape_images(256, 8, 8, 3);
    const ImageBatch imgs = normalize_minmax(shapes.images, -1, 1).batch;
    Embedding e;
    e.coords = shapes.factors;
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 32;
    cfg.lr = 1e-3;
    const auto r = train_decoder(e, imgs, cfg, build_paper_decoder(e.dim(), {1, 8, 8}, {16, 8, 8}));
    ASSERT_EQ(r.report.train_loss.size(), 20u);
    EXPECT_LT(r.report.train_loss.back(), r.report.train_loss.front());
    for (double v : r.report.val_loss) EXPECT_LE(r.report.val_mse, v + 1e-12);
    EXPECT_EQ(r.report.val_loss[r.report.best_epoch], r.report.val_mse);
    EXPECT_EQ(r.report.n_val, 51u);
}

TEST(TrainDecoder, RealizableAffineTargets) {
    const auto d = affine_data(1024, 5);
    TrainConfig cfg;
    cfg.coord_dropout_p = 0;  // the target map must see the true coordinates
    cfg.lr = 1e-3;
    const auto r = train_decoder(d.e, d.images, cfg, build_dense_decoder(2, {1, 4, 4}, {64, 64}));
    EXPECT_LT(r.report.val_mse, 1e-3);
}

TEST(TrainDecoder, MisalignedInputs) {
    const auto d = affine_data(32, 1);
    Embedding short_e = d.e;
    short_e.coords = d.e.coords.rows(0, 30);
    EXPECT_THROW(train_decoder(short_e, d.images, TrainConfig{}, build_dense_decoder(2, {1, 4, 4}, {8})), Error);
}

TEST(TrainAutoencoder, LinearIdentityIsRealizable) {
    const ImageBatch imgs = ImageBatch(random_tensor({4096, 1, 4, 4}, 3, -0.8, 0.8), -1, 1);
    TrainConfig cfg;
    cfg.lr = 3e-3;
    cfg.weight_decay = 0;
    cfg.epochs = 60;
    const auto r = train_autoencoder(imgs, cfg, build_autoencoder({1, 4, 4}, 16, true));
    EXPECT_LT(r.report.val_mse, 1e-3);
    EXPECT_EQ(r.report.model, "autoencoder");
}

TEST(TrainAutoencoder, Deterministic) {
    const ImageBatch imgs = random_images(24, 1, 8, 8, 4);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    const auto ae = build_autoencoder({1, 8, 8}, 4, false, {2, 3});
    EXPECT_EQ(train_autoencoder(imgs, cfg, ae).params.flat, train_autoencoder(imgs, cfg, ae).params.flat);
}

TEST(ReportJson, RoundTrip) {
    ReconReport r;
    r.model = "tsne";
    r.arch = "paper";
    r.train_loss = {0.5, 0.25};
    r.val_loss = {0.6, 0.3};
    r.best_epoch = 1;
    r.val_mse = 0.3;
    r.val_psnr = std::numeric_limits<double>::infinity();
    r.val_ssim = 0.9;
    const auto j = to_json(r, false);
    EXPECT_TRUE(j.at("val_psnr").is_null());
    EXPECT_FALSE(j.contains("seconds"));
    const auto back = report_from_json(j);
    EXPECT_EQ(back.val_loss, r.val_loss);
    EXPECT_TRUE(std::isinf(back.val_psnr));
}

TEST(Metrics, MseExamplesAndOracle) {
    Tensor a = random_tensor({3, 50}, 1);
    for (auto& v : a.storage()) v = std::round(v * 64) / 64;  // keeps a + 0.5 exact
    EXPECT_EQ(metric_mse(a, a), 0.0);
    Tensor b = a;
    for (auto& v : b.storage()) v += 0.5f;
    EXPECT_EQ(metric_mse(a, b), 0.25);
    const Tensor c = random_tensor({3, 50}, 2);
    long double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::pow((long double)a[i] - c[i], 2);
    EXPECT_NEAR(metric_mse(a, c), double(acc / a.size()), 1e-9);
}

TEST(Metrics, PsnrExamples) {
    const ImageBatch a = random_images(2, 1, 8, 8, 3);
    EXPECT_TRUE(std::isinf(metric_psnr(a, a)));
    EXPECT_NEAR(metric_psnr(a, plus_constant(a, 0.1f)), 20.0, 1e-5);
    EXPECT_NEAR(metric_psnr(a, plus_constant(a, 0.01f)), 40.0, 1e-4);
    double prev = std::numeric_limits<double>::infinity();
    for (float d : {0.01f, 0.02f, 0.05f, 0.1f, 0.3f}) {
        const double p = metric_psnr(a, plus_constant(a, d));
        EXPECT_LT(p, prev);
        prev = p;
    }
    ImageBatch other = a;
    other.lo = -1;
    EXPECT_THROW(metric_psnr(a, other), ParameterError);
}

TEST(Metrics, PsnrUsesUnitRange) {
    // The same images stored in [-1, 1] give the same PSNR.
    const ImageBatch a = random_images(2, 1, 8, 8, 3), b = plus_constant(a, 0.1f);
    auto to_sym = [](const ImageBatch& x) {
        ImageBatch y = x;
        for (auto& v : y.pixels.storage()) v = 2 * v - 1;
        y.lo = -1, y.hi = 1;
        return y;
    };
    EXPECT_NEAR(metric_psnr(to_sym(a), to_sym(b)), metric_psnr(a, b), 1e-4);
}

TEST(Metrics, SsimIdentitySymmetryAndOracle) {
    const ImageBatch a = random_images(2, 3, 12, 10, 5), b = random_images(2, 3, 12, 10, 6);
    EXPECT_EQ(metric_ssim(a, a), 1.0);
    EXPECT_LT(std::abs(metric_ssim(a, b) - metric_ssim(b, a)), 1e-12);
    EXPECT_NEAR(metric_ssim(a, b), oracle::naive_ssim(a, b), 1e-9);
    const ImageBatch c = plus_constant(a, 0.05f);
    EXPECT_NEAR(metric_ssim(a, c), oracle::naive_ssim(a, c), 1e-9);
}

TEST(Metrics, SsimOfComplementIsNearMinusOne) {
    Tensor px({1, 1, 16, 16});
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) px[i * 16 + j] = float((i + j) % 2);
    const ImageBatch a(px, 0, 1);
    ImageBatch b = a;
    for (auto& v : b.pixels.storage()) v = 1 - v;
    EXPECT_LT(metric_ssim(a, b), -0.99);
}

TEST(Metrics, SsimWindowLargerThanImage) {
    EXPECT_THROW(metric_ssim(random_images(1, 1, 7, 20, 1), random_images(1, 1, 7, 20, 2)), ParameterError);
}
