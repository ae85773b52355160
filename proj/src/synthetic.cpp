#include "mg/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "mg/rng.hpp"

namespace mg {

SyntheticManifold make_swiss_roll(std::size_t n, double noise_sd, std::uint64_t seed) {
    if (n < 1) throw ParameterError("make_swiss_roll: n must be >= 1");
    Rng rng(seed);
    Tensor pts({n, 3}), intr({n, 2});
    const double pi = std::numbers::pi;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = uniform(rng, 1.5 * pi, 4.5 * pi);
        const double h = uniform(rng, 0.0, 21.0);
        const double e0 = normal(rng), e1 = normal(rng), e2 = normal(rng);
        pts.at(i, 0) = static_cast<float>(t * std::cos(t) + noise_sd * e0);
        pts.at(i, 1) = static_cast<float>(h + noise_sd * e1);
        pts.at(i, 2) = static_cast<float>(t * std::sin(t) + noise_sd * e2);
        intr.at(i, 0) = static_cast<float>(t);
        intr.at(i, 1) = static_cast<float>(h);
    }
    return {std::move(pts), std::move(intr)};
}

LabeledPoints make_gaussian_blobs(std::size_t per_cluster, std::size_t clusters, std::size_t dim,
                                  double separation, std::uint64_t seed) {
    if (clusters > dim + 1) throw ParameterError("make_gaussian_blobs: need dim >= clusters - 1");
    Rng rng(seed);
    LabeledPoints out{Tensor({per_cluster * clusters, dim}), {}};
    for (std::size_t c = 0; c < clusters; ++c) {
        for (std::size_t i = 0; i < per_cluster; ++i) {
            const std::size_t row = c * per_cluster + i;
            for (std::size_t j = 0; j < dim; ++j) {
                const double center = (c > 0 && j == c - 1) ? separation : 0.0;
                out.points.at(row, j) = static_cast<float>(center + normal(rng));
            }
            out.label.push_back(c);
        }
    }
    return out;
}

ShapeImages make_shape_images(std::size_t n, std::size_t height, std::size_t width, std::uint64_t seed) {
    Rng rng(seed);
    Tensor px({n, 1, height, width});
    Tensor factors({n, 7});
    const double H = double(height), W = double(width), S = std::min(H, W);
    for (std::size_t i = 0; i < n; ++i) {
        const double cx = uniform(rng, 0.3, 0.7) * W;
        const double cy = uniform(rng, 0.3, 0.7) * H;
        const double a = uniform(rng, 0.12, 0.32) * S;
        const double b = uniform(rng, 0.08, 0.20) * S;
        const double theta = uniform(rng, 0.0, std::numbers::pi);
        const double fg = uniform(rng, 0.5, 1.0);
        const double bg = uniform(rng, 0.0, 0.3);
        const double f[7] = {cx / W, cy / H, a / S, b / S, theta, fg, bg};
        for (int k = 0; k < 7; ++k) factors.at(i, k) = static_cast<float>(f[k]);
        const double c = std::cos(theta), s = std::sin(theta);
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                const double dx = double(x) + 0.5 - cx, dy = double(y) + 0.5 - cy;
                const double u = (c * dx + s * dy) / a, v = (-s * dx + c * dy) / b;
                const double r = std::sqrt(u * u + v * v);
                const double edge = 1.0 / (1.0 + std::exp(-6.0 * (1.0 - r)));
                px[(i * height + y) * width + x] = static_cast<float>(bg + (fg - bg) * edge);
            }
        }
    }
    return {ImageBatch(std::move(px), 0.0f, 1.0f), std::move(factors)};
}

}  // namespace mg
