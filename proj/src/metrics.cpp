#include "mg/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "mg/error.hpp"

namespace mg {

double metric_mse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("metric_mse: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    if (a.size() == 0) return 0.0;
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        s += d * d;
    }
    return s / double(a.size());
}

namespace {

void require_compatible(const ImageBatch& a, const ImageBatch& b, const char* who) {
    if (a.pixels.shape() != b.pixels.shape())
        throw ShapeError(std::string(who) + ": " + shape_str(a.pixels.shape()) + " vs " + shape_str(b.pixels.shape()));
    if (a.lo != b.lo || a.hi != b.hi) throw ParameterError(std::string(who) + ": value ranges differ");
}

// Values mapped to [0, 1] in f64.
std::vector<double> unit_range(const ImageBatch& x) {
    std::vector<double> v(x.pixels.size());
    const double lo = x.lo, span = double(x.hi) - double(x.lo);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (double(x.pixels[i]) - lo) / span;
    return v;
}

// Summed-area table with a zero border: (H + 1) x (W + 1).
std::vector<double> integral(const double* p, std::size_t H, std::size_t W) {
    std::vector<double> s((H + 1) * (W + 1), 0.0);
    for (std::size_t y = 0; y < H; ++y) {
        double row = 0;
        for (std::size_t x = 0; x < W; ++x) {
            row += p[y * W + x];
            s[(y + 1) * (W + 1) + x + 1] = s[y * (W + 1) + x + 1] + row;
        }
    }
    return s;
}

double box(const std::vector<double>& s, std::size_t W, std::size_t y, std::size_t x, std::size_t k) {
    const std::size_t w = W + 1;
    return s[(y + k) * w + x + k] - s[y * w + x + k] - s[(y + k) * w + x] + s[y * w + x];
}

}  // namespace

double metric_psnr(const ImageBatch& a, const ImageBatch& b) {
    require_compatible(a, b, "metric_psnr");
    const auto ua = unit_range(a), ub = unit_range(b);
    double s = 0;
    for (std::size_t i = 0; i < ua.size(); ++i) s += (ua[i] - ub[i]) * (ua[i] - ub[i]);
    const double mse = ua.empty() ? 0.0 : s / double(ua.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double metric_ssim(const ImageBatch& a, const ImageBatch& b) {
    require_compatible(a, b, "metric_ssim");
    const std::size_t k = kSsimWindow, H = a.height(), W = a.width();
    if (H < k || W < k)
        throw ParameterError("metric_ssim: image " + std::to_string(H) + "x" + std::to_string(W) +
                             " is smaller than the " + std::to_string(k) + "x" + std::to_string(k) + " window");
    const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    const auto ua = unit_range(a), ub = unit_range(b);
    const std::size_t plane = H * W, planes = a.count() * a.channels();
    const double N = double(k * k);
    std::vector<double> aa(plane), bb(plane), ab(plane);
    double total = 0;
    for (std::size_t p = 0; p < planes; ++p) {
        const double* x = ua.data() + p * plane;
        const double* y = ub.data() + p * plane;
        for (std::size_t i = 0; i < plane; ++i) aa[i] = x[i] * x[i], bb[i] = y[i] * y[i], ab[i] = x[i] * y[i];
        const auto sx = integral(x, H, W), sy = integral(y, H, W);
        const auto sxx = integral(aa.data(), H, W), syy = integral(bb.data(), H, W), sxy = integral(ab.data(), H, W);
        double acc = 0;
        for (std::size_t r = 0; r + k <= H; ++r)
            for (std::size_t c = 0; c + k <= W; ++c) {
                const double mx = box(sx, W, r, c, k) / N, my = box(sy, W, r, c, k) / N;
                const double vx = box(sxx, W, r, c, k) / N - mx * mx;
                const double vy = box(syy, W, r, c, k) / N - my * my;
                const double cxy = box(sxy, W, r, c, k) / N - mx * my;
                acc += ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
            }
        total += acc / double((H - k + 1) * (W - k + 1));
    }
    return total / double(planes);
}

}  // namespace mg
