#pragma once

// Independent reference implementations used only by the tests. They are
// deliberately simple (and slow) so they can be read against the math.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "mg/graph.hpp"
#include "mg/image.hpp"
#include "mg/rng.hpp"
#include "mg/tensor.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Cyclic Jacobi rotations until the off-diagonal mass is below tol.
inline VectorXd jacobi_eigenvalues(MatrixXd A, double tol = 1e-12, int max_sweeps = 100) {
    const Eigen::Index n = A.rows();
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
        if (std::sqrt(off) <= tol * std::max(1.0, A.norm())) break;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (A(p, q) == 0) continue;
                const double theta = (A(q, q) - A(p, p)) / (2 * A(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
                const double c = 1 / std::sqrt(t * t + 1), s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
            }
    }
    VectorXd v = A.diagonal();
    std::sort(v.data(), v.data() + n);
    return v;
}

inline MatrixXd random_symmetric(int n, std::uint64_t seed) {
    mg::Rng rng(seed);
    MatrixXd A(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) A(i, j) = A(j, i) = mg::normal(rng);
    return A;
}

// Row i: indices of the k nearest other points, (distance, index) order.
inline std::vector<std::vector<std::size_t>> brute_knn(const mg::Tensor& X, std::size_t k) {
    const std::size_t n = X.dim(0), d = X.dim(1);
    std::vector<std::vector<std::size_t>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double s = 0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = double(X.at(i, c)) - double(X.at(j, c));
                s += diff * diff;
            }
            all.emplace_back(s, j);
        }
        std::sort(all.begin(), all.end());
        for (std::size_t j = 0; j < k; ++j) out[i].push_back(all[j].second);
    }
    return out;
}

// All-pairs shortest paths on the union-symmetrized graph.
inline MatrixXd floyd_warshall(const mg::NeighborGraph& g) {
    const std::size_t n = g.n;
    const double inf = std::numeric_limits<double>::infinity();
    MatrixXd D = MatrixXd::Constant(n, n, inf);
    for (std::size_t i = 0; i < n; ++i) D(i, i) = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < g.k; ++j) {
            const std::size_t v = g.neighbor(i, j);
            const double w = g.distance(i, j);
            D(i, v) = std::min(D(i, v), w);
            D(v, i) = std::min(D(v, i), w);
        }
    for (std::size_t m = 0; m < n; ++m)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (D(i, m) + D(m, j) < D(i, j)) D(i, j) = D(i, m) + D(m, j);
    return D;
}

// Constrained least squares min |x - sum_j w_j n_j|^2 + (reg tr(G)/k) |w|^2,
// sum w = 1, solved through the bordered KKT system.
inline VectorXd kkt_lle_weights(const VectorXd& x, const MatrixXd& nbrs /* k x d */, double reg) {
    const Eigen::Index k = nbrs.rows();
    MatrixXd Z = nbrs.rowwise() - x.transpose();
    MatrixXd G = Z * Z.transpose();
    const double tr = G.trace();
    G.diagonal().array() += tr > 0 ? reg * tr / double(k) : reg;
    MatrixXd K = MatrixXd::Zero(k + 1, k + 1);
    K.topLeftCorner(k, k) = 2 * G;
    K.block(0, k, k, 1).setOnes();
    K.block(k, 0, 1, k).setOnes();
    VectorXd rhs = VectorXd::Zero(k + 1);
    rhs(k) = 1;
    VectorXd sol = K.colPivHouseholderQr().solve(rhs);
    return sol.head(k);
}

// Transposed convolution as zero insertion, padding, and a plain convolution
// with the spatially flipped kernel. x [B, Cin, H, W], w [Cin, Cout, k, k].
inline mg::Tensor zero_stuffed_conv_transpose(const mg::Tensor& x, const mg::Tensor& w, const std::vector<float>& bias,
                                              std::size_t s, std::size_t p, std::size_t op) {
    const std::size_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3), Cout = w.dim(1), k = w.dim(2);
    const std::size_t pad = k - 1 - p;
    const std::size_t Hz = (H - 1) * s + 1 + 2 * pad + op, Wz = (W - 1) * s + 1 + 2 * pad + op;
    const std::size_t Ho = Hz - k + 1, Wo = Wz - k + 1;
    mg::Tensor y({B, Cout, Ho, Wo});
    std::vector<double> z(Cin * Hz * Wz);
    for (std::size_t b = 0; b < B; ++b) {
        std::fill(z.begin(), z.end(), 0.0);
        for (std::size_t c = 0; c < Cin; ++c)
            for (std::size_t i = 0; i < H; ++i)
                for (std::size_t j = 0; j < W; ++j)
                    z[(c * Hz + pad + i * s) * Wz + pad + j * s] = x[((b * Cin + c) * H + i) * W + j];
        for (std::size_t co = 0; co < Cout; ++co)
            for (std::size_t oy = 0; oy < Ho; ++oy)
                for (std::size_t ox = 0; ox < Wo; ++ox) {
                    double acc = 0;
                    for (std::size_t c = 0; c < Cin; ++c)
                        for (std::size_t ky = 0; ky < k; ++ky)
                            for (std::size_t kx = 0; kx < k; ++kx)
                                acc += z[(c * Hz + oy + ky) * Wz + ox + kx] *
                                       double(w[((c * Cout + co) * k + (k - 1 - ky)) * k + (k - 1 - kx)]);
                    y[((b * Cout + co) * Ho + oy) * Wo + ox] =
                        static_cast<float>(acc + (bias.empty() ? 0.0 : double(bias[co])));
                }
    }
    return y;
}

// Direct per-window SSIM, uniform window, population statistics.
inline double naive_ssim(const mg::ImageBatch& a, const mg::ImageBatch& b, std::size_t win = 8) {
    const double C1 = 1e-4, C2 = 9e-4;
    const std::size_t H = a.height(), W = a.width(), planes = a.count() * a.channels();
    auto u = [](const mg::ImageBatch& im, std::size_t i) {
        return (double(im.pixels[i]) - im.lo) / (double(im.hi) - im.lo);
    };
    double total = 0;
    for (std::size_t p = 0; p < planes; ++p) {
        double acc = 0;
        std::size_t count = 0;
        for (std::size_t r = 0; r + win <= H; ++r)
            for (std::size_t c = 0; c + win <= W; ++c) {
                double mx = 0, my = 0;
                for (std::size_t i = 0; i < win; ++i)
                    for (std::size_t j = 0; j < win; ++j) {
                        mx += u(a, p * H * W + (r + i) * W + c + j);
                        my += u(b, p * H * W + (r + i) * W + c + j);
                    }
                const double N = double(win * win);
                mx /= N, my /= N;
                double vx = 0, vy = 0, cxy = 0;
                for (std::size_t i = 0; i < win; ++i)
                    for (std::size_t j = 0; j < win; ++j) {
                        const double dx = u(a, p * H * W + (r + i) * W + c + j) - mx;
                        const double dy = u(b, p * H * W + (r + i) * W + c + j) - my;
                        vx += dx * dx, vy += dy * dy, cxy += dx * dy;
                    }
                vx /= N, vy /= N, cxy /= N;
                acc += ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
                ++count;
            }
        total += acc / double(count);
    }
    return total / double(planes);
}

inline std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        for (std::size_t m = i; m <= j; ++m) r[idx[m]] = 0.5 * double(i + j);
        i = j + 1;
    }
    return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = double(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson(ranks(a), ranks(b));
}

// Lloyd's k-means with farthest-point initialisation; returns labels.
inline std::vector<std::size_t> kmeans(const MatrixXd& Y, std::size_t k, int iters = 100) {
    const Eigen::Index n = Y.rows();
    std::vector<Eigen::Index> centers{0};
    while (centers.size() < k) {
        Eigen::Index best = 0;
        double far = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
            double dmin = std::numeric_limits<double>::infinity();
            for (auto c : centers) dmin = std::min(dmin, (Y.row(i) - Y.row(c)).squaredNorm());
            if (dmin > far) far = dmin, best = i;
        }
        centers.push_back(best);
    }
    MatrixXd C(k, Y.cols());
    for (std::size_t c = 0; c < k; ++c) C.row(c) = Y.row(centers[c]);
    std::vector<std::size_t> label(n, 0);
    for (int it = 0; it < iters; ++it) {
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index arg;
            (C.rowwise() - Y.row(i)).rowwise().squaredNorm().minCoeff(&arg);
            label[i] = std::size_t(arg);
        }
        MatrixXd S = MatrixXd::Zero(k, Y.cols());
        std::vector<double> cnt(k, 0);
        for (Eigen::Index i = 0; i < n; ++i) S.row(label[i]) += Y.row(i), cnt[label[i]] += 1;
        for (std::size_t c = 0; c < k; ++c)
            if (cnt[c] > 0) C.row(c) = S.row(c) / cnt[c];
    }
    return label;
}

// Fraction of points whose cluster's majority label matches their own.
inline double purity(const std::vector<std::size_t>& cluster, const std::vector<std::size_t>& truth, std::size_t k) {
    std::vector<std::vector<std::size_t>> counts(k, std::vector<std::size_t>(k, 0));
    for (std::size_t i = 0; i < cluster.size(); ++i) counts[cluster[i]][truth[i]]++;
    std::size_t hit = 0;
    for (const auto& row : counts) hit += *std::max_element(row.begin(), row.end());
    return double(hit) / double(cluster.size());
}

// Residual variance 1 - r^2 between two distance matrices (upper triangles).
inline double residual_variance(const MatrixXd& A, const MatrixXd& B) {
    std::vector<double> a, b;
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = i + 1; j < A.cols(); ++j) a.push_back(A(i, j)), b.push_back(B(i, j));
    const double r = pearson(a, b);
    return 1 - r * r;
}

inline MatrixXd pairwise_distances(const MatrixXd& Y) {
    MatrixXd D(Y.rows(), Y.rows());
    for (Eigen::Index i = 0; i < Y.rows(); ++i)
        for (Eigen::Index j = 0; j < Y.rows(); ++j) D(i, j) = (Y.row(i) - Y.row(j)).norm();
    return D;
}

}  // namespace oracle
