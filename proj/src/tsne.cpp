#include "mg/tsne.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "mg/parallel.hpp"
#include "mg/rng.hpp"

namespace mg {

CalibratedRow perplexity_calibrate(std::span<const double> d2_row, double perplexity) {
    const std::size_t m = d2_row.size();
    if (m == 0) throw ParameterError("perplexity_calibrate: empty distance row");
    if (!(perplexity > 0) || perplexity >= double(m))
        throw ParameterError("perplexity_calibrate: perplexity must lie in (0, n-1)");
    const double target = std::log(perplexity);
    const double dmin = *std::min_element(d2_row.begin(), d2_row.end());
    double mean = 0;
    for (double v : d2_row) mean += v - dmin;
    mean /= double(m);

    CalibratedRow out;
    out.p.resize(m);
    auto evaluate = [&](double beta) {
        double z = 0, s = 0;
        for (std::size_t j = 0; j < m; ++j) {
            const double sh = d2_row[j] - dmin;
            out.p[j] = std::exp(-beta * sh);
            z += out.p[j];
            s += out.p[j] * sh;
        }
        for (double& v : out.p) v /= z;
        return std::log(z) + beta * s / z;
    };

    double beta = mean > 0 ? 1.0 / mean : 1.0;
    double lo = 0, hi = std::numeric_limits<double>::infinity();
    double h = evaluate(beta);
    // Bracket by doubling/halving, then bisect.
    for (int step = 0; step < 64 && std::abs(h - target) > 1e-5; ++step) {
        if (h > target) {
            lo = beta;
            if (!std::isinf(hi)) break;
            beta *= 2;
        } else {
            hi = beta;
            if (lo > 0) break;
            beta /= 2;
        }
        h = evaluate(beta);
    }
    if (std::abs(h - target) > 1e-5) {
        if (std::isinf(hi) || lo == 0)
            throw CalibrationError("perplexity_calibrate: failed to bracket the target entropy in 64 doublings");
        for (int it = 0; it < 200 && std::abs(h - target) > 1e-5; ++it) {
            beta = 0.5 * (lo + hi);
            h = evaluate(beta);
            (h > target ? lo : hi) = beta;
        }
        if (std::abs(h - target) > 1e-5)
            throw CalibrationError("perplexity_calibrate: bisection did not reach the entropy tolerance");
    }
    out.beta = beta;
    out.entropy = h;
    return out;
}

Eigen::MatrixXd joint_probabilities_exact(const Tensor& X, double perplexity) {
    const std::size_t n = X.dim(0), dim = X.dim(1);
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    parallel_for(n, [&](std::size_t i) {
        std::vector<double> row;
        row.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) row.push_back(squared_distance(X.data() + i * dim, X.data() + j * dim, dim));
        const CalibratedRow cal = perplexity_calibrate(row, perplexity);
        std::size_t c = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) C(i, j) = cal.p[c++];
    });
    return (C + C.transpose()) / (2.0 * double(n));
}

SparseP joint_probabilities_sparse(const Tensor& X, double perplexity, std::size_t k) {
    const NeighborGraph g = knn_graph(X, k);
    const std::size_t n = g.n;
    std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> d2(k);
        for (std::size_t j = 0; j < k; ++j) d2[j] = g.distance(i, j) * g.distance(i, j);
        const CalibratedRow cal = perplexity_calibrate(d2, perplexity);
        for (std::size_t j = 0; j < k; ++j) {
            rows[i].emplace_back(g.neighbor(i, j), cal.p[j]);
            rows[g.neighbor(i, j)].emplace_back(i, cal.p[j]);
        }
    }
    SparseP P;
    P.n = n;
    P.row_ptr.push_back(0);
    const double scale = 1.0 / (2.0 * double(n));
    for (auto& r : rows) {
        std::sort(r.begin(), r.end());
        for (std::size_t a = 0; a < r.size();) {
            std::size_t b = a;
            double s = 0;
            while (b < r.size() && r[b].first == r[a].first) s += r[b++].second;
            P.col.push_back(r[a].first);
            P.val.push_back(s * scale);
            a = b;
        }
        P.row_ptr.push_back(P.col.size());
    }
    return P;
}

SparseP sparse_from_dense(const Eigen::MatrixXd& P) {
    SparseP S;
    S.n = static_cast<std::size_t>(P.rows());
    S.row_ptr.push_back(0);
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        for (Eigen::Index j = 0; j < P.cols(); ++j)
            if (i != j && P(i, j) != 0) {
                S.col.push_back(static_cast<std::size_t>(j));
                S.val.push_back(P(i, j));
            }
        S.row_ptr.push_back(S.col.size());
    }
    return S;
}

Eigen::MatrixXd tsne_gradient_exact(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Y) {
    const Eigen::Index n = Y.rows(), d = Y.cols();
    Eigen::MatrixXd W(n, n);
    double z = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        W(i, i) = 0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double w = 1.0 / (1.0 + (Y.row(i) - Y.row(j)).squaredNorm());
            W(i, j) = W(j, i) = w;
            z += 2 * w;
        }
    }
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, d);
    if (z == 0) return grad;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const double mult = (P(i, j) - W(i, j) / z) * W(i, j);
            grad.row(i) += mult * (Y.row(i) - Y.row(j));
        }
    return 4.0 * grad;
}

namespace {

using SmallVec = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor, 1, 3>;

// Space-partitioning tree over 2 or 3 dimensions.
class SpTree {
public:
    SpTree(const Eigen::MatrixXd& Y) : Y_(Y), d_(static_cast<int>(Y.cols())) {
        const SmallVec mn = Y.colwise().minCoeff(), mx = Y.colwise().maxCoeff();
        Node root;
        root.center = 0.5 * (mn + mx);
        root.half = std::max(0.5 * (mx - mn).maxCoeff(), 1e-12) * (1 + 1e-9);
        root.com = SmallVec::Zero(d_);
        nodes_.push_back(std::move(root));
        for (Eigen::Index i = 0; i < Y.rows(); ++i) insert(0, static_cast<std::size_t>(i), 0);
    }

    // Accumulates sum_j w_ij^2 (y_i - y_j) into force and sum_j w_ij into z.
    void repulsion(std::size_t i, double theta, SmallVec& force, double& z) const {
        visit(0, i, theta, force, z);
    }

private:
    struct Node {
        SmallVec center;
        double half = 0;
        SmallVec com;
        std::size_t count = 0;
        std::array<std::int64_t, 8> child{-1, -1, -1, -1, -1, -1, -1, -1};
        bool leaf = true;
        std::vector<std::size_t> points;
    };

    static constexpr int kMaxDepth = 48;

    int child_slot(const Node& nd, std::size_t i) const {
        int slot = 0;
        for (int c = 0; c < d_; ++c)
            if (Y_(static_cast<Eigen::Index>(i), c) > nd.center[c]) slot |= 1 << c;
        return slot;
    }

    std::int64_t make_child(std::size_t parent, int slot) {
        Node ch;
        ch.half = nodes_[parent].half / 2;
        ch.center = nodes_[parent].center;
        for (int c = 0; c < d_; ++c) ch.center[c] += ((slot >> c) & 1 ? ch.half : -ch.half);
        ch.com = SmallVec::Zero(d_);
        nodes_.push_back(std::move(ch));
        return static_cast<std::int64_t>(nodes_.size() - 1);
    }

    void insert(std::size_t node, std::size_t i, int depth) {
        {
            Node& nd = nodes_[node];
            nd.com = (nd.com * double(nd.count) + Y_.row(static_cast<Eigen::Index>(i))) / double(nd.count + 1);
            ++nd.count;
            if (nd.leaf) {
                const bool duplicate = !nd.points.empty() &&
                                       Y_.row(static_cast<Eigen::Index>(nd.points[0])) ==
                                           Y_.row(static_cast<Eigen::Index>(i));
                if (nd.points.empty() || duplicate || depth >= kMaxDepth) {
                    nd.points.push_back(i);
                    return;
                }
                // Split: push existing points down.
                nd.leaf = false;
            }
        }
        std::vector<std::size_t> moved;
        moved.swap(nodes_[node].points);
        for (std::size_t p : moved) descend(node, p, depth);
        descend(node, i, depth);
    }

    void descend(std::size_t node, std::size_t i, int depth) {
        const int slot = child_slot(nodes_[node], i);
        if (nodes_[node].child[slot] < 0) {
            const std::int64_t c = make_child(node, slot);
            nodes_[node].child[slot] = c;
        }
        insert(static_cast<std::size_t>(nodes_[node].child[slot]), i, depth + 1);
    }

    void visit(std::size_t node, std::size_t i, double theta, SmallVec& force, double& z) const {
        const Node& nd = nodes_[node];
        if (nd.count == 0) return;
        const auto yi = Y_.row(static_cast<Eigen::Index>(i));
        if (nd.leaf) {
            for (std::size_t j : nd.points) {
                if (j == i) continue;
                const SmallVec diff = yi - Y_.row(static_cast<Eigen::Index>(j));
                const double w = 1.0 / (1.0 + diff.squaredNorm());
                z += w;
                force += (w * w) * diff;
            }
            return;
        }
        const SmallVec diff = yi - nd.com;
        const double dist2 = diff.squaredNorm();
        if (theta > 0 && dist2 > 0 && (2 * nd.half) / std::sqrt(dist2) < theta) {
            const double w = 1.0 / (1.0 + dist2);
            z += double(nd.count) * w;
            force += (double(nd.count) * w * w) * diff;
            return;
        }
        for (std::int64_t c : nd.child)
            if (c >= 0) visit(static_cast<std::size_t>(c), i, theta, force, z);
    }

    const Eigen::MatrixXd& Y_;
    int d_;
    std::vector<Node> nodes_;
};

}  // namespace

Eigen::MatrixXd tsne_gradient_bh(const SparseP& P, const Eigen::MatrixXd& Y, double theta, double exaggeration) {
    const Eigen::Index n = Y.rows(), d = Y.cols();
    if (d != 2 && d != 3) throw ParameterError("tsne_gradient_bh: embedding dimension must be 2 or 3");
    if (theta < 0) throw ParameterError("tsne_gradient_bh: theta must be >= 0");
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, d);
    if (n <= 1) return grad;
    const SpTree tree(Y);
    Eigen::MatrixXd rep = Eigen::MatrixXd::Zero(n, d);
    double z = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        SmallVec f = SmallVec::Zero(d);
        tree.repulsion(static_cast<std::size_t>(i), theta, f, z);
        rep.row(i) = f;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        SmallVec attr = SmallVec::Zero(d);
        for (std::size_t e = P.row_ptr[static_cast<std::size_t>(i)]; e < P.row_ptr[static_cast<std::size_t>(i) + 1]; ++e) {
            const SmallVec diff = Y.row(i) - Y.row(static_cast<Eigen::Index>(P.col[e]));
            attr += (exaggeration * P.val[e] / (1.0 + diff.squaredNorm())) * diff;
        }
        grad.row(i) = 4.0 * attr;
        if (z > 0) grad.row(i) -= 4.0 * rep.row(i) / z;
    }
    return grad;
}

namespace {

double kernel_sum(const Eigen::MatrixXd& Y) {
    double z = 0;
    for (Eigen::Index i = 0; i < Y.rows(); ++i)
        for (Eigen::Index j = i + 1; j < Y.rows(); ++j) z += 2.0 / (1.0 + (Y.row(i) - Y.row(j)).squaredNorm());
    return z;
}

}  // namespace

double tsne_kl(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Y) {
    const double z = kernel_sum(Y);
    double kl = 0;
    for (Eigen::Index i = 0; i < Y.rows(); ++i)
        for (Eigen::Index j = 0; j < Y.rows(); ++j) {
            if (i == j || P(i, j) <= 0) continue;
            const double q = 1.0 / (1.0 + (Y.row(i) - Y.row(j)).squaredNorm()) / z;
            kl += P(i, j) * std::log(P(i, j) / q);
        }
    return kl;
}

double tsne_kl(const SparseP& P, const Eigen::MatrixXd& Y) {
    const double z = kernel_sum(Y);
    double kl = 0;
    for (std::size_t i = 0; i < P.n; ++i)
        for (std::size_t e = P.row_ptr[i]; e < P.row_ptr[i + 1]; ++e) {
            if (P.val[e] <= 0) continue;
            const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(P.col[e]);
            const double q = 1.0 / (1.0 + (Y.row(a) - Y.row(b)).squaredNorm()) / z;
            kl += P.val[e] * std::log(P.val[e] / q);
        }
    return kl;
}

TsneResult tsne_embed(const Tensor& Xin, const TsneConfig& cfg) {
    const std::size_t n = Xin.dim(0);
    if (n < 5) throw ParameterError("tsne_embed: need at least 5 points");
    if (cfg.dim < 1) throw ParameterError("tsne_embed: dim must be >= 1");
    const bool barnes_hut = cfg.theta > 0;
    if (barnes_hut && cfg.dim != 2 && cfg.dim != 3)
        throw ParameterError("tsne_embed: Barnes-Hut requires dim 2 or 3; use theta = 0 for the exact path");
    const Tensor X = cfg.pca_dims > 0 ? pca_reduce(Xin, cfg.pca_dims) : Xin;

    Eigen::MatrixXd P_dense;
    SparseP P_sparse;
    if (barnes_hut) {
        const auto k = std::min<std::size_t>(n - 1, static_cast<std::size_t>(3 * cfg.perplexity));
        P_sparse = joint_probabilities_sparse(X, std::min(cfg.perplexity, double(k) - 1e-9), k);
    } else {
        P_dense = joint_probabilities_exact(X, cfg.perplexity);
    }

    const auto N = static_cast<Eigen::Index>(n), D = static_cast<Eigen::Index>(cfg.dim);
    Rng rng(cfg.seed);
    Eigen::MatrixXd Y(N, D);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index c = 0; c < D; ++c) Y(i, c) = 1e-4 * normal(rng);
    Eigen::MatrixXd update = Eigen::MatrixXd::Zero(N, D);
    Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(N, D);

    TsneResult result;
    auto kl_now = [&] { return barnes_hut ? tsne_kl(P_sparse, Y) : tsne_kl(P_dense, Y); };

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const double exag = it < cfg.exaggeration_iters ? cfg.exaggeration : 1.0;
        const Eigen::MatrixXd grad =
            barnes_hut ? tsne_gradient_bh(P_sparse, Y, cfg.theta, exag) : tsne_gradient_exact(exag * P_dense, Y);
        const double momentum = it < cfg.momentum_switch ? cfg.momentum_initial : cfg.momentum_final;
        if (cfg.adaptive_gains) {
            for (Eigen::Index i = 0; i < N; ++i)
                for (Eigen::Index c = 0; c < D; ++c) {
                    const bool same = (grad(i, c) > 0) == (update(i, c) > 0);
                    gains(i, c) = same ? std::max(gains(i, c) * 0.8, 0.01) : gains(i, c) + 0.2;
                }
        }
        update = momentum * update - cfg.learning_rate * gains.cwiseProduct(grad);
        Y += update;
        Y.rowwise() -= Y.colwise().mean();
        if (!Y.allFinite())
            throw OptimizationError("tsne_embed: non-finite coordinates at iteration " + std::to_string(it));
        if ((cfg.kl_every > 0 && it % cfg.kl_every == 0) || it == cfg.exaggeration_iters || it + 1 == cfg.iterations)
            result.kl_history.emplace_back(it, kl_now());
    }

    Embedding& e = result.embedding;
    e.method = Method::TSNE;
    e.coords = to_tensor(Y);
    e.hyper = {{"d", double(cfg.dim)},        {"perplexity", cfg.perplexity}, {"lr", cfg.learning_rate},
               {"iters", double(cfg.iterations)}, {"theta", cfg.theta},        {"seed", double(cfg.seed)},
               {"exaggeration", cfg.exaggeration}, {"pca_dims", double(cfg.pca_dims)}};
    e.diagnostics = {{"kl", result.kl_history.empty() ? 0.0 : result.kl_history.back().second}};
    return result;
}

}  // namespace mg
