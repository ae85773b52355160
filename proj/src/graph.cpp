#include "mg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

#include "mg/parallel.hpp"

namespace mg {

double squared_distance(const float* a, const float* b, std::size_t dim) {
    double lane[4] = {0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 4 <= dim; i += 4)
        for (int l = 0; l < 4; ++l) {
            const double d = double(a[i + l]) - double(b[i + l]);
            lane[l] += d * d;
        }
    double s = (lane[0] + lane[1]) + (lane[2] + lane[3]);
    for (; i < dim; ++i) {
        const double d = double(a[i]) - double(b[i]);
        s += d * d;
    }
    return s;
}

NeighborGraph knn_graph(const Tensor& X, std::size_t k) {
    if (X.rank() != 2) throw ShapeError("knn_graph: expected [n, d] data, got " + shape_str(X.shape()));
    const std::size_t n = X.dim(0), dim = X.dim(1);
    if (k < 1 || k >= n)
        throw ParameterError("knn_graph: need 1 <= k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    NeighborGraph g{n, k, std::vector<std::size_t>(n * k), std::vector<double>(n * k)};
    parallel_for(n, [&](std::size_t i) {
        std::vector<std::pair<double, std::size_t>> cand;
        cand.reserve(n - 1);
        const float* xi = X.data() + i * dim;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) cand.emplace_back(squared_distance(xi, X.data() + j * dim, dim), j);
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
        for (std::size_t j = 0; j < k; ++j) {
            g.neighbors[i * k + j] = cand[j].second;
            g.distances[i * k + j] = std::sqrt(cand[j].first);
        }
    });
    return g;
}

Adjacency symmetric_adjacency(const NeighborGraph& g) {
    Adjacency adj(g.n);
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.k; ++j) {
            const std::size_t nb = g.neighbor(i, j);
            adj[i].emplace_back(nb, g.distance(i, j));
            adj[nb].emplace_back(i, g.distance(i, j));
        }
    for (auto& row : adj) {
        std::sort(row.begin(), row.end());
        row.erase(std::unique(row.begin(), row.end(),
                              [](const auto& a, const auto& b) { return a.first == b.first; }),
                  row.end());
    }
    return adj;
}

std::vector<std::size_t> component_sizes(const NeighborGraph& g) {
    std::vector<std::size_t> parent(g.n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.k; ++j) {
            const std::size_t a = find(i), b = find(g.neighbor(i, j));
            if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }
    std::vector<std::size_t> count(g.n, 0);
    for (std::size_t i = 0; i < g.n; ++i) ++count[find(i)];
    std::vector<std::size_t> sizes;
    for (std::size_t c : count)
        if (c) sizes.push_back(c);
    std::sort(sizes.rbegin(), sizes.rend());
    return sizes;
}

void require_connected(const NeighborGraph& g, const char* context) {
    const auto sizes = component_sizes(g);
    if (sizes.size() <= 1) return;
    std::ostringstream os;
    os << context << ": neighbor graph has " << sizes.size() << " components (sizes";
    for (std::size_t i = 0; i < sizes.size() && i < 10; ++i) os << ' ' << sizes[i];
    if (sizes.size() > 10) os << " ...";
    os << "); increase k";
    throw ConnectivityError(os.str());
}

Eigen::MatrixXd SparseSymMatrix::to_dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (const auto& e : entries) {
        m(e.row, e.col) = e.value;
        m(e.col, e.row) = e.value;
    }
    return m;
}

SparseSymMatrix gaussian_affinity(const NeighborGraph& g, double sigma) {
    if (!(sigma > 0)) throw ParameterError("gaussian_affinity: sigma must be > 0");
    const auto adj = symmetric_adjacency(g);
    SparseSymMatrix W{g.n, {}};
    const double denom = 2.0 * sigma * sigma;
    for (std::size_t i = 0; i < g.n; ++i)
        for (const auto& [j, d] : adj[i])
            if (j > i) W.entries.push_back({i, j, std::exp(-(d * d) / denom)});
    return W;
}

Laplacian graph_laplacian(const SparseSymMatrix& W) {
    Laplacian out;
    out.degree.assign(W.n, 0.0);
    for (const auto& e : W.entries) {
        if (e.value < 0) throw ParameterError("graph_laplacian: affinities must be nonnegative");
        out.degree[e.row] += e.value;
        if (e.row != e.col) out.degree[e.col] += e.value;
    }
    std::vector<double> self(W.n, 0.0);
    for (const auto& e : W.entries)
        if (e.row == e.col) self[e.row] = e.value;
    out.L.n = W.n;
    for (std::size_t i = 0; i < W.n; ++i) {
        out.L.entries.push_back({i, i, out.degree[i] - self[i]});
        if (out.degree[i] == 0.0) out.isolated.push_back(i);
    }
    for (const auto& e : W.entries)
        if (e.row != e.col) out.L.entries.push_back({e.row, e.col, -e.value});
    return out;
}

DistanceMatrix all_pairs_geodesic(const NeighborGraph& g) {
    require_connected(g, "all_pairs_geodesic");
    const auto adj = symmetric_adjacency(g);
    const auto n = static_cast<Eigen::Index>(g.n);
    DistanceMatrix out{Eigen::MatrixXd::Zero(n, n)};
    parallel_for(g.n, [&](std::size_t src) {
        std::vector<double> dist(g.n, std::numeric_limits<double>::infinity());
        using Item = std::pair<double, std::size_t>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
        dist[src] = 0;
        heap.emplace(0.0, src);
        while (!heap.empty()) {
            const auto [d, u] = heap.top();
            heap.pop();
            if (d > dist[u]) continue;
            for (const auto& [v, w] : adj[u]) {
                const double nd = d + w;
                if (nd < dist[v]) {
                    dist[v] = nd;
                    heap.emplace(nd, v);
                }
            }
        }
        for (std::size_t j = 0; j < g.n; ++j) out.d(static_cast<Eigen::Index>(src), static_cast<Eigen::Index>(j)) = dist[j];
    });
    // Path sums can differ in the last bit between directions; keep exact symmetry.
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double m = std::min(out.d(i, j), out.d(j, i));
            out.d(i, j) = out.d(j, i) = m;
        }
    return out;
}

}  // namespace mg
