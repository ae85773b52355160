#include "mg/nldr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "mg/spectral.hpp"

namespace mg {

std::string method_name(Method m) {
    switch (m) {
        case Method::LLE: return "lle";
        case Method::Isomap: return "isomap";
        case Method::LE: return "le";
        case Method::TSNE: return "tsne";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    if (name == "lle") return Method::LLE;
    if (name == "isomap") return Method::Isomap;
    if (name == "le" || name == "laplacian") return Method::LE;
    if (name == "tsne") return Method::TSNE;
    throw ConfigError("unknown method '" + name + "' (expected lle|isomap|le|tsne)");
}

Eigen::MatrixXd to_matrix(const Tensor& t) {
    if (t.rank() != 2) throw ShapeError("expected a rank-2 tensor, got " + shape_str(t.shape()));
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
    for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j) m(i, j) = t.at(i, j);
    return m;
}

Tensor to_tensor(const Eigen::MatrixXd& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) t.at(i, j) = static_cast<float>(m(i, j));
    return t;
}

LleWeights lle_weights(const Tensor& X, const NeighborGraph& g, double reg) {
    if (reg < 0) throw ParameterError("lle_weights: reg must be >= 0");
    const std::size_t dim = X.dim(1), k = g.k;
    LleWeights out{g, std::vector<double>(g.n * k)};
    Eigen::MatrixXd Z(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < g.n; ++i) {
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t c = 0; c < dim; ++c)
                Z(j, c) = double(X.at(g.neighbor(i, j), c)) - double(X.at(i, c));
        Eigen::MatrixXd G = Z * Z.transpose();
        const double trace = G.trace();
        double r = reg * trace / double(k);
        if (r == 0 && reg > 0) r = reg;
        G.diagonal().array() += r;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(G);
        if (!lu.isInvertible())
            throw SolverError("lle_weights: local Gram matrix of point " + std::to_string(i) +
                              " is singular; use reg > 0");
        Eigen::VectorXd w = lu.solve(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(k)));
        const double s = w.sum();
        if (!std::isfinite(s) || s == 0)
            throw SolverError("lle_weights: degenerate weights at point " + std::to_string(i));
        w /= s;
        for (std::size_t j = 0; j < k; ++j) out.w[i * k + j] = w[static_cast<Eigen::Index>(j)];
    }
    return out;
}

Eigen::MatrixXd lle_cost_matrix(const LleWeights& weights) {
    const auto& g = weights.graph;
    const auto n = static_cast<Eigen::Index>(g.n);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t i = 0; i < g.n; ++i) {
        // Row i of (I - W): +1 at i, -w_ij at neighbor j.
        row.clear();
        row.emplace_back(i, 1.0);
        for (std::size_t j = 0; j < g.k; ++j) row.emplace_back(g.neighbor(i, j), -weights.w[i * g.k + j]);
        for (const auto& [a, va] : row)
            for (const auto& [b, vb] : row) M(a, b) += va * vb;
    }
    return M;
}

Embedding lle_embed(const Tensor& X, std::size_t k, std::size_t d, double reg) {
    const std::size_t n = X.dim(0);
    if (d < 1 || d + 1 >= n) throw ParameterError("lle_embed: need 1 <= d < n - 1");
    const NeighborGraph g = knn_graph(X, k);
    require_connected(g, "lle_embed");
    const LleWeights w = lle_weights(X, g, reg);
    const EigenResult eig = sym_eigen(lle_cost_matrix(w), Which::Smallest, d + 1);
    Embedding e;
    e.method = Method::LLE;
    e.coords = to_tensor(eig.vectors.rightCols(static_cast<Eigen::Index>(d)) * std::sqrt(double(n)));
    e.hyper = {{"k", double(k)}, {"d", double(d)}, {"reg", reg}};
    e.diagnostics = {{"trivial_eigenvalue", eig.values[0]}, {"lambda_1", eig.values[1]}};
    return e;
}

Embedding isomap_embed(const Tensor& X, std::size_t k, std::size_t d) {
    const std::size_t n = X.dim(0);
    if (d < 1 || d > n) throw ParameterError("isomap_embed: need 1 <= d <= n");
    const NeighborGraph g = knn_graph(X, k);
    const DistanceMatrix geo = all_pairs_geodesic(g);
    const MdsResult mds = classical_mds(geo.d.array().square().matrix(), d);

    // Residual variance over all pairs i < j.
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, cnt = 0;
    for (Eigen::Index i = 0; i < geo.d.rows(); ++i)
        for (Eigen::Index j = i + 1; j < geo.d.rows(); ++j) {
            const double a = geo.d(i, j);
            const double b = (mds.coords.row(i) - mds.coords.row(j)).norm();
            sx += a, sy += b, sxx += a * a, syy += b * b, sxy += a * b, cnt += 1;
        }
    double rv = 0;
    if (cnt > 0) {
        const double cov = sxy / cnt - sx * sy / (cnt * cnt);
        const double vx = sxx / cnt - sx * sx / (cnt * cnt), vy = syy / cnt - sy * sy / (cnt * cnt);
        rv = (vx > 0 && vy > 0) ? 1.0 - cov * cov / (vx * vy) : 1.0;
    }

    Embedding e;
    e.method = Method::Isomap;
    e.coords = to_tensor(mds.coords);
    e.hyper = {{"k", double(k)}, {"d", double(d)}};
    e.diagnostics = {{"residual_variance", rv}, {"clipped_mass", mds.clipped_mass}};
    return e;
}

double median_neighbor_distance(const NeighborGraph& g) {
    std::vector<double> d = g.distances;
    if (d.empty()) return 0;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
    return d[d.size() / 2];
}

Embedding le_embed(const Tensor& X, std::size_t k, double sigma, std::size_t d) {
    const std::size_t n = X.dim(0);
    if (d < 1 || d + 1 > n) throw ParameterError("le_embed: need 1 <= d < n");
    const NeighborGraph g = knn_graph(X, k);
    require_connected(g, "le_embed");
    const Laplacian lap = graph_laplacian(gaussian_affinity(g, sigma));
    if (!lap.isolated.empty())
        throw ConnectivityError("le_embed: " + std::to_string(lap.isolated.size()) +
                                " nodes have zero affinity mass (sigma too small for the data scale)");
    const Eigen::VectorXd deg = Eigen::Map<const Eigen::VectorXd>(lap.degree.data(), static_cast<Eigen::Index>(n));
    const EigenResult eig = generalized_sym_eigen(lap.L.to_dense(), deg, Which::Smallest, d + 1);
    Embedding e;
    e.method = Method::LE;
    e.coords = to_tensor(eig.vectors.rightCols(static_cast<Eigen::Index>(d)));
    e.hyper = {{"k", double(k)}, {"sigma", sigma}, {"d", double(d)}};
    e.diagnostics = {{"trivial_eigenvalue", eig.values[0]}, {"lambda_1", eig.values[1]}};
    return e;
}

Embedding standardize_embedding(const Embedding& e) {
    const std::size_t n = e.n(), d = e.dim();
    if (n < 2) throw ParameterError("standardize_embedding: need at least 2 rows");
    Standardization s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0;
        for (std::size_t i = 0; i < n; ++i) mean += e.coords.at(i, j);
        mean /= double(n);
        double var = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = e.coords.at(i, j) - mean;
            var += c * c;
        }
        var /= double(n);
        const double sd = std::sqrt(var);
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
            throw DegenerateDimensionError("standardize_embedding: dimension " + std::to_string(j) +
                                           " has zero variance");
        s.mean[j] = mean;
        s.sd[j] = sd;
    }
    Embedding out = e;
    out.coords = standardize_coords(e.coords, s);
    out.standardization = std::move(s);
    return out;
}

Tensor standardize_coords(const Tensor& coords, const Standardization& s) {
    Tensor out = coords;
    const std::size_t d = coords.dim(1);
    if (s.mean.size() != d) throw ShapeError("standardization stats do not match coordinate width");
    for (std::size_t i = 0; i < coords.dim(0); ++i)
        for (std::size_t j = 0; j < d; ++j)
            out.at(i, j) = static_cast<float>((double(coords.at(i, j)) - s.mean[j]) / s.sd[j]);
    return out;
}

Tensor destandardize_coords(const Tensor& coords, const Standardization& s) {
    Tensor out = coords;
    const std::size_t d = coords.dim(1);
    if (s.mean.size() != d) throw ShapeError("standardization stats do not match coordinate width");
    for (std::size_t i = 0; i < coords.dim(0); ++i)
        for (std::size_t j = 0; j < d; ++j)
            out.at(i, j) = static_cast<float>(double(coords.at(i, j)) * s.sd[j] + s.mean[j]);
    return out;
}

Embedding destandardize_embedding(const Embedding& e) {
    if (!e.standardization) throw ConfigError("destandardize_embedding: embedding carries no standardization");
    Embedding out = e;
    out.coords = destandardize_coords(e.coords, *e.standardization);
    out.standardization.reset();
    return out;
}

Tensor pca_reduce(const Tensor& X, std::size_t dims) {
    Eigen::MatrixXd M = to_matrix(X);
    if (dims < 1 || dims > static_cast<std::size_t>(M.cols())) throw ParameterError("pca_reduce: bad target dims");
    M.rowwise() -= M.colwise().mean();
    const Eigen::MatrixXd C = (M.transpose() * M) / double(std::max<Eigen::Index>(1, M.rows() - 1));
    const EigenResult eig = sym_eigen(C, Which::Largest, dims);
    return to_tensor(M * eig.vectors.rowwise().reverse());
}

void save_embedding(const Embedding& e, const std::filesystem::path& path) {
    save_tensor(e.coords, path);
    nlohmann::ordered_json j;
    j["method"] = method_name(e.method);
    j["n"] = e.n();
    j["d"] = e.dim();
    j["hyper"] = e.hyper;
    j["diagnostics"] = e.diagnostics;
    if (e.standardization) {
        j["standardization"] = {{"mean", e.standardization->mean}, {"sd", e.standardization->sd}};
    } else {
        j["standardization"] = nullptr;
    }
    std::ofstream f(path.string() + ".json", std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string() + ".json");
    f << j.dump(2) << '\n';
}

Embedding load_embedding(const std::filesystem::path& path) {
    Embedding e;
    e.coords = load_tensor(path);
    const std::string side = path.string() + ".json";
    std::ifstream f(side);
    if (!f) throw FormatError("missing embedding sidecar " + side);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
        e.method = parse_method(j.at("method").get<std::string>());
        e.hyper = j.at("hyper").get<std::map<std::string, double>>();
        e.diagnostics = j.value("diagnostics", nlohmann::json::object()).get<std::map<std::string, double>>();
        if (j.contains("standardization") && !j["standardization"].is_null())
            e.standardization = Standardization{j["standardization"].at("mean").get<std::vector<double>>(),
                                                j["standardization"].at("sd").get<std::vector<double>>()};
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(side + ": " + ex.what());
    }
    if (e.coords.rank() != 2) throw FormatError(path.string() + ": embedding coords must be [n, d]");
    return e;
}

}  // namespace mg
