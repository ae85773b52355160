#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mg/graph.hpp"
#include "mg/tensor.hpp"

namespace mg {

enum class Method { LLE, Isomap, LE, TSNE };

std::string method_name(Method m);
Method parse_method(const std::string& name);

struct Standardization {
    std::vector<double> mean;
    std::vector<double> sd;
};

// Low-dimensional coordinates plus the run's provenance.
struct Embedding {
    Method method = Method::LLE;
    Tensor coords;                               // [n, d]
    std::map<std::string, double> hyper;         // hyperparameters of the run
    std::map<std::string, double> diagnostics;   // e.g. residual_variance, kl
    std::optional<Standardization> standardization;

    std::size_t n() const { return coords.dim(0); }
    std::size_t dim() const { return coords.dim(1); }
};

// Barycentric reconstruction weights; each row of w sums to 1.
struct LleWeights {
    NeighborGraph graph;
    std::vector<double> w;  // [n * k]
};

LleWeights lle_weights(const Tensor& X, const NeighborGraph& g, double reg);

// The LLE cost matrix (I - W)^T (I - W).
Eigen::MatrixXd lle_cost_matrix(const LleWeights& weights);

Embedding lle_embed(const Tensor& X, std::size_t k, std::size_t d, double reg = 1e-3);

// Reports residual_variance = 1 - r^2(geodesic, embedded distance) and the
// clipped negative eigenvalue mass in diagnostics.
Embedding isomap_embed(const Tensor& X, std::size_t k, std::size_t d);

Embedding le_embed(const Tensor& X, std::size_t k, double sigma, std::size_t d);

// Median of all k-NN edge lengths; a data-scaled kernel bandwidth.
double median_neighbor_distance(const NeighborGraph& g);

// Per-dimension zero mean / unit (population) variance; stats are stored
// on the returned embedding.
Embedding standardize_embedding(const Embedding& e);
Embedding destandardize_embedding(const Embedding& e);
Tensor destandardize_coords(const Tensor& coords, const Standardization& s);
Tensor standardize_coords(const Tensor& coords, const Standardization& s);

// Principal-component projection onto the top `dims` directions.
Tensor pca_reduce(const Tensor& X, std::size_t dims);

// Coordinates as MGT1 at `path`, metadata as JSON at `path` + ".json".
void save_embedding(const Embedding& e, const std::filesystem::path& path);
Embedding load_embedding(const std::filesystem::path& path);

Eigen::MatrixXd to_matrix(const Tensor& t);
Tensor to_tensor(const Eigen::MatrixXd& m);

}  // namespace mg
