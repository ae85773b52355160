#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <utility>
#include <vector>

#include "mg/tensor.hpp"

namespace mg {

// Exact k-nearest-neighbor graph. Row i lists the k nearest other points in
// ascending distance; equal distances are ordered by lower index.
struct NeighborGraph {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<std::size_t> neighbors;  // [n * k]
    std::vector<double> distances;       // [n * k], Euclidean

    std::size_t neighbor(std::size_t i, std::size_t j) const { return neighbors[i * k + j]; }
    double distance(std::size_t i, std::size_t j) const { return distances[i * k + j]; }
};

NeighborGraph knn_graph(const Tensor& X, std::size_t k);

// Union-symmetrized adjacency lists: j is adjacent to i if i->j or j->i.
// Each list is sorted by neighbor index.
using Adjacency = std::vector<std::vector<std::pair<std::size_t, double>>>;
Adjacency symmetric_adjacency(const NeighborGraph& g);

// Connected component sizes of the symmetrized graph, largest first.
std::vector<std::size_t> component_sizes(const NeighborGraph& g);

// Throws ConnectivityError naming the component sizes unless connected.
void require_connected(const NeighborGraph& g, const char* context);

// Symmetric sparse matrix stored as its upper triangle (row <= col).
struct SparseSymMatrix {
    struct Entry {
        std::size_t row, col;
        double value;
    };
    std::size_t n = 0;
    std::vector<Entry> entries;

    Eigen::MatrixXd to_dense() const;
};

// W_ij = exp(-d_ij^2 / (2 sigma^2)) on every edge of the symmetrized graph.
SparseSymMatrix gaussian_affinity(const NeighborGraph& g, double sigma);

struct Laplacian {
    SparseSymMatrix L;                 // D - W
    std::vector<double> degree;        // row sums of W
    std::vector<std::size_t> isolated; // nodes with zero degree
};

Laplacian graph_laplacian(const SparseSymMatrix& W);

struct DistanceMatrix {
    Eigen::MatrixXd d;
    std::size_t n() const { return static_cast<std::size_t>(d.rows()); }
};

// Shortest-path lengths over the symmetrized graph (Dijkstra per source).
DistanceMatrix all_pairs_geodesic(const NeighborGraph& g);

// Squared Euclidean distance between two rows, accumulated in double.
double squared_distance(const float* a, const float* b, std::size_t dim);

}  // namespace mg
