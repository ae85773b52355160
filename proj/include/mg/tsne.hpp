#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mg/nldr.hpp"

namespace mg {

struct CalibratedRow {
    double beta = 1.0;       // precision of the Gaussian conditional
    std::vector<double> p;   // conditional probabilities, sums to 1
    double entropy = 0.0;    // natural-log Shannon entropy of p
};

// Binary search on beta so that H(p) = ln(perplexity) within 1e-5 nats,
// with p_j proportional to exp(-beta * d2_j).
CalibratedRow perplexity_calibrate(std::span<const double> d2_row, double perplexity);

// Symmetric joint probabilities in compressed-row form (both triangles stored).
struct SparseP {
    std::size_t n = 0;
    std::vector<std::size_t> row_ptr;  // n + 1
    std::vector<std::size_t> col;
    std::vector<double> val;
};

// p_ij = (p_{j|i} + p_{i|j}) / (2n), conditionals over all other points.
Eigen::MatrixXd joint_probabilities_exact(const Tensor& X, double perplexity);

// Same symmetrization with conditionals restricted to the k nearest neighbors.
SparseP joint_probabilities_sparse(const Tensor& X, double perplexity, std::size_t k);

SparseP sparse_from_dense(const Eigen::MatrixXd& P);

// grad_i = 4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2)
Eigen::MatrixXd tsne_gradient_exact(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Y);

// Barnes-Hut: attraction exact over the sparse support of P, repulsion from a
// 2^d-ary space-partitioning tree; a cell is summarized once side_length / distance < theta.
// theta = 0 opens every cell and reproduces the exact repulsion.
Eigen::MatrixXd tsne_gradient_bh(const SparseP& P, const Eigen::MatrixXd& Y, double theta,
                                 double exaggeration = 1.0);

double tsne_kl(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Y);
double tsne_kl(const SparseP& P, const Eigen::MatrixXd& Y);

struct TsneConfig {
    std::size_t dim = 2;
    double perplexity = 30.0;
    double learning_rate = 200.0;
    std::size_t iterations = 1000;
    std::uint64_t seed = 0;
    double exaggeration = 12.0;
    std::size_t exaggeration_iters = 250;
    double momentum_initial = 0.5;
    double momentum_final = 0.8;
    std::size_t momentum_switch = 250;
    // 0 selects the exact O(n^2) gradient; > 0 uses Barnes-Hut (dim 2 or 3 only).
    double theta = 0.5;
    bool adaptive_gains = true;
    std::size_t pca_dims = 0;  // 0 = no PCA pre-reduction
    std::size_t kl_every = 50;
};

struct TsneResult {
    Embedding embedding;
    std::vector<std::pair<std::size_t, double>> kl_history;  // (iteration, KL(P||Q))
};

TsneResult tsne_embed(const Tensor& X, const TsneConfig& cfg);

}  // namespace mg
