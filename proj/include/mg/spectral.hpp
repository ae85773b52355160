#pragma once

#include <Eigen/Dense>
#include <cstddef>

namespace mg {

enum class Which { Smallest, Largest };

// Selected eigenpairs, values ascending; column j of vectors pairs with values[j].
// Each vector's largest-magnitude component is positive.
struct EigenResult {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
};

constexpr double kEigenTol = 1e-8;

// m extreme eigenpairs of a symmetric matrix. The input is symmetrized as
// (A + A^T) / 2; residuals ||A v - lambda v|| are verified against
// tol * ||A||_F and a ConvergenceError is raised otherwise.
EigenResult sym_eigen(const Eigen::MatrixXd& A, Which which, std::size_t m, double tol = kEigenTol);

// Solves A v = lambda B v for diagonal positive B through the congruence
// B^{-1/2} A B^{-1/2}. Returned vectors are B-orthonormal.
EigenResult generalized_sym_eigen(const Eigen::MatrixXd& A, const Eigen::VectorXd& b_diag, Which which,
                                  std::size_t m, double tol = kEigenTol);

// B = -1/2 J D2 J with J = I - 11^T / n.
Eigen::MatrixXd double_center(const Eigen::MatrixXd& D2);

struct MdsResult {
    Eigen::MatrixXd coords;      // [n, d], leading component first
    Eigen::VectorXd eigenvalues; // descending, before clipping
    double clipped_mass = 0;     // sum of |lambda| clipped to zero among the kept components
};

// Classical MDS from squared distances: top-d eigenpairs of the
// double-centered matrix, coordinates V * sqrt(max(lambda, 0)).
MdsResult classical_mds(const Eigen::MatrixXd& D2, std::size_t d);

}  // namespace mg
