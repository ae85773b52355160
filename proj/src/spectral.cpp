#include "mg/spectral.hpp"

#include <cmath>
#include <string>

#include "mg/error.hpp"

namespace mg {

namespace {

void fix_sign(Eigen::MatrixXd& V) {
    for (Eigen::Index j = 0; j < V.cols(); ++j) {
        Eigen::Index arg = 0;
        double best = -1;
        for (Eigen::Index i = 0; i < V.rows(); ++i)
            if (std::abs(V(i, j)) > best + 1e-12 * best) {
                best = std::abs(V(i, j));
                arg = i;
            }
        if (V(arg, j) < 0) V.col(j) = -V.col(j);
    }
}

void check_square(const Eigen::MatrixXd& A, std::size_t m, const char* who) {
    if (A.rows() != A.cols())
        throw ParameterError(std::string(who) + ": matrix must be square");
    if (m < 1 || m > static_cast<std::size_t>(A.rows()))
        throw ParameterError(std::string(who) + ": need 1 <= m <= n (m=" + std::to_string(m) + ")");
}

}  // namespace

EigenResult sym_eigen(const Eigen::MatrixXd& A, Which which, std::size_t m, double tol) {
    check_square(A, m, "sym_eigen");
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-6 * scale)
        throw ParameterError("sym_eigen: matrix is not symmetric within 1e-6");
    const Eigen::MatrixXd S = 0.5 * (A + A.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(S, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success)
        throw ConvergenceError("sym_eigen: eigensolver did not converge", std::numeric_limits<double>::infinity());

    const auto n = S.rows();
    const auto cnt = static_cast<Eigen::Index>(m);
    const Eigen::Index first = which == Which::Smallest ? 0 : n - cnt;
    EigenResult r{solver.eigenvalues().segment(first, cnt), solver.eigenvectors().middleCols(first, cnt)};
    fix_sign(r.vectors);

    const double norm = S.norm();
    double worst = 0;
    for (Eigen::Index j = 0; j < cnt; ++j)
        worst = std::max(worst, (S * r.vectors.col(j) - r.values[j] * r.vectors.col(j)).norm());
    if (worst > tol * std::max(norm, 1e-300) && norm > 0)
        throw ConvergenceError("sym_eigen: residual " + std::to_string(worst) + " exceeds tolerance", worst);
    return r;
}

EigenResult generalized_sym_eigen(const Eigen::MatrixXd& A, const Eigen::VectorXd& b_diag, Which which,
                                  std::size_t m, double tol) {
    check_square(A, m, "generalized_sym_eigen");
    if (b_diag.size() != A.rows()) throw ParameterError("generalized_sym_eigen: B diagonal has wrong length");
    for (Eigen::Index i = 0; i < b_diag.size(); ++i)
        if (!(b_diag[i] > 0))
            throw ParameterError("generalized_sym_eigen: B diagonal entry " + std::to_string(i) +
                                 " is not positive (isolated node?)");
    const Eigen::VectorXd inv_sqrt = b_diag.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd At = inv_sqrt.asDiagonal() * (0.5 * (A + A.transpose())) * inv_sqrt.asDiagonal();
    EigenResult r = sym_eigen(At, which, m, tol);
    r.vectors = inv_sqrt.asDiagonal() * r.vectors;
    fix_sign(r.vectors);
    return r;
}

Eigen::MatrixXd double_center(const Eigen::MatrixXd& D2) {
    if (D2.rows() != D2.cols()) throw ParameterError("double_center: matrix must be square");
    const Eigen::Index n = D2.rows();
    if (n == 0) return D2;
    const Eigen::VectorXd row_mean = D2.rowwise().mean();
    const Eigen::RowVectorXd col_mean = D2.colwise().mean();
    const double grand = row_mean.mean();
    Eigen::MatrixXd B(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            B(i, j) = -0.5 * (D2(i, j) - row_mean[i] - col_mean[j] + grand);
    return 0.5 * (B + B.transpose());
}

MdsResult classical_mds(const Eigen::MatrixXd& D2, std::size_t d) {
    const Eigen::MatrixXd B = double_center(D2);
    const EigenResult top = sym_eigen(B, Which::Largest, d);
    const auto n = B.rows();
    const auto cnt = static_cast<Eigen::Index>(d);
    MdsResult out{Eigen::MatrixXd(n, cnt), Eigen::VectorXd(cnt), 0.0};
    for (Eigen::Index j = 0; j < cnt; ++j) {
        const Eigen::Index src = cnt - 1 - j;  // descending
        const double lambda = top.values[src];
        out.eigenvalues[j] = lambda;
        if (lambda < 0) out.clipped_mass += -lambda;
        out.coords.col(j) = top.vectors.col(src) * std::sqrt(std::max(lambda, 0.0));
    }
    return out;
}

}  // namespace mg
