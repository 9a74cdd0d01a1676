#pragma once

#include <Eigen/Dense>

#include <string_view>

namespace trialloc::linalg {

inline constexpr double kSymmetryTolerance = 1e-10;

/// Largest |A - A^T| entry relative to the largest |A| entry.
double asymmetry(const Eigen::MatrixXd& a);

/// Returns (A + A^T)/2, throwing ValidationError when A is not square or its
/// relative asymmetry exceeds kSymmetryTolerance. `what` names the operand.
Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& a, std::string_view what);

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Inverse of a symmetric positive definite matrix via LLT. Throws
/// NumericalError naming `what` when the factorization fails.
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& a, std::string_view what);

/// tr(A B) without forming the product.
inline double trace_of_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.cwiseProduct(b.transpose()).sum();
}

}  // namespace trialloc::linalg
