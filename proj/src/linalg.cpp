#include "trialloc/linalg.hpp"

#include "trialloc/error.hpp"

#include <string>

namespace trialloc::linalg {

double asymmetry(const Eigen::MatrixXd& a) {
    const double scale = a.cwiseAbs().maxCoeff();
    if (scale == 0.0) return 0.0;
    return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& a, std::string_view what) {
    if (a.rows() != a.cols()) {
        throw ValidationError(std::string(what) + " must be square, got " + std::to_string(a.rows()) +
                              "x" + std::to_string(a.cols()));
    }
    if (asymmetry(a) > kSymmetryTolerance) {
        throw ValidationError(std::string(what) + " is not symmetric (relative asymmetry " +
                              std::to_string(asymmetry(a)) + ")");
    }
    return 0.5 * (a + a.transpose());
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& a, std::string_view what) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
        throw NumericalError(std::string(what) + " is not positive definite");
    }
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
    return 0.5 * (inv + inv.transpose());
}

}  // namespace trialloc::linalg
