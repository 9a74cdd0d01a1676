#include "trialloc/lmm.hpp"

#include "trialloc/error.hpp"
#include "trialloc/linalg.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace trialloc {

VarianceComponents VarianceComponents::from_separate(double sigma2_omega, double sigma2_tau,
                                                     double sigma2_gamma, double sigma2_phi,
                                                     double sigma2_error, int H, int L,
                                                     ModelVariant variant) {
    if (L < 1) throw ValidationError("L must be >= 1");
    VarianceComponents vc;
    vc.sigma2_omega = sigma2_omega;
    vc.sigma2_tau = sigma2_tau;
    vc.sigma2_gamma = sigma2_gamma;
    vc.sigma2_phi_plus_err_over_L = sigma2_phi + sigma2_error / L;
    vc.H = H;
    vc.L = L;
    vc.model_variant = variant;
    vc.validate();
    return vc;
}

void VarianceComponents::validate() const {
    if (!(sigma2_omega >= 0.0) || !(sigma2_gamma >= 0.0) || !(sigma2_phi_plus_err_over_L >= 0.0)) {
        throw ValidationError("variance components must be non-negative");
    }
    if (!(sigma2_tau > 0.0)) throw ValidationError("sigma2_tau must be positive");
    if (H < 1) throw ValidationError("H must be >= 1");
    if (L < 1) throw ValidationError("L must be >= 1");
}

double effective_error_constant(const VarianceComponents& vc) {
    if (vc.H < 1) throw ValidationError("H must be >= 1");
    double c = vc.sigma2_phi_plus_err_over_L / vc.H;
    // The nested model absorbs genotype x location into genotype x location x year.
    if (vc.model_variant == ModelVariant::CrossClassified) c += vc.sigma2_gamma;
    if (!(c > 0.0) || !std::isfinite(c)) {
        throw ValidationError("effective error constant must be positive (degenerate model)");
    }
    return c;
}

SubRegionProfile SubRegionProfile::make(const Eigen::MatrixXd& V, std::optional<Eigen::VectorXd> ell) {
    SubRegionProfile p;
    p.V = linalg::symmetrized(V, "V");
    p.ell = std::move(ell);
    p.validate();
    return p;
}

Eigen::VectorXd SubRegionProfile::ell_or_ones() const {
    return ell ? *ell : Eigen::VectorXd::Ones(P());
}

void SubRegionProfile::validate() const {
    if (V.rows() != V.cols()) throw ValidationError("V must be square");
    if (P() < 2) throw ValidationError("need at least two sub-regions (P >= 2)");
    if (linalg::asymmetry(V) > linalg::kSymmetryTolerance) throw ValidationError("V is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(V, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) throw ValidationError("V must be positive definite");
    if (ell) {
        if (ell->size() != P()) {
            throw ValidationError("ell has " + std::to_string(ell->size()) + " entries, expected P = " +
                                  std::to_string(P()));
        }
        if (!(ell->minCoeff() > 0.0)) throw ValidationError("sub-regional coefficients must be positive");
    }
}

Design Design::exact(std::vector<int> counts, std::optional<int> total) {
    if (counts.empty()) throw ValidationError("design has no sub-regions");
    long sum = 0;
    for (int c : counts) {
        if (c < 0) throw ValidationError("location counts must be non-negative");
        sum += c;
    }
    if (total && sum != *total) {
        throw ValidationError("design counts sum to " + std::to_string(sum) + " but J = " +
                              std::to_string(*total));
    }
    if (sum <= 0) throw ValidationError("design must contain at least one trial");
    Design d;
    d.kind_ = DesignKind::Exact;
    d.total_ = static_cast<double>(sum);
    d.weights_.resize(static_cast<Eigen::Index>(counts.size()));
    for (std::size_t i = 0; i < counts.size(); ++i) d.weights_[static_cast<Eigen::Index>(i)] = counts[i] / d.total_;
    d.counts_ = std::move(counts);
    return d;
}

Design Design::approximate(Eigen::VectorXd weights, double total) {
    if (weights.size() == 0) throw ValidationError("design has no sub-regions");
    if (!(total > 0.0)) throw ValidationError("J must be positive");
    if (!(weights.minCoeff() >= 0.0)) throw ValidationError("design weights must be non-negative");
    const double sum = weights.sum();
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("design weights sum to " + std::to_string(sum) + ", expected 1");
    }
    Design d;
    d.kind_ = DesignKind::Approximate;
    d.weights_ = weights / sum;
    d.total_ = total;
    return d;
}

Eigen::MatrixXd moment_matrix(const Design& d) {
    return d.weights().asDiagonal();
}

Eigen::MatrixXd centering_matrix(int K) {
    if (K < 2) throw ValidationError("centering matrix needs K >= 2");
    return Eigen::MatrixXd::Identity(K, K) - Eigen::MatrixXd::Constant(K, K, 1.0 / K);
}

Eigen::MatrixXd scaled_year_matrix(const VarianceComponents& vc, double J, int P) {
    const double c = effective_error_constant(vc);
    const double s = J / (c * vc.H);
    return s * (vc.sigma2_tau * Eigen::MatrixXd::Identity(P, P) +
                vc.sigma2_omega * Eigen::MatrixXd::Ones(P, P));
}

Eigen::MatrixXd ScaledGeneticCovariances::dense() const {
    return linalg::kron(N, V_tilde);
}

ScaledGeneticCovariances scaled_genetic_covariances(const VarianceComponents& vc, double J,
                                                    const SubRegionProfile& profile,
                                                    const Eigen::MatrixXd& kinship) {
    ScaledGeneticCovariances out;
    out.N = linalg::symmetrized(kinship, "kinship matrix");
    Eigen::LLT<Eigen::MatrixXd> llt(out.N);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("kinship matrix is not positive definite; enable jitter to regularize");
    }
    out.V_tilde = (J / effective_error_constant(vc)) * profile.V;
    return out;
}

}  // namespace trialloc
