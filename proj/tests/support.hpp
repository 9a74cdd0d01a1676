#pragma once

#include "trialloc/criteria.hpp"
#include "trialloc/kinship.hpp"
#include "trialloc/lmm.hpp"
#include "trialloc/oracle.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

namespace support {

using namespace trialloc;

inline Eigen::MatrixXd maize_V() {
    Eigen::MatrixXd V(5, 5);
    V << 567, 254, 239, 485, 328, 254, 155, 118, 240, 162, 239, 118, 155, 226, 153, 485, 240, 226, 488, 310, 328,
        162, 153, 310, 215;
    return V;
}

inline Eigen::VectorXd maize_ell() {
    Eigen::VectorXd ell(5);
    ell << 813685, 432716, 477365, 995298, 1174818;
    return ell;
}

inline VarianceComponents maize_vc(ModelVariant variant = ModelVariant::CrossClassified) {
    VarianceComponents vc;
    vc.sigma2_omega = 31;
    vc.sigma2_tau = 18;
    vc.sigma2_gamma = variant == ModelVariant::CrossClassified ? 160 : 0;
    vc.sigma2_phi_plus_err_over_L = variant == ModelVariant::CrossClassified ? 333 : 493;
    vc.H = 3;
    vc.model_variant = variant;
    return vc;
}

inline SubRegionProfile maize_profile() { return SubRegionProfile::make(maize_V(), maize_ell()); }

inline KinshipSpec blockcs_kinship(int f, int m, double r) {
    return KinshipSpec{BlockCompoundSymmetryKinship{f, m, sigma2_alpha_for_unit_asv(f * m, m, r), r}, 0.0};
}

inline DesignProblem maize_problem(KinshipSpec kin, double J, CriterionSpec spec = {}) {
    return DesignProblem{maize_vc(), maize_profile(), std::move(kin), J, spec};
}

struct Rng {
    std::mt19937_64 gen;
    explicit Rng(std::uint64_t seed) : gen(seed) {}
    double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen); }
    int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(gen); }
};

inline Eigen::MatrixXd random_spd(Rng& rng, int n, double scale = 1.0) {
    Eigen::MatrixXd A(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = rng.uniform(-1.0, 1.0);
    Eigen::MatrixXd S = A * A.transpose() + 0.5 * n * Eigen::MatrixXd::Identity(n, n);
    return scale * S;
}

inline VarianceComponents random_vc(Rng& rng) {
    VarianceComponents vc;
    vc.sigma2_omega = rng.uniform(0.0, 2.0);
    vc.sigma2_tau = rng.uniform(0.2, 2.0);
    vc.sigma2_gamma = rng.uniform(0.0, 2.0);
    vc.sigma2_phi_plus_err_over_L = rng.uniform(0.5, 4.0);
    vc.H = rng.integer(1, 4);
    vc.model_variant = rng.integer(0, 1) ? ModelVariant::Nested : ModelVariant::CrossClassified;
    return vc;
}

inline Eigen::VectorXd random_ell(Rng& rng, int P) {
    Eigen::VectorXd ell(P);
    for (int i = 0; i < P; ++i) ell[i] = rng.uniform(0.2, 3.0);
    return ell;
}

inline Eigen::VectorXd random_interior_weights(Rng& rng, int P) {
    Eigen::VectorXd w(P);
    for (int i = 0; i < P; ++i) w[i] = rng.uniform(0.05, 1.0);
    return w / w.sum();
}

inline std::vector<int> random_counts(Rng& rng, int P, int J) {
    std::vector<int> c(static_cast<std::size_t>(P), 1);
    for (int n = P; n < J; ++n) ++c[static_cast<std::size_t>(rng.integer(0, P - 1))];
    return c;
}

inline KinshipSpec random_cs(Rng& rng, int K) {
    return KinshipSpec{CompoundSymmetryKinship{K, rng.uniform(0.5, 2.0), rng.uniform(0.0, 0.9)}, 0.0};
}

inline KinshipSpec random_block_cs(Rng& rng, int f, int m) {
    return KinshipSpec{BlockCompoundSymmetryKinship{f, m, rng.uniform(0.5, 2.0), rng.uniform(0.0, 0.9)}, 0.0};
}

inline KinshipSpec random_dense(Rng& rng, int K) { return KinshipSpec{DenseKinship{random_spd(rng, K, 1.0 / K)}, 0.0}; }

inline Eigen::MatrixXd weight_matrix(const SubRegionProfile& p, Weighting w) {
    return w == Weighting::Weighted ? Eigen::MatrixXd(p.ell_or_ones().asDiagonal())
                                    : Eigen::MatrixXd::Identity(p.P(), p.P());
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace support
