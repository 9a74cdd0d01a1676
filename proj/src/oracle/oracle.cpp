#include "trialloc/oracle.hpp"

#include "trialloc/error.hpp"

#include <limits>
#include <numeric>
#include <string>
#include <variant>

namespace trialloc::oracle {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
    MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

MatrixXd ones(Eigen::Index n) { return MatrixXd::Ones(n, n); }

MatrixXd inv(const MatrixXd& a) { return a.fullPivLu().inverse(); }

double error_constant(const VarianceComponents& vc) {
    const double nested_part = vc.sigma2_phi_plus_err_over_L / vc.H;
    return vc.model_variant == ModelVariant::Nested ? nested_part : vc.sigma2_gamma + nested_part;
}

MatrixXd centering(int K) { return MatrixXd::Identity(K, K) - ones(K) / K; }

void guard(const Instance& inst) {
    if (inst.K() > kMaxK || inst.P() > kMaxP) {
        throw ValidationError("oracle instance too large (K <= 12, P <= 6)");
    }
}

MatrixXd incidence(const std::vector<int>& counts) {
    const int J = std::accumulate(counts.begin(), counts.end(), 0);
    MatrixXd F = MatrixXd::Zero(J, static_cast<Eigen::Index>(counts.size()));
    int row = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] < 1) throw ValidationError("oracle designs need J_i >= 1");
        for (int j = 0; j < counts[i]; ++j) F(row++, static_cast<Eigen::Index>(i)) = 1.0;
    }
    return F;
}

// Quantities on the approximate-design scale.
struct Scaled {
    double c;
    double J;
    MatrixXd R;  // R~
    MatrixXd V;  // V~
    MatrixXd N;
    MatrixXd U;  // U~
    MatrixXd T;
};

Scaled scaled(const Instance& inst) {
    Scaled s;
    s.c = error_constant(inst.vc);
    s.J = inst.J();
    const int P = inst.P();
    s.R = s.J / (s.c * inst.vc.H) * (inst.vc.sigma2_tau * MatrixXd::Identity(P, P) + inst.vc.sigma2_omega * ones(P));
    s.V = s.J / s.c * inst.V;
    s.N = kinship_matrix(inst.kinship);
    s.U = kron(s.N, s.V);
    s.T = centering(inst.K());
    return s;
}

MatrixXd weight_operand(const Scaled& s, const MatrixXd& L, Target target) {
    const int K = static_cast<int>(s.N.rows());
    return kron(target == Target::GenotypeEffects ? MatrixXd::Identity(K, K) : s.T, L);
}

MatrixXd big_B(const Scaled& s) {
    const auto K = s.N.rows();
    const auto P = s.V.rows();
    const MatrixXd TI = kron(s.T, MatrixXd::Identity(P, P));
    const MatrixXd W = kron(MatrixXd::Identity(K, K), s.R) + TI * s.U * TI;
    return inv(W);
}

}  // namespace

int Instance::K() const { return kinship.K(); }

int Instance::J() const { return std::accumulate(counts.begin(), counts.end(), 0); }

VectorXd Instance::weights() const {
    VectorXd w(P());
    for (int i = 0; i < P(); ++i) w[i] = static_cast<double>(counts[static_cast<std::size_t>(i)]) / J();
    return w;
}

MatrixXd kinship_matrix(const KinshipSpec& spec) {
    MatrixXd N;
    if (const auto* k = std::get_if<IdentityKinship>(&spec.variant)) {
        N = MatrixXd::Identity(k->K, k->K);
    } else if (const auto* k = std::get_if<CompoundSymmetryKinship>(&spec.variant)) {
        const double s = k->sigma2_alpha;
        N = MatrixXd::Constant(k->K, k->K, s * k->r);
        N.diagonal().setConstant(s);
    } else if (const auto* k = std::get_if<BlockCompoundSymmetryKinship>(&spec.variant)) {
        const double s = k->sigma2_alpha;
        N = MatrixXd::Zero(k->K(), k->K());
        for (int g = 0; g < k->f; ++g) N.block(g * k->m, g * k->m, k->m, k->m).setConstant(s * k->r);
        N.diagonal().setConstant(s);
    } else {
        N = std::get<DenseKinship>(spec.variant).matrix;
    }
    N.diagonal().array() += spec.jitter;
    return N;
}

MatrixXd contrast_matrix(int K) {
    MatrixXd C = MatrixXd::Zero(K * (K - 1) / 2, K);
    int row = 0;
    for (int s = 1; s < K; ++s)
        for (int k = 0; k + s < K; ++k, ++row) {
            C(row, k) = 1.0;
            C(row, k + s) = -1.0;
        }
    return C;
}

MatrixXd mse_direct(const Instance& inst) {
    guard(inst);
    const int P = inst.P();
    const double c = error_constant(inst.vc);
    const double H = inst.vc.H;
    const MatrixXd F = incidence(inst.counts);
    const MatrixXd FtF = F.transpose() * F;
    const MatrixXd R = inst.vc.sigma2_tau / (c * H) * MatrixXd::Identity(P, P) + inst.vc.sigma2_omega / (c * H) * ones(P);
    const MatrixXd U = kron(kinship_matrix(inst.kinship), inst.V);
    const MatrixXd T = centering(inst.K());
    return inv(kron(T, inv(inv(FtF) + R)) / c + inv(U));
}

MatrixXd mse_pre_woodbury(const Instance& inst) {
    guard(inst);
    const double c = error_constant(inst.vc);
    const double H = inst.vc.H;
    const MatrixXd F = incidence(inst.counts);
    const auto J = F.rows();
    const MatrixXd W2 = inst.vc.sigma2_omega * ones(J) + inst.vc.sigma2_tau * F * F.transpose() +
                        c * H * MatrixXd::Identity(J, J);
    const MatrixXd U = kron(kinship_matrix(inst.kinship), inst.V);
    const MatrixXd T = centering(inst.K());
    return inv(kron(T, H * F.transpose() * inv(W2) * F) + inv(U));
}

MatrixXd mse_contrasts_direct(const Instance& inst) {
    const MatrixXd CI = kron(contrast_matrix(inst.K()), MatrixXd::Identity(inst.P(), inst.P()));
    return CI * mse_direct(inst) * CI.transpose();
}

double trace_form_phi(const Instance& inst, Target target, const VectorXd& w) {
    guard(inst);
    const Scaled s = scaled(inst);
    const auto K = s.N.rows();
    const auto P = s.V.rows();
    const MatrixXd TI = kron(s.T, MatrixXd::Identity(P, P));
    const MatrixXd B = big_B(s);
    const MatrixXd X = weight_operand(s, inst.L, target);
    const MatrixXd G = B * TI * s.U * X * s.U * TI * B;
    const MatrixXd A = kron(MatrixXd::Identity(K, K), MatrixXd(w.asDiagonal())) + B;
    return (inv(A) * G).trace();
}

double reduction_constant(const Instance& inst, Constant which) {
    guard(inst);
    const Scaled s = scaled(inst);
    const auto K = s.N.rows();
    const auto P = s.V.rows();
    const MatrixXd& L = inst.L;

    if (which == Constant::EffectsOffset || which == Constant::ContrastsOffset) {
        const MatrixXd TI = kron(s.T, MatrixXd::Identity(P, P));
        const MatrixXd C1 = s.U - s.U * TI * big_B(s) * TI * s.U;
        const Target t = which == Constant::EffectsOffset ? Target::GenotypeEffects : Target::PairwiseContrasts;
        return (C1 * weight_operand(s, L, t)).trace();
    }

    if (which == Constant::CsEffects || which == Constant::CsContrasts) {
        double a = 0.0, a1 = 0.0;
        if (std::holds_alternative<IdentityKinship>(inst.kinship.variant)) {
            a1 = 1.0;
        } else if (const auto* k = std::get_if<CompoundSymmetryKinship>(&inst.kinship.variant)) {
            a = k->sigma2_alpha * k->r;
            a1 = k->sigma2_alpha * (1.0 - k->r);
        } else {
            throw ValidationError("compound-symmetry constants need identity or compound-symmetry kinship");
        }
        a1 += inst.kinship.jitter;
        const MatrixXd S = s.R + a1 * s.V;
        const double const1 = a1 * (K - 1) * ((s.V - a1 * s.V * inv(S) * s.V) * L).trace();
        if (which == Constant::CsContrasts) return const1;
        const double u = a * K / (a * K + a1);
        const MatrixXd C = kron(ones(K) / K, a1 / (1.0 - u) * s.V);
        return const1 + (C * kron(MatrixXd::Identity(K, K), L)).trace();
    }

    const auto* k = std::get_if<BlockCompoundSymmetryKinship>(&inst.kinship.variant);
    if (!k) throw ValidationError("block compound-symmetry constants need block compound-symmetry kinship");
    const double b = k->sigma2_alpha * k->r;
    const double b1 = k->sigma2_alpha * (1.0 - k->r) + inst.kinship.jitter;
    const MatrixXd V1 = b1 * s.V;
    const MatrixXd V2 = (k->m * b + b1) * s.V;
    const MatrixXd S1 = s.R + V1;
    const MatrixXd S2 = s.R + V2;
    const double const3 = k->f * (k->m - 1) * ((V1 - V1 * inv(S1) * V1) * L).trace() +
                          (k->f - 1) * ((V2 - V2 * inv(S2) * V2) * L).trace();
    if (which == Constant::BlockCsContrasts) return const3;
    return const3 + (V2 * L).trace();
}

VectorXd finite_difference_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& w, double step) {
    VectorXd g(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        VectorXd hi = w, lo = w;
        hi[i] += step;
        lo[i] -= step;
        g[i] = (f(hi) - f(lo)) / (2.0 * step);
    }
    return g;
}

void for_each_feasible(const ConstraintSet& constraints, int P, const std::function<void(const std::vector<int>&)>& visit) {
    constraints.validate(P);
    std::vector<int> counts(static_cast<std::size_t>(P), 0);
    std::function<void(int, int)> rec = [&](int i, int remaining) {
        const auto k = static_cast<std::size_t>(i);
        if (i == P - 1) {
            counts[k] = remaining;
            if (constraints.admits(counts)) visit(counts);
            return;
        }
        for (int n = constraints.min_per_region[k]; n <= std::min(remaining, constraints.upper(i)); ++n) {
            counts[k] = n;
            rec(i + 1, remaining - n);
        }
    };
    rec(0, constraints.J);
}

std::uint64_t count_feasible(const ConstraintSet& constraints, int P) {
    std::uint64_t n = 0;
    for_each_feasible(constraints, P, [&](const std::vector<int>&) { ++n; });
    return n;
}

Design enumerate_exact_optimum(const CriterionEvaluator& criterion, const ConstraintSet& constraints) {
    const int P = criterion.P();
    const std::uint64_t n = count_feasible(constraints, P);
    if (n > kMaxEnumeration) {
        throw ValidationError("enumeration would visit " + std::to_string(n) + " designs (limit 100000)");
    }
    if (n == 0) throw InfeasibleError("no integer design satisfies the constraints");
    std::vector<int> best;
    double best_phi = std::numeric_limits<double>::infinity();
    for_each_feasible(constraints, P, [&](const std::vector<int>& counts) {
        VectorXd w(P);
        for (int i = 0; i < P; ++i) w[i] = static_cast<double>(counts[static_cast<std::size_t>(i)]) / constraints.J;
        const double phi = criterion.phi(w);
        if (phi < best_phi) {  // visiting order is lexicographic, so ties keep the smallest
            best_phi = phi;
            best = counts;
        }
    });
    return Design::exact(best, constraints.J);
}

}  // namespace trialloc::oracle
