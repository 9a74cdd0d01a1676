#include "trialloc/criteria.hpp"

#include "trialloc/error.hpp"
#include "trialloc/linalg.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <variant>

namespace trialloc {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

constexpr int kMaxDenseKP = 10000;
constexpr int kMaxDenseContrastK = 12;

// Compound-symmetry parameters after folding in jitter and the trivial
// block-CS cases.
struct CsParams {
    int K = 0;
    double a = 0.0;
    double a1 = 0.0;
};

struct BlockCsParams {
    int f = 0;
    int m = 0;
    double b = 0.0;
    double b1 = 0.0;
};

std::optional<CsParams> as_compound_symmetry(const KinshipSpec& spec) {
    return std::visit(
        overloaded{
            [&](const IdentityKinship& k) -> std::optional<CsParams> {
                return CsParams{k.K, 0.0, 1.0 + spec.jitter};
            },
            [&](const CompoundSymmetryKinship& k) -> std::optional<CsParams> {
                return CsParams{k.K, k.a(), k.a1() + spec.jitter};
            },
            [&](const BlockCompoundSymmetryKinship& k) -> std::optional<CsParams> {
                if (k.f == 1) return CsParams{k.m, k.b(), k.b1() + spec.jitter};
                if (k.m == 1) return CsParams{k.f, 0.0, k.sigma2_alpha + spec.jitter};
                return std::nullopt;
            },
            [](const DenseKinship&) -> std::optional<CsParams> { return std::nullopt; },
        },
        spec.variant);
}

std::optional<BlockCsParams> as_block_cs(const KinshipSpec& spec) {
    if (const auto* k = std::get_if<BlockCompoundSymmetryKinship>(&spec.variant)) {
        if (k->f > 1 && k->m > 1) return BlockCsParams{k->f, k->m, k->b(), k->b1() + spec.jitter};
    }
    return std::nullopt;
}

Eigen::MatrixXd block_diag(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows() + b.rows(), a.cols() + b.cols());
    out.topLeftCorner(a.rows(), a.cols()) = a;
    out.bottomRightCorner(b.rows(), b.cols()) = b;
    return out;
}

}  // namespace

std::string_view to_string(Target t) {
    return t == Target::GenotypeEffects ? "effects" : "contrasts";
}

std::string_view to_string(Weighting w) {
    return w == Weighting::Standard ? "standard" : "weighted";
}

std::string_view to_string(CriterionPath p) {
    switch (p) {
        case CriterionPath::FullGeneral: return "full";
        case CriterionPath::BayesCS: return "bayes_cs";
        case CriterionPath::CbrcBlockCS: return "cbrc_block_cs";
        case CriterionPath::KBayesBlockCS: return "kbayes_block_cs";
        case CriterionPath::Auto: return "auto";
    }
    return "unknown";
}

CriterionPath resolve_path(const KinshipSpec& kinship, CriterionPath requested) {
    const bool cs = as_compound_symmetry(kinship).has_value();
    const bool block = as_block_cs(kinship).has_value();
    switch (requested) {
        case CriterionPath::Auto:
            if (cs) return CriterionPath::BayesCS;
            if (block) return CriterionPath::CbrcBlockCS;
            return CriterionPath::FullGeneral;
        case CriterionPath::BayesCS:
            if (!cs) throw ValidationError("the Bayesian CS path needs identity or compound-symmetry kinship");
            return requested;
        case CriterionPath::CbrcBlockCS:
        case CriterionPath::KBayesBlockCS:
            if (!block) {
                throw ValidationError(
                    "block-CS paths need block-CS kinship with f > 1 and m > 1; "
                    "trivial block structures reduce to the Bayesian CS path");
            }
            return requested;
        case CriterionPath::FullGeneral:
            return requested;
    }
    return requested;
}

CriterionEvaluator::CriterionEvaluator(DesignProblem problem) : problem_(std::move(problem)) {
    problem_.vc.validate();
    problem_.profile.validate();
    problem_.kinship.validate();
    if (!(problem_.J > 0.0)) throw ValidationError("J must be positive");
    if (problem_.criterion.weighting == Weighting::Weighted && !problem_.profile.ell) {
        throw ValidationError("weighted criterion requires sub-regional coefficients (ell)");
    }
    path_ = resolve_path(problem_.kinship, problem_.criterion.path);

    const double c = effective_error_constant(problem_.vc);
    output_scale_ = c / problem_.J;
    if (problem_.criterion.target == Target::PairwiseContrasts) output_scale_ *= problem_.kinship.K();

    weighted_ = build_form(problem_.criterion.weighting);
    if (problem_.criterion.weighting == Weighting::Weighted) standard_ = build_form(Weighting::Standard);
}

CriterionEvaluator::Form CriterionEvaluator::build_form(Weighting weighting) const {
    const auto& vc = problem_.vc;
    const int P = problem_.profile.P();
    const double J = problem_.J;
    const bool effects = problem_.criterion.target == Target::GenotypeEffects;

    const Eigen::MatrixXd R = scaled_year_matrix(vc, J, P);
    const Eigen::MatrixXd V = (J / effective_error_constant(vc)) * problem_.profile.V;
    const Eigen::VectorXd ell =
        weighting == Weighting::Weighted ? problem_.profile.ell_or_ones() : Eigen::VectorXd::Ones(P);
    const Eigen::MatrixXd VLV = V * ell.asDiagonal() * V;
    const double trVL = (V.diagonal().array() * ell.array()).sum();

    Form form;
    switch (path_) {
        case CriterionPath::BayesCS: {
            const CsParams cs = *as_compound_symmetry(problem_.kinship);
            const Eigen::MatrixXd S_inv = linalg::spd_inverse(R + cs.a1 * V, "S = R~ + a1 V~");
            CriterionBlock block{1, S_inv, S_inv * VLV * S_inv};
            form.scale = cs.a1 * cs.a1 * (cs.K - 1);
            // tr(U~ X) - tr[B (T (x) I) U~ X U~ (T (x) I)], specialized to N = a1 I + a 1 1^T.
            const double tr_NX = effects ? cs.K * (cs.a1 + cs.a) : (cs.K - 1) * cs.a1;
            form.offset = tr_NX * trVL - form.scale * linalg::trace_of_product(S_inv, VLV);
            form.blocks.push_back(std::move(block));
            break;
        }
        case CriterionPath::CbrcBlockCS:
        case CriterionPath::KBayesBlockCS: {
            const BlockCsParams bcs = *as_block_cs(problem_.kinship);
            const double lambda1 = bcs.b1;
            const double lambda2 = bcs.m * bcs.b + bcs.b1;
            const double mult1 = static_cast<double>(bcs.f) * (bcs.m - 1);
            const double mult2 = static_cast<double>(bcs.f - 1);
            const Eigen::MatrixXd V1 = lambda1 * V;
            const Eigen::MatrixXd V2 = lambda2 * V;
            const Eigen::MatrixXd S1_inv = linalg::spd_inverse(R + V1, "S1 = R~ + V1");
            const Eigen::MatrixXd S2_inv = linalg::spd_inverse(R + V2, "S2 = R~ + V2");
            const Eigen::MatrixXd L = ell.asDiagonal();
            Eigen::MatrixXd Q1 = mult1 * S1_inv * V1 * L * V1 * S1_inv;
            Eigen::MatrixXd Q2 = mult2 * S2_inv * V2 * L * V2 * S2_inv;
            if (path_ == CriterionPath::CbrcBlockCS) {
                form.blocks.push_back({1, S1_inv, Q1});
                form.blocks.push_back({1, S2_inv, Q2});
            } else {
                Eigen::MatrixXd S_tilde_inv = block_diag(S1_inv, S2_inv);
                form.blocks.push_back({2, std::move(S_tilde_inv), block_diag(Q1, Q2)});
            }
            const double K = static_cast<double>(bcs.f) * bcs.m;
            const double tr_NX = effects ? K * (bcs.b1 + bcs.b) : mult1 * lambda1 + mult2 * lambda2;
            form.offset = tr_NX * trVL - mult1 * lambda1 * lambda1 * linalg::trace_of_product(S1_inv, VLV) -
                          mult2 * lambda2 * lambda2 * linalg::trace_of_product(S2_inv, VLV);
            break;
        }
        case CriterionPath::FullGeneral: {
            const Eigen::MatrixXd N = materialize(problem_.kinship);
            const int K = static_cast<int>(N.rows());
            if (Eigen::LLT<Eigen::MatrixXd>(N).info() != Eigen::Success) {
                throw NumericalError("kinship matrix is not positive definite; a jitter of at least " +
                                     std::to_string(validate_pd(N).suggested_jitter) + " regularizes it");
            }
            const Eigen::MatrixXd T = centering_matrix(K);
            // W = I (x) R~ + (T N T) (x) V~ is block diagonal in the eigenbasis of T N T,
            // and I (x) M(xi) is invariant under that change of basis.
            Eigen::MatrixXd TNT = T * N * T;
            TNT = 0.5 * (TNT + TNT.transpose());
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(TNT);
            if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of T N T failed");
            const Eigen::VectorXd lambda = eig.eigenvalues();
            const double tol = 1e-10 * std::max(1.0, lambda.cwiseAbs().maxCoeff());
            if (lambda.minCoeff() < -tol) throw NumericalError("T N T has a negative eigenvalue");
            // Diagonal of Q^T (T N^2 T) Q for effects; T N T N T = Q Lambda^2 Q^T for contrasts.
            const Eigen::MatrixXd NTQ = N * (T * eig.eigenvectors());
            form.blocks.reserve(static_cast<std::size_t>(K));
            double tr_BY = 0.0;
            for (int k = 0; k < K; ++k) {
                const double lam = std::max(0.0, lambda[k]);
                const double h = effects ? NTQ.col(k).squaredNorm() : lam * lam;
                Eigen::MatrixXd B = linalg::spd_inverse(R + lam * V, "R~ + lambda V~");
                tr_BY += h * linalg::trace_of_product(B, VLV);
                Eigen::MatrixXd G = h * (B * VLV * B);
                form.blocks.push_back({1, std::move(B), std::move(G)});
            }
            const double tr_NX = effects ? N.trace() : N.trace() - N.sum() / K;
            form.scale = 1.0;
            form.offset = tr_NX * trVL - tr_BY;
            break;
        }
        case CriterionPath::Auto:
            throw std::logic_error("unresolved criterion path");
    }
    for (auto& b : form.blocks) {
        b.B = 0.5 * (b.B + b.B.transpose());
        b.G = 0.5 * (b.G + b.G.transpose());
    }
    return form;
}

void CriterionEvaluator::check_weights(const Eigen::VectorXd& w) const {
    if (w.size() != P()) {
        throw ValidationError("design has " + std::to_string(w.size()) + " sub-regions, expected P = " +
                              std::to_string(P()));
    }
    if (!w.allFinite() || w.minCoeff() < -1e-12) throw ValidationError("design weights must be finite and non-negative");
}

double CriterionEvaluator::eval_form(const Form& form, const Eigen::VectorXd& w, Eigen::VectorXd* gradient) const {
    check_weights(w);
    const int P = this->P();
    if (gradient) gradient->setZero(P);
    double phi = 0.0;
    for (const auto& block : form.blocks) {
        Eigen::MatrixXd A = block.B;
        for (int q = 0; q < block.replicas; ++q) A.diagonal().segment(q * P, P) += w;
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() != Eigen::Success) throw NumericalError("information matrix is not positive definite");
        const Eigen::MatrixXd X = llt.solve(block.G);  // A^{-1} G
        phi += X.trace();
        if (gradient) {
            // d/dw_i tr(A^{-1} G) = -tr(A^{-1} E_i A^{-1} G), E_i = I_r (x) e_i e_i^T
            const Eigen::MatrixXd Y = llt.solve(X.transpose());  // A^{-1} G A^{-1}
            for (int q = 0; q < block.replicas; ++q) *gradient -= Y.diagonal().segment(q * P, P);
        }
    }
    return phi;
}

double CriterionEvaluator::phi(const Eigen::VectorXd& w) const {
    return eval_form(weighted_, w, nullptr);
}

double CriterionEvaluator::phi(const Eigen::VectorXd& w, Eigen::VectorXd& gradient) const {
    return eval_form(weighted_, w, &gradient);
}

double CriterionEvaluator::full_value_from_phi(double phi) const {
    return output_scale_ * (weighted_.scale * phi + weighted_.offset);
}

double CriterionEvaluator::full_value(const Eigen::VectorXd& w) const {
    return full_value_from_phi(phi(w));
}

double CriterionEvaluator::mse_trace(const Eigen::VectorXd& w) const {
    const Form& form = standard_ ? *standard_ : weighted_;
    return output_scale_ * (form.scale * eval_form(form, w, nullptr) + form.offset);
}

CriterionValue CriterionEvaluator::evaluate(const Eigen::VectorXd& w, bool with_gradient) const {
    CriterionValue v;
    v.path_used = path_;
    if (with_gradient) {
        Eigen::VectorXd g;
        v.phi = phi(w, g);
        v.gradient = std::move(g);
    } else {
        v.phi = phi(w);
    }
    v.full_value = full_value_from_phi(v.phi);
    v.mse_trace = standard_ ? mse_trace(w) : v.full_value;
    return v;
}

CriterionValue CriterionEvaluator::evaluate(const Design& d, bool with_gradient) const {
    if (std::abs(d.total() - problem_.J) > 1e-9 * problem_.J) {
        throw ValidationError("design has J = " + std::to_string(d.total()) + " but the problem has J = " +
                              std::to_string(problem_.J));
    }
    return evaluate(d.weights(), with_gradient);
}

int CriterionEvaluator::working_dimension() const {
    int dim = 0;
    for (const auto& b : weighted_.blocks) dim = std::max(dim, static_cast<int>(b.B.rows()));
    return dim;
}

Eigen::MatrixXd contrast_matrix(int K) {
    if (K < 2) throw ValidationError("contrasts need K >= 2");
    const int n = K * (K - 1) / 2;
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, K);
    int row = 0;
    for (int s = 0; s < K - 1; ++s) {
        for (int k = s + 1; k < K; ++k, ++row) {
            C(row, s) = 1.0;
            C(row, k) = -1.0;
        }
    }
    return C;
}

Eigen::MatrixXd mse_effects_full(const Design& d, const VarianceComponents& vc, const SubRegionProfile& profile,
                                 const KinshipSpec& kinship) {
    const int P = profile.P();
    const int K = kinship.K();
    if (d.P() != P) throw ValidationError("design dimension does not match P");
    if (static_cast<long>(K) * P > kMaxDenseKP) {
        throw ValidationError("K P = " + std::to_string(static_cast<long>(K) * P) +
                              " exceeds the dense MSE guard (10000); use a structured criterion path");
    }
    const Eigen::VectorXd& w = d.weights();
    if (!(w.minCoeff() > 0.0)) {
        throw ValidationError("the dense MSE needs M(xi)^{-1}; a zero weight requires the criterion forms instead");
    }
    const double J = d.total();
    const Eigen::MatrixXd R = scaled_year_matrix(vc, J, P);
    const auto cov = scaled_genetic_covariances(vc, J, profile, materialize(kinship));
    const Eigen::MatrixXd year_block =
        linalg::spd_inverse(Eigen::MatrixXd(w.cwiseInverse().asDiagonal()) + R, "M^{-1} + R~");
    const Eigen::MatrixXd U_inv =
        linalg::kron(linalg::spd_inverse(cov.N, "N"), linalg::spd_inverse(cov.V_tilde, "V~"));
    const Eigen::MatrixXd info = linalg::kron(centering_matrix(K), year_block) + U_inv;
    return linalg::spd_inverse(0.5 * (info + info.transpose()), "MSE information matrix");
}

Eigen::MatrixXd mse_contrasts_full(const Design& d, const VarianceComponents& vc, const SubRegionProfile& profile,
                                   const KinshipSpec& kinship) {
    const int K = kinship.K();
    if (K > kMaxDenseContrastK) {
        throw ValidationError("dense contrast MSE is limited to K <= 12, got K = " + std::to_string(K));
    }
    const Eigen::MatrixXd CI = linalg::kron(contrast_matrix(K), Eigen::MatrixXd::Identity(profile.P(), profile.P()));
    const Eigen::MatrixXd out = CI * mse_effects_full(d, vc, profile, kinship) * CI.transpose();
    return 0.5 * (out + out.transpose());
}

namespace {

CriterionValue single_shot(const Design& d, const VarianceComponents& vc, const SubRegionProfile& profile,
                           KinshipSpec kinship, Target target, Weighting weighting, CriterionPath path,
                           bool with_gradient) {
    DesignProblem problem{vc, profile, std::move(kinship), d.total(), CriterionSpec{target, weighting, path}};
    return CriterionEvaluator(std::move(problem)).evaluate(d, with_gradient);
}

}  // namespace

CriterionValue phi_effects(const Design& d, const VarianceComponents& vc, const SubRegionProfile& profile,
                           const KinshipSpec& kinship, Weighting weighting, bool with_gradient) {
    return single_shot(d, vc, profile, kinship, Target::GenotypeEffects, weighting, CriterionPath::FullGeneral,
                       with_gradient);
}

CriterionValue phi_contrasts(const Design& d, const VarianceComponents& vc, const SubRegionProfile& profile,
                             const KinshipSpec& kinship, Weighting weighting, bool with_gradient) {
    return single_shot(d, vc, profile, kinship, Target::PairwiseContrasts, weighting, CriterionPath::FullGeneral,
                       with_gradient);
}

CriterionValue phi_bayes_cs(const Design& d, const VarianceComponents& vc, const SubRegionProfile& profile,
                            const CompoundSymmetryKinship& cs, Weighting weighting, Target target) {
    return single_shot(d, vc, profile, KinshipSpec{cs}, target, weighting, CriterionPath::BayesCS, true);
}

CriterionValue phi_cbrc_blockcs(const Design& d, const VarianceComponents& vc, const SubRegionProfile& profile,
                                const BlockCompoundSymmetryKinship& bcs, Weighting weighting, Target target) {
    return single_shot(d, vc, profile, KinshipSpec{bcs}, target, weighting, CriterionPath::CbrcBlockCS, true);
}

CriterionValue phi_kbayes_blockcs(const Design& d, const VarianceComponents& vc, const SubRegionProfile& profile,
                                  const BlockCompoundSymmetryKinship& bcs, Weighting weighting, Target target) {
    return single_shot(d, vc, profile, KinshipSpec{bcs}, target, weighting, CriterionPath::KBayesBlockCS, true);
}

double mse_trace_report(const Design& d, const VarianceComponents& vc, const SubRegionProfile& profile,
                        const KinshipSpec& kinship, Target target) {
    return *single_shot(d, vc, profile, kinship, target, Weighting::Standard, CriterionPath::Auto, false).mse_trace;
}

}  // namespace trialloc
