#pragma once

// A-type design criteria on the MSE of the BLUP of genotype x sub-region
// effects and of their pairwise contrasts.
//
// Every criterion evaluated here has the shape
//
//     phi(w) = sum_b tr[(I_r (x) M(w) + B_b)^{-1} G_b]
//
// with design-independent B_b, G_b, so it is defined for zero weights and its
// gradient is available in closed form. The criterion paths differ only in
// how the blocks are built:
//
//   FullGeneral    any kinship; one P x P block per eigenvector of T N T
//   BayesCS        compound-symmetry kinship; one P x P block
//   CbrcBlockCS    block-CS kinship (f, m > 1); two P x P blocks
//   KBayesBlockCS  block-CS kinship (f, m > 1); one 2P x 2P block
//
// Each path's phi is an affine function of the weighted MSE trace:
//     tr[MSE(xi) X] = phi_scale * phi(xi) + phi_offset,
// which is how full_value() and mse_trace() are reported.

#include "trialloc/kinship.hpp"
#include "trialloc/lmm.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string_view>
#include <vector>

namespace trialloc {

enum class Target { GenotypeEffects, PairwiseContrasts };
enum class Weighting { Standard, Weighted };
enum class CriterionPath { FullGeneral, BayesCS, CbrcBlockCS, KBayesBlockCS, Auto };

std::string_view to_string(Target t);
std::string_view to_string(Weighting w);
std::string_view to_string(CriterionPath p);

struct CriterionSpec {
    Target target = Target::GenotypeEffects;
    Weighting weighting = Weighting::Standard;
    CriterionPath path = CriterionPath::Auto;
};

struct CriterionValue {
    double phi = 0.0;  // criterion in the path's own form, constants omitted
    /// The A-criterion itself: weighted trace of the unscaled MSE matrix
    /// (c/J times the approximate-design MSE).
    double full_value = 0.0;
    std::optional<double> mse_trace;  // unweighted trace on the same scale
    CriterionPath path_used = CriterionPath::Auto;
    std::optional<Eigen::VectorXd> gradient;  // d phi / d w_i
};

/// Everything a criterion depends on except the design weights.
struct DesignProblem {
    VarianceComponents vc;
    SubRegionProfile profile;
    KinshipSpec kinship;
    double J = 0.0;  // total trials; scales R~ and U~
    CriterionSpec criterion;
};

/// Block of the generic trace kernel: replicas r, B and G of size rP x rP.
struct CriterionBlock {
    int replicas = 1;
    Eigen::MatrixXd B;
    Eigen::MatrixXd G;
};

/// One criterion (target, weighting, path) bound to one problem. All
/// design-independent work, including B, is done once in the constructor;
/// evaluation is const and safe to call concurrently.
class CriterionEvaluator {
public:
    explicit CriterionEvaluator(DesignProblem problem);

    const DesignProblem& problem() const { return problem_; }
    CriterionPath path() const { return path_; }
    int P() const { return problem_.profile.P(); }
    int K() const { return problem_.kinship.K(); }
    double J() const { return problem_.J; }

    double phi(const Eigen::VectorXd& w) const;
    double phi(const Eigen::VectorXd& w, Eigen::VectorXd& gradient) const;

    /// full = output_scale * (phi_scale * phi + phi_offset).
    double full_value(const Eigen::VectorXd& w) const;
    double full_value_from_phi(double phi) const;
    /// Unweighted MSE trace on the same c/J scale.
    double mse_trace(const Eigen::VectorXd& w) const;

    CriterionValue evaluate(const Eigen::VectorXd& w, bool with_gradient = false) const;
    CriterionValue evaluate(const Design& d, bool with_gradient = false) const;

    double phi_scale() const { return weighted_.scale; }
    double phi_offset() const { return weighted_.offset; }
    double output_scale() const { return output_scale_; }
    /// Total number of rows of the largest factorized operand (P, 2P).
    int working_dimension() const;

private:
    struct Form {
        std::vector<CriterionBlock> blocks;
        double scale = 1.0;
        double offset = 0.0;
    };

    void check_weights(const Eigen::VectorXd& w) const;
    double eval_form(const Form& form, const Eigen::VectorXd& w, Eigen::VectorXd* gradient) const;
    Form build_form(Weighting weighting) const;

    DesignProblem problem_;
    CriterionPath path_;
    double output_scale_ = 1.0;
    Form weighted_;                 // the form being optimized
    std::optional<Form> standard_;  // unweighted form for mse_trace, when different
};

/// The path Auto resolves to for a kinship: BayesCS for identity, CS and the
/// trivial block-CS cases (f = 1 or m = 1), CbrcBlockCS for proper block-CS,
/// FullGeneral for dense matrices.
CriterionPath resolve_path(const KinshipSpec& kinship, CriterionPath requested);

/// The pairwise contrast matrix C (n x K, n = K(K-1)/2) stacked from C_1..C_{K-1}.
Eigen::MatrixXd contrast_matrix(int K);

/// MSE of the BLUP of the genotype effects for an approximate design,
/// {T (x) [M^{-1} + R~]^{-1} + U~^{-1}}^{-1}. Needs strictly positive weights
/// and K P <= 10000.
Eigen::MatrixXd mse_effects_full(const Design& d, const VarianceComponents& vc,
                                 const SubRegionProfile& profile, const KinshipSpec& kinship);

/// (C (x) I_P) MSE_alpha (C^T (x) I_P). Needs K <= 12.
Eigen::MatrixXd mse_contrasts_full(const Design& d, const VarianceComponents& vc,
                                   const SubRegionProfile& profile, const KinshipSpec& kinship);

// Single-shot evaluation through a fixed path, J taken from the design.
CriterionValue phi_effects(const Design& d, const VarianceComponents& vc, const SubRegionProfile& profile,
                           const KinshipSpec& kinship, Weighting weighting, bool with_gradient = true);
CriterionValue phi_contrasts(const Design& d, const VarianceComponents& vc, const SubRegionProfile& profile,
                             const KinshipSpec& kinship, Weighting weighting, bool with_gradient = true);
CriterionValue phi_bayes_cs(const Design& d, const VarianceComponents& vc, const SubRegionProfile& profile,
                            const CompoundSymmetryKinship& cs, Weighting weighting, Target target = Target::GenotypeEffects);
CriterionValue phi_cbrc_blockcs(const Design& d, const VarianceComponents& vc, const SubRegionProfile& profile,
                                const BlockCompoundSymmetryKinship& bcs, Weighting weighting,
                                Target target = Target::GenotypeEffects);
CriterionValue phi_kbayes_blockcs(const Design& d, const VarianceComponents& vc, const SubRegionProfile& profile,
                                  const BlockCompoundSymmetryKinship& bcs, Weighting weighting,
                                  Target target = Target::GenotypeEffects);

/// Unweighted MSE trace on the c/J scale through the cheapest valid path.
double mse_trace_report(const Design& d, const VarianceComponents& vc, const SubRegionProfile& profile,
                        const KinshipSpec& kinship, Target target);

}  // namespace trialloc
