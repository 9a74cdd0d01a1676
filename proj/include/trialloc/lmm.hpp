#pragma once

// Variance parameters of the multi-environment trial model and the elementary
// design matrices every criterion is assembled from.
//
// Conventions: P sub-regions, K genotypes, J trials (locations), H years.
// Matrices over genotype x sub-region pairs are ordered genotype-major, i.e.
// index k*P + i, matching N (x) V.

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace trialloc {

enum class ModelVariant {
    CrossClassified,  // same locations every year
    Nested,           // locations nested within years
};

struct VarianceComponents {
    double sigma2_omega = 0.0;  // genotype x year
    double sigma2_tau = 0.0;    // genotype x sub-region x year
    double sigma2_gamma = 0.0;  // genotype x location
    /// sigma2_phi + sigma2 / L, the form in which published estimates are reported.
    double sigma2_phi_plus_err_over_L = 0.0;
    int H = 1;
    int L = 1;  // informational when the composite is supplied directly
    ModelVariant model_variant = ModelVariant::CrossClassified;

    static VarianceComponents from_separate(double sigma2_omega, double sigma2_tau,
                                            double sigma2_gamma, double sigma2_phi,
                                            double sigma2_error, int H, int L,
                                            ModelVariant variant);

    /// Throws ValidationError on negative variances, sigma2_tau <= 0 or H < 1.
    void validate() const;
};

/// c = sigma2_gamma + composite / H for the cross-classified model and
/// c~ = composite / H for the nested one. Throws when the result is not positive.
double effective_error_constant(const VarianceComponents& vc);

struct SubRegionProfile {
    Eigen::MatrixXd V;                 // P x P genetic covariance between sub-regions
    std::optional<Eigen::VectorXd> ell;  // sub-regional coefficients; absent means standard

    /// Symmetrizes V and checks P >= 2, V positive definite, ell > 0 with |ell| = P.
    static SubRegionProfile make(const Eigen::MatrixXd& V,
                                 std::optional<Eigen::VectorXd> ell = std::nullopt);

    int P() const { return static_cast<int>(V.rows()); }
    Eigen::VectorXd ell_or_ones() const;
    void validate() const;
};

enum class DesignKind { Exact, Approximate };

/// An allocation of trials to sub-regions: integer counts (exact) or simplex
/// weights (approximate). Both carry the total J, which scales the criteria.
class Design {
public:
    Design() = default;  // empty; use the factories
    /// Throws when a count is negative or sum(counts) differs from `total` (if given).
    static Design exact(std::vector<int> counts, std::optional<int> total = std::nullopt);
    /// Weights must be non-negative and sum to one within 1e-9; they are renormalized.
    static Design approximate(Eigen::VectorXd weights, double total);

    DesignKind kind() const { return kind_; }
    int P() const { return static_cast<int>(weights_.size()); }
    double total() const { return total_; }
    const Eigen::VectorXd& weights() const { return weights_; }
    /// Empty for approximate designs.
    const std::vector<int>& counts() const { return counts_; }

private:
    DesignKind kind_ = DesignKind::Approximate;
    std::vector<int> counts_;
    Eigen::VectorXd weights_;
    double total_ = 0.0;
};

/// M(xi) = diag(w_1, ..., w_P).
Eigen::MatrixXd moment_matrix(const Design& d);

/// T = I_K - (1/K) 1 1^T. Requires K >= 2.
Eigen::MatrixXd centering_matrix(int K);

/// R~ = J/(cH) (sigma2_tau I_P + sigma2_omega 1 1^T).
Eigen::MatrixXd scaled_year_matrix(const VarianceComponents& vc, double J, int P);

/// U~ = N (x) V~ with V~ = (J/c) V, kept in factored form.
struct ScaledGeneticCovariances {
    Eigen::MatrixXd N;
    Eigen::MatrixXd V_tilde;

    int K() const { return static_cast<int>(N.rows()); }
    int P() const { return static_cast<int>(V_tilde.rows()); }
    Eigen::MatrixXd dense() const;
};

/// Throws NumericalError when N is not positive definite (add jitter upstream).
ScaledGeneticCovariances scaled_genetic_covariances(const VarianceComponents& vc, double J,
                                                    const SubRegionProfile& profile,
                                                    const Eigen::MatrixXd& kinship);

}  // namespace trialloc
