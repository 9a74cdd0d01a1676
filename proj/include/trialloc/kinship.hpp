#pragma once

// Genotype relationship matrices N: identity, compound symmetry (CS),
// block-diagonal CS (f families of m genotypes) or dense from file.

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace trialloc {

struct IdentityKinship {
    int K = 0;
};

/// N = a1 I + a 1 1^T with a = sigma2_alpha r, a1 = sigma2_alpha (1 - r).
struct CompoundSymmetryKinship {
    int K = 0;
    double sigma2_alpha = 1.0;
    double r = 0.0;

    double a() const { return sigma2_alpha * r; }
    double a1() const { return sigma2_alpha * (1.0 - r); }
};

/// N = I_f (x) (b1 I_m + b 1 1^T) with b = sigma2_alpha r, b1 = sigma2_alpha (1 - r).
struct BlockCompoundSymmetryKinship {
    int f = 0;
    int m = 0;
    double sigma2_alpha = 1.0;
    double r = 0.0;

    int K() const { return f * m; }
    double b() const { return sigma2_alpha * r; }
    double b1() const { return sigma2_alpha * (1.0 - r); }
};

struct DenseKinship {
    Eigen::MatrixXd matrix;
};

struct KinshipSpec {
    std::variant<IdentityKinship, CompoundSymmetryKinship, BlockCompoundSymmetryKinship, DenseKinship> variant;
    /// Added to every diagonal entry of N.
    double jitter = 0.0;

    int K() const;
    /// Range checks: K >= 2, sigma2_alpha > 0, r in [0, 1), jitter >= 0, dense square and symmetric.
    void validate() const;
};

/// Dense N including jitter. Dense input is symmetrized; asymmetry beyond 1e-10 throws.
Eigen::MatrixXd materialize(const KinshipSpec& spec);

/// Average semivariance asv(N) = tr[N (I - 1 1^T / K)] / (K - 1).
double asv(const Eigen::MatrixXd& N);

/// sigma2_alpha = (K - 1) / (K - 1 - (m - 1) r), which makes asv = 1 for block-CS kinship.
double sigma2_alpha_for_unit_asv(int K, int m, double r);

struct PdDiagnostic {
    bool positive_definite = false;
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
    double condition_number = 0.0;  // +inf when min_eigenvalue <= 0
    double suggested_jitter = 0.0;  // 0 when already positive definite
};

PdDiagnostic validate_pd(const Eigen::MatrixXd& N);

/// 1e-8 x mean(diag N), the regularization offered by the CLI's --jitter flag.
double default_jitter(const Eigen::MatrixXd& N);

/// Square comma-separated matrix with an optional header row of genotype ids.
/// `ids` (if given) receives the header, or is cleared when there is none.
Eigen::MatrixXd read_kinship_csv(const std::filesystem::path& path, std::vector<std::string>* ids = nullptr);

}  // namespace trialloc
