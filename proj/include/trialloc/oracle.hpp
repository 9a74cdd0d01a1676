#pragma once

// Brute-force reference implementations for the test suites. Everything here
// is assembled densely from the defining formulas and shares no matrix code
// with the criterion paths. Cost is O((KP)^3); guards reject large inputs.

#include "trialloc/criteria.hpp"
#include "trialloc/kinship.hpp"
#include "trialloc/lmm.hpp"
#include "trialloc/optimizer.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

namespace trialloc::oracle {

inline constexpr int kMaxK = 12;
inline constexpr int kMaxP = 6;
inline constexpr std::uint64_t kMaxEnumeration = 100000;

struct Instance {
    VarianceComponents vc;
    Eigen::MatrixXd V;  // P x P
    Eigen::MatrixXd L;  // P x P weight matrix; identity for the standard criterion
    KinshipSpec kinship;
    std::vector<int> counts;  // J_i >= 1

    int P() const { return static_cast<int>(V.rows()); }
    int K() const;
    int J() const;
    Eigen::VectorXd weights() const;
};

/// N written out from the kinship parameters, jitter on the diagonal.
Eigen::MatrixXd kinship_matrix(const KinshipSpec& spec);

/// The pairwise contrast matrix, blocks C_1, ..., C_{K-1} with C_s holding
/// the rows e_k - e_{k+s}.
Eigen::MatrixXd contrast_matrix(int K);

/// {(1/c) T (x) [(F^T F)^{-1} + R]^{-1} + U^{-1}}^{-1} with F built row by row.
Eigen::MatrixXd mse_direct(const Instance& inst);

/// The same MSE before the Woodbury step: [T (x) (H F^T W2^{-1} F) + U^{-1}]^{-1}
/// with the J x J year operand W2 = s_omega 1 1^T + s_tau F F^T + c H I.
Eigen::MatrixXd mse_pre_woodbury(const Instance& inst);

/// (C (x) I_P) MSE (C^T (x) I_P).
Eigen::MatrixXd mse_contrasts_direct(const Instance& inst);

/// tr[(I_K (x) M(w) + B)^{-1} B (T (x) I) U~ X U~ (T (x) I) B] with B = W^{-1},
/// X = I (x) L for effects and T (x) L for contrasts; J from the instance.
double trace_form_phi(const Instance& inst, Target target, const Eigen::VectorXd& w);

enum class Constant {
    EffectsOffset,     // c1 = tr[C1 (I (x) L)]
    ContrastsOffset,   // c2 = tr[C1 (T (x) L)]
    CsEffects,         // const, compound symmetry
    CsContrasts,       // const1
    BlockCsEffects,    // const2, block compound symmetry
    BlockCsContrasts,  // const3
};

/// Additive constants of the reduction identities
///   tr[MSE (I (x) L)] = phi_tr + c1 = a1^2 (K-1) Phi_B + const   (effects)
///   tr[MSE (T (x) L)] = phi_tr + c2 = a1^2 (K-1) Phi_B + const1  (contrasts)
/// and likewise const2/const3 with the two-block reduced form. MSE on the
/// approximate-design scale. Throws ValidationError on a kinship mismatch.
double reduction_constant(const Instance& inst, Constant which);

/// Central differences of f at w, one coordinate at a time.
Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& w, double step = 1e-6);

/// Calls visit on every integer design admitted by the constraints.
void for_each_feasible(const ConstraintSet& constraints, int P, const std::function<void(const std::vector<int>&)>& visit);

std::uint64_t count_feasible(const ConstraintSet& constraints, int P);

/// Global minimizer of the criterion's phi by exhaustive search; ties go to
/// the lexicographically smallest counts. Throws ValidationError beyond 1e5 designs.
Design enumerate_exact_optimum(const CriterionEvaluator& criterion, const ConstraintSet& constraints);

}  // namespace trialloc::oracle
