#pragma once

#include "ebal/core.hpp"
#include "ebal/hull_lp.hpp"

namespace ebal {

struct SolverSettings {
    /// Max-norm of the dual gradient (standardized features) at termination.
    double grad_tol = 1e-9;
    int max_iter = 100;
    double backtrack = 0.5;
    double armijo = 1e-4;
    /// Bound on ||theta||_inf (standardized features) that triggers the
    /// hull-membership LP when the gradient stops shrinking.
    double divergence_threshold = 50.0;

    void validate() const;
};

/// The convex program: reweight `source_moments` rows to hit `target`.
/// ridge = 0 is exact balancing; ridge > 0 is the l2-relaxed dual.
struct BalanceProblem {
    Matrix source_moments;
    BalanceTarget target;
    double ridge = 0.0;
    SolverSettings settings{};

    void validate() const;
};

enum class SolveStatus { Converged, InfeasibleDetected, MaxIter };

std::string to_string(SolveStatus s);

struct BalanceSolution {
    /// Dual coefficients in the original moment scale.
    Vector theta;
    /// Weights on the source rows; positive, sum to one.
    Vector weights;
    int iterations = 0;
    /// sum_i w_i c(X_i) - target.
    Vector residual_imbalance;
    double dual_value = 0.0;
    double gradient_norm = 0.0;
    SolveStatus status = SolveStatus::MaxIter;
    bool lp_consulted = false;

    double sum_squared_weights() const { return weights.squaredNorm(); }
    double effective_sample_size() const { return 1.0 / weights.squaredNorm(); }
};

/// Dual objective at theta (original scale).
///   ridge == 0: log sum_i exp(theta' c_i) - theta' target
///   ridge  > 0: log sum_i exp(theta' (c_i - target)) + ridge/2 ||theta||^2
double dual_objective(const Vector& theta, const BalanceProblem& problem);

/// sum_i w_i(theta) c_i - target + ridge * theta, with w the softmax weights.
Vector dual_gradient(const Vector& theta, const BalanceProblem& problem);

/// w-weighted covariance of the source moments plus ridge * I.
Matrix dual_hessian(const Vector& theta, const BalanceProblem& problem);

/// Softmax weights w_i proportional to exp(theta' c_i).
Vector tilt_weights(const Vector& theta, const Matrix& source_moments);

/// Newton's method with Armijo backtracking on the dual, weights by the KKT
/// softmax. Throws InvalidInputError for constant moment columns.
BalanceSolution solve(const BalanceProblem& problem);

/// LP membership test for the exact problem (ridge must be 0).
HullMembership check_feasibility(const BalanceProblem& problem);

struct ImbalanceReport {
    /// sum_i w_i c_j(X_i) - target_j
    Vector raw;
    /// raw / sd_j, with sd_j the target-group standard deviation of c_j
    /// (columns with zero spread are left unscaled).
    Vector standardized;
};

/// `target_moments` are the rows whose spread scales the report (treated
/// units in PATT mode); `target` is the balance target vector.
ImbalanceReport imbalance_report(const Vector& weights, const Matrix& source_moments,
                                 const Vector& target, const Matrix& target_moments);

}  // namespace ebal
