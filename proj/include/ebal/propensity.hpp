#pragma once

#include "ebal/core.hpp"

namespace ebal {

/// Logistic propensity model fitted by maximum likelihood.
struct PropensityFit {
    /// Coefficients in the original feature scale; the intercept comes first
    /// when `intercept` is set.
    Vector theta;
    bool intercept = true;
    /// Linear predictor and fitted probabilities e(X_i), one per unit.
    Vector linear_predictor;
    Vector fitted;
    bool converged = false;
    double loglik = 0.0;
    int iterations = 0;
    /// Max-norm of the averaged score on standardized features.
    double score_norm = 0.0;

    /// Odds e/(1-e) = exp(linear predictor).
    Vector odds() const { return linear_predictor.array().exp(); }

    /// Slope coefficients (theta without the intercept).
    Vector slopes() const { return intercept ? Vector(theta.tail(theta.size() - 1)) : theta; }
};

struct LogisticSettings {
    double score_tol = 1e-8;
    int max_iter = 100;
    /// ||theta||_inf on standardized features beyond which separation is
    /// suspected and checked.
    double separation_threshold = 1e4;
};

/// Minimizes sum_i log(1 + exp(-(2T_i - 1) eta_i)) with eta = [1, c] theta by
/// damped Newton (IRLS). Throws SeparationError when the two groups admit no
/// overlap and the MLE does not exist.
PropensityFit fit_logistic_mle(const Matrix& moments, const std::vector<int>& treatment,
                               bool intercept = true, const LogisticSettings& settings = {});

/// Inverse-probability weights on the source units of `roles`, normalized to
/// sum to one: e/(1-e) for controls (PATT), 1/e for respondents (full sample).
/// Throws OverlapError when fitted values sit at the boundary.
Vector ipw_weights(const PropensityFit& fit, const GroupRoles& roles);

/// ipw_weights for the PATT roles (controls weighted toward treated).
Vector ipw_att_weights(const PropensityFit& fit, const std::vector<int>& treatment);

}  // namespace ebal
