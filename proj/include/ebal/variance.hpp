#pragma once

#include "ebal/balance.hpp"
#include "ebal/core.hpp"
#include "ebal/propensity.hpp"

#include <optional>

namespace ebal {

/// Stacked estimating equations for the entropy-balancing estimator.
///
/// PATT mode, parameters xi = (m, theta, mu(1|1), gamma):
///   phi_j       = T (c_j - m_j)
///   psi_j       = (1-T) l(X) (c_j - m_j)
///   phi_{1|1}   = T (Y - mu(1|1))
///   phi         = (1-T) l(X) (Y + gamma - mu(1|1))
/// Full-sample mode, xi = (m, theta, mu): phi_j = c_j - m_j,
/// psi_j = T l(X) (c_j - m_j), phi = T l(X) (Y - mu).
///
/// l(X) = exp(theta'c(X) + kappa) with kappa fixed so that l sums to the
/// target-group size over the source units (l = n_target * w at the fit).
struct EstimatingEquationStack {
    /// Per-unit evaluations, n x (2p + 2) (PATT) or n x (2p + 1).
    Matrix zeta;
    /// -(1/n) sum d zeta / d xi', analytic.
    Matrix A;
    /// (1/n) sum zeta zeta'.
    Matrix B;
    Vector params;
    double kappa = 0.0;
    TargetPopulation population = TargetPopulation::Treated;

    /// Column means of zeta.
    Vector residual() const { return zeta.colwise().mean().transpose(); }
};

/// Evaluates the stack at explicit parameters (used for derivative checks).
EstimatingEquationStack eb_estimating_equations(const ObservationalDataset& data,
                                                const Matrix& moments, const Vector& params,
                                                double kappa, TargetPopulation population);

/// The stack at the fitted parameters of an entropy-balancing solution.
EstimatingEquationStack eb_estimating_equations(const ObservationalDataset& data,
                                                const Matrix& moments,
                                                const BalanceSolution& solution,
                                                TargetPopulation population = TargetPopulation::Treated);

struct SandwichResult {
    double variance = 0.0;
    double condition_number = 0.0;
    /// Full A^{-1} B A^{-T} / n.
    Matrix covariance;
};

/// Generic sandwich A^{-1} B A^{-T} / n for the last parameter.
SandwichResult sandwich(const Matrix& A, const Matrix& B, Index n);

/// Sandwich variance of the entropy-balancing point estimate. Throws
/// NotConvergedError for unconverged solutions and RankDeficientError
/// when A is singular.
SandwichResult sandwich_variance(const ObservationalDataset& data, const Matrix& moments,
                                 const BalanceSolution& solution,
                                 TargetPopulation population = TargetPopulation::Treated);

/// Sandwich variance of the IPW estimate from its estimating equations
/// (logistic score, mu(1|1), weighted mean). `moments` are the propensity
/// features without the intercept column; the fit decides the intercept.
SandwichResult sandwich_variance_ipw(const ObservationalDataset& data, const Matrix& moments,
                                     const PropensityFit& fit,
                                     TargetPopulation population = TargetPopulation::Treated);

/// Treated-group (co)variance blocks used by the closed-form variances.
struct MomentCovariances {
    Matrix H_c;      // Cov(c | T=1)
    Vector H_c0;     // Cov(c, Y(0) | T=1)
    Vector H_c1;     // Cov(c, Y(1) | T=1)
    double H_1 = 0;  // Var(Y(1) | T=1)
    double H_0 = 0;  // Var(Y(0) | T=1)
    Matrix G_c;      // E[l (c - Ec)(c - Ec)' | T=1]
    Vector G_c0;
    double G_0 = 0;
    Matrix K_c;      // E[(1-e) c c' | T=1]
    Vector Km_c0;    // E[(1-e) c (Y(0) - EY(0))' | T=1]
    Vector Km_c1;
    double pi = 0;

    // Present when regression functions g0, g1 were supplied.
    std::optional<double> H_g0g1;
    std::optional<double> H_g0;
    std::optional<double> G_g0;
};

/// Plug-in blocks from a sample carrying both potential outcomes for every
/// unit. Conditioning on T=1 uses the change of measure
/// E[f | T=1] = E[e f] / E[e] over all units; pi = n1/n.
MomentCovariances plugin_moment_covariances(const Matrix& moments, const Vector& propensity,
                                            const Vector& y0, const Vector& y1,
                                            const std::vector<int>& treatment,
                                            const Vector& g0 = Vector(), const Vector& g1 = Vector());

/// Asymptotic variance of the entropy-balancing estimator (times n).
double v_eb(const MomentCovariances& cov);

/// Closed-form IPW asymptotic variance; cross-check only, the reported IPW
/// variance comes from sandwich_variance_ipw.
double v_ipw_closed_form(const MomentCovariances& cov);

/// Semiparametric variance bound; needs the regression blocks.
double v_bound(const MomentCovariances& cov);

}  // namespace ebal
