#pragma once

#include "ebal/balance.hpp"
#include "ebal/core.hpp"
#include "ebal/propensity.hpp"

namespace ebal {

/// Least-squares outcome regression g0(X) = b0 + c(X)'beta fitted on the
/// source units (controls in PATT mode), optionally weighted.
struct OutcomeFit {
    /// Intercept first, then one coefficient per feature.
    Vector beta;
    MomentSpec feature_spec;

    /// Predictions for a feature matrix with one column per descriptor.
    Vector predict(const Matrix& features) const;
    Vector predict(const ObservationalDataset& data, const Matrix& extra_features = Matrix()) const;
};

/// OLS of the observed source outcomes on [1, features]. `features` holds
/// the evaluated `spec` for every unit. Throws RankDeficientError naming the
/// collinear columns.
OutcomeFit fit_outcome_ols(const ObservationalDataset& data, const MomentSpec& spec,
                           const Matrix& features,
                           TargetPopulation population = TargetPopulation::Treated);
OutcomeFit fit_outcome_ols(const ObservationalDataset& data, const MomentSpec& spec,
                           TargetPopulation population = TargetPopulation::Treated);

/// Weighted least squares on the source units with the given weights.
OutcomeFit fit_outcome_wls(const ObservationalDataset& data, const MomentSpec& spec,
                           const Matrix& features, const Vector& source_weights,
                           TargetPopulation population = TargetPopulation::Treated);

// Every estimator reports the source-side mean estimate in
// `counterfactual_mean`. In PATT mode the point estimate is
// mean(Y | T=1) - counterfactual_mean; in full-sample mode it is the
// estimated population mean itself.

EstimateReport estimate_ipw(const ObservationalDataset& data, const PropensityFit& fit,
                            TargetPopulation population = TargetPopulation::Treated);

/// Mean of g0 predictions over the target units.
EstimateReport estimate_ols(const ObservationalDataset& data, const OutcomeFit& fit,
                            const Matrix& features,
                            TargetPopulation population = TargetPopulation::Treated);
EstimateReport estimate_ols(const ObservationalDataset& data, const OutcomeFit& fit,
                            TargetPopulation population = TargetPopulation::Treated);

/// Residual bias correction with IPW weights.
EstimateReport estimate_dr(const ObservationalDataset& data, const PropensityFit& pfit,
                           const OutcomeFit& ofit, const Matrix& features,
                           TargetPopulation population = TargetPopulation::Treated);
EstimateReport estimate_dr(const ObservationalDataset& data, const PropensityFit& pfit,
                           const OutcomeFit& ofit,
                           TargetPopulation population = TargetPopulation::Treated);

/// Weighted source mean with entropy-balancing weights. Refuses solutions
/// that did not converge.
EstimateReport estimate_eb(const ObservationalDataset& data, const BalanceSolution& solution,
                           TargetPopulation population = TargetPopulation::Treated);

/// Residual bias correction with entropy-balancing weights.
EstimateReport estimate_eb_dr(const ObservationalDataset& data, const BalanceSolution& solution,
                              const OutcomeFit& ofit, const Matrix& features,
                              TargetPopulation population = TargetPopulation::Treated);
EstimateReport estimate_eb_dr(const ObservationalDataset& data, const BalanceSolution& solution,
                              const OutcomeFit& ofit,
                              TargetPopulation population = TargetPopulation::Treated);

/// Entropy-balancing-weighted least squares on `spec`, then the mean of the
/// predictions over the target units.
EstimateReport estimate_eb_wls(const ObservationalDataset& data, const BalanceSolution& solution,
                               const MomentSpec& spec, const Matrix& features,
                               TargetPopulation population = TargetPopulation::Treated);
EstimateReport estimate_eb_wls(const ObservationalDataset& data, const BalanceSolution& solution,
                               const MomentSpec& spec,
                               TargetPopulation population = TargetPopulation::Treated);

/// Weighting estimate from arbitrary source weights (sum to one).
EstimateReport estimate_weighted(const ObservationalDataset& data, const Vector& source_weights,
                                 const std::string& estimator_id,
                                 TargetPopulation population = TargetPopulation::Treated);

/// Weights on the controls implied by OLS on `features`:
/// (1/n1) 1' X1 [X0'X0]^{-1} X0'. No intercept is added.
Vector ols_implied_weights(const Matrix& control_features, const Matrix& treated_features);

}  // namespace ebal
