#include "ebal/estimators.hpp"

#include <cmath>
#include <sstream>

namespace ebal {

namespace {

Matrix with_intercept(const Matrix& features) {
    Matrix X(features.rows(), features.cols() + 1);
    X.col(0).setOnes();
    X.rightCols(features.cols()) = features;
    return X;
}

void require_observed(const ObservationalDataset& data, const std::vector<Index>& rows,
                      const char* what) {
    for (Index i : rows) {
        if (!data.outcome_observed()[static_cast<std::size_t>(i)]) {
            throw InvalidInputError(std::string("outcome missing for a ") + what + " unit (row " +
                                    std::to_string(i) + ")");
        }
    }
}

Estimand estimand_for(TargetPopulation population) {
    return population == TargetPopulation::FullSample ? Estimand::PopulationMean : Estimand::Patt;
}

// Fills estimand/point from a source-side mean estimate.
EstimateReport finish(const ObservationalDataset& data, const GroupRoles& roles, double mu,
                      const std::string& id) {
    EstimateReport rep;
    rep.estimator_id = id;
    rep.estimand = estimand_for(roles.population);
    rep.counterfactual_mean = mu;
    if (roles.population == TargetPopulation::FullSample) {
        rep.point = mu;
    } else {
        require_observed(data, roles.target, "treated");
        double s = 0.0;
        for (Index i : roles.target) s += data.outcome()(i);
        const double treated_mean = s / static_cast<double>(roles.target.size());
        rep.point = treated_mean - mu;
        rep.diagnostics["treated_mean"] = treated_mean;
    }
    return rep;
}

double weighted_source_mean(const ObservationalDataset& data, const GroupRoles& roles,
                            const Vector& w) {
    if (w.size() != static_cast<Index>(roles.source.size())) {
        throw InvalidInputError("weight vector length differs from source unit count");
    }
    require_observed(data, roles.source, "source");
    double s = 0.0;
    for (std::size_t r = 0; r < roles.source.size(); ++r) s += w(static_cast<Index>(r)) * data.outcome()(roles.source[r]);
    return s;
}

double target_prediction_mean(const GroupRoles& roles, const Vector& predictions) {
    double s = 0.0;
    for (Index i : roles.target) s += predictions(i);
    return s / static_cast<double>(roles.target.size());
}

// Residual-correction estimate: target mean of g0 + sum_w (Y - g0).
double corrected_mean(const ObservationalDataset& data, const GroupRoles& roles, const Vector& w,
                      const Vector& predictions, double& correction) {
    require_observed(data, roles.source, "source");
    correction = 0.0;
    for (std::size_t r = 0; r < roles.source.size(); ++r) {
        const Index i = roles.source[r];
        correction += w(static_cast<Index>(r)) * (data.outcome()(i) - predictions(i));
    }
    return target_prediction_mean(roles, predictions) + correction;
}

void require_converged(const BalanceSolution& solution) {
    if (solution.status != SolveStatus::Converged) {
        throw NotConvergedError("entropy balancing solution not usable (status " +
                                to_string(solution.status) + ")");
    }
}

void add_weight_diagnostics(EstimateReport& rep, const Vector& w) {
    rep.diagnostics["sum_w2"] = w.squaredNorm();
    rep.diagnostics["effective_sample_size"] = 1.0 / w.squaredNorm();
}

void add_solution_diagnostics(EstimateReport& rep, const BalanceSolution& s) {
    add_weight_diagnostics(rep, s.weights);
    rep.diagnostics["iterations"] = s.iterations;
    rep.diagnostics["max_residual_imbalance"] =
        s.residual_imbalance.size() ? s.residual_imbalance.cwiseAbs().maxCoeff() : 0.0;
}

OutcomeFit fit_least_squares(const ObservationalDataset& data, const MomentSpec& spec,
                             const Matrix& features, const Vector* weights,
                             TargetPopulation population) {
    if (features.rows() != data.size() || features.cols() != spec.size()) {
        throw InvalidInputError("outcome features do not match dataset/spec dimensions");
    }
    const GroupRoles roles = group_roles(data, population);
    require_observed(data, roles.source, "source");
    const Matrix X = with_intercept(select_rows(features, roles.source));
    Vector y = select_rows(data.outcome(), roles.source);
    Matrix Xw = X;
    if (weights) {
        if (weights->size() != X.rows()) throw InvalidInputError("WLS weight length mismatch");
        const Vector sw = weights->cwiseSqrt();
        Xw = sw.asDiagonal() * X;
        y = sw.cwiseProduct(y);
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(Xw);
    qr.setThreshold(1e-10);
    if (qr.rank() < X.cols()) {
        std::ostringstream os;
        os << "outcome design matrix is rank deficient (rank " << qr.rank() << " of " << X.cols()
           << "); collinear columns:";
        const auto perm = qr.colsPermutation().indices();
        for (Index k = qr.rank(); k < X.cols(); ++k) {
            const Index c = perm(k);
            os << ' ' << (c == 0 ? std::string("(intercept)") : spec.describe(c - 1, data.covariate_names()));
        }
        throw RankDeficientError(os.str());
    }
    OutcomeFit fit;
    fit.beta = qr.solve(y);
    fit.feature_spec = spec;
    return fit;
}

}  // namespace

Vector OutcomeFit::predict(const Matrix& features) const {
    if (features.cols() + 1 != beta.size()) throw InvalidInputError("predict: feature count mismatch");
    return (features * beta.tail(beta.size() - 1)).array() + beta(0);
}

Vector OutcomeFit::predict(const ObservationalDataset& data, const Matrix& extra_features) const {
    return predict(evaluate_moments(data, feature_spec, extra_features));
}

OutcomeFit fit_outcome_ols(const ObservationalDataset& data, const MomentSpec& spec,
                           const Matrix& features, TargetPopulation population) {
    return fit_least_squares(data, spec, features, nullptr, population);
}

OutcomeFit fit_outcome_ols(const ObservationalDataset& data, const MomentSpec& spec,
                           TargetPopulation population) {
    return fit_outcome_ols(data, spec, evaluate_moments(data, spec), population);
}

OutcomeFit fit_outcome_wls(const ObservationalDataset& data, const MomentSpec& spec,
                           const Matrix& features, const Vector& source_weights,
                           TargetPopulation population) {
    if ((source_weights.array() < 0.0).any()) throw InvalidInputError("WLS weights must be nonnegative");
    return fit_least_squares(data, spec, features, &source_weights, population);
}

EstimateReport estimate_weighted(const ObservationalDataset& data, const Vector& source_weights,
                                 const std::string& estimator_id, TargetPopulation population) {
    const GroupRoles roles = group_roles(data, population);
    auto rep = finish(data, roles, weighted_source_mean(data, roles, source_weights), estimator_id);
    add_weight_diagnostics(rep, source_weights);
    return rep;
}

EstimateReport estimate_ipw(const ObservationalDataset& data, const PropensityFit& fit,
                            TargetPopulation population) {
    const GroupRoles roles = group_roles(data, population);
    const Vector w = ipw_weights(fit, roles);
    auto rep = finish(data, roles, weighted_source_mean(data, roles, w), "ipw");
    add_weight_diagnostics(rep, w);
    return rep;
}

EstimateReport estimate_ols(const ObservationalDataset& data, const OutcomeFit& fit,
                            const Matrix& features, TargetPopulation population) {
    const GroupRoles roles = group_roles(data, population);
    const Vector pred = fit.predict(features);
    return finish(data, roles, target_prediction_mean(roles, pred), "ols");
}

EstimateReport estimate_ols(const ObservationalDataset& data, const OutcomeFit& fit,
                            TargetPopulation population) {
    return estimate_ols(data, fit, evaluate_moments(data, fit.feature_spec), population);
}

EstimateReport estimate_dr(const ObservationalDataset& data, const PropensityFit& pfit,
                           const OutcomeFit& ofit, const Matrix& features,
                           TargetPopulation population) {
    const GroupRoles roles = group_roles(data, population);
    const Vector w = ipw_weights(pfit, roles);
    double correction = 0.0;
    const double mu = corrected_mean(data, roles, w, ofit.predict(features), correction);
    auto rep = finish(data, roles, mu, "ipw-dr");
    rep.diagnostics["bias_correction"] = correction;
    add_weight_diagnostics(rep, w);
    return rep;
}

EstimateReport estimate_dr(const ObservationalDataset& data, const PropensityFit& pfit,
                           const OutcomeFit& ofit, TargetPopulation population) {
    return estimate_dr(data, pfit, ofit, evaluate_moments(data, ofit.feature_spec), population);
}

EstimateReport estimate_eb(const ObservationalDataset& data, const BalanceSolution& solution,
                           TargetPopulation population) {
    require_converged(solution);
    const GroupRoles roles = group_roles(data, population);
    auto rep = finish(data, roles, weighted_source_mean(data, roles, solution.weights), "eb");
    add_solution_diagnostics(rep, solution);
    return rep;
}

EstimateReport estimate_eb_dr(const ObservationalDataset& data, const BalanceSolution& solution,
                              const OutcomeFit& ofit, const Matrix& features,
                              TargetPopulation population) {
    require_converged(solution);
    const GroupRoles roles = group_roles(data, population);
    if (solution.weights.size() != static_cast<Index>(roles.source.size())) {
        throw InvalidInputError("solution weights do not match the source units");
    }
    double correction = 0.0;
    const double mu = corrected_mean(data, roles, solution.weights, ofit.predict(features), correction);
    auto rep = finish(data, roles, mu, "eb-dr");
    rep.diagnostics["bias_correction"] = correction;
    add_solution_diagnostics(rep, solution);
    return rep;
}

EstimateReport estimate_eb_dr(const ObservationalDataset& data, const BalanceSolution& solution,
                              const OutcomeFit& ofit, TargetPopulation population) {
    return estimate_eb_dr(data, solution, ofit, evaluate_moments(data, ofit.feature_spec), population);
}

EstimateReport estimate_eb_wls(const ObservationalDataset& data, const BalanceSolution& solution,
                               const MomentSpec& spec, const Matrix& features,
                               TargetPopulation population) {
    require_converged(solution);
    const GroupRoles roles = group_roles(data, population);
    const OutcomeFit fit = fit_outcome_wls(data, spec, features, solution.weights, population);
    auto rep = finish(data, roles, target_prediction_mean(roles, fit.predict(features)), "eb-wls");
    add_solution_diagnostics(rep, solution);
    return rep;
}

EstimateReport estimate_eb_wls(const ObservationalDataset& data, const BalanceSolution& solution,
                               const MomentSpec& spec, TargetPopulation population) {
    return estimate_eb_wls(data, solution, spec, evaluate_moments(data, spec), population);
}

Vector ols_implied_weights(const Matrix& control_features, const Matrix& treated_features) {
    if (control_features.cols() != treated_features.cols()) {
        throw InvalidInputError("ols_implied_weights: feature count mismatch");
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(control_features);
    if (qr.rank() < control_features.cols()) throw RankDeficientError("control design is rank deficient");
    // w' = mean_row(X1) (X0'X0)^{-1} X0'  <=>  w = X0 (X0'X0)^{-1} mean(X1)
    const Vector xbar = treated_features.colwise().mean();
    const Matrix gram = control_features.transpose() * control_features;
    return control_features * gram.ldlt().solve(xbar);
}

}  // namespace ebal
