#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ebal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input (bad shapes, non-finite values, unknown columns).
class InvalidInputError : public Error {
public:
    using Error::Error;
};

/// The requested estimand has no data behind it (e.g. no treated units).
class EstimandUndefinedError : public Error {
public:
    using Error::Error;
};

/// A moment function produced a non-finite value.
class EvaluationError : public Error {
public:
    using Error::Error;
};

/// Logistic MLE does not exist (complete or quasi-complete separation).
class SeparationError : public Error {
public:
    using Error::Error;
};

/// Fitted propensities too close to the boundary for weighting.
class OverlapError : public Error {
public:
    using Error::Error;
};

/// Design matrix without full column rank.
class RankDeficientError : public Error {
public:
    using Error::Error;
};

/// An estimator was handed a solution or fit that did not converge.
class NotConvergedError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Data model
// ---------------------------------------------------------------------------

/// Units with covariates X, a binary treatment T and a realized outcome Y.
/// Outcomes may be missing; missingness is an explicit mask. Immutable.
class ObservationalDataset {
public:
    ObservationalDataset() = default;

    /// Validates and builds a dataset. `outcome_observed` may be empty, in
    /// which case every outcome is treated as observed. Throws
    /// InvalidInputError on shape mismatch, non-binary treatment or
    /// non-finite covariates.
    ObservationalDataset(Matrix covariates, std::vector<int> treatment,
                         Vector outcome, std::vector<bool> outcome_observed = {},
                         std::vector<std::string> covariate_names = {});

    Index size() const { return covariates_.rows(); }
    Index num_covariates() const { return covariates_.cols(); }

    const Matrix& covariates() const { return covariates_; }
    const std::vector<int>& treatment() const { return treatment_; }
    const Vector& outcome() const { return outcome_; }
    const std::vector<bool>& outcome_observed() const { return observed_; }
    const std::vector<std::string>& covariate_names() const { return names_; }

    Index num_treated() const { return n_treated_; }
    Index num_control() const { return size() - n_treated_; }

    /// Column index of a named covariate; throws InvalidInputError.
    Index covariate_index(const std::string& name) const;

    /// Row indices with T == t, in dataset order.
    std::vector<Index> group(int t) const;

private:
    Matrix covariates_;
    std::vector<int> treatment_;
    Vector outcome_;
    std::vector<bool> observed_;
    std::vector<std::string> names_;
    Index n_treated_ = 0;
};

/// One moment function c_j(X).
struct MomentFunction {
    enum class Kind { Raw, Square, Product, Feature };
    Kind kind = Kind::Raw;
    Index first = 0;   // covariate column (or feature column for Kind::Feature)
    Index second = 0;  // second column for Kind::Product

    static MomentFunction raw(Index j) { return {Kind::Raw, j, 0}; }
    static MomentFunction square(Index j) { return {Kind::Square, j, 0}; }
    static MomentFunction product(Index j, Index k) { return {Kind::Product, j, k}; }
    static MomentFunction feature(Index j) { return {Kind::Feature, j, 0}; }

    friend bool operator==(const MomentFunction&, const MomentFunction&) = default;
};

/// Ordered list of p >= 1 distinct moment functions.
class MomentSpec {
public:
    MomentSpec() = default;
    explicit MomentSpec(std::vector<MomentFunction> functions);

    /// Raw covariates 0..d-1.
    static MomentSpec raw_columns(Index d);
    static MomentSpec raw_columns(const std::vector<Index>& columns);

    Index size() const { return static_cast<Index>(functions_.size()); }
    const std::vector<MomentFunction>& functions() const { return functions_; }

    /// Human-readable name of descriptor j, using covariate names when given.
    std::string describe(Index j, const std::vector<std::string>& names = {}) const;

private:
    std::vector<MomentFunction> functions_;
};

/// n x p matrix with entry (i, j) = c_j(X_i). `features` backs Kind::Feature
/// descriptors and must have one row per unit when used.
Matrix evaluate_moments(const ObservationalDataset& data, const MomentSpec& spec,
                        const Matrix& features = Matrix());

enum class TargetPopulation { Treated, FullSample, Explicit };

struct BalanceTarget {
    Vector values;
    TargetPopulation population = TargetPopulation::Treated;
};

/// Column means of `moments` over treated units.
BalanceTarget treated_moment_target(const Matrix& moments,
                                    const std::vector<int>& treatment);

/// Column means of `moments` over all units.
BalanceTarget full_sample_target(const Matrix& moments);

/// Which units are reweighted (source) and whose moments are matched (target).
///
/// Treated target: source = controls, target = treated, estimand PATT.
/// Full-sample target: source = respondents (T = 1), target = every unit,
/// estimand the population mean of Y.
struct GroupRoles {
    std::vector<Index> source;
    std::vector<Index> target;
    TargetPopulation population = TargetPopulation::Treated;
};

GroupRoles group_roles(const ObservationalDataset& data, TargetPopulation population);

/// Rows of `m` listed in `rows`.
Matrix select_rows(const Matrix& m, const std::vector<Index>& rows);
Vector select_rows(const Vector& v, const std::vector<Index>& rows);

/// Target moments for the given roles (mean of moment rows over roles.target).
BalanceTarget target_for(const Matrix& moments, const GroupRoles& roles);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class Estimand { Patt, CounterfactualMean, PopulationMean };

std::string to_string(Estimand e);

struct EstimateReport {
    Estimand estimand = Estimand::Patt;
    std::string estimator_id;
    double point = 0.0;
    /// Weighted/regression estimate of the source-side mean, mu(0|1) in PATT
    /// mode and E[Y] in full-sample mode.
    double counterfactual_mean = 0.0;
    std::optional<double> variance;
    std::optional<double> std_error;
    std::map<std::string, double> diagnostics;

    /// Sets variance and std_error together; rejects negative values.
    void set_variance(double v);
};

}  // namespace ebal
