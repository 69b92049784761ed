#pragma once

#include "ebal/core.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ebal {

enum class Family { KangSchafer, LuncefordDavidian };
enum class AssociationLevel { No, Moderate, Strong };
enum class PsScope { Full, Partial };

std::string to_string(Family f);
std::string to_string(AssociationLevel l);
std::string to_string(PsScope s);
Family parse_family(const std::string& s);
AssociationLevel parse_level(const std::string& s);
PsScope parse_scope(const std::string& s);

/// A simulation configuration. Only the option group of `family` may be set.
struct ScenarioSpec {
    Family family = Family::KangSchafer;
    // Kang-Schafer
    std::optional<bool> ks_ps_correct;
    std::optional<bool> ks_outcome_correct;
    // Lunceford-Davidian
    std::optional<AssociationLevel> ld_beta_level;
    std::optional<AssociationLevel> ld_xi_level;
    std::optional<PsScope> ld_ps_scope;

    Index n = 1000;
    int replications = 200;
    std::uint64_t seed = 20240101;

    static ScenarioSpec kang_schafer(bool ps_correct, bool outcome_correct, Index n, int reps,
                                     std::uint64_t seed);
    static ScenarioSpec lunceford_davidian(AssociationLevel beta, AssociationLevel xi, PsScope scope,
                                           Index n, int reps, std::uint64_t seed);

    /// Throws InvalidInputError on mixed option groups, n < 2 or reps < 1.
    void validate() const;
};

/// A generated data set plus the quantities only a simulator knows.
struct SimulatedSample {
    ObservationalDataset data;
    Matrix x;           // observed confounders
    Matrix z;           // KS: standardized transforms; LD: outcome-only covariates
    Vector propensity;  // true e(X)
    Vector y0, y1;      // potential outcomes (KS: both equal the full Y)
    double truth = 0.0;
};

/// Kang-Schafer design: X ~ N(0, I4), Z the four standardized transforms,
/// Y observed only for T = 1, estimand E[Y] = 210. Covariate columns of the
/// dataset are x1..x4, z1..z4.
SimulatedSample gen_kang_schafer(Index n, std::uint64_t seed);

/// Lunceford-Davidian design with true PATT 2. Covariate columns are
/// x1, x2, x3, z1, z2, z3.
SimulatedSample gen_lunceford_davidian(Index n, AssociationLevel beta, AssociationLevel xi,
                                       std::uint64_t seed);

/// Per-replication seed: splitmix64(seed + golden * (r + 1)).
std::uint64_t child_seed(std::uint64_t seed, std::uint64_t replication);

/// Draws the sample of replication `r` of `spec`.
SimulatedSample generate_replication(const ScenarioSpec& spec, int r);

enum class EstimatorKind { Ipw, Eb, IpwDr, EbDr, Ols, EbWls };

std::string to_string(EstimatorKind k);
EstimatorKind parse_estimator(const std::string& s);
std::vector<EstimatorKind> all_estimators();

struct ReplicationEstimate {
    double estimate = 0.0;
    /// Sandwich variance when requested and available (EB, IPW), else NaN.
    double variance = 0.0;
};

/// Applies the estimators to one sample using the scenario's feature
/// choices. Throws the underlying error (infeasible balance, separation,
/// overlap) when any estimator cannot be computed.
std::vector<ReplicationEstimate> estimate_sample(const SimulatedSample& sample,
                                                 const ScenarioSpec& spec,
                                                 const std::vector<EstimatorKind>& estimators,
                                                 bool with_variance = false);

struct ReplicationRow {
    int replication = 0;
    EstimatorKind estimator = EstimatorKind::Eb;
    double estimate = 0.0;
    double variance = 0.0;
};

struct EstimatorSummary {
    EstimatorKind estimator = EstimatorKind::Eb;
    Index count = 0;
    double mean = 0.0;
    double bias = 0.0;
    double sd = 0.0;  // n - 1 denominator
    double rmse = 0.0;
    double mean_variance = 0.0;  // NaN when variances were not computed
};

struct StudyResult {
    ScenarioSpec spec;
    std::vector<EstimatorKind> estimators;
    double truth = 0.0;
    /// Successful replications only, ordered by (replication, estimator).
    std::vector<ReplicationRow> rows;
    std::vector<EstimatorSummary> summary;
    int failures = 0;
    /// (replication, error message) for every excluded replication.
    std::vector<std::pair<int, std::string>> failure_reasons;

    const EstimatorSummary& summary_for(EstimatorKind k) const;
};

struct StudyOptions {
    unsigned threads = 1;
    bool with_variance = false;
};

/// Runs every replication, independent of execution order and thread count.
/// Throws Error when every replication fails.
StudyResult run_study(const ScenarioSpec& spec, const std::vector<EstimatorKind>& estimators,
                      const StudyOptions& options = {});

}  // namespace ebal
