#include "ebal/simulation.hpp"

#include "ebal/balance.hpp"
#include "ebal/estimators.hpp"
#include "ebal/propensity.hpp"
#include "ebal/variance.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace ebal {

std::string to_string(Family f) {
    return f == Family::KangSchafer ? "kang-schafer" : "lunceford-davidian";
}

std::string to_string(AssociationLevel l) {
    switch (l) {
        case AssociationLevel::No: return "no";
        case AssociationLevel::Moderate: return "moderate";
        case AssociationLevel::Strong: return "strong";
    }
    return "unknown";
}

std::string to_string(PsScope s) { return s == PsScope::Full ? "full" : "partial"; }

Family parse_family(const std::string& s) {
    if (s == "kang-schafer" || s == "ks") return Family::KangSchafer;
    if (s == "lunceford-davidian" || s == "ld") return Family::LuncefordDavidian;
    throw InvalidInputError("unknown scenario family '" + s + "'");
}

AssociationLevel parse_level(const std::string& s) {
    if (s == "no") return AssociationLevel::No;
    if (s == "moderate") return AssociationLevel::Moderate;
    if (s == "strong") return AssociationLevel::Strong;
    throw InvalidInputError("unknown association level '" + s + "' (no|moderate|strong)");
}

PsScope parse_scope(const std::string& s) {
    if (s == "full") return PsScope::Full;
    if (s == "partial") return PsScope::Partial;
    throw InvalidInputError("unknown propensity scope '" + s + "' (full|partial)");
}

ScenarioSpec ScenarioSpec::kang_schafer(bool ps_correct, bool outcome_correct, Index n, int reps,
                                        std::uint64_t seed) {
    ScenarioSpec s;
    s.family = Family::KangSchafer;
    s.ks_ps_correct = ps_correct;
    s.ks_outcome_correct = outcome_correct;
    s.n = n;
    s.replications = reps;
    s.seed = seed;
    return s;
}

ScenarioSpec ScenarioSpec::lunceford_davidian(AssociationLevel beta, AssociationLevel xi,
                                              PsScope scope, Index n, int reps, std::uint64_t seed) {
    ScenarioSpec s;
    s.family = Family::LuncefordDavidian;
    s.ld_beta_level = beta;
    s.ld_xi_level = xi;
    s.ld_ps_scope = scope;
    s.n = n;
    s.replications = reps;
    s.seed = seed;
    return s;
}

void ScenarioSpec::validate() const {
    const bool ks_set = ks_ps_correct.has_value() || ks_outcome_correct.has_value();
    const bool ld_set = ld_beta_level.has_value() || ld_xi_level.has_value() || ld_ps_scope.has_value();
    if (family == Family::KangSchafer) {
        if (ld_set) throw InvalidInputError("Lunceford-Davidian options given for a Kang-Schafer scenario");
        if (!ks_ps_correct || !ks_outcome_correct) {
            throw InvalidInputError("Kang-Schafer scenario needs ps/outcome correctness flags");
        }
    } else {
        if (ks_set) throw InvalidInputError("Kang-Schafer options given for a Lunceford-Davidian scenario");
        if (!ld_beta_level || !ld_xi_level || !ld_ps_scope) {
            throw InvalidInputError("Lunceford-Davidian scenario needs beta level, xi level and scope");
        }
    }
    if (n < 2) throw InvalidInputError("scenario: n must be at least 2");
    if (replications < 1) throw InvalidInputError("scenario: replications must be at least 1");
}

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t child_seed(std::uint64_t seed, std::uint64_t replication) {
    return splitmix64(seed + 0x9E3779B97F4A7C15ULL * (replication + 1));
}

SimulatedSample gen_kang_schafer(Index n, std::uint64_t seed) {
    if (n < 2) throw InvalidInputError("gen_kang_schafer: n must be at least 2");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    SimulatedSample s;
    s.x.resize(n, 4);
    s.z.resize(n, 4);
    s.propensity.resize(n);
    s.y0.resize(n);
    std::vector<int> t(static_cast<std::size_t>(n));
    std::vector<bool> observed(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < 4; ++j) s.x(i, j) = normal(rng);
        const double x1 = s.x(i, 0), x2 = s.x(i, 1), x3 = s.x(i, 2), x4 = s.x(i, 3);
        s.propensity(i) = expit(-x1 + 0.5 * x2 - 0.25 * x3 - 0.1 * x4);
        t[static_cast<std::size_t>(i)] = unif(rng) < s.propensity(i) ? 1 : 0;
        s.y0(i) = 210.0 + 27.4 * x1 + 13.7 * x2 + 13.7 * x3 + 13.7 * x4 + normal(rng);
        observed[static_cast<std::size_t>(i)] = t[static_cast<std::size_t>(i)] == 1;
        s.z(i, 0) = std::exp(x1 / 2.0);
        s.z(i, 1) = x2 / (1.0 + std::exp(x1)) + 10.0;
        s.z(i, 2) = std::pow(x1 * x3 + 0.6, 3);
        s.z(i, 3) = std::pow(x2 + x4 + 20.0, 2);
    }
    for (Index j = 0; j < 4; ++j) {
        const double mean = s.z.col(j).mean();
        const double sd =
            std::sqrt((s.z.col(j).array() - mean).square().sum() / static_cast<double>(n - 1));
        s.z.col(j) = (s.z.col(j).array() - mean) / sd;
    }
    s.y1 = s.y0;
    s.truth = 210.0;
    Matrix cov(n, 8);
    cov << s.x, s.z;
    Vector y = s.y0;
    for (Index i = 0; i < n; ++i) {
        if (!observed[static_cast<std::size_t>(i)]) y(i) = std::numeric_limits<double>::quiet_NaN();
    }
    s.data = ObservationalDataset(std::move(cov), std::move(t), std::move(y), std::move(observed),
                                  {"x1", "x2", "x3", "x4", "z1", "z2", "z3", "z4"});
    return s;
}

SimulatedSample gen_lunceford_davidian(Index n, AssociationLevel beta_level,
                                       AssociationLevel xi_level, std::uint64_t seed) {
    if (n < 2) throw InvalidInputError("gen_lunceford_davidian: n must be at least 2");
    static const double nu[5] = {0.0, -1.0, 1.0, -1.0, 2.0};
    double beta[4] = {0, 0, 0, 0};
    double xi[3] = {0, 0, 0};
    if (beta_level == AssociationLevel::Moderate) {
        beta[1] = 0.3; beta[2] = -0.3; beta[3] = 0.3;
    } else if (beta_level == AssociationLevel::Strong) {
        beta[1] = 0.6; beta[2] = -0.6; beta[3] = 0.6;
    }
    if (xi_level == AssociationLevel::Moderate) {
        xi[0] = -0.5; xi[1] = 0.5; xi[2] = 0.5;
    } else if (xi_level == AssociationLevel::Strong) {
        xi[0] = -1.0; xi[1] = 1.0; xi[2] = 1.0;
    }
    // (X1, Z1, X2, Z2) | X3 ~ N(a_{X3}, B)
    Eigen::Matrix4d B;
    B << 1.0, 0.5, -0.5, -0.5,
         0.5, 1.0, -0.5, -0.5,
        -0.5, -0.5, 1.0, 0.5,
        -0.5, -0.5, 0.5, 1.0;
    const Eigen::Matrix4d L = B.llt().matrixL();
    const Eigen::Vector4d a1(1.0, 1.0, -1.0, -1.0), a0(-1.0, -1.0, 1.0, 1.0);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    SimulatedSample s;
    s.x.resize(n, 3);
    s.z.resize(n, 3);
    s.propensity.resize(n);
    s.y0.resize(n);
    s.y1.resize(n);
    std::vector<int> t(static_cast<std::size_t>(n));
    Vector y(n);
    for (Index i = 0; i < n; ++i) {
        const double x3 = unif(rng) < 0.2 ? 1.0 : 0.0;
        const double z3 = unif(rng) < (x3 > 0.5 ? 0.75 : 0.25) ? 1.0 : 0.0;
        Eigen::Vector4d g;
        for (int k = 0; k < 4; ++k) g(k) = normal(rng);
        const Eigen::Vector4d v = (x3 > 0.5 ? a1 : a0) + L * g;
        const double x1 = v(0), z1 = v(1), x2 = v(2), z2 = v(3);
        s.x.row(i) << x1, x2, x3;
        s.z.row(i) << z1, z2, z3;
        s.propensity(i) = expit(beta[0] + beta[1] * x1 + beta[2] * x2 + beta[3] * x3);
        const int ti = unif(rng) < s.propensity(i) ? 1 : 0;
        t[static_cast<std::size_t>(i)] = ti;
        const double eps = normal(rng);
        s.y0(i) = nu[0] + nu[1] * x1 + nu[2] * x2 + nu[3] * x3 + xi[0] * z1 + xi[1] * z2 + xi[2] * z3 + eps;
        s.y1(i) = s.y0(i) + nu[4];
        y(i) = ti ? s.y1(i) : s.y0(i);
    }
    s.truth = nu[4];
    Matrix cov(n, 6);
    cov << s.x, s.z;
    s.data = ObservationalDataset(std::move(cov), std::move(t), std::move(y), {},
                                  {"x1", "x2", "x3", "z1", "z2", "z3"});
    return s;
}

SimulatedSample generate_replication(const ScenarioSpec& spec, int r) {
    const std::uint64_t seed = child_seed(spec.seed, static_cast<std::uint64_t>(r));
    if (spec.family == Family::KangSchafer) return gen_kang_schafer(spec.n, seed);
    return gen_lunceford_davidian(spec.n, *spec.ld_beta_level, *spec.ld_xi_level, seed);
}

std::string to_string(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::Ipw: return "ipw";
        case EstimatorKind::Eb: return "eb";
        case EstimatorKind::IpwDr: return "ipw-dr";
        case EstimatorKind::EbDr: return "eb-dr";
        case EstimatorKind::Ols: return "ols";
        case EstimatorKind::EbWls: return "eb-wls";
    }
    return "unknown";
}

EstimatorKind parse_estimator(const std::string& s) {
    if (s == "ipw") return EstimatorKind::Ipw;
    if (s == "eb") return EstimatorKind::Eb;
    if (s == "ipw-dr" || s == "dr" || s == "ipw+dr") return EstimatorKind::IpwDr;
    if (s == "eb-dr" || s == "eb+dr") return EstimatorKind::EbDr;
    if (s == "ols") return EstimatorKind::Ols;
    if (s == "eb-wls") return EstimatorKind::EbWls;
    throw InvalidInputError("unknown estimator '" + s + "' (ipw|eb|ipw-dr|eb-dr|ols|eb-wls)");
}

std::vector<EstimatorKind> all_estimators() {
    return {EstimatorKind::Ipw, EstimatorKind::Eb, EstimatorKind::IpwDr,
            EstimatorKind::EbDr, EstimatorKind::Ols, EstimatorKind::EbWls};
}

namespace {

struct FeatureChoice {
    std::vector<Index> ps;
    std::vector<Index> outcome;
    TargetPopulation population;
};

FeatureChoice features_for(const ScenarioSpec& spec) {
    FeatureChoice fc;
    if (spec.family == Family::KangSchafer) {
        const std::vector<Index> x{0, 1, 2, 3}, z{4, 5, 6, 7};
        fc.ps = *spec.ks_ps_correct ? x : z;
        fc.outcome = *spec.ks_outcome_correct ? x : z;
        fc.population = TargetPopulation::FullSample;
    } else {
        const std::vector<Index> all{0, 1, 2, 3, 4, 5}, x{0, 1, 2};
        fc.ps = *spec.ld_ps_scope == PsScope::Full ? all : x;
        fc.outcome = all;
        fc.population = TargetPopulation::Treated;
    }
    return fc;
}

bool uses(const std::vector<EstimatorKind>& v, std::initializer_list<EstimatorKind> ks) {
    return std::any_of(v.begin(), v.end(), [&](EstimatorKind k) {
        return std::find(ks.begin(), ks.end(), k) != ks.end();
    });
}

}  // namespace

std::vector<ReplicationEstimate> estimate_sample(const SimulatedSample& sample,
                                                 const ScenarioSpec& spec,
                                                 const std::vector<EstimatorKind>& estimators,
                                                 bool with_variance) {
    const FeatureChoice fc = features_for(spec);
    const ObservationalDataset& data = sample.data;
    const MomentSpec ps_spec = MomentSpec::raw_columns(fc.ps);
    const MomentSpec out_spec = MomentSpec::raw_columns(fc.outcome);
    const Matrix ps_moments = evaluate_moments(data, ps_spec);
    const Matrix out_features = evaluate_moments(data, out_spec);
    const GroupRoles roles = group_roles(data, fc.population);
    const double nan = std::numeric_limits<double>::quiet_NaN();

    std::optional<PropensityFit> pfit;
    if (uses(estimators, {EstimatorKind::Ipw, EstimatorKind::IpwDr})) {
        pfit = fit_logistic_mle(ps_moments, data.treatment());
    }
    std::optional<BalanceSolution> sol;
    if (uses(estimators, {EstimatorKind::Eb, EstimatorKind::EbDr, EstimatorKind::EbWls})) {
        BalanceProblem prob;
        prob.source_moments = select_rows(ps_moments, roles.source);
        prob.target = target_for(ps_moments, roles);
        sol = solve(prob);
        if (sol->status != SolveStatus::Converged) {
            throw NotConvergedError("entropy balancing failed: " + to_string(sol->status));
        }
    }
    std::optional<OutcomeFit> ofit;
    if (uses(estimators, {EstimatorKind::IpwDr, EstimatorKind::EbDr, EstimatorKind::Ols})) {
        ofit = fit_outcome_ols(data, out_spec, out_features, fc.population);
    }

    std::vector<ReplicationEstimate> out;
    for (EstimatorKind k : estimators) {
        ReplicationEstimate r{0.0, nan};
        switch (k) {
            case EstimatorKind::Ipw:
                r.estimate = estimate_ipw(data, *pfit, fc.population).point;
                if (with_variance) r.variance = sandwich_variance_ipw(data, ps_moments, *pfit, fc.population).variance;
                break;
            case EstimatorKind::Eb:
                r.estimate = estimate_eb(data, *sol, fc.population).point;
                if (with_variance) r.variance = sandwich_variance(data, ps_moments, *sol, fc.population).variance;
                break;
            case EstimatorKind::IpwDr:
                r.estimate = estimate_dr(data, *pfit, *ofit, out_features, fc.population).point;
                break;
            case EstimatorKind::EbDr:
                r.estimate = estimate_eb_dr(data, *sol, *ofit, out_features, fc.population).point;
                break;
            case EstimatorKind::Ols:
                r.estimate = estimate_ols(data, *ofit, out_features, fc.population).point;
                break;
            case EstimatorKind::EbWls:
                r.estimate = estimate_eb_wls(data, *sol, out_spec, out_features, fc.population).point;
                break;
        }
        out.push_back(r);
    }
    return out;
}

const EstimatorSummary& StudyResult::summary_for(EstimatorKind k) const {
    for (const auto& s : summary) {
        if (s.estimator == k) return s;
    }
    throw InvalidInputError("estimator " + to_string(k) + " not part of this study");
}

StudyResult run_study(const ScenarioSpec& spec, const std::vector<EstimatorKind>& estimators,
                      const StudyOptions& options) {
    spec.validate();
    if (estimators.empty()) throw InvalidInputError("run_study: estimator set is empty");

    const int reps = spec.replications;
    const std::size_t k = estimators.size();
    std::vector<std::vector<ReplicationEstimate>> results(static_cast<std::size_t>(reps));
    std::vector<std::string> errors(static_cast<std::size_t>(reps));
    std::vector<char> ok(static_cast<std::size_t>(reps), 0);

    std::atomic<int> next{0};
    auto worker = [&] {
        for (int r = next++; r < reps; r = next++) {
            const auto ur = static_cast<std::size_t>(r);
            try {
                const SimulatedSample sample = generate_replication(spec, r);
                results[ur] = estimate_sample(sample, spec, estimators, options.with_variance);
                ok[ur] = 1;
            } catch (const std::exception& e) {
                errors[ur] = e.what();
            }
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(reps)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    StudyResult res;
    res.spec = spec;
    res.estimators = estimators;
    res.truth = spec.family == Family::KangSchafer ? 210.0 : 2.0;
    for (int r = 0; r < reps; ++r) {
        const auto ur = static_cast<std::size_t>(r);
        if (!ok[ur]) {
            ++res.failures;
            res.failure_reasons.emplace_back(r, errors[ur]);
            continue;
        }
        for (std::size_t j = 0; j < k; ++j) {
            res.rows.push_back({r, estimators[j], results[ur][j].estimate, results[ur][j].variance});
        }
    }
    if (res.failures == reps) {
        throw Error("all " + std::to_string(reps) + " replications failed; first error: " +
                    res.failure_reasons.front().second);
    }

    for (std::size_t j = 0; j < k; ++j) {
        EstimatorSummary s;
        s.estimator = estimators[j];
        double sum = 0.0, sq = 0.0, var_sum = 0.0;
        for (std::size_t r = j; r < res.rows.size(); r += k) {
            sum += res.rows[r].estimate;
            var_sum += res.rows[r].variance;
            ++s.count;
        }
        s.mean = sum / static_cast<double>(s.count);
        s.bias = s.mean - res.truth;
        double mse = 0.0;
        for (std::size_t r = j; r < res.rows.size(); r += k) {
            sq += (res.rows[r].estimate - s.mean) * (res.rows[r].estimate - s.mean);
            mse += (res.rows[r].estimate - res.truth) * (res.rows[r].estimate - res.truth);
        }
        s.sd = s.count > 1 ? std::sqrt(sq / static_cast<double>(s.count - 1)) : 0.0;
        s.rmse = std::sqrt(mse / static_cast<double>(s.count));
        s.mean_variance = var_sum / static_cast<double>(s.count);
        res.summary.push_back(s);
    }
    return res;
}

}  // namespace ebal
