#include "commands.hpp"

#include "ebal/balance.hpp"
#include "ebal/core.hpp"
#include "ebal/estimators.hpp"
#include "ebal/io.hpp"
#include "ebal/propensity.hpp"
#include "ebal/simulation.hpp"
#include "ebal/variance.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <optional>
#include <ostream>
#include <sstream>

namespace ebal::cli {

namespace {

using json = nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

/// A failure that maps to exit code 2.
class InfeasibleFailure : public Error {
public:
    using Error::Error;
};

struct MomentFlags {
    std::vector<std::string> columns;
    std::vector<std::string> squares;
    std::vector<std::string> interactions;
    CLI::Option* columns_opt = nullptr;
    CLI::Option* squares_opt = nullptr;
    CLI::Option* interactions_opt = nullptr;

    void add(CLI::App* app, const std::string& prefix, const std::string& what) {
        columns_opt = app->add_option("--" + prefix + "columns", columns,
                                      "Covariates entering " + what + " as raw terms")
                          ->delimiter(',');
        squares_opt = app->add_option("--" + prefix + "squares", squares,
                                      "Covariates entering " + what + " as squares")
                          ->delimiter(',');
        interactions_opt = app->add_option("--" + prefix + "interactions", interactions,
                                           "Products a:b entering " + what)
                               ->delimiter(',');
    }

    bool given() const {
        return columns_opt->count() + squares_opt->count() + interactions_opt->count() > 0;
    }

    /// Without any flag every covariate enters as a raw term.
    MomentSpec build(const ObservationalDataset& data) const {
        std::vector<MomentFunction> fns;
        if (!given()) {
            for (Index j = 0; j < data.num_covariates(); ++j) fns.push_back(MomentFunction::raw(j));
        }
        for (const auto& c : columns) fns.push_back(MomentFunction::raw(data.covariate_index(c)));
        for (const auto& c : squares) fns.push_back(MomentFunction::square(data.covariate_index(c)));
        for (const auto& pair : interactions) {
            const auto colon = pair.find(':');
            if (colon == std::string::npos) {
                throw InvalidInputError("interaction '" + pair + "' must have the form a:b");
            }
            fns.push_back(MomentFunction::product(data.covariate_index(pair.substr(0, colon)),
                                                  data.covariate_index(pair.substr(colon + 1))));
        }
        if (fns.empty()) throw InvalidInputError("moment specification is empty");
        return MomentSpec(std::move(fns));
    }
};

struct SolverFlags {
    SolverSettings settings;
    double ridge = 0.0;

    void add(CLI::App* app) {
        app->add_option("--ridge", ridge, "Ridge penalty lambda >= 0 (relaxed balance)");
        app->add_option("--grad-tol", settings.grad_tol, "Newton gradient tolerance");
        app->add_option("--max-iter", settings.max_iter, "Newton iteration cap");
        app->add_option("--backtrack", settings.backtrack, "Line-search step shrink factor");
        app->add_option("--armijo", settings.armijo, "Armijo sufficient-decrease constant");
        app->add_option("--divergence-threshold", settings.divergence_threshold,
                        "Standardized |theta| that triggers the feasibility check");
    }
};

TargetPopulation parse_target(const std::string& s) {
    if (s == "treated") return TargetPopulation::Treated;
    if (s == "full") return TargetPopulation::FullSample;
    throw InvalidInputError("unknown target '" + s + "' (treated|full)");
}

std::string target_name(TargetPopulation p) { return p == TargetPopulation::FullSample ? "full" : "treated"; }

std::vector<std::string> moment_names(const MomentSpec& spec, const ObservationalDataset& data) {
    std::vector<std::string> names;
    for (Index j = 0; j < spec.size(); ++j) names.push_back(spec.describe(j, data.covariate_names()));
    return names;
}

json to_array(const Vector& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

json nullable(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

void emit(const json& j, const std::string& path, std::ostream& out) {
    const std::string text = j.dump(2) + "\n";
    if (path.empty()) out << text;
    else write_file(path, text);
}

BalanceProblem make_problem(const Matrix& moments, const GroupRoles& roles, const SolverFlags& flags) {
    BalanceProblem prob;
    prob.source_moments = select_rows(moments, roles.source);
    prob.target = target_for(moments, roles);
    prob.ridge = flags.ridge;
    prob.settings = flags.settings;
    prob.validate();
    return prob;
}

// ---- balance -------------------------------------------------------------

struct BalanceCmd {
    std::string input, output, weights_out, target = "treated";
    MomentFlags moments;
    SolverFlags solver;

    void add(CLI::App* app) {
        app->add_option("--input,-i", input, "Input CSV")->required();
        app->add_option("--weights-out,-w", weights_out, "Weights CSV to write")->required();
        app->add_option("--output,-o", output, "Diagnostics JSON (default stdout)");
        app->add_option("--target", target, "treated | full");
        moments.add(app, "", "the balance constraints");
        solver.add(app);
    }

    int run(std::ostream& out) const {
        const auto data = read_dataset_csv(input);
        const auto spec = moments.build(data);
        const Matrix m = evaluate_moments(data, spec);
        const auto pop = parse_target(target);
        const auto roles = group_roles(data, pop);
        const auto prob = make_problem(m, roles, solver);
        const auto sol = solve(prob);

        json j;
        j["schema_version"] = kSchemaVersion;
        j["command"] = "balance";
        j["status"] = to_string(sol.status);
        j["target"] = target_name(pop);
        j["moments"] = moment_names(spec, data);
        j["ridge"] = prob.ridge;
        j["iterations"] = sol.iterations;
        j["n_source"] = roles.source.size();
        j["n_target"] = roles.target.size();
        j["lp_consulted"] = sol.lp_consulted;
        if (sol.status != SolveStatus::Converged) {
            emit(j, output, out);
            return Infeasible;
        }
        j["theta"] = to_array(sol.theta);
        j["residual_imbalance"] = to_array(sol.residual_imbalance);
        j["max_abs_residual_imbalance"] =
            sol.residual_imbalance.size() ? sol.residual_imbalance.cwiseAbs().maxCoeff() : 0.0;
        j["sum_squared_weights"] = sol.sum_squared_weights();
        j["effective_sample_size"] = sol.effective_sample_size();
        j["dual_value"] = sol.dual_value;
        j["gradient_norm"] = sol.gradient_norm;

        std::ostringstream csv;
        write_weights_csv(csv, roles.source, sol.weights);
        write_file(weights_out, csv.str());
        emit(j, output, out);
        return Success;
    }
};

// ---- estimate ------------------------------------------------------------

struct EstimateCmd {
    std::string input, output, target = "treated";
    std::vector<std::string> estimators;
    bool outcome_intercept_only = false;
    MomentFlags moments, outcome;
    SolverFlags solver;

    void add(CLI::App* app) {
        app->add_option("--input,-i", input, "Input CSV")->required();
        app->add_option("--output,-o", output, "Report JSON (default stdout)");
        app->add_option("--estimators,-e", estimators, "ipw, eb, ipw-dr, eb-dr, ols, eb-wls")
            ->delimiter(',')
            ->required();
        app->add_option("--target", target, "treated | full");
        moments.add(app, "", "the balance and propensity models");
        outcome.add(app, "outcome-", "the outcome regression (default: the balance moments)");
        app->add_flag("--outcome-intercept-only", outcome_intercept_only,
                      "Outcome regression with an intercept only");
        solver.add(app);
    }

    int run(std::ostream& out) const {
        std::vector<EstimatorKind> kinds;
        for (const auto& e : estimators) kinds.push_back(parse_estimator(e));
        if (kinds.empty()) throw InvalidInputError("estimator list is empty");

        const auto data = read_dataset_csv(input);
        const auto pop = parse_target(target);
        const auto roles = group_roles(data, pop);
        const auto spec = moments.build(data);
        const Matrix m = evaluate_moments(data, spec);
        MomentSpec out_spec;
        if (outcome_intercept_only) {
            if (outcome.given()) throw InvalidInputError("--outcome-intercept-only conflicts with outcome features");
        } else {
            out_spec = outcome.given() ? outcome.build(data) : spec;
        }
        const Matrix out_features = evaluate_moments(data, out_spec);

        std::optional<BalanceSolution> sol;
        std::optional<PropensityFit> pfit;
        std::optional<OutcomeFit> ofit;
        auto need_eb = [&]() -> const BalanceSolution& {
            if (!sol) {
                sol = solve(make_problem(m, roles, solver));
                if (sol->status != SolveStatus::Converged) {
                    throw InfeasibleFailure("balance constraints cannot be met (status " +
                                            to_string(sol->status) + ")");
                }
            }
            return *sol;
        };
        auto need_ps = [&]() -> const PropensityFit& {
            if (!pfit) pfit = fit_logistic_mle(m, data.treatment());
            return *pfit;
        };
        auto need_outcome = [&]() -> const OutcomeFit& {
            if (!ofit) ofit = fit_outcome_ols(data, out_spec, out_features, pop);
            return *ofit;
        };

        json reports = json::array();
        for (EstimatorKind k : kinds) {
            const std::string name = to_string(k);
            try {
                EstimateReport rep;
                std::string variance_note;
                switch (k) {
                    case EstimatorKind::Ipw:
                        rep = estimate_ipw(data, need_ps(), pop);
                        try {
                            rep.set_variance(sandwich_variance_ipw(data, m, *pfit, pop).variance);
                        } catch (const RankDeficientError& e) {
                            variance_note = e.what();
                        }
                        break;
                    case EstimatorKind::Eb:
                        rep = estimate_eb(data, need_eb(), pop);
                        try {
                            rep.set_variance(sandwich_variance(data, m, *sol, pop).variance);
                        } catch (const RankDeficientError& e) {
                            variance_note = e.what();
                        }
                        break;
                    case EstimatorKind::IpwDr:
                        rep = estimate_dr(data, need_ps(), need_outcome(), out_features, pop);
                        break;
                    case EstimatorKind::EbDr:
                        rep = estimate_eb_dr(data, need_eb(), need_outcome(), out_features, pop);
                        break;
                    case EstimatorKind::Ols:
                        rep = estimate_ols(data, need_outcome(), out_features, pop);
                        break;
                    case EstimatorKind::EbWls:
                        rep = estimate_eb_wls(data, need_eb(), out_spec, out_features, pop);
                        break;
                }
                json r;
                r["estimator"] = name;
                r["estimand"] = to_string(rep.estimand);
                r["point"] = rep.point;
                r["counterfactual_mean"] = rep.counterfactual_mean;
                r["variance"] = rep.variance ? json(*rep.variance) : json(nullptr);
                r["std_error"] = rep.std_error ? json(*rep.std_error) : json(nullptr);
                if (!variance_note.empty()) r["variance_note"] = variance_note;
                json d = json::object();
                for (const auto& [key, value] : rep.diagnostics) d[key] = value;
                r["diagnostics"] = d;
                reports.push_back(r);
            } catch (const InfeasibleFailure& e) {
                throw InfeasibleFailure(name + ": " + e.what());
            } catch (const SeparationError& e) {
                throw InfeasibleFailure(name + ": " + e.what());
            } catch (const OverlapError& e) {
                throw InfeasibleFailure(name + ": " + e.what());
            } catch (const Error& e) {
                throw InvalidInputError(name + ": " + e.what());
            }
        }

        json j;
        j["schema_version"] = kSchemaVersion;
        j["command"] = "estimate";
        j["target"] = target_name(pop);
        j["moments"] = moment_names(spec, data);
        j["outcome_features"] = moment_names(out_spec, data);
        j["reports"] = reports;
        emit(j, output, out);
        return Success;
    }
};

// ---- simulate ------------------------------------------------------------

struct SimulateCmd {
    std::string family, beta, xi, scope, output, csv_out;
    bool ps_correct = false, outcome_correct = false, with_variance = false;
    CLI::Option *ps_opt = nullptr, *outcome_opt = nullptr, *beta_opt = nullptr, *xi_opt = nullptr,
                *scope_opt = nullptr;
    Index n = 1000;
    int reps = 200;
    std::uint64_t seed = 20240101;
    unsigned threads = 1;
    std::vector<std::string> estimators;

    void add(CLI::App* app) {
        app->add_option("--family", family, "kang-schafer | lunceford-davidian")->required();
        ps_opt = app->add_option("--ps-correct", ps_correct, "Kang-Schafer: propensity model on X (true) or Z");
        outcome_opt = app->add_option("--outcome-correct", outcome_correct,
                                      "Kang-Schafer: outcome model on X (true) or Z");
        beta_opt = app->add_option("--beta", beta, "Lunceford-Davidian treatment association: no|moderate|strong");
        xi_opt = app->add_option("--xi", xi, "Lunceford-Davidian outcome association: no|moderate|strong");
        scope_opt = app->add_option("--scope", scope, "Lunceford-Davidian propensity features: full|partial");
        app->add_option("--n", n, "Sample size");
        app->add_option("--reps", reps, "Replications");
        app->add_option("--seed", seed, "Base seed");
        app->add_option("--threads", threads, "Worker threads");
        app->add_option("--estimators,-e", estimators, "Estimators (default: all)")->delimiter(',');
        app->add_flag("--with-variance", with_variance, "Compute sandwich variances for EB and IPW");
        app->add_option("--csv", csv_out, "Per-replication CSV to write");
        app->add_option("--output,-o", output, "Summary JSON (default stdout)");
    }

    int run(std::ostream& out) const {
        ScenarioSpec spec;
        spec.family = parse_family(family);
        if (ps_opt->count()) spec.ks_ps_correct = ps_correct;
        if (outcome_opt->count()) spec.ks_outcome_correct = outcome_correct;
        if (beta_opt->count()) spec.ld_beta_level = parse_level(beta);
        if (xi_opt->count()) spec.ld_xi_level = parse_level(xi);
        if (scope_opt->count()) spec.ld_ps_scope = parse_scope(scope);
        spec.n = n;
        spec.replications = reps;
        spec.seed = seed;
        spec.validate();

        std::vector<EstimatorKind> kinds;
        for (const auto& e : estimators) kinds.push_back(parse_estimator(e));
        if (kinds.empty()) kinds = all_estimators();

        StudyOptions opts;
        opts.threads = threads;
        opts.with_variance = with_variance;
        const StudyResult res = run_study(spec, kinds, opts);

        if (!csv_out.empty()) {
            std::ostringstream csv;
            write_study_csv(csv, res);
            write_file(csv_out, csv.str());
        }

        json sc;
        sc["family"] = to_string(spec.family);
        if (spec.ks_ps_correct) sc["ps_correct"] = *spec.ks_ps_correct;
        if (spec.ks_outcome_correct) sc["outcome_correct"] = *spec.ks_outcome_correct;
        if (spec.ld_beta_level) sc["beta"] = to_string(*spec.ld_beta_level);
        if (spec.ld_xi_level) sc["xi"] = to_string(*spec.ld_xi_level);
        if (spec.ld_ps_scope) sc["scope"] = to_string(*spec.ld_ps_scope);
        sc["n"] = spec.n;
        sc["replications"] = spec.replications;
        sc["seed"] = spec.seed;

        json summary = json::array();
        for (const auto& s : res.summary) {
            json e;
            e["estimator"] = to_string(s.estimator);
            e["count"] = s.count;
            e["mean"] = s.mean;
            e["bias"] = s.bias;
            e["sd"] = s.sd;
            e["rmse"] = s.rmse;
            e["mean_variance"] = nullable(s.mean_variance);
            summary.push_back(e);
        }
        json failures = json::array();
        for (const auto& [r, reason] : res.failure_reasons) {
            failures.push_back(json{{"replication", r}, {"reason", reason}});
        }

        json j;
        j["schema_version"] = kSchemaVersion;
        j["command"] = "simulate";
        j["scenario"] = sc;
        j["truth"] = res.truth;
        j["failures"] = res.failures;
        j["failed_replications"] = failures;
        j["summary"] = summary;
        emit(j, output, out);
        return Success;
    }
};

// ---- diagnose ------------------------------------------------------------

struct DiagnoseCmd {
    std::string input, weights, output, target = "treated";
    MomentFlags moments;

    void add(CLI::App* app) {
        app->add_option("--input,-i", input, "Input CSV")->required();
        app->add_option("--weights,-w", weights, "Weights CSV (unit_id,weight)")->required();
        app->add_option("--output,-o", output, "Imbalance JSON (default stdout)");
        app->add_option("--target", target, "treated | full");
        moments.add(app, "", "the imbalance check");
    }

    int run(std::ostream& out) const {
        const auto data = read_dataset_csv(input);
        const auto spec = moments.build(data);
        const Matrix m = evaluate_moments(data, spec);
        const auto pop = parse_target(target);
        const auto roles = group_roles(data, pop);
        const auto wf = parse_weights_csv(read_file(weights));

        std::vector<Index> slot(static_cast<std::size_t>(data.size()), -1);
        for (std::size_t r = 0; r < roles.source.size(); ++r) {
            slot[static_cast<std::size_t>(roles.source[r])] = static_cast<Index>(r);
        }
        Vector w = Vector::Constant(static_cast<Index>(roles.source.size()), std::nan(""));
        for (std::size_t k = 0; k < wf.unit_ids.size(); ++k) {
            const Index id = wf.unit_ids[k];
            if (id >= data.size() || slot[static_cast<std::size_t>(id)] < 0) {
                throw InvalidInputError("weights file: unit " + std::to_string(id) + " is not a source unit");
            }
            const Index s = slot[static_cast<std::size_t>(id)];
            if (!std::isnan(w(s))) throw InvalidInputError("weights file: unit " + std::to_string(id) + " repeated");
            w(s) = wf.weights(static_cast<Index>(k));
        }
        if (w.hasNaN()) throw InvalidInputError("weights file does not cover every source unit");

        const BalanceTarget tgt = target_for(m, roles);
        const auto rep = imbalance_report(w, select_rows(m, roles.source), tgt.values, select_rows(m, roles.target));

        json j;
        j["schema_version"] = kSchemaVersion;
        j["command"] = "diagnose";
        j["target"] = target_name(pop);
        j["moments"] = moment_names(spec, data);
        j["target_values"] = to_array(tgt.values);
        j["residual_imbalance"] = to_array(rep.raw);
        j["standardized_imbalance"] = to_array(rep.standardized);
        j["max_abs_residual_imbalance"] = rep.raw.size() ? rep.raw.cwiseAbs().maxCoeff() : 0.0;
        j["weight_sum"] = w.sum();
        j["sum_squared_weights"] = w.squaredNorm();
        j["effective_sample_size"] = w.sum() * w.sum() / w.squaredNorm();
        emit(j, output, out);
        return Success;
    }
};

std::vector<std::string> hoist_config(std::vector<std::string> args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            std::vector<std::string> front{args[i], args[i + 1]};
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                       args.begin() + static_cast<std::ptrdiff_t>(i + 2));
            args.insert(args.begin(), front.begin(), front.end());
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            std::string a = args[i];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            args.insert(args.begin(), a);
            break;
        }
    }
    return args;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app("Entropy balancing weights, treatment-effect estimators and simulation studies", "ebal");
    app.set_config("--config", "", "TOML config file; sections name the subcommand")->check(CLI::ExistingFile);
    app.require_subcommand(1);

    BalanceCmd balance;
    EstimateCmd estimate;
    SimulateCmd simulate;
    DiagnoseCmd diagnose;
    auto* b = app.add_subcommand("balance", "Fit entropy balancing weights");
    auto* e = app.add_subcommand("estimate", "Estimate the effect with one or more estimators");
    auto* s = app.add_subcommand("simulate", "Run a simulation study");
    auto* d = app.add_subcommand("diagnose", "Report covariate imbalance under given weights");
    balance.add(b);
    estimate.add(e);
    simulate.add(s);
    diagnose.add(d);

    const auto args = hoist_config(raw_args);
    std::vector<std::string> storage{"ebal"};
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : storage) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return Success;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return Success;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << "\n";
        return UsageError;
    }

    try {
        if (b->parsed()) return balance.run(out);
        if (e->parsed()) return estimate.run(out);
        if (s->parsed()) return simulate.run(out);
        return diagnose.run(out);
    } catch (const InfeasibleFailure& ex) {
        err << "infeasible: " << ex.what() << "\n";
        return Infeasible;
    } catch (const SeparationError& ex) {
        err << "infeasible: " << ex.what() << "\n";
        return Infeasible;
    } catch (const OverlapError& ex) {
        err << "infeasible: " << ex.what() << "\n";
        return Infeasible;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return UsageError;
    }
}

}  // namespace ebal::cli
