#include "ebal/balance.hpp"
#include "ebal/core.hpp"
#include "ebal/estimators.hpp"
#include "ebal/hull_lp.hpp"
#include "ebal/propensity.hpp"
#include "ebal/simulation.hpp"
#include "ebal/variance.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

namespace py = pybind11;
using namespace ebal;

namespace {

TargetPopulation parse_target(const std::string& s) {
    if (s == "treated") return TargetPopulation::Treated;
    if (s == "full") return TargetPopulation::FullSample;
    throw InvalidInputError("unknown target '" + s + "' (treated|full)");
}

MomentSpec columns_spec(const ObservationalDataset& data, const std::optional<std::vector<std::string>>& cols) {
    if (!cols) return MomentSpec::raw_columns(data.num_covariates());
    std::vector<Index> idx;
    for (const auto& c : *cols) idx.push_back(data.covariate_index(c));
    if (idx.empty()) return MomentSpec();
    return MomentSpec::raw_columns(idx);
}

BalanceProblem make_problem(const Matrix& source, const Vector& target, double ridge, double grad_tol,
                            int max_iter) {
    BalanceProblem p;
    p.source_moments = source;
    p.target.values = target;
    p.target.population = TargetPopulation::Explicit;
    p.ridge = ridge;
    p.settings.grad_tol = grad_tol;
    p.settings.max_iter = max_iter;
    return p;
}

std::vector<EstimateReport> estimate(const ObservationalDataset& data, const std::vector<std::string>& names,
                                     const std::optional<std::vector<std::string>>& columns,
                                     const std::optional<std::vector<std::string>>& outcome_columns,
                                     const std::string& target, double ridge) {
    const auto pop = parse_target(target);
    const auto roles = group_roles(data, pop);
    const MomentSpec spec = columns_spec(data, columns);
    const Matrix m = evaluate_moments(data, spec);
    const MomentSpec out_spec = outcome_columns ? columns_spec(data, outcome_columns) : spec;
    const Matrix features = evaluate_moments(data, out_spec);

    std::optional<BalanceSolution> sol;
    std::optional<PropensityFit> pfit;
    std::optional<OutcomeFit> ofit;
    auto eb = [&]() -> const BalanceSolution& {
        if (!sol) {
            BalanceProblem p;
            p.source_moments = select_rows(m, roles.source);
            p.target = target_for(m, roles);
            p.ridge = ridge;
            sol = solve(p);
        }
        return *sol;
    };
    auto ps = [&]() -> const PropensityFit& {
        if (!pfit) pfit = fit_logistic_mle(m, data.treatment());
        return *pfit;
    };
    auto out = [&]() -> const OutcomeFit& {
        if (!ofit) ofit = fit_outcome_ols(data, out_spec, features, pop);
        return *ofit;
    };

    std::vector<EstimateReport> reports;
    for (const auto& name : names) {
        EstimateReport rep;
        switch (parse_estimator(name)) {
            case EstimatorKind::Ipw:
                rep = estimate_ipw(data, ps(), pop);
                rep.set_variance(sandwich_variance_ipw(data, m, *pfit, pop).variance);
                break;
            case EstimatorKind::Eb:
                rep = estimate_eb(data, eb(), pop);
                rep.set_variance(sandwich_variance(data, m, *sol, pop).variance);
                break;
            case EstimatorKind::IpwDr: rep = estimate_dr(data, ps(), out(), features, pop); break;
            case EstimatorKind::EbDr: rep = estimate_eb_dr(data, eb(), out(), features, pop); break;
            case EstimatorKind::Ols: rep = estimate_ols(data, out(), features, pop); break;
            case EstimatorKind::EbWls: rep = estimate_eb_wls(data, eb(), out_spec, features, pop); break;
        }
        reports.push_back(std::move(rep));
    }
    return reports;
}

py::dict sample_dict(const SimulatedSample& s) {
    py::dict d;
    d["data"] = s.data;
    d["x"] = s.x;
    d["z"] = s.z;
    d["propensity"] = s.propensity;
    d["y0"] = s.y0;
    d["y1"] = s.y1;
    d["truth"] = s.truth;
    return d;
}

}  // namespace

PYBIND11_MODULE(_ebal, m) {
    m.doc() = "Entropy balancing weights and treatment-effect estimators";

    static py::exception<Error> base(m, "EbalError", PyExc_RuntimeError);
    py::register_exception<InvalidInputError>(m, "InvalidInputError", base.ptr());
    py::register_exception<EstimandUndefinedError>(m, "EstimandUndefinedError", base.ptr());
    py::register_exception<EvaluationError>(m, "EvaluationError", base.ptr());
    py::register_exception<SeparationError>(m, "SeparationError", base.ptr());
    py::register_exception<OverlapError>(m, "OverlapError", base.ptr());
    py::register_exception<RankDeficientError>(m, "RankDeficientError", base.ptr());
    py::register_exception<NotConvergedError>(m, "NotConvergedError", base.ptr());

    py::class_<ObservationalDataset>(m, "Dataset")
        .def(py::init([](Matrix x, std::vector<int> t, Vector y, std::optional<std::vector<bool>> observed,
                         std::optional<std::vector<std::string>> names) {
                 return ObservationalDataset(std::move(x), std::move(t), std::move(y),
                                             observed.value_or(std::vector<bool>{}),
                                             names.value_or(std::vector<std::string>{}));
             }),
             py::arg("covariates"), py::arg("treatment"), py::arg("outcome"), py::arg("observed") = py::none(),
             py::arg("names") = py::none())
        .def_property_readonly("covariates", &ObservationalDataset::covariates)
        .def_property_readonly("treatment", &ObservationalDataset::treatment)
        .def_property_readonly("outcome", &ObservationalDataset::outcome)
        .def_property_readonly("observed", &ObservationalDataset::outcome_observed)
        .def_property_readonly("names", &ObservationalDataset::covariate_names)
        .def_property_readonly("num_treated", &ObservationalDataset::num_treated)
        .def_property_readonly("num_control", &ObservationalDataset::num_control)
        .def("__len__", &ObservationalDataset::size);

    py::class_<BalanceSolution>(m, "BalanceSolution")
        .def_readonly("theta", &BalanceSolution::theta)
        .def_readonly("weights", &BalanceSolution::weights)
        .def_readonly("iterations", &BalanceSolution::iterations)
        .def_readonly("residual_imbalance", &BalanceSolution::residual_imbalance)
        .def_readonly("dual_value", &BalanceSolution::dual_value)
        .def_readonly("gradient_norm", &BalanceSolution::gradient_norm)
        .def_property_readonly("status", [](const BalanceSolution& s) { return to_string(s.status); })
        .def_property_readonly("sum_squared_weights", &BalanceSolution::sum_squared_weights)
        .def_property_readonly("effective_sample_size", &BalanceSolution::effective_sample_size);

    py::class_<PropensityFit>(m, "PropensityFit")
        .def_readonly("coefficients", &PropensityFit::theta)
        .def_readonly("fitted", &PropensityFit::fitted)
        .def_readonly("converged", &PropensityFit::converged)
        .def_readonly("loglik", &PropensityFit::loglik)
        .def_readonly("iterations", &PropensityFit::iterations);

    py::class_<EstimateReport>(m, "EstimateReport")
        .def_readonly("estimator", &EstimateReport::estimator_id)
        .def_property_readonly("estimand", [](const EstimateReport& r) { return to_string(r.estimand); })
        .def_readonly("point", &EstimateReport::point)
        .def_readonly("counterfactual_mean", &EstimateReport::counterfactual_mean)
        .def_readonly("variance", &EstimateReport::variance)
        .def_readonly("std_error", &EstimateReport::std_error)
        .def_readonly("diagnostics", &EstimateReport::diagnostics);

    m.def(
        "solve",
        [](const Matrix& source, const Vector& target, double ridge, double grad_tol, int max_iter) {
            return solve(make_problem(source, target, ridge, grad_tol, max_iter));
        },
        py::arg("source_moments"), py::arg("target"), py::arg("ridge") = 0.0, py::arg("grad_tol") = 1e-9,
        py::arg("max_iter") = 100, "Entropy balancing weights on the source rows matching `target`.");

    m.def(
        "check_feasibility",
        [](const Matrix& source, const Vector& target) {
            const auto h = check_feasibility(make_problem(source, target, 0.0, 1e-9, 100));
            return py::make_tuple(to_string(h.status), h.margin);
        },
        py::arg("source_moments"), py::arg("target"), "(status, margin) of the exact balance constraints.");

    m.def(
        "dual_objective",
        [](const Matrix& source, const Vector& target, const Vector& theta, double ridge) {
            return dual_objective(theta, make_problem(source, target, ridge, 1e-9, 100));
        },
        py::arg("source_moments"), py::arg("target"), py::arg("theta"), py::arg("ridge") = 0.0);

    m.def(
        "dual_gradient",
        [](const Matrix& source, const Vector& target, const Vector& theta, double ridge) {
            return dual_gradient(theta, make_problem(source, target, ridge, 1e-9, 100));
        },
        py::arg("source_moments"), py::arg("target"), py::arg("theta"), py::arg("ridge") = 0.0);

    m.def(
        "fit_logistic",
        [](const Matrix& features, const std::vector<int>& treatment) {
            return fit_logistic_mle(features, treatment);
        },
        py::arg("features"), py::arg("treatment"), "Logistic MLE with intercept; coefficients intercept first.");

    m.def("estimate", &estimate, py::arg("data"), py::arg("estimators"), py::arg("columns") = py::none(),
          py::arg("outcome_columns") = py::none(), py::arg("target") = "treated", py::arg("ridge") = 0.0,
          "Runs the named estimators (ipw, eb, ipw-dr, eb-dr, ols, eb-wls); columns default to every covariate.");

    m.def(
        "sandwich_variance",
        [](const ObservationalDataset& data, const std::optional<std::vector<std::string>>& columns,
           const std::string& target) {
            const auto pop = parse_target(target);
            const auto roles = group_roles(data, pop);
            const Matrix mm = evaluate_moments(data, columns_spec(data, columns));
            BalanceProblem p;
            p.source_moments = select_rows(mm, roles.source);
            p.target = target_for(mm, roles);
            return sandwich_variance(data, mm, solve(p), pop).variance;
        },
        py::arg("data"), py::arg("columns") = py::none(), py::arg("target") = "treated");

    m.def(
        "gen_kang_schafer", [](Index n, std::uint64_t seed) { return sample_dict(gen_kang_schafer(n, seed)); },
        py::arg("n"), py::arg("seed"));

    m.def(
        "gen_lunceford_davidian",
        [](Index n, const std::string& beta, const std::string& xi, std::uint64_t seed) {
            return sample_dict(gen_lunceford_davidian(n, parse_level(beta), parse_level(xi), seed));
        },
        py::arg("n"), py::arg("beta"), py::arg("xi"), py::arg("seed"));

    m.def(
        "simulate",
        [](const std::string& family, std::optional<bool> ps_correct, std::optional<bool> outcome_correct,
           std::optional<std::string> beta, std::optional<std::string> xi, std::optional<std::string> scope,
           Index n, int reps, std::uint64_t seed, std::optional<std::vector<std::string>> estimators,
           unsigned threads, bool with_variance) {
            ScenarioSpec spec;
            spec.family = parse_family(family);
            spec.ks_ps_correct = ps_correct;
            spec.ks_outcome_correct = outcome_correct;
            if (beta) spec.ld_beta_level = parse_level(*beta);
            if (xi) spec.ld_xi_level = parse_level(*xi);
            if (scope) spec.ld_ps_scope = parse_scope(*scope);
            spec.n = n;
            spec.replications = reps;
            spec.seed = seed;
            std::vector<EstimatorKind> kinds;
            if (estimators) {
                for (const auto& e : *estimators) kinds.push_back(parse_estimator(e));
            } else {
                kinds = all_estimators();
            }
            StudyResult res;
            {
                py::gil_scoped_release release;
                res = run_study(spec, kinds, StudyOptions{threads, with_variance});
            }
            py::dict summary;
            for (const auto& s : res.summary) {
                py::dict e;
                e["count"] = s.count;
                e["mean"] = s.mean;
                e["bias"] = s.bias;
                e["sd"] = s.sd;
                e["rmse"] = s.rmse;
                e["mean_variance"] = s.mean_variance;
                summary[py::str(to_string(s.estimator))] = e;
            }
            py::list rows;
            for (const auto& r : res.rows) {
                rows.append(py::make_tuple(r.replication, to_string(r.estimator), r.estimate, r.variance));
            }
            py::dict out;
            out["truth"] = res.truth;
            out["failures"] = res.failures;
            out["summary"] = summary;
            out["rows"] = rows;
            return out;
        },
        py::arg("family"), py::arg("ps_correct") = py::none(), py::arg("outcome_correct") = py::none(),
        py::arg("beta") = py::none(), py::arg("xi") = py::none(), py::arg("scope") = py::none(),
        py::arg("n") = 1000, py::arg("reps") = 200, py::arg("seed") = 20240101, py::arg("estimators") = py::none(),
        py::arg("threads") = 1, py::arg("with_variance") = false);
}
