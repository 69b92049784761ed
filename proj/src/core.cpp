#include "ebal/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ebal {

ObservationalDataset::ObservationalDataset(Matrix covariates, std::vector<int> treatment,
                                           Vector outcome,
                                           std::vector<bool> outcome_observed,
                                           std::vector<std::string> covariate_names)
    : covariates_(std::move(covariates)),
      treatment_(std::move(treatment)),
      outcome_(std::move(outcome)),
      observed_(std::move(outcome_observed)),
      names_(std::move(covariate_names)) {
    const Index n = covariates_.rows();
    if (static_cast<Index>(treatment_.size()) != n || outcome_.size() != n) {
        throw InvalidInputError("dataset: covariates, treatment and outcome lengths differ");
    }
    if (observed_.empty()) observed_.assign(static_cast<std::size_t>(n), true);
    if (static_cast<Index>(observed_.size()) != n) {
        throw InvalidInputError("dataset: outcome mask length differs from unit count");
    }
    if (names_.empty()) {
        for (Index j = 0; j < covariates_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
    }
    if (static_cast<Index>(names_.size()) != covariates_.cols()) {
        throw InvalidInputError("dataset: covariate name count differs from column count");
    }
    for (Index i = 0; i < n; ++i) {
        const int t = treatment_[static_cast<std::size_t>(i)];
        if (t != 0 && t != 1) {
            throw InvalidInputError("dataset: treatment must be 0 or 1 (row " +
                                    std::to_string(i) + ")");
        }
        n_treated_ += t;
        for (Index j = 0; j < covariates_.cols(); ++j) {
            if (!std::isfinite(covariates_(i, j))) {
                throw InvalidInputError("dataset: non-finite covariate '" + names_[j] +
                                        "' at row " + std::to_string(i));
            }
        }
        if (observed_[static_cast<std::size_t>(i)] && !std::isfinite(outcome_(i))) {
            throw InvalidInputError("dataset: non-finite observed outcome at row " +
                                    std::to_string(i));
        }
    }
}

Index ObservationalDataset::covariate_index(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw InvalidInputError("unknown covariate column '" + name + "'");
    return static_cast<Index>(it - names_.begin());
}

std::vector<Index> ObservationalDataset::group(int t) const {
    std::vector<Index> rows;
    for (Index i = 0; i < size(); ++i) {
        if (treatment_[static_cast<std::size_t>(i)] == t) rows.push_back(i);
    }
    return rows;
}

MomentSpec::MomentSpec(std::vector<MomentFunction> functions) : functions_(std::move(functions)) {
    if (functions_.empty()) throw InvalidInputError("moment spec needs at least one function");
    for (std::size_t a = 0; a < functions_.size(); ++a) {
        auto f = functions_[a];
        if (f.first < 0 || f.second < 0) throw InvalidInputError("moment spec: negative column");
        // (j,k) and (k,j) are the same product
        if (f.kind == MomentFunction::Kind::Product && f.first > f.second) {
            std::swap(f.first, f.second);
            functions_[a] = f;
        }
        for (std::size_t b = 0; b < a; ++b) {
            if (functions_[b] == f) {
                throw InvalidInputError("moment spec: duplicate descriptor " +
                                        describe(static_cast<Index>(a)));
            }
        }
    }
}

MomentSpec MomentSpec::raw_columns(Index d) {
    std::vector<MomentFunction> fs;
    for (Index j = 0; j < d; ++j) fs.push_back(MomentFunction::raw(j));
    return MomentSpec(std::move(fs));
}

MomentSpec MomentSpec::raw_columns(const std::vector<Index>& columns) {
    std::vector<MomentFunction> fs;
    for (Index j : columns) fs.push_back(MomentFunction::raw(j));
    return MomentSpec(std::move(fs));
}

std::string MomentSpec::describe(Index j, const std::vector<std::string>& names) const {
    const auto& f = functions_.at(static_cast<std::size_t>(j));
    auto col = [&](Index c) {
        if (c < static_cast<Index>(names.size())) return names[static_cast<std::size_t>(c)];
        return "col" + std::to_string(c);
    };
    switch (f.kind) {
        case MomentFunction::Kind::Raw: return col(f.first);
        case MomentFunction::Kind::Square: return col(f.first) + "^2";
        case MomentFunction::Kind::Product: return col(f.first) + "*" + col(f.second);
        case MomentFunction::Kind::Feature: return "feature[" + std::to_string(f.first) + "]";
    }
    return {};
}

Matrix evaluate_moments(const ObservationalDataset& data, const MomentSpec& spec,
                        const Matrix& features) {
    const Index n = data.size();
    const Index d = data.num_covariates();
    const Matrix& X = data.covariates();
    Matrix out(n, spec.size());
    for (Index j = 0; j < spec.size(); ++j) {
        const auto& f = spec.functions()[static_cast<std::size_t>(j)];
        const bool feature = f.kind == MomentFunction::Kind::Feature;
        const Index limit = feature ? features.cols() : d;
        if (f.first >= limit || (f.kind == MomentFunction::Kind::Product && f.second >= d)) {
            throw InvalidInputError("moment descriptor " + spec.describe(j, data.covariate_names()) +
                                    " references a missing column");
        }
        if (feature && features.rows() != n) {
            throw InvalidInputError("feature matrix row count differs from dataset size");
        }
        switch (f.kind) {
            case MomentFunction::Kind::Raw: out.col(j) = X.col(f.first); break;
            case MomentFunction::Kind::Square: out.col(j) = X.col(f.first).array().square(); break;
            case MomentFunction::Kind::Product:
                out.col(j) = X.col(f.first).cwiseProduct(X.col(f.second));
                break;
            case MomentFunction::Kind::Feature: out.col(j) = features.col(f.first); break;
        }
        for (Index i = 0; i < n; ++i) {
            if (!std::isfinite(out(i, j))) {
                throw EvaluationError("moment " + spec.describe(j, data.covariate_names()) +
                                      " is not finite at row " + std::to_string(i));
            }
        }
    }
    return out;
}

BalanceTarget treated_moment_target(const Matrix& moments, const std::vector<int>& treatment) {
    if (static_cast<Index>(treatment.size()) != moments.rows()) {
        throw InvalidInputError("treated_moment_target: length mismatch");
    }
    Vector sum = Vector::Zero(moments.cols());
    Index n1 = 0;
    for (Index i = 0; i < moments.rows(); ++i) {
        if (treatment[static_cast<std::size_t>(i)] == 1) {
            sum += moments.row(i).transpose();
            ++n1;
        }
    }
    if (n1 == 0) throw EstimandUndefinedError("no treated units: treated moment target undefined");
    return {sum / static_cast<double>(n1), TargetPopulation::Treated};
}

BalanceTarget full_sample_target(const Matrix& moments) {
    if (moments.rows() == 0) throw EstimandUndefinedError("empty sample: target undefined");
    return {moments.colwise().mean().transpose(), TargetPopulation::FullSample};
}

GroupRoles group_roles(const ObservationalDataset& data, TargetPopulation population) {
    GroupRoles roles;
    roles.population = population;
    switch (population) {
        case TargetPopulation::Treated:
            roles.source = data.group(0);
            roles.target = data.group(1);
            break;
        case TargetPopulation::FullSample:
            roles.source = data.group(1);
            roles.target.resize(static_cast<std::size_t>(data.size()));
            for (Index i = 0; i < data.size(); ++i) roles.target[static_cast<std::size_t>(i)] = i;
            break;
        case TargetPopulation::Explicit:
            roles.source = data.group(0);
            break;
    }
    if (roles.source.empty()) throw EstimandUndefinedError("no source units to reweight");
    if (population != TargetPopulation::Explicit && roles.target.empty()) {
        throw EstimandUndefinedError("no target units: estimand undefined");
    }
    return roles;
}

Matrix select_rows(const Matrix& m, const std::vector<Index>& rows) {
    Matrix out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
    return out;
}

Vector select_rows(const Vector& v, const std::vector<Index>& rows) {
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r)) = v(rows[r]);
    return out;
}

BalanceTarget target_for(const Matrix& moments, const GroupRoles& roles) {
    if (roles.target.empty()) throw EstimandUndefinedError("no target units");
    Vector sum = Vector::Zero(moments.cols());
    for (Index i : roles.target) sum += moments.row(i).transpose();
    return {sum / static_cast<double>(roles.target.size()), roles.population};
}

std::string to_string(Estimand e) {
    switch (e) {
        case Estimand::Patt: return "patt";
        case Estimand::CounterfactualMean: return "counterfactual-mean";
        case Estimand::PopulationMean: return "population-mean";
    }
    return "unknown";
}

void EstimateReport::set_variance(double v) {
    if (!(v >= 0.0)) {
        std::ostringstream os;
        os << "variance must be nonnegative, got " << v;
        throw InvalidInputError(os.str());
    }
    variance = v;
    std_error = std::sqrt(v);
}

}  // namespace ebal
