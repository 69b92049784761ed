#include "ebal/propensity.hpp"

#include "ebal/hull_lp.hpp"

#include <cmath>
#include <limits>

namespace ebal {

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double expit(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

PropensityFit fit_logistic_mle(const Matrix& moments, const std::vector<int>& treatment,
                               bool intercept, const LogisticSettings& settings) {
    const Index n = moments.rows(), p = moments.cols();
    if (static_cast<Index>(treatment.size()) != n) {
        throw InvalidInputError("fit_logistic_mle: treatment length differs from row count");
    }
    if (!moments.allFinite()) throw InvalidInputError("fit_logistic_mle: non-finite features");
    Index n1 = 0;
    for (int t : treatment) {
        if (t != 0 && t != 1) throw InvalidInputError("fit_logistic_mle: treatment must be 0/1");
        n1 += t;
    }
    if (n1 == 0 || n1 == n) throw EstimandUndefinedError("fit_logistic_mle: both classes must be present");

    // Standardized design with optional leading intercept column.
    const Index q = p + (intercept ? 1 : 0);
    Vector center = Vector::Zero(p), scale = Vector::Ones(p);
    Matrix Z(n, q);
    if (intercept) Z.col(0).setOnes();
    for (Index j = 0; j < p; ++j) {
        const auto col = moments.col(j).array();
        if (intercept) {
            center(j) = col.mean();
            scale(j) = std::sqrt((col - center(j)).square().mean());
        } else {
            scale(j) = std::sqrt(col.square().mean());
        }
        if (!(scale(j) > 1e-12 * std::max(1.0, std::abs(center(j))))) {
            throw RankDeficientError("fit_logistic_mle: feature column " + std::to_string(j) +
                                     " is constant (collinear with the intercept)");
        }
        Z.col(j + (intercept ? 1 : 0)) = (col - center(j)) / scale(j);
    }
    Vector y(n);
    for (Index i = 0; i < n; ++i) y(i) = treatment[static_cast<std::size_t>(i)];

    auto loss = [&](const Vector& b) {
        const Vector eta = Z * b;
        double s = 0.0;
        for (Index i = 0; i < n; ++i) s += softplus(y(i) > 0.5 ? -eta(i) : eta(i));
        return s / static_cast<double>(n);
    };

    Vector b = Vector::Zero(q);
    if (intercept) b(0) = std::log(static_cast<double>(n1) / static_cast<double>(n - n1));
    double f = loss(b);
    PropensityFit fit;
    fit.intercept = intercept;
    Vector e(n), g(q);
    int it = 0;
    for (;; ++it) {
        const Vector eta = Z * b;
        for (Index i = 0; i < n; ++i) e(i) = expit(eta(i));
        g = Z.transpose() * (e - y) / static_cast<double>(n);
        fit.score_norm = g.cwiseAbs().maxCoeff();
        if (fit.score_norm <= settings.score_tol) {
            fit.converged = true;
            break;
        }
        if (it >= settings.max_iter || b.cwiseAbs().maxCoeff() > settings.separation_threshold) break;
        const Vector v = e.array() * (1.0 - e.array());
        Matrix H = Z.transpose() * v.asDiagonal() * Z / static_cast<double>(n);
        Eigen::LDLT<Matrix> ldlt(H);
        Vector d = -ldlt.solve(g);
        if (ldlt.info() != Eigen::Success || !d.allFinite() || g.dot(d) >= 0.0) {
            H.diagonal().array() += 1e-10 * std::max(H.trace() / static_cast<double>(q), 1e-300);
            d = -H.ldlt().solve(g);
            if (!d.allFinite() || g.dot(d) >= 0.0) d = -g;
        }
        double alpha = 1.0;
        bool accepted = false;
        for (int k = 0; k < 60; ++k, alpha *= 0.5) {
            const Vector trial = b + alpha * d;
            const double ft = loss(trial);
            if (ft <= f + 1e-4 * alpha * g.dot(d) + 8.0 * std::numeric_limits<double>::epsilon() * std::abs(f)) {
                b = trial;
                f = ft;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    fit.iterations = it;

    const double min_margin = std::min(e.minCoeff(), 1.0 - e.maxCoeff());
    const double margin_trigger =
        std::min(1e-3, std::max(1e-6, 10.0 * static_cast<double>(n) * settings.score_tol));
    const bool suspicious = !fit.converged || b.cwiseAbs().maxCoeff() > settings.separation_threshold ||
                            min_margin < margin_trigger;
    if (suspicious) {
        Matrix treated(n1, p), control(n - n1, p);
        Index a = 0, c = 0;
        for (Index i = 0; i < n; ++i) {
            if (treatment[static_cast<std::size_t>(i)] == 1) treated.row(a++) = moments.row(i);
            else control.row(c++) = moments.row(i);
        }
        if (!groups_overlap(treated, control, intercept)) {
            throw SeparationError(
                "logistic MLE does not exist: treated and control features are separated by a hyperplane");
        }
    }

    fit.theta = Vector(q);
    if (intercept) {
        const Vector slopes = b.tail(p).cwiseQuotient(scale);
        fit.theta(0) = b(0) - slopes.dot(center);
        fit.theta.tail(p) = slopes;
    } else {
        fit.theta = b.cwiseQuotient(scale);
    }
    fit.linear_predictor = Z * b;
    fit.fitted = e;
    fit.loglik = -f * static_cast<double>(n);
    return fit;
}

Vector ipw_weights(const PropensityFit& fit, const GroupRoles& roles) {
    if (!fit.converged) throw NotConvergedError("ipw weights need a converged propensity fit");
    const Vector& eta = fit.linear_predictor;
    Vector w(static_cast<Index>(roles.source.size()));
    if (roles.population == TargetPopulation::FullSample) {
        for (Index i = 0; i < fit.fitted.size(); ++i) {
            if (fit.fitted(i) <= 1e-12) {
                throw OverlapError("fitted propensity " + std::to_string(fit.fitted(i)) + " at unit " +
                                   std::to_string(i) + " too close to 0 for inverse weighting");
            }
        }
        for (std::size_t r = 0; r < roles.source.size(); ++r) {
            w(static_cast<Index>(r)) = 1.0 + std::exp(-eta(roles.source[r]));
        }
    } else {
        for (Index i = 0; i < fit.fitted.size(); ++i) {
            if (fit.fitted(i) >= 1.0 - 1e-12) {
                throw OverlapError("fitted propensity at unit " + std::to_string(i) +
                                   " is within 1e-12 of 1; overlap violated");
            }
        }
        const Vector src = select_rows(eta, roles.source);
        w = (src.array() - src.maxCoeff()).exp();
    }
    return w / w.sum();
}

Vector ipw_att_weights(const PropensityFit& fit, const std::vector<int>& treatment) {
    GroupRoles roles;
    roles.population = TargetPopulation::Treated;
    for (std::size_t i = 0; i < treatment.size(); ++i) {
        if (treatment[i] == 0) roles.source.push_back(static_cast<Index>(i));
    }
    if (roles.source.empty()) throw EstimandUndefinedError("no control units");
    return ipw_weights(fit, roles);
}

}  // namespace ebal
