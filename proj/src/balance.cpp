#include "ebal/balance.hpp"

#include <cmath>
#include <limits>

namespace ebal {

void SolverSettings::validate() const {
    if (!(grad_tol > 0.0)) throw InvalidInputError("solver: grad_tol must be positive");
    if (max_iter < 1) throw InvalidInputError("solver: max_iter must be at least 1");
    if (!(backtrack > 0.0 && backtrack < 1.0)) throw InvalidInputError("solver: backtrack factor must be in (0,1)");
    if (!(armijo > 0.0 && armijo < 1.0)) throw InvalidInputError("solver: armijo constant must be in (0,1)");
    if (!(divergence_threshold > 0.0)) throw InvalidInputError("solver: divergence threshold must be positive");
}

void BalanceProblem::validate() const {
    if (source_moments.rows() < 1) throw InvalidInputError("balance problem: no source units");
    if (source_moments.cols() < 1) throw InvalidInputError("balance problem: no moment functions");
    if (target.values.size() != source_moments.cols()) {
        throw InvalidInputError("balance problem: target length differs from moment count");
    }
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
        throw InvalidInputError("balance problem: ridge must be finite and nonnegative");
    }
    if (!source_moments.allFinite() || !target.values.allFinite()) {
        throw InvalidInputError("balance problem: non-finite moments or target");
    }
    settings.validate();
}

std::string to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Converged: return "converged";
        case SolveStatus::InfeasibleDetected: return "infeasible-detected";
        case SolveStatus::MaxIter: return "max-iter";
    }
    return "unknown";
}

namespace {

double log_sum_exp(const Vector& z) {
    const double m = z.maxCoeff();
    return m + std::log((z.array() - m).exp().sum());
}

Vector softmax(const Vector& z) {
    Vector w = (z.array() - z.maxCoeff()).exp();
    return w / w.sum();
}

void check_theta(const Vector& theta, const BalanceProblem& problem) {
    if (theta.size() != problem.source_moments.cols()) {
        throw InvalidInputError("theta length differs from moment count");
    }
    if (!theta.allFinite()) throw InvalidInputError("theta must be finite");
}

}  // namespace

Vector tilt_weights(const Vector& theta, const Matrix& source_moments) {
    return softmax(source_moments * theta);
}

double dual_objective(const Vector& theta, const BalanceProblem& problem) {
    check_theta(theta, problem);
    const Matrix& C = problem.source_moments;
    const Vector& target = problem.target.values;
    if (problem.ridge == 0.0) {
        return log_sum_exp(C * theta) - theta.dot(target);
    }
    const Vector z = (C.rowwise() - target.transpose()) * theta;
    return log_sum_exp(z) + 0.5 * problem.ridge * theta.squaredNorm();
}

Vector dual_gradient(const Vector& theta, const BalanceProblem& problem) {
    check_theta(theta, problem);
    const Matrix centered = problem.source_moments.rowwise() - problem.target.values.transpose();
    const Vector w = softmax(problem.source_moments * theta);
    return centered.transpose() * w + problem.ridge * theta;
}

Matrix dual_hessian(const Vector& theta, const BalanceProblem& problem) {
    check_theta(theta, problem);
    const Matrix& C = problem.source_moments;
    const Vector w = softmax(C * theta);
    const Vector mean = C.transpose() * w;
    const Matrix dev = C.rowwise() - mean.transpose();
    Matrix H = dev.transpose() * w.asDiagonal() * dev;
    H.diagonal().array() += problem.ridge;
    return 0.5 * (H + H.transpose());
}

namespace {

// Dual on standardized, target-centered features D = (C - target) / s with
// the ridge expressed in original-scale coefficients theta = theta_s / s.
struct StandardizedDual {
    Matrix D;
    Vector inv_s2;
    double ridge;

    double value(const Vector& ts) const {
        return log_sum_exp(D * ts) + 0.5 * ridge * (ts.array().square() * inv_s2.array()).sum();
    }

    void derivatives(const Vector& ts, Vector& w, Vector& g, Matrix& H) const {
        w = softmax(D * ts);
        const Vector mean = D.transpose() * w;
        g = mean + ridge * ts.cwiseProduct(inv_s2);
        const Matrix dev = D.rowwise() - mean.transpose();
        H = dev.transpose() * w.asDiagonal() * dev;
        H = 0.5 * (H + H.transpose());
        H.diagonal() += ridge * inv_s2;
    }
};

Vector newton_direction(const Matrix& H, const Vector& g) {
    const Index p = H.rows();
    Eigen::LLT<Matrix> llt(H);
    if (llt.info() == Eigen::Success) {
        Vector d = -llt.solve(g);
        if (d.allFinite()) return d;
    }
    const double scale = std::max(H.trace() / static_cast<double>(p), std::numeric_limits<double>::min());
    double jitter = 1e-12 * scale;
    for (int attempt = 0; attempt < 8; ++attempt, jitter *= 100.0) {
        Matrix Hj = H;
        Hj.diagonal().array() += jitter;
        Eigen::LLT<Matrix> lj(Hj);
        if (lj.info() == Eigen::Success) {
            Vector d = -lj.solve(g);
            if (d.allFinite()) return d;
        }
    }
    return -g;
}

}  // namespace

BalanceSolution solve(const BalanceProblem& problem) {
    problem.validate();
    const auto& st = problem.settings;
    const Matrix& C = problem.source_moments;
    const Vector& target = problem.target.values;
    const Index n0 = C.rows(), p = C.cols();

    BalanceSolution sol;
    sol.theta = Vector::Zero(p);

    if (n0 == 1) {
        const Vector diff = C.row(0).transpose() - target;
        sol.weights = Vector::Ones(1);
        sol.residual_imbalance = diff;
        sol.dual_value = dual_objective(sol.theta, problem);
        sol.gradient_norm = diff.cwiseAbs().maxCoeff();
        const double tol = st.grad_tol * (1.0 + target.cwiseAbs().maxCoeff());
        sol.status = (problem.ridge > 0.0 || sol.gradient_norm <= tol) ? SolveStatus::Converged
                                                                      : SolveStatus::InfeasibleDetected;
        return sol;
    }

    const Vector mu = C.colwise().mean();
    Vector s(p);
    for (Index j = 0; j < p; ++j) {
        s(j) = std::sqrt((C.col(j).array() - mu(j)).square().mean());
        if (!(s(j) > 1e-12 * std::max(1.0, std::abs(mu(j))))) {
            throw InvalidInputError("moment column " + std::to_string(j) +
                                    " is constant over the source units");
        }
    }

    StandardizedDual dual;
    dual.D = (C.rowwise() - target.transpose()).array().rowwise() / s.transpose().array();
    dual.inv_s2 = s.array().square().inverse();
    dual.ridge = problem.ridge;

    Vector ts = Vector::Zero(p), w, g;
    Matrix H;
    double f = dual.value(ts);
    double prev_gnorm = std::numeric_limits<double>::infinity();
    bool lp_done = false;
    bool converged = false;
    bool infeasible = false;
    int it = 0;
    for (;; ++it) {
        dual.derivatives(ts, w, g, H);
        const double gnorm = g.cwiseAbs().maxCoeff();
        if (gnorm <= st.grad_tol) {
            converged = true;
            break;
        }
        if (problem.ridge == 0.0 && !lp_done && ts.cwiseAbs().maxCoeff() > st.divergence_threshold &&
            gnorm > 0.5 * prev_gnorm) {
            lp_done = true;
            sol.lp_consulted = true;
            if (check_feasibility(problem).status != Feasibility::Feasible) {
                infeasible = true;
                break;
            }
        }
        if (it >= st.max_iter) break;
        prev_gnorm = gnorm;

        const Vector d = newton_direction(H, g);
        const double slope = g.dot(d);
        double alpha = 1.0;
        bool accepted = false;
        for (int k = 0; k < 60; ++k, alpha *= st.backtrack) {
            const Vector trial = ts + alpha * d;
            const double ft = dual.value(trial);
            if (std::isfinite(ft) && ft <= f + st.armijo * alpha * slope + 8.0 * std::numeric_limits<double>::epsilon() * std::abs(f)) {
                ts = trial;
                f = ft;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }

    // Polish: full Newton steps while they keep shrinking the gradient.
    for (int k = 0; converged && k < 2; ++k) {
        const double gnorm = g.cwiseAbs().maxCoeff();
        if (gnorm == 0.0) break;
        const Vector trial = ts + newton_direction(H, g);
        Vector wt, gt;
        Matrix Ht;
        dual.derivatives(trial, wt, gt, Ht);
        if (!gt.allFinite() || !(gt.cwiseAbs().maxCoeff() < gnorm)) break;
        ts = trial;
        g = gt;
        H = Ht;
    }

    if (!converged && !infeasible && problem.ridge == 0.0 && !lp_done) {
        sol.lp_consulted = true;
        infeasible = check_feasibility(problem).status != Feasibility::Feasible;
    }

    w = softmax(dual.D * ts);
    sol.theta = ts.cwiseQuotient(s);
    sol.weights = w;
    sol.iterations = it;
    sol.residual_imbalance = (C.rowwise() - target.transpose()).transpose() * w;
    sol.dual_value = dual_objective(sol.theta, problem);
    sol.gradient_norm = g.cwiseAbs().maxCoeff();
    sol.status = converged    ? SolveStatus::Converged
                 : infeasible ? SolveStatus::InfeasibleDetected
                              : SolveStatus::MaxIter;
    return sol;
}

HullMembership check_feasibility(const BalanceProblem& problem) {
    if (problem.ridge != 0.0) {
        throw InvalidInputError("check_feasibility applies to the exact problem (ridge = 0)");
    }
    if (problem.source_moments.cols() != problem.target.values.size()) {
        throw InvalidInputError("check_feasibility: target length differs from moment count");
    }
    return hull_membership(problem.source_moments, problem.target.values);
}

ImbalanceReport imbalance_report(const Vector& weights, const Matrix& source_moments,
                                 const Vector& target, const Matrix& target_moments) {
    if (weights.size() != source_moments.rows() || target.size() != source_moments.cols() ||
        target_moments.cols() != source_moments.cols()) {
        throw InvalidInputError("imbalance_report: dimension mismatch");
    }
    if (std::abs(weights.sum() - 1.0) > 1e-8) {
        throw InvalidInputError("imbalance_report: weights must sum to one");
    }
    ImbalanceReport rep;
    rep.raw = (source_moments.rowwise() - target.transpose()).transpose() * weights;
    rep.standardized = rep.raw;
    const Index m = target_moments.rows();
    if (m >= 2) {
        const Vector mean = target_moments.colwise().mean();
        for (Index j = 0; j < target.size(); ++j) {
            const double var =
                (target_moments.col(j).array() - mean(j)).square().sum() / static_cast<double>(m - 1);
            if (var > 0.0) rep.standardized(j) /= std::sqrt(var);
        }
    }
    return rep;
}

}  // namespace ebal
