#include "ebal/variance.hpp"

#include <cmath>
#include <limits>

namespace ebal {

namespace {

double log_sum_exp(const Vector& z) {
    const double m = z.maxCoeff();
    return m + std::log((z.array() - m).exp().sum());
}

double outcome_or_zero(const ObservationalDataset& data, Index i, bool needed) {
    if (!needed) return 0.0;
    if (!data.outcome_observed()[static_cast<std::size_t>(i)]) {
        throw InvalidInputError("sandwich variance needs the outcome of row " + std::to_string(i));
    }
    return data.outcome()(i);
}

double condition_number(const Matrix& A) {
    Eigen::JacobiSVD<Matrix> svd(A);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    return smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
}

}  // namespace

EstimatingEquationStack eb_estimating_equations(const ObservationalDataset& data,
                                                const Matrix& moments, const Vector& params,
                                                double kappa, TargetPopulation population) {
    const Index n = data.size(), p = moments.cols();
    if (moments.rows() != n) throw InvalidInputError("moments row count differs from dataset size");
    const bool patt = population != TargetPopulation::FullSample;
    const Index dim = 2 * p + (patt ? 2 : 1);
    if (params.size() != dim) throw InvalidInputError("estimating equations: wrong parameter length");

    const Vector m = params.head(p);
    const Vector theta = params.segment(p, p);

    EstimatingEquationStack st;
    st.params = params;
    st.kappa = kappa;
    st.population = population;
    st.zeta = Matrix::Zero(n, dim);
    st.A = Matrix::Zero(dim, dim);

    for (Index i = 0; i < n; ++i) {
        const bool treated = data.treatment()[static_cast<std::size_t>(i)] == 1;
        const bool source = patt ? !treated : treated;
        const bool target = patt ? treated : true;
        const Vector c = moments.row(i).transpose();
        const Vector cm = c - m;
        auto z = st.zeta.row(i);
        if (target) {
            z.head(p) = cm.transpose();
            st.A.block(0, 0, p, p).diagonal().array() += 1.0;
        }
        if (source) {
            const double l = std::exp(theta.dot(c) + kappa);
            z.segment(p, p) = l * cm.transpose();
            st.A.block(p, 0, p, p).diagonal().array() += l;
            st.A.block(p, p, p, p) -= l * cm * c.transpose();
        }
        if (patt) {
            const double mu11 = params(2 * p), gamma = params(2 * p + 1);
            if (treated) {
                const double y = outcome_or_zero(data, i, true);
                z(2 * p) = y - mu11;
                st.A(2 * p, 2 * p) += 1.0;
            } else {
                const double y = outcome_or_zero(data, i, true);
                const double l = std::exp(theta.dot(c) + kappa);
                const double r = y + gamma - mu11;
                z(2 * p + 1) = l * r;
                st.A.block(2 * p + 1, p, 1, p) -= l * r * c.transpose();
                st.A(2 * p + 1, 2 * p) += l;
                st.A(2 * p + 1, 2 * p + 1) -= l;
            }
        } else if (source) {
            const double mu = params(2 * p);
            const double y = outcome_or_zero(data, i, true);
            const double l = std::exp(theta.dot(c) + kappa);
            z(2 * p) = l * (y - mu);
            st.A.block(2 * p, p, 1, p) -= l * (y - mu) * c.transpose();
            st.A(2 * p, 2 * p) += l;
        }
    }
    st.A /= static_cast<double>(n);
    st.B = st.zeta.transpose() * st.zeta / static_cast<double>(n);
    return st;
}

EstimatingEquationStack eb_estimating_equations(const ObservationalDataset& data,
                                                const Matrix& moments,
                                                const BalanceSolution& solution,
                                                TargetPopulation population) {
    if (solution.status != SolveStatus::Converged) {
        throw NotConvergedError("sandwich variance needs a converged balancing solution");
    }
    const GroupRoles roles = group_roles(data, population);
    const Index p = moments.cols();
    if (solution.theta.size() != p || solution.weights.size() != static_cast<Index>(roles.source.size())) {
        throw InvalidInputError("solution does not match the moments/roles");
    }
    const bool patt = population != TargetPopulation::FullSample;
    const Matrix src = select_rows(moments, roles.source);
    const double kappa =
        std::log(static_cast<double>(roles.target.size())) - log_sum_exp(src * solution.theta);

    double wy = 0.0;
    for (std::size_t r = 0; r < roles.source.size(); ++r) {
        wy += solution.weights(static_cast<Index>(r)) *
              outcome_or_zero(data, roles.source[r], true);
    }

    Vector params(2 * p + (patt ? 2 : 1));
    params.head(p) = target_for(moments, roles).values;
    params.segment(p, p) = solution.theta;
    if (patt) {
        double s = 0.0;
        for (Index i : roles.target) s += outcome_or_zero(data, i, true);
        const double mu11 = s / static_cast<double>(roles.target.size());
        params(2 * p) = mu11;
        params(2 * p + 1) = mu11 - wy;
    } else {
        params(2 * p) = wy;
    }
    return eb_estimating_equations(data, moments, params, kappa, population);
}

SandwichResult sandwich(const Matrix& A, const Matrix& B, Index n) {
    SandwichResult out;
    out.condition_number = condition_number(A);
    Eigen::FullPivLU<Matrix> lu(A);
    if (!lu.isInvertible() || !(out.condition_number < 1e14)) {
        throw RankDeficientError("estimating-equation derivative matrix is singular (collinear moments?)");
    }
    const Matrix Ainv = lu.inverse();
    out.covariance = Ainv * B * Ainv.transpose() / static_cast<double>(n);
    out.variance = std::max(0.0, out.covariance(A.rows() - 1, A.cols() - 1));
    return out;
}

SandwichResult sandwich_variance(const ObservationalDataset& data, const Matrix& moments,
                                 const BalanceSolution& solution, TargetPopulation population) {
    const auto st = eb_estimating_equations(data, moments, solution, population);
    return sandwich(st.A, st.B, data.size());
}

SandwichResult sandwich_variance_ipw(const ObservationalDataset& data, const Matrix& moments,
                                     const PropensityFit& fit, TargetPopulation population) {
    if (!fit.converged) throw NotConvergedError("IPW sandwich needs a converged propensity fit");
    const Index n = data.size();
    const Index q = fit.theta.size();
    const Index p = moments.cols();
    if (moments.rows() != n || q != p + (fit.intercept ? 1 : 0)) {
        throw InvalidInputError("IPW sandwich: moments do not match the propensity fit");
    }
    const bool patt = population != TargetPopulation::FullSample;
    Matrix X(n, q);
    if (fit.intercept) {
        X.col(0).setOnes();
        X.rightCols(p) = moments;
    } else {
        X = moments;
    }
    const Vector eta = X * fit.theta;
    const GroupRoles roles = group_roles(data, population);

    // Scale the weight function so it sums to the target size over sources.
    Vector omega(n), domega(n);
    for (Index i = 0; i < n; ++i) {
        if (patt) {
            omega(i) = std::exp(eta(i));
            domega(i) = omega(i);
        } else {
            omega(i) = 1.0 + std::exp(-eta(i));
            domega(i) = -std::exp(-eta(i));
        }
    }
    double src_sum = 0.0, wy = 0.0;
    for (Index i : roles.source) src_sum += omega(i);
    const double k = static_cast<double>(roles.target.size()) / src_sum;
    omega *= k;
    domega *= k;
    for (Index i : roles.source) wy += omega(i) / static_cast<double>(roles.target.size()) * outcome_or_zero(data, i, true);

    const Index dim = q + (patt ? 2 : 1);
    Matrix zeta = Matrix::Zero(n, dim);
    Matrix A = Matrix::Zero(dim, dim);
    double mu11 = 0.0;
    if (patt) {
        for (Index i : roles.target) mu11 += outcome_or_zero(data, i, true);
        mu11 /= static_cast<double>(roles.target.size());
    }
    const double gamma = mu11 - wy;
    for (Index i = 0; i < n; ++i) {
        const bool treated = data.treatment()[static_cast<std::size_t>(i)] == 1;
        const double e = 1.0 / (1.0 + std::exp(-eta(i)));
        const Vector x = X.row(i).transpose();
        zeta.row(i).head(q) = ((treated ? 1.0 : 0.0) - e) * x.transpose();
        A.topLeftCorner(q, q) += e * (1.0 - e) * x * x.transpose();
        if (patt) {
            if (treated) {
                const double y = outcome_or_zero(data, i, true);
                zeta(i, q) = y - mu11;
                A(q, q) += 1.0;
            } else {
                const double y = outcome_or_zero(data, i, true);
                const double r = y + gamma - mu11;
                zeta(i, q + 1) = omega(i) * r;
                A.block(q + 1, 0, 1, q) -= domega(i) * r * x.transpose();
                A(q + 1, q) += omega(i);
                A(q + 1, q + 1) -= omega(i);
            }
        } else if (treated) {
            const double y = outcome_or_zero(data, i, true);
            zeta(i, q) = omega(i) * (y - wy);
            A.block(q, 0, 1, q) -= domega(i) * (y - wy) * x.transpose();
            A(q, q) += omega(i);
        }
    }
    A /= static_cast<double>(n);
    const Matrix B = zeta.transpose() * zeta / static_cast<double>(n);
    return sandwich(A, B, n);
}

MomentCovariances plugin_moment_covariances(const Matrix& moments, const Vector& propensity,
                                            const Vector& y0, const Vector& y1,
                                            const std::vector<int>& treatment, const Vector& g0,
                                            const Vector& g1) {
    const Index n = moments.rows(), p = moments.cols();
    if (propensity.size() != n || y0.size() != n || y1.size() != n ||
        static_cast<Index>(treatment.size()) != n) {
        throw InvalidInputError("plugin covariances: length mismatch");
    }
    if ((propensity.array() <= 0.0).any() || (propensity.array() >= 1.0).any()) {
        throw OverlapError("plugin covariances: propensity values must lie strictly inside (0,1)");
    }
    const Vector a = propensity / propensity.sum();
    const Vector l = propensity.array() / (1.0 - propensity.array());
    const Vector q = 1.0 - propensity.array();

    const Vector Ec = moments.transpose() * a;
    const double E0 = a.dot(y0), E1 = a.dot(y1);
    const Matrix cc = moments.rowwise() - Ec.transpose();
    const Vector d0 = y0.array() - E0, d1 = y1.array() - E1;

    MomentCovariances cov;
    cov.H_c = cc.transpose() * a.asDiagonal() * cc;
    cov.H_c0 = cc.transpose() * a.cwiseProduct(d0);
    cov.H_c1 = cc.transpose() * a.cwiseProduct(d1);
    cov.H_1 = a.dot(d1.cwiseProduct(d1));
    cov.H_0 = a.dot(d0.cwiseProduct(d0));
    const Vector al = a.cwiseProduct(l);
    cov.G_c = cc.transpose() * al.asDiagonal() * cc;
    cov.G_c0 = cc.transpose() * al.cwiseProduct(d0);
    cov.G_0 = al.dot(d0.cwiseProduct(d0));
    const Vector aq = a.cwiseProduct(q);
    cov.K_c = moments.transpose() * aq.asDiagonal() * moments;
    cov.Km_c0 = moments.transpose() * aq.cwiseProduct(d0);
    cov.Km_c1 = moments.transpose() * aq.cwiseProduct(d1);
    Index n1 = 0;
    for (int t : treatment) n1 += t;
    cov.pi = static_cast<double>(n1) / static_cast<double>(n);
    (void)p;

    if (g0.size() == n && g1.size() == n) {
        const Vector r0 = g0.array() - a.dot(g0), r1 = g1.array() - a.dot(g1);
        cov.H_g0g1 = a.dot(r0.cwiseProduct(r1));
        cov.H_g0 = a.dot(r0.cwiseProduct(r0));
        cov.G_g0 = al.dot(r0.cwiseProduct(r0));
    } else if (g0.size() || g1.size()) {
        throw InvalidInputError("plugin covariances: regression vectors must both have length n");
    }
    return cov;
}

namespace {

void require_pi(const MomentCovariances& cov) {
    if (!(cov.pi > 0.0 && cov.pi <= 1.0)) throw InvalidInputError("covariances: pi must lie in (0,1]");
}

}  // namespace

double v_eb(const MomentCovariances& cov) {
    require_pi(cov);
    Eigen::FullPivLU<Matrix> lu(cov.H_c);
    if (!lu.isInvertible()) throw RankDeficientError("v_eb: H_c is singular");
    const Vector Hinv_h0 = lu.solve(cov.H_c0);
    const Vector inner = 2.0 * cov.G_c0 - cov.H_c0 - cov.G_c * Hinv_h0 + 2.0 * cov.H_c1;
    return (cov.H_1 + cov.G_0 - Hinv_h0.dot(inner)) / cov.pi;
}

double v_ipw_closed_form(const MomentCovariances& cov) {
    require_pi(cov);
    Eigen::FullPivLU<Matrix> lu(cov.K_c);
    if (!lu.isInvertible()) throw RankDeficientError("v_ipw: K_c is singular");
    const Vector Kinv_h0 = lu.solve(cov.H_c0);
    const Vector inner = cov.H_c0 - 2.0 * cov.Km_c0 + 2.0 * cov.Km_c1;
    return (cov.H_1 + cov.G_0 - Kinv_h0.dot(inner)) / cov.pi;
}

double v_bound(const MomentCovariances& cov) {
    require_pi(cov);
    if (!cov.H_g0g1 || !cov.H_g0 || !cov.G_g0) {
        throw InvalidInputError("v_bound needs the regression-function covariance blocks");
    }
    return (cov.H_1 + cov.G_0 - 2.0 * *cov.H_g0g1 - *cov.G_g0 + *cov.H_g0) / cov.pi;
}

}  // namespace ebal
