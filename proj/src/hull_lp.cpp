#include "ebal/hull_lp.hpp"

#include <cmath>
#include <limits>

namespace ebal {

namespace {

class Tableau {
public:
    Tableau(const Matrix& A, const Vector& b, double tol)
        : m_(A.rows()), n_(A.cols()), tol_(tol), T_(Matrix::Zero(A.rows() + 1, A.cols() + A.rows() + 1)),
          basis_(static_cast<std::size_t>(A.rows())) {
        for (Index i = 0; i < m_; ++i) {
            const double sign = b(i) < 0 ? -1.0 : 1.0;
            T_.row(i).head(n_) = sign * A.row(i);
            T_(i, n_ + i) = 1.0;
            T_(i, rhs()) = sign * b(i);
            basis_[static_cast<std::size_t>(i)] = n_ + i;
        }
    }

    Index rhs() const { return n_ + m_; }
    Index obj() const { return m_; }

    // Reduced costs for maximizing cost'x over the current basis.
    void price(const Vector& cost) {
        T_.row(obj()).setZero();
        for (Index j = 0; j < n_ + m_; ++j) T_(obj(), j) = -cost(j);
        for (Index i = 0; i < m_; ++i) {
            const double cb = cost(basis_[static_cast<std::size_t>(i)]);
            if (cb != 0.0) T_.row(obj()) += cb * T_.row(i);
        }
    }

    // Returns false on unboundedness; `allow` limits entering columns.
    LinearProgramResult::Status run(Index allow, int max_pivots, int& pivots) {
        while (pivots < max_pivots) {
            Index enter = -1;
            for (Index j = 0; j < allow; ++j) {
                if (T_(obj(), j) < -tol_) {
                    enter = j;
                    break;
                }
            }
            if (enter < 0) return LinearProgramResult::Status::Optimal;
            Index leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (Index i = 0; i < m_; ++i) {
                const double a = T_(i, enter);
                if (a > tol_) {
                    const double ratio = T_(i, rhs()) / a;
                    if (ratio < best - tol_ ||
                        (std::abs(ratio - best) <= tol_ &&
                         basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)])) {
                        best = ratio;
                        leave = i;
                    }
                }
            }
            if (leave < 0) return LinearProgramResult::Status::Unbounded;
            pivot(leave, enter);
            ++pivots;
        }
        return LinearProgramResult::Status::IterationLimit;
    }

    void pivot(Index r, Index c) {
        T_.row(r) /= T_(r, c);
        for (Index i = 0; i <= m_; ++i) {
            if (i != r) {
                const double f = T_(i, c);
                if (f != 0.0) T_.row(i) -= f * T_.row(r);
            }
        }
        basis_[static_cast<std::size_t>(r)] = c;
    }

    // Pivots zero-level artificials out of the basis where possible.
    void expel_artificials() {
        for (Index i = 0; i < m_; ++i) {
            if (basis_[static_cast<std::size_t>(i)] < n_) continue;
            for (Index j = 0; j < n_; ++j) {
                if (std::abs(T_(i, j)) > 1e3 * tol_) {
                    pivot(i, j);
                    break;
                }
            }
        }
    }

    double objective() const { return T_(obj(), rhs()); }

    Vector solution() const {
        Vector x = Vector::Zero(n_);
        for (Index i = 0; i < m_; ++i) {
            const Index j = basis_[static_cast<std::size_t>(i)];
            if (j < n_) x(j) = T_(i, rhs());
        }
        return x;
    }

private:
    Index m_, n_;
    double tol_;
    Matrix T_;
    std::vector<Index> basis_;
};

}  // namespace

LinearProgramResult solve_standard_lp(const Matrix& A, const Vector& b, const Vector& c,
                                      double tol) {
    if (A.rows() != b.size() || A.cols() != c.size()) {
        throw InvalidInputError("solve_standard_lp: inconsistent dimensions");
    }
    const Index m = A.rows(), n = A.cols();
    const int max_pivots = static_cast<int>(50 * (m + n) + 1000);
    LinearProgramResult result;
    Tableau tab(A, b, tol);

    Vector phase1 = Vector::Zero(n + m);
    phase1.tail(m).setConstant(-1.0);
    tab.price(phase1);
    auto status = tab.run(n + m, max_pivots, result.pivots);
    if (status == LinearProgramResult::Status::IterationLimit) {
        result.status = status;
        return result;
    }
    const double scale = 1.0 + b.cwiseAbs().sum();
    if (tab.objective() < -1e2 * tol * scale) {
        result.status = LinearProgramResult::Status::Infeasible;
        return result;
    }
    tab.expel_artificials();

    Vector phase2 = Vector::Zero(n + m);
    phase2.head(n) = c;
    tab.price(phase2);
    status = tab.run(n, max_pivots, result.pivots);
    result.status = status;
    result.x = tab.solution();
    result.objective = c.dot(result.x);
    return result;
}

MaxMinWeight max_min_weight(const Matrix& A, const Vector& b, double tol) {
    // w = v + t * 1 with v >= 0, t >= 0; maximize t.
    const Index n = A.cols();
    Matrix Aug(A.rows(), n + 1);
    Aug.leftCols(n) = A;
    Aug.col(n) = A.rowwise().sum();
    Vector cost = Vector::Zero(n + 1);
    cost(n) = 1.0;
    const auto lp = solve_standard_lp(Aug, b, cost, tol);
    MaxMinWeight out;
    if (lp.status == LinearProgramResult::Status::Infeasible ||
        lp.status == LinearProgramResult::Status::IterationLimit) {
        return out;
    }
    out.feasible = true;
    if (lp.status == LinearProgramResult::Status::Unbounded) {
        out.t = std::numeric_limits<double>::infinity();
        return out;
    }
    out.t = lp.x(n);
    out.w = lp.x.head(n).array() + out.t;
    return out;
}

std::string to_string(Feasibility f) {
    switch (f) {
        case Feasibility::Feasible: return "feasible";
        case Feasibility::Infeasible: return "infeasible";
        case Feasibility::Boundary: return "boundary";
    }
    return "unknown";
}

namespace {

// Centers and scales columns by the statistics of `ref`; constant columns are
// only centered.
void standardize_columns(const Matrix& ref, Matrix& a, Vector* v, Matrix* other = nullptr) {
    const Vector mu = ref.colwise().mean();
    for (Index j = 0; j < ref.cols(); ++j) {
        const double sd = std::sqrt((ref.col(j).array() - mu(j)).square().mean());
        const double s = sd > 0.0 ? sd : 1.0;
        a.col(j) = (a.col(j).array() - mu(j)) / s;
        if (v) (*v)(j) = ((*v)(j) - mu(j)) / s;
        if (other) other->col(j) = (other->col(j).array() - mu(j)) / s;
    }
}

}  // namespace

HullMembership hull_membership(const Matrix& points, const Vector& target, double tol) {
    if (points.cols() != target.size()) throw InvalidInputError("hull_membership: dimension mismatch");
    const Index n = points.rows(), p = points.cols();
    if (n == 0) return {Feasibility::Infeasible, 0.0};
    Matrix pts = points;
    Vector tgt = target;
    standardize_columns(points, pts, &tgt);

    Matrix A(p + 1, n);
    A.topRows(p) = pts.transpose();
    A.row(p).setOnes();
    Vector b(p + 1);
    b.head(p) = tgt;
    b(p) = 1.0;
    const auto mm = max_min_weight(A, b);
    if (!mm.feasible) return {Feasibility::Infeasible, 0.0};
    const double margin = static_cast<double>(n) * mm.t;
    return {margin > tol ? Feasibility::Feasible : Feasibility::Boundary, margin};
}

bool groups_overlap(const Matrix& group_a, const Matrix& group_b, bool equal_mass, double tol) {
    if (group_a.cols() != group_b.cols()) throw InvalidInputError("groups_overlap: dimension mismatch");
    const Index na = group_a.rows(), nb = group_b.rows(), p = group_a.cols();
    if (na == 0 || nb == 0) return false;
    Matrix all(na + nb, p);
    all << group_a, group_b;
    Matrix a = group_a, bgrp = group_b;
    standardize_columns(all, a, nullptr, &bgrp);

    const Index rows = p + (equal_mass ? 2 : 1);
    Matrix A = Matrix::Zero(rows, na + nb);
    A.block(0, 0, p, na) = a.transpose();
    A.block(0, na, p, nb) = -bgrp.transpose();
    Vector b = Vector::Zero(rows);
    if (equal_mass) {
        A.block(p, 0, 1, na).setOnes();
        A.block(p + 1, na, 1, nb).setOnes();
        b(p) = 1.0;
        b(p + 1) = 1.0;
    } else {
        A.row(p).setOnes();
        b(p) = 1.0;
    }
    const auto mm = max_min_weight(A, b);
    return mm.feasible && static_cast<double>(na + nb) * mm.t > tol;
}

}  // namespace ebal
