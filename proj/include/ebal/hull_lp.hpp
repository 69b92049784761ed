#pragma once

#include "ebal/core.hpp"

namespace ebal {

/// Outcome of a dense linear program in standard form.
struct LinearProgramResult {
    enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };
    Status status = Status::Infeasible;
    Vector x;
    double objective = 0.0;
    int pivots = 0;
};

/// maximize c'x subject to A x = b, x >= 0.
///
/// Two-phase tableau simplex with Bland's rule, meant for the short-and-wide
/// systems that show up in membership tests (a handful of rows, hundreds or
/// thousands of columns).
LinearProgramResult solve_standard_lp(const Matrix& A, const Vector& b, const Vector& c,
                                      double tol = 1e-10);

/// Largest t such that some w with A w = b and w_i >= t for all i exists.
/// `feasible` is false when no nonnegative solution exists at all.
struct MaxMinWeight {
    bool feasible = false;
    double t = 0.0;
    Vector w;
};

MaxMinWeight max_min_weight(const Matrix& A, const Vector& b, double tol = 1e-10);

enum class Feasibility { Feasible, Infeasible, Boundary };

std::string to_string(Feasibility f);

struct HullMembership {
    Feasibility status = Feasibility::Infeasible;
    /// n * (largest achievable minimum weight); 1 means uniform weights work.
    double margin = 0.0;
};

/// Is `target` inside the convex hull of the rows of `points` with every
/// point carrying strictly positive weight? Boundary when the best
/// achievable minimum weight, scaled by the point count, is below `tol`.
HullMembership hull_membership(const Matrix& points, const Vector& target, double tol = 1e-9);

/// Do strictly positive weights exist that give both groups the same
/// weighted moment sums (and, with `equal_mass`, the same total weight)?
/// This is the overlap condition under which a logistic MLE exists.
bool groups_overlap(const Matrix& group_a, const Matrix& group_b, bool equal_mass,
                    double tol = 1e-9);

}  // namespace ebal
