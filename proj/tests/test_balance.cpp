#include "doctest.h"

#include "ebal/balance.hpp"
#include "fixture.hpp"
#include "test_util.hpp"

#include <cmath>
#include <random>

using namespace ebal;
using testutil::problem;

namespace {

Matrix col(std::initializer_list<double> v) {
    Matrix m(static_cast<Index>(v.size()), 1);
    Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return m;
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

Vector random_vector(std::mt19937_64& rng, Index p, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Vector v(p);
    for (Index j = 0; j < p; ++j) v(j) = nd(rng);
    return v;
}

}  // namespace

TEST_CASE("settings and problem validation") {
    SolverSettings s;
    s.grad_tol = 0.0;
    CHECK_THROWS_AS(s.validate(), InvalidInputError);
    s = {};
    s.max_iter = 0;
    CHECK_THROWS_AS(s.validate(), InvalidInputError);
    s = {};
    s.backtrack = 1.0;
    CHECK_THROWS_AS(s.validate(), InvalidInputError);
    CHECK_THROWS_AS(problem(col({1, 2}), vec({1, 2})).validate(), InvalidInputError);
    CHECK_THROWS_AS(problem(col({1, 2}), vec({1}), -1.0).validate(), InvalidInputError);
    CHECK_THROWS_AS(problem(col({1, 2}), vec({1}), std::nan("")).validate(), InvalidInputError);
}

TEST_CASE("dual objective examples") {
    const auto p = problem(col({-1, 0, 1}), vec({0.5}));
    CHECK(dual_objective(vec({0.0}), p) == doctest::Approx(std::log(3.0)).epsilon(1e-15));
    CHECK(dual_objective(vec({0.0}), problem(col({-1, 0, 1}), vec({0.5}), 2.0)) ==
          doctest::Approx(std::log(3.0)).epsilon(1e-15));
    CHECK(std::abs(dual_objective(vec({1.0}), p) - fixture::dual_value) < 1e-14);

    Matrix one(1, 2);
    one << 0.3, -1.2;
    const auto single = problem(one, vec({2.0, 0.5}));
    const Vector theta = vec({0.7, -1.1});
    CHECK(dual_objective(theta, single) == doctest::Approx(theta.dot(one.row(0).transpose()) - theta.dot(vec({2.0, 0.5}))));
}

TEST_CASE("dual objective survives large arguments") {
    const auto p = problem(col({-1, 0, 1}), vec({0.5}));
    CHECK(std::isfinite(dual_objective(vec({800.0}), p)));
    CHECK(dual_objective(vec({800.0}), p) == doctest::Approx(400.0));
}

TEST_CASE("gradient at zero is mean minus target") {
    std::mt19937_64 rng(1);
    const auto in = testutil::random_feasible(rng, 10, 3);
    const Vector g = dual_gradient(Vector::Zero(3), problem(in.source, in.target));
    const Vector expected = in.source.colwise().mean().transpose() - in.target;
    CHECK((g - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("finite-difference gradient and Hessian") {
    std::mt19937_64 rng(2);
    for (double ridge : {0.0, 0.1, 3.0}) {
        for (int rep = 0; rep < 10; ++rep) {
            const auto in = testutil::random_feasible(rng, 15, 4);
            const auto p = problem(in.source, in.target, ridge);
            const Vector theta = random_vector(rng, 4, 0.7);
            const Vector g = dual_gradient(theta, p);
            const Matrix H = dual_hessian(theta, p);
            const double h = 1e-6;
            for (Index j = 0; j < 4; ++j) {
                Vector e = Vector::Zero(4);
                e(j) = h;
                const double fd = (dual_objective(theta + e, p) - dual_objective(theta - e, p)) / (2 * h);
                CHECK(std::abs(fd - g(j)) <= 1e-6 * std::max(1.0, std::abs(g(j))));
                const Vector fdg = (dual_gradient(theta + e, p) - dual_gradient(theta - e, p)) / (2 * h);
                CHECK((fdg - H.col(j)).cwiseAbs().maxCoeff() < 1e-6);
            }
            CHECK((H - H.transpose()).cwiseAbs().maxCoeff() == 0.0);
            Eigen::SelfAdjointEigenSolver<Matrix> es(H);
            CHECK(es.eigenvalues().minCoeff() >= ridge - 1e-12);
        }
    }
}

TEST_CASE("dual convexity") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ud(0.01, 0.99);
    for (int rep = 0; rep < 50; ++rep) {
        const auto in = testutil::random_feasible(rng, 12, 3);
        const auto p = problem(in.source, in.target, rep % 2 ? 0.5 : 0.0);
        const Vector a = random_vector(rng, 3, 2.0), b = random_vector(rng, 3, 2.0);
        const double t = ud(rng);
        CHECK(dual_objective(t * a + (1 - t) * b, p) <=
              t * dual_objective(a, p) + (1 - t) * dual_objective(b, p) + 1e-10);
    }
}

TEST_CASE("solve: already balanced") {
    Matrix c(4, 2);
    c << 0, 1, 2, 3, 1, -1, 1, 1;
    const Vector target = c.colwise().mean().transpose();
    const auto sol = solve(problem(c, target));
    CHECK(sol.status == SolveStatus::Converged);
    CHECK(sol.iterations <= 1);
    CHECK(sol.theta.cwiseAbs().maxCoeff() < 1e-12);
    CHECK((sol.weights.array() - 0.25).abs().maxCoeff() < 1e-14);
}

TEST_CASE("solve: scalar golden value") {
    const auto sol = solve(problem(col({-1, 0, 1}), vec({0.5})));
    REQUIRE(sol.status == SolveStatus::Converged);
    CHECK(std::abs(sol.theta(0) - fixture::theta_star) < 1e-10);
    for (Index i = 0; i < 3; ++i) CHECK(std::abs(sol.weights(i) - fixture::scalar_weights[i]) < 1e-10);
    CHECK(sol.gradient_norm <= 1e-9);
}

TEST_CASE("solve: target outside the hull") {
    const auto sol = solve(problem(col({0, 1}), vec({1.5})));
    CHECK(sol.status == SolveStatus::InfeasibleDetected);
    CHECK(sol.lp_consulted);
}

TEST_CASE("solve: vertex target terminates with a definitive status") {
    const auto sol = solve(problem(col({0, 1}), vec({1.0})));
    CHECK(sol.status != SolveStatus::MaxIter);
    if (sol.status == SolveStatus::Converged) CHECK(std::abs(sol.residual_imbalance(0)) <= 1e-9);
    Matrix tri(3, 2);
    tri << 0, 0, 1, 0, 0, 1;
    CHECK(solve(problem(tri, vec({0.9, 0.9}))).status == SolveStatus::InfeasibleDetected);
}

TEST_CASE("solve: single source unit") {
    Matrix one(1, 2);
    one << 1.0, 2.0;
    const auto hit = solve(problem(one, vec({1.0, 2.0})));
    CHECK(hit.status == SolveStatus::Converged);
    CHECK(hit.weights(0) == 1.0);
    CHECK(solve(problem(one, vec({1.0, 2.5}))).status == SolveStatus::InfeasibleDetected);
}

TEST_CASE("solve: constant source column is rejected") {
    Matrix c(3, 2);
    c << 1, 5, 2, 5, 3, 5;
    CHECK_THROWS_AS(solve(problem(c, vec({2.0, 5.0}))), InvalidInputError);
}

TEST_CASE("check_feasibility examples") {
    CHECK(check_feasibility(problem(col({0, 1}), vec({0.5}))).status == Feasibility::Feasible);
    CHECK(check_feasibility(problem(col({0, 1}), vec({1.0}))).status == Feasibility::Boundary);
    Matrix tri(3, 2);
    tri << 0, 0, 1, 0, 0, 1;
    CHECK(check_feasibility(problem(tri, vec({0.9, 0.9}))).status == Feasibility::Infeasible);
    CHECK_THROWS_AS(check_feasibility(problem(col({0, 1}), vec({0.5}), 1.0)), InvalidInputError);
}

TEST_CASE("solution invariants on random feasible instances") {
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 30; ++rep) {
        const Index p = 1 + rep % 5;
        const auto in = testutil::random_feasible(rng, 30 + rep, p);
        const auto sol = solve(problem(in.source, in.target));
        REQUIRE(sol.status == SolveStatus::Converged);
        CHECK(sol.weights.minCoeff() > 0.0);
        CHECK(std::abs(sol.weights.sum() - 1.0) < 1e-12);
        CHECK(sol.residual_imbalance.cwiseAbs().maxCoeff() < 1e-8);
        CHECK(sol.dual_value <= dual_objective(Vector::Zero(p), problem(in.source, in.target)) + 1e-15);
        // KKT: log(w_i / w_k) = theta'(c_i - c_k)
        for (Index i = 1; i < in.source.rows(); ++i) {
            const double lhs = std::log(sol.weights(i) / sol.weights(0));
            const double rhs = sol.theta.dot((in.source.row(i) - in.source.row(0)).transpose());
            CHECK(std::abs(lhs - rhs) < 1e-12 * std::max(1.0, std::abs(rhs)));
        }
    }
}

TEST_CASE("weights match the primal entropy oracle") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 8; ++rep) {
        const auto in = testutil::random_feasible(rng, 4 + rep % 3, 1 + rep % 2);
        const auto sol = solve(problem(in.source, in.target));
        REQUIRE(sol.status == SolveStatus::Converged);
        const Vector w = testutil::primal_entropy_oracle(in.source, in.interior_weights);
        CHECK((w - sol.weights).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("fixture weights match the scipy oracle") {
    const auto data = fixture::small_dataset();
    const Matrix m = evaluate_moments(data, MomentSpec::raw_columns(2));
    const auto roles = group_roles(data, TargetPopulation::Treated);
    BalanceProblem p;
    p.source_moments = select_rows(m, roles.source);
    p.target = target_for(m, roles);
    const auto sol = solve(p);
    REQUIRE(sol.status == SolveStatus::Converged);
    for (Index i = 0; i < 8; ++i) CHECK(std::abs(sol.weights(i) - fixture::eb_weights[i]) < 1e-8);
    CHECK(std::abs(sol.theta(0) - fixture::eb_theta[0]) < 1e-6);
    CHECK(std::abs(sol.theta(1) - fixture::eb_theta[1]) < 1e-6);
}

TEST_CASE("affine invariance of weights") {
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 10; ++rep) {
        const auto in = testutil::random_feasible(rng, 40, 3);
        Matrix M(3, 3);
        for (Index i = 0; i < 3; ++i) M.row(i) = random_vector(rng, 3).transpose();
        M += 3.0 * Matrix::Identity(3, 3);
        const Vector shift = random_vector(rng, 3, 5.0);
        const Matrix src2 = (in.source * M.transpose()).rowwise() + shift.transpose();
        const Vector tgt2 = M * in.target + shift;
        const auto a = solve(problem(in.source, in.target));
        const auto b = solve(problem(src2, tgt2));
        REQUIRE(a.status == SolveStatus::Converged);
        REQUIRE(b.status == SolveStatus::Converged);
        CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("relaxed balancing") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        const auto in = testutil::random_feasible(rng, 50, 3);
        const auto exact = solve(problem(in.source, in.target));
        const auto tiny = solve(problem(in.source, in.target, 1e-10));
        REQUIRE(tiny.status == SolveStatus::Converged);
        CHECK((exact.weights - tiny.weights).cwiseAbs().maxCoeff() < 1e-5);
        double prev = exact.sum_squared_weights();
        for (double lambda : {0.01, 0.1, 1.0, 10.0}) {
            const auto s = solve(problem(in.source, in.target, lambda));
            REQUIRE(s.status == SolveStatus::Converged);
            CHECK(s.sum_squared_weights() <= prev + 1e-15);
            prev = s.sum_squared_weights();
        }
    }
}

TEST_CASE("relaxed problems never report infeasibility") {
    const auto s = solve(problem(col({0, 1}), vec({1.5}), 0.1));
    CHECK(s.status == SolveStatus::Converged);
    CHECK(s.residual_imbalance(0) < 0.0);
}

TEST_CASE("imbalance report") {
    std::mt19937_64 rng(8);
    const auto in = testutil::random_feasible(rng, 40, 2);
    Matrix treated(25, 2);
    for (Index i = 0; i < 25; ++i) treated.row(i) = random_vector(rng, 2).transpose().array() + 0.3;
    const Vector target = treated.colwise().mean().transpose();
    const Vector sd = ((treated.rowwise() - target.transpose()).array().square().colwise().sum() / 24.0).sqrt();

    const auto sol = solve(problem(in.source, target));
    REQUIRE(sol.status == SolveStatus::Converged);
    CHECK(imbalance_report(sol.weights, in.source, target, treated).standardized.cwiseAbs().maxCoeff() < 1e-8);

    const Vector uniform = Vector::Constant(40, 1.0 / 40);
    const Vector raw = in.source.colwise().mean().transpose() - target;
    const auto rep = imbalance_report(uniform, in.source, target, treated);
    CHECK((rep.raw - raw).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((rep.standardized - raw.cwiseQuotient(sd)).cwiseAbs().maxCoeff() < 1e-12);

    const auto loose = solve(problem(in.source, target, 1e6));
    CHECK((imbalance_report(loose.weights, in.source, target, treated).raw - raw).cwiseAbs().maxCoeff() < 1e-5);
}
