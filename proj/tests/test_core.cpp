#include "doctest.h"

#include "ebal/core.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace ebal;

namespace {

ObservationalDataset make(const Matrix& x, std::vector<int> t) {
    return ObservationalDataset(x, std::move(t), Vector::Zero(x.rows()));
}

}  // namespace

TEST_CASE("dataset validation") {
    Matrix x(2, 1);
    x << 1, 2;
    CHECK_THROWS_AS(ObservationalDataset(x, {0, 2}, Vector::Zero(2)), InvalidInputError);
    CHECK_THROWS_AS(ObservationalDataset(x, {0}, Vector::Zero(2)), InvalidInputError);
    x(1, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(ObservationalDataset(x, {0, 1}, Vector::Zero(2)), InvalidInputError);

    Matrix ok(2, 2);
    ok << 1, 2, 3, 4;
    Vector y(2);
    y << 1.0, std::nan("");
    CHECK_THROWS_AS(ObservationalDataset(ok, {0, 1}, y), InvalidInputError);
    const ObservationalDataset d(ok, {0, 1}, y, {true, false});
    CHECK(d.num_treated() == 1);
    CHECK(d.num_control() == 1);
    CHECK(d.covariate_names() == std::vector<std::string>{"x1", "x2"});
    CHECK(d.covariate_index("x2") == 1);
    CHECK_THROWS_AS(d.covariate_index("nope"), InvalidInputError);
}

TEST_CASE("moment spec rejects empty and duplicate descriptors") {
    CHECK_THROWS_AS(MomentSpec(std::vector<MomentFunction>{}), InvalidInputError);
    CHECK_THROWS_AS(MomentSpec({MomentFunction::raw(0), MomentFunction::raw(0)}), InvalidInputError);
    CHECK_THROWS_AS(MomentSpec({MomentFunction::product(0, 1), MomentFunction::product(1, 0)}),
                    InvalidInputError);
    const MomentSpec s({MomentFunction::raw(0), MomentFunction::square(1), MomentFunction::product(0, 1)});
    CHECK(s.describe(0, {"a", "b"}) == "a");
    CHECK(s.describe(1, {"a", "b"}) == "b^2");
    CHECK(s.describe(2, {"a", "b"}) == "a*b");
}

TEST_CASE("evaluate_moments examples") {
    SUBCASE("raw descriptors on identity columns") {
        const Matrix x = Matrix::Identity(3, 3);
        const auto m = evaluate_moments(make(x, {0, 1, 0}), MomentSpec::raw_columns(3));
        CHECK(m == x);
    }
    SUBCASE("square") {
        Matrix x(2, 1);
        x << 1, -2;
        const auto m = evaluate_moments(make(x, {0, 1}), MomentSpec({MomentFunction::square(0)}));
        CHECK(m(0, 0) == 1.0);
        CHECK(m(1, 0) == 4.0);
    }
    SUBCASE("pairwise product") {
        Matrix x(2, 2);
        x << 2, 3, 0, 5;
        const auto m = evaluate_moments(make(x, {0, 1}), MomentSpec({MomentFunction::product(0, 1)}));
        CHECK(m(0, 0) == 6.0);
        CHECK(m(1, 0) == 0.0);
    }
    SUBCASE("feature columns") {
        Matrix x(2, 1);
        x << 1, 2;
        Matrix f(2, 1);
        f << 7, 8;
        const auto m = evaluate_moments(make(x, {0, 1}), MomentSpec({MomentFunction::feature(0)}), f);
        CHECK(m(1, 0) == 8.0);
        CHECK_THROWS_AS(evaluate_moments(make(x, {0, 1}), MomentSpec({MomentFunction::feature(1)}), f),
                        InvalidInputError);
    }
    SUBCASE("out-of-range column") {
        Matrix x(2, 1);
        x << 1, 2;
        CHECK_THROWS_AS(evaluate_moments(make(x, {0, 1}), MomentSpec({MomentFunction::raw(3)})),
                        InvalidInputError);
    }
}

TEST_CASE("overflow names the descriptor and row") {
    Matrix x(2, 2);
    x << 1, 1, 1e200, 1e200;
    const ObservationalDataset d(x, {0, 1}, Vector::Zero(2), {}, {"a", "b"});
    try {
        evaluate_moments(d, MomentSpec({MomentFunction::raw(0), MomentFunction::product(0, 1)}));
        FAIL("expected EvaluationError");
    } catch (const EvaluationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("a*b") != std::string::npos);
        CHECK(msg.find("row 1") != std::string::npos);
    }
}

TEST_CASE("evaluate_moments permutes with the rows") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    Matrix x(6, 2);
    for (Index i = 0; i < 6; ++i)
        for (Index j = 0; j < 2; ++j) x(i, j) = nd(rng);
    const MomentSpec s({MomentFunction::raw(0), MomentFunction::square(1), MomentFunction::product(0, 1)});
    const auto m = evaluate_moments(make(x, {0, 1, 0, 1, 0, 1}), s);
    const std::vector<Index> perm{3, 0, 5, 1, 4, 2};
    Matrix xp(6, 2);
    for (Index i = 0; i < 6; ++i) xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    const auto mp = evaluate_moments(make(xp, {1, 0, 1, 0, 0, 0}), s);
    for (Index i = 0; i < 6; ++i) CHECK(mp.row(i) == m.row(perm[static_cast<std::size_t>(i)]));
}

TEST_CASE("treated_moment_target examples") {
    SUBCASE("single treated unit") {
        Matrix m(2, 2);
        m << 1.5, -2, 9, 9;
        const auto t = treated_moment_target(m, {1, 0});
        CHECK(t.values(0) == 1.5);
        CHECK(t.values(1) == -2.0);
        CHECK(t.population == TargetPopulation::Treated);
    }
    SUBCASE("two treated units") {
        Matrix m(3, 2);
        m << 0, 0, 2, 4, 100, 100;
        const auto t = treated_moment_target(m, {1, 1, 0});
        CHECK(t.values(0) == 1.0);
        CHECK(t.values(1) == 2.0);
    }
    SUBCASE("all-control dataset") {
        Matrix m(2, 1);
        m << 1, 2;
        CHECK_THROWS_AS(treated_moment_target(m, {0, 0}), EstimandUndefinedError);
    }
}

TEST_CASE("treated_moment_target invariances") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    Matrix m(8, 3);
    for (Index i = 0; i < 8; ++i)
        for (Index j = 0; j < 3; ++j) m(i, j) = nd(rng);
    const std::vector<int> t{1, 0, 1, 1, 0, 0, 1, 0};
    const auto base = treated_moment_target(m, t).values;

    Matrix mp = m.colwise().reverse();
    std::vector<int> tp(t.rbegin(), t.rend());
    CHECK((treated_moment_target(mp, tp).values - base).cwiseAbs().maxCoeff() < 1e-15);

    Matrix md(12, 3);
    std::vector<int> td = t;
    md.topRows(8) = m;
    Index r = 8;
    for (Index i = 0; i < 8; ++i) {
        if (t[static_cast<std::size_t>(i)] == 1) {
            md.row(r++) = m.row(i);
            td.push_back(1);
        }
    }
    CHECK((treated_moment_target(md, td).values - base).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("group roles") {
    Matrix x(4, 1);
    x << 1, 2, 3, 4;
    const ObservationalDataset d(x, {1, 0, 1, 0}, Vector::Zero(4));
    const auto patt = group_roles(d, TargetPopulation::Treated);
    CHECK(patt.source == std::vector<Index>{1, 3});
    CHECK(patt.target == std::vector<Index>{0, 2});
    const auto full = group_roles(d, TargetPopulation::FullSample);
    CHECK(full.source == std::vector<Index>{0, 2});
    CHECK(full.target == std::vector<Index>{0, 1, 2, 3});
    CHECK(full_sample_target(x).values(0) == 2.5);
}

TEST_CASE("estimate report variance") {
    EstimateReport r;
    r.set_variance(4.0);
    CHECK(*r.std_error == 2.0);
    CHECK_THROWS_AS(r.set_variance(-1.0), InvalidInputError);
    CHECK(to_string(Estimand::Patt) == "patt");
}
