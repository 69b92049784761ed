#include "doctest.h"

#include "ebal/balance.hpp"
#include "ebal/estimators.hpp"
#include "ebal/simulation.hpp"
#include "fixture.hpp"

#include <cmath>

using namespace ebal;

TEST_CASE("scenario validation") {
    auto ks = ScenarioSpec::kang_schafer(true, true, 100, 2, 1);
    CHECK_NOTHROW(ks.validate());
    ks.ld_beta_level = AssociationLevel::Strong;
    CHECK_THROWS_AS(ks.validate(), InvalidInputError);
    ScenarioSpec missing;
    missing.family = Family::KangSchafer;
    missing.ks_ps_correct = true;
    CHECK_THROWS_AS(missing.validate(), InvalidInputError);
    auto ld = ScenarioSpec::lunceford_davidian(AssociationLevel::No, AssociationLevel::No, PsScope::Full, 1, 2, 1);
    CHECK_THROWS_AS(ld.validate(), InvalidInputError);
    ld.n = 10;
    ld.replications = 0;
    CHECK_THROWS_AS(ld.validate(), InvalidInputError);
    CHECK_THROWS_AS(parse_level("huge"), InvalidInputError);
    CHECK(parse_family("ks") == Family::KangSchafer);
    CHECK(parse_estimator("dr") == EstimatorKind::IpwDr);
}

TEST_CASE("Kang-Schafer generator") {
    const auto a = gen_kang_schafer(200000, 31);
    CHECK(a.truth == 210.0);
    CHECK(std::abs(a.y0.mean() - 210.0) < 0.3);
    for (Index j = 0; j < 4; ++j) {
        const double mean = a.z.col(j).mean();
        const double sd = std::sqrt((a.z.col(j).array() - mean).square().sum() / (a.z.rows() - 1.0));
        CHECK(std::abs(mean) < 1e-12);
        CHECK(std::abs(sd - 1.0) < 1e-12);
    }
    const double frac = static_cast<double>(a.data.num_treated()) / 200000.0;
    CHECK(std::abs(frac - fixture::ks_treated_fraction) < 0.005);
    for (Index i = 0; i < 1000; ++i) {
        CHECK(a.data.outcome_observed()[static_cast<std::size_t>(i)] == (a.data.treatment()[static_cast<std::size_t>(i)] == 1));
    }
    const auto b = gen_kang_schafer(200, 31);
    const auto c = gen_kang_schafer(200, 31);
    CHECK(b.x == c.x);
    CHECK(b.data.treatment() == c.data.treatment());
}

TEST_CASE("Lunceford-Davidian generator") {
    const auto none = gen_lunceford_davidian(100000, AssociationLevel::No, AssociationLevel::No, 41);
    CHECK(none.truth == 2.0);
    CHECK(std::abs(static_cast<double>(none.data.num_treated()) / 100000.0 - 0.5) < 0.01);
    CHECK(((none.y1 - none.y0).array() - 2.0).abs().maxCoeff() < 1e-12);

    // X3 = 1 subgroup: Cov(X1, Z1) = 0.5
    double sx = 0, sz = 0, sxz = 0;
    Index k = 0;
    for (Index i = 0; i < none.x.rows(); ++i) {
        if (none.x(i, 2) == 1.0) {
            sx += none.x(i, 0);
            sz += none.z(i, 0);
            sxz += none.x(i, 0) * none.z(i, 0);
            ++k;
        }
    }
    const double cov = sxz / k - (sx / k) * (sz / k);
    CHECK(std::abs(cov - 0.5) < 0.03);
    CHECK(std::abs(static_cast<double>(k) / 100000.0 - 0.2) < 0.01);

    // With xi = no, Y does not depend on Z given X, T.
    Matrix design(100000, 8);
    for (Index i = 0; i < 100000; ++i) {
        design.row(i) << 1.0, none.x(i, 0), none.x(i, 1), none.x(i, 2), none.z(i, 0), none.z(i, 1), none.z(i, 2),
            static_cast<double>(none.data.treatment()[static_cast<std::size_t>(i)]);
    }
    const Vector beta = design.colPivHouseholderQr().solve(none.data.outcome());
    CHECK(std::abs(beta(4)) < 0.02);
    CHECK(std::abs(beta(5)) < 0.02);
    CHECK(std::abs(beta(6)) < 0.03);
    CHECK(std::abs(beta(7) - 2.0) < 0.03);
}

TEST_CASE("single replication matches a direct estimator call") {
    const auto spec = ScenarioSpec::kang_schafer(true, true, 300, 1, 77);
    const auto res = run_study(spec, {EstimatorKind::Eb});
    const auto sample = gen_kang_schafer(300, child_seed(77, 0));
    const auto roles = group_roles(sample.data, TargetPopulation::FullSample);
    BalanceProblem p;
    p.source_moments = select_rows(sample.x, roles.source);
    p.target = target_for(sample.x, roles);
    const auto direct = estimate_eb(sample.data, solve(p), TargetPopulation::FullSample);
    REQUIRE(res.rows.size() == 1);
    CHECK(res.rows[0].estimate == direct.point);
}

TEST_CASE("results are independent of thread count") {
    const auto spec = ScenarioSpec::lunceford_davidian(AssociationLevel::Moderate, AssociationLevel::Strong,
                                                       PsScope::Partial, 200, 12, 5);
    const auto one = run_study(spec, all_estimators(), {1, true});
    const auto four = run_study(spec, all_estimators(), {4, true});
    const auto again = run_study(spec, all_estimators(), {1, true});
    REQUIRE(one.rows.size() == four.rows.size());
    for (std::size_t i = 0; i < one.rows.size(); ++i) {
        CHECK(one.rows[i].estimate == four.rows[i].estimate);
        CHECK(one.rows[i].estimate == again.rows[i].estimate);
        CHECK(one.rows[i].replication == four.rows[i].replication);
    }
}

TEST_CASE("summary statistics") {
    const auto spec = ScenarioSpec::kang_schafer(true, false, 200, 15, 3);
    const auto res = run_study(spec, {EstimatorKind::Ipw, EstimatorKind::Ols});
    for (const auto& s : res.summary) {
        double sum = 0, sq = 0;
        Index k = 0;
        for (const auto& r : res.rows) {
            if (r.estimator != s.estimator) continue;
            sum += r.estimate;
            ++k;
        }
        const double mean = sum / k;
        for (const auto& r : res.rows)
            if (r.estimator == s.estimator) sq += (r.estimate - mean) * (r.estimate - mean);
        CHECK(s.count == k);
        CHECK(s.mean == doctest::Approx(mean).epsilon(1e-14));
        CHECK(s.bias == doctest::Approx(mean - 210.0).epsilon(1e-12));
        CHECK(s.sd == doctest::Approx(std::sqrt(sq / (k - 1))).epsilon(1e-12));
        CHECK(s.rmse * s.rmse == doctest::Approx(s.bias * s.bias + s.sd * s.sd * (k - 1.0) / k).epsilon(1e-10));
        CHECK(std::isnan(s.mean_variance));
    }
}

TEST_CASE("failed replications are counted and excluded") {
    const auto spec = ScenarioSpec::lunceford_davidian(AssociationLevel::Strong, AssociationLevel::No,
                                                       PsScope::Full, 60, 40, 8);
    const auto res = run_study(spec, {EstimatorKind::Eb, EstimatorKind::Ipw});
    CHECK(res.failures > 0);
    CHECK(res.failure_reasons.size() == static_cast<std::size_t>(res.failures));
    CHECK(res.rows.size() == 2 * static_cast<std::size_t>(40 - res.failures));
    CHECK(res.summary_for(EstimatorKind::Eb).count == 40 - res.failures);
}

TEST_CASE("a study where every replication fails is an error") {
    const auto spec = ScenarioSpec::lunceford_davidian(AssociationLevel::No, AssociationLevel::No,
                                                       PsScope::Full, 2, 5, 8);
    CHECK_THROWS_AS(run_study(spec, {EstimatorKind::Eb}), Error);
    CHECK_THROWS_AS(run_study(ScenarioSpec::kang_schafer(true, true, 100, 2, 1), {}), InvalidInputError);
}

TEST_CASE("no/no scenario: all estimators behave like a difference in means") {
    const auto spec = ScenarioSpec::lunceford_davidian(AssociationLevel::No, AssociationLevel::No,
                                                       PsScope::Full, 1000, 100, 21);
    const auto res = run_study(spec, all_estimators());
    CHECK(res.failures == 0);
    double lo = 1e300, hi = 0;
    for (const auto& s : res.summary) {
        CHECK(std::abs(s.bias) <= 3 * s.sd / std::sqrt(100.0));
        lo = std::min(lo, s.sd);
        hi = std::max(hi, s.sd);
    }
    CHECK(hi <= 1.10 * lo);
}
