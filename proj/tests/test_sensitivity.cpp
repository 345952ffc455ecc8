#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "support.hpp"
#include "transport/errors.hpp"
#include "transport/sensitivity.hpp"

using namespace transport;
using namespace testing_support;

namespace {

// Pr(X > Y) for independent trapezoids by midpoint integration of f_X * F_Y.
double prob_greater(const TrapezoidDist& x, const TrapezoidDist& y) {
  const int steps = 200000;
  const double lo = x.a(), hi = x.d(), h = (hi - lo) / steps;
  double s = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double t = lo + (k + 0.5) * h;
    s += x.pdf(t) * y.cdf(t) * h;
  }
  return s;
}

McTable table_of(const std::vector<double>& values) {
  McTable t;
  t.arm = "1";
  t.referent = "0";
  for (double v : values) {
    McDraw d;
    d.delta_arm = v;
    d.delta_referent = 1.0 - v;
    d.psi_arm = v;
    d.psi_referent = 2 * v;
    d.difference = -v;
    t.draws.push_back(d);
  }
  return t;
}

}  // namespace

TEST_CASE("trapezoid distribution") {
  SUBCASE("flat trapezoid is uniform") {
    const TrapezoidDist u(0.0, 0.0, 1.0, 1.0);
    for (double x : {0.1, 0.5, 0.9}) {
      CHECK(u.cdf(x) == doctest::Approx(x).epsilon(1e-12));
      CHECK(u.quantile(x) == doctest::Approx(x).epsilon(1e-12));
    }
    CHECK(u.mean() == doctest::Approx(0.5));
  }

  SUBCASE("quantile endpoints and inverse") {
    const TrapezoidDist t(0.5, 0.6, 0.75, 1.0);
    CHECK(t.quantile(0.0) == 0.5);
    CHECK(t.quantile(1.0) == 1.0);
    CHECK(t.cdf(0.4) == 0.0);
    CHECK(t.cdf(1.2) == 1.0);
    for (double u : {0.01, 0.1, 0.3, 0.5, 0.8, 0.99}) CHECK(t.cdf(t.quantile(u)) == doctest::Approx(u).epsilon(1e-10));
  }

  SUBCASE("mean against numeric integration") {
    const TrapezoidDist t(0.5, 0.6, 0.75, 1.0);
    CHECK(t.mean() == doctest::Approx(0.71923).epsilon(1e-5));
    const int steps = 100000;
    double s = 0.0;
    for (int k = 0; k < steps; ++k) {
      const double x = 0.5 + (k + 0.5) * 0.5 / steps;
      s += x * t.pdf(x) * 0.5 / steps;
    }
    CHECK(t.mean() == doctest::Approx(s).epsilon(1e-8));
  }

  SUBCASE("inverse-CDF samples pass a Kolmogorov-Smirnov check") {
    const TrapezoidDist t(0.5, 0.75, 0.9, 1.0);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int n = 100000;
    std::vector<double> x(n);
    for (auto& v : x) v = sample_trapezoid(t, unif(rng));
    std::sort(x.begin(), x.end());
    double d = 0.0;
    for (int i = 0; i < n; ++i) d = std::max({d, std::abs(t.cdf(x[i]) - double(i) / n), std::abs(t.cdf(x[i]) - double(i + 1) / n)});
    CHECK(d < 1.63 / std::sqrt(double(n)));
  }

  SUBCASE("invalid parameters") {
    CHECK_THROWS_AS(TrapezoidDist(0.6, 0.5, 0.7, 1.0), ConfigError);
    CHECK_THROWS_AS(TrapezoidDist(0.5, 0.5, 0.5, 0.5), ConfigError);
  }
}

TEST_CASE("published trapezoid priors") {
  const TrapezoidDist arm1(0.5, 0.6, 0.75, 1.0), arm0(0.5, 0.75, 0.9, 1.0);
  CHECK(prob_greater(arm1, arm0) == doctest::Approx(0.3420).epsilon(1e-3));
}

TEST_CASE("static grid") {
  const auto ds = exact_toy();
  const auto nu = fit_nuisance_set(ds);
  AnalysisOptions opt;

  SUBCASE("a grid of one reduces to the equal-adherence estimators") {
    const auto res = run_static_grid(ds, nu, "1", "0", {GridPoint{1.0, 1.0}}, opt);
    REQUIRE(res.rows.size() == 1);
    REQUIRE(res.setting1.has_value());
    CHECK(res.rows[0].comparison.arm.estimate.point ==
          doctest::Approx(res.setting1->arm.estimate.point).epsilon(1e-12));
    CHECK(res.rows[0].comparison.arm.estimate.point == doctest::Approx(0.52).epsilon(1e-9));
    CHECK(res.rows[0].comparison.difference.estimate.point == doctest::Approx(0.19).epsilon(1e-9));
  }

  SUBCASE("the reference point is added when missing") {
    const auto res = run_static_grid(ds, nu, "1", "0", {GridPoint{0.5, 0.5}}, opt);
    CHECK(res.rows.size() == 2);
    const auto no_ref = run_static_grid(ds, nu, "1", "0", {GridPoint{0.5, 0.5}}, opt, false);
    CHECK(no_ref.rows.size() == 1);
  }

  SUBCASE("equal deltas of one half") {
    // Arm 1: 0.66. Arm 0: 0.5 * (0.2*0.475 + 0.6*0.525) + 0.5 * (0.4*0.45 + 0.8*0.55) = 0.515.
    const auto res = run_static_grid(ds, nu, "1", "0", {GridPoint{0.5, 0.5}}, opt, false);
    const auto& c = res.rows[0].comparison;
    CHECK(c.arm.estimate.point == doctest::Approx(0.66).epsilon(1e-9));
    CHECK(c.referent.estimate.point == doctest::Approx(0.515).epsilon(1e-9));
    CHECK(c.difference.estimate.point == doctest::Approx(0.145).epsilon(1e-9));
  }

  SUBCASE("grid estimates are affine along a line") {
    const auto sample = toy_sample(800, 600, 3);
    const auto snu = fit_nuisance_set(sample);
    const auto res = run_static_grid(sample, snu, "1", "0",
                                     {GridPoint{0.2, 0.4}, GridPoint{0.6, 0.7}, GridPoint{1.0, 1.0}}, opt, false);
    const double mid = res.rows[1].comparison.difference.estimate.point;
    const double ends = 0.5 * (res.rows[0].comparison.difference.estimate.point +
                               res.rows[2].comparison.difference.estimate.point);
    CHECK(mid == doctest::Approx(ends).epsilon(1e-10));
  }
}

TEST_CASE("bounds over delta ranges") {
  const auto nu = fit_nuisance_set(exact_toy());

  SUBCASE("arm interval") {
    const auto b = run_bounds(nu, "1", "0", DeltaRange{0.5, 1.0}, DeltaRange{1.0, 1.0}, EstimatorKind::gcomp);
    CHECK(b.arm.lower == doctest::Approx(0.52).epsilon(1e-9));
    CHECK(b.arm.upper == doctest::Approx(0.66).epsilon(1e-9));
    CHECK(b.vertices.size() == 4);
  }

  SUBCASE("degenerate ranges give a point") {
    const auto b = run_bounds(nu, "1", "0", DeltaRange{1.0, 1.0}, DeltaRange{1.0, 1.0}, EstimatorKind::onestep);
    CHECK(b.difference.lower == doctest::Approx(b.difference.upper).epsilon(1e-14));
    CHECK(b.difference.lower == doctest::Approx(0.19).epsilon(1e-9));
  }

  SUBCASE("interior points lie within the bounds") {
    const auto b = run_bounds(nu, "1", "0", DeltaRange{0.3, 0.9}, DeltaRange{0.6, 1.0}, EstimatorKind::onestep);
    for (double d1 : {0.3, 0.45, 0.8})
      for (double d0 : {0.6, 0.77, 1.0}) {
        const double rd = onestep_psi(nu, "1", DeltaValue::constant(d1)).point -
                          onestep_psi(nu, "0", DeltaValue::constant(d0)).point;
        CHECK(rd >= b.difference.lower - 1e-12);
        CHECK(rd <= b.difference.upper + 1e-12);
      }
  }
}

TEST_CASE("Monte Carlo sensitivity analysis") {
  const auto nu = fit_nuisance_set(toy_sample(1500, 1500, 9));
  DeltaScenario sc;
  sc.arms["1"] = TrapezoidDist(0.5, 0.6, 0.75, 1.0);
  sc.arms["0"] = TrapezoidDist(0.5, 0.75, 0.9, 1.0);
  sc.draws = 10000;
  sc.seed = 11;

  SUBCASE("draws are reproducible and follow the priors") {
    const auto a = draw_delta_pairs(sc, nu, "1", "0");
    const auto b = draw_delta_pairs(sc, nu, "1", "0");
    CHECK(a == b);
    double greater = 0.0, mean1 = 0.0;
    for (const auto& [d1, d0] : a) {
      greater += d1 > d0 ? 1.0 : 0.0;
      mean1 += d1;
    }
    CHECK(std::abs(greater / a.size() - 0.342) < 0.015);
    CHECK(std::abs(1.0 - greater / a.size() - 0.658) < 0.015);
    CHECK(std::abs(mean1 / a.size() - 0.71923) < 0.003);
  }

  SUBCASE("too few draws is rejected") {
    sc.draws = 50;
    CHECK_THROWS_AS(draw_delta_pairs(sc, nu, "1", "0"), ConfigError);
  }

  SUBCASE("constant specifications give intervals of width zero") {
    sc.arms["1"] = 0.8;
    sc.arms["0"] = 0.9;
    sc.draws = 200;
    const auto t = run_mc(nu, sc, "1", "0");
    const auto s = summarize_mc(t, false, std::nullopt, 1);
    CHECK(s.difference.upper - s.difference.lower == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(s.psi_arm.median == doctest::Approx(onestep_psi(nu, "1", DeltaValue::constant(0.8)).point).epsilon(1e-12));
  }

  SUBCASE("runs are deterministic for a seed and fast") {
    const auto start = std::chrono::steady_clock::now();
    const auto t1 = run_mc(nu, sc, "1", "0");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(secs < 5.0);
    sc.draws = 300;
    const auto a = run_mc(nu, sc, "1", "0");
    const auto b = run_mc(nu, sc, "1", "0");
    REQUIRE(a.draws.size() == b.draws.size());
    for (std::size_t k = 0; k < a.draws.size(); ++k) CHECK(a.draws[k].difference == b.draws[k].difference);
    CHECK(t1.flagged == 0);
  }

  SUBCASE("constraint keeps the ordered draws") {
    sc.draws = 2000;
    const auto t = run_mc(nu, sc, "1", "0");
    const DeltaConstraint con{"1", "0"};
    const auto blocks = summarize_all(t, con, 3);
    REQUIRE(blocks.size() == 4);
    CHECK_FALSE(blocks[0].constrained);
    CHECK(blocks[1].augmented);
    CHECK(blocks[2].constrained);
    std::size_t kept = 0;
    for (const auto& d : t.draws) kept += d.delta_arm <= d.delta_referent;
    CHECK(blocks[2].subset_size == kept);
    CHECK(summarize_all(t, std::nullopt, 3).size() == 2);
    CHECK_THROWS_AS(summarize_mc(t, false, DeltaConstraint{"1", "9"}, 1), ConfigError);
  }
}

TEST_CASE("Monte Carlo summaries") {
  const auto t = table_of({1, 2, 3, 4, 5});

  SUBCASE("type-7 quantiles") {
    const auto s = summarize_mc(t, false, std::nullopt, 1);
    CHECK(s.psi_arm.median == 3.0);
    CHECK(s.psi_arm.lower == doctest::Approx(1.1));
    CHECK(s.psi_arm.upper == doctest::Approx(4.9));
    CHECK(s.difference.median == -3.0);
  }

  SUBCASE("augmentation with zero standard errors changes nothing") {
    const auto plain = summarize_mc(t, false, std::nullopt, 1);
    const auto aug = summarize_mc(t, true, std::nullopt, 1);
    CHECK(aug.psi_referent.upper == plain.psi_referent.upper);
    CHECK(aug.difference.lower == plain.difference.lower);
  }

  SUBCASE("a single retained draw") {
    const auto s = summarize_mc(table_of({0.4}), false, std::nullopt, 1);
    CHECK(s.psi_arm.lower == 0.4);
    CHECK(s.psi_arm.upper == 0.4);
  }

  SUBCASE("an empty subset is an error") {
    // delta_arm <= delta_referent never holds when every draw has v > 1 - v.
    CHECK_THROWS_AS(summarize_mc(table_of({0.8, 0.9}), false, DeltaConstraint{"1", "0"}, 1), ConfigError);
  }
}

TEST_CASE("predicted target adherence") {
  const auto nu = fit_nuisance_set(exact_toy());
  const auto base = predicted_adherence_under_delta(nu, "1", 1.0);
  CHECK(base.mean == doctest::Approx(0.70).epsilon(1e-9));
  const auto half = predicted_adherence_under_delta(nu, "1", 0.5);
  CHECK(half.mean == 0.5 * base.mean);
  CHECK(half.median == 0.5 * base.median);
  CHECK(half.q1 == 0.5 * base.q1);
  CHECK(half.q3 == 0.5 * base.q3);
  const auto zero = predicted_adherence_under_delta(nu, "1", 0.0);
  CHECK(zero.mean == 0.0);
  CHECK(zero.q3 == 0.0);
}
