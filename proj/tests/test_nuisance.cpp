#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "support.hpp"
#include "transport/errors.hpp"
#include "transport/nuisance.hpp"

using namespace transport;
using namespace testing_support;

namespace {

double mean_where(const std::vector<double>& v, const StudyDataset& ds, bool trial, double w) {
  double s = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds[i].trial == trial && ds[i].w[0] == w) {
      s += v[i];
      ++n;
    }
  return s / n;
}

}  // namespace

TEST_CASE("saturated fits reproduce cell frequencies") {
  const auto ds = exact_toy();
  const auto nu = fit_nuisance_set(ds);
  const auto a1 = nu.arm_index("1");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const bool w1 = ds[i].w[0] == 1.0;
    CHECK(nu.m[a1][i] == doctest::Approx(w1 ? 0.6 : 0.8).epsilon(1e-9));
    CHECK(nu.q1[a1][i] == doctest::Approx(w1 ? 0.5 : 0.3).epsilon(1e-9));
    CHECK(nu.q0[a1][i] == doctest::Approx(w1 ? 0.9 : 0.7).epsilon(1e-9));
    CHECK(nu.g[a1][i] == doctest::Approx(0.5).epsilon(1e-9));
  }
  CHECK(nu.k_hat == doctest::Approx(2000.0 / 12000.0));
  CHECK(nu.n1 == 10000);
  CHECK(nu.n0 == 2000);
  CHECK(nu.truncation_events == 0);
}

TEST_CASE("randomized 1:1 assignment gives treatment probabilities near one half") {
  const auto ds = toy_sample(20000, 2000, 11);
  const auto nu = fit_nuisance_set(ds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(std::abs(nu.g[1][i] - 0.5) < 0.03);
    CHECK(nu.g[0][i] + nu.g[1][i] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("adherence model recovers the generating probability at n = 100000") {
  const auto ds = toy_sample(50000, 50000, 2024);
  const auto nu = fit_nuisance_set(ds);
  // The fitted m for arm 1 at W=0 against the binomial oracle 0.8.
  CHECK(std::abs(mean_where(nu.m[nu.arm_index("1")], ds, false, 0.0) - 0.8) < 0.01);
}

TEST_CASE("predictions are clipped into the truncation bounds") {
  std::vector<StudyRecord> r;
  for (int k = 0; k < 1999; ++k) r.push_back(trial(1, "t", 1, k % 2));
  r.push_back(trial(1, "t", 0, 1));
  for (int k = 0; k < 100; ++k) {
    r.push_back(trial(0, "t", 1, k % 2));
    r.push_back(trial(0, "t", 0, (k + 1) % 2));
  }
  for (int k = 0; k < 200; ++k) r.push_back(trial(k % 2, "c", (k / 2) % 2, (k / 4) % 2));
  for (int k = 0; k < 200; ++k) r.push_back(target(k % 2));
  const StudyDataset ds(binary_w(), std::move(r));

  NuisanceOptions opt;
  opt.covariates.outcome = std::vector<std::size_t>{};
  const auto nu = fit_nuisance_set(ds, opt);
  const auto t = nu.arm_index("t");
  // The saturated adherence fit is 1999/2000 = 0.9995 at W=1, stored as 0.999.
  CHECK(nu.arm_models[t].adherence.predict(Eigen::RowVector2d(1, 1))(0) == doctest::Approx(0.9995).epsilon(1e-9));
  CHECK(nu.m[t][0] == 0.999);
  CHECK(nu.truncation_events > 0);
  for (std::size_t a = 0; a < nu.arms.size(); ++a)
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (double p : {nu.q1[a][i], nu.q0[a][i], nu.m[a][i], nu.g[a][i], nu.h[i]}) {
        CHECK(p >= nu.truncation.lower);
        CHECK(p <= nu.truncation.upper);
      }
}

TEST_CASE("fit failures name the nuisance") {
  // Arm t's adherent stratum has a constant outcome.
  std::vector<StudyRecord> r{trial(0, "t", 1, 1), trial(1, "t", 1, 1), trial(0, "t", 0, 0), trial(1, "t", 0, 1)};
  for (int k = 0; k < 40; ++k) r.push_back(trial(k % 2, "c", (k / 2) % 2, (k / 4) % 2));
  for (int k = 0; k < 10; ++k) r.push_back(target(k % 2));
  const StudyDataset ds(binary_w(), std::move(r));
  CHECK_THROWS_WITH_AS(fit_nuisance_set(ds), doctest::Contains("outcome model (arm 't', z=1)"), FitError);
}

TEST_CASE("truncation bounds are validated") {
  NuisanceOptions opt;
  opt.truncation = {0.6, 0.4};
  CHECK_THROWS_AS(fit_nuisance_set(exact_toy(), opt), ConfigError);
}

TEST_CASE("folds") {
  const auto ds = toy_sample(60, 40, 3);

  SUBCASE("k below 2 is rejected") { CHECK_THROWS_AS(make_folds(ds, 1, 1), ConfigError); }

  SUBCASE("same seed gives the same assignment") {
    CHECK(make_folds(ds, 5, 9).fold_of == make_folds(ds, 5, 9).fold_of);
    CHECK(make_folds(ds, 5, 9).fold_of != make_folds(ds, 5, 10).fold_of);
  }

  SUBCASE("k = n is leave-one-out") {
    const auto fa = make_folds(ds, ds.size(), 4);
    std::vector<std::size_t> sorted = fa.fold_of;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> expected(ds.size());
    std::iota(expected.begin(), expected.end(), 0);
    CHECK(sorted == expected);
  }

  SUBCASE("strata are split evenly") {
    const auto fa = make_folds(ds, 4, 2);
    std::map<std::pair<int, std::size_t>, int> counts;
    std::map<int, int> sizes;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const int key = ds[i].trial ? ds.arm_index(i) : -1;
      counts[{key, fa.fold_of[i]}]++;
      sizes[key]++;
    }
    for (const auto& [key, c] : counts) {
      const double even = sizes[key.first] / 4.0;
      CHECK(std::abs(c - even) <= 1.0);
    }
  }

  SUBCASE("a stratum smaller than k warns") {
    std::vector<StudyRecord> r;
    for (int k = 0; k < 5; ++k) r.push_back(trial(k % 2, "t", k % 2, (k / 2) % 2));
    for (int k = 0; k < 40; ++k) r.push_back(trial(k % 2, "c", (k / 2) % 2, (k / 4) % 2));
    for (int k = 0; k < 40; ++k) r.push_back(target(k % 2));
    const StudyDataset small(binary_w(), std::move(r));
    const auto fa = make_folds(small, 30, 1);
    REQUIRE(fa.warnings.size() == 1);
    CHECK(fa.warnings[0].find("reduced from 30 to 5") != std::string::npos);
    std::set<std::size_t> used;
    for (std::size_t i = 0; i < 5; ++i) used.insert(fa.fold_of[i]);
    CHECK(used.size() == 5);
  }
}

TEST_CASE("cross-fit predictions") {
  const auto ds = toy_sample(8000, 8000, 17);
  const auto full = fit_nuisance_set(ds);

  SUBCASE("two folds agree with the full fit up to sampling noise") {
    const auto cf = crossfit_predictions(ds, make_folds(ds, 2, 5));
    CHECK(cf.folds == 2);
    CHECK(cf.k_hat == full.k_hat);
    for (std::size_t i = 0; i < ds.size(); i += 97) {
      CHECK(std::abs(cf.m[1][i] - full.m[1][i]) < 0.04);
      CHECK(std::abs(cf.h[i] - full.h[i]) < 0.04);
    }
  }

  SUBCASE("a record's prediction ignores the other members of its fold") {
    const auto fa = make_folds(ds, 3, 8);
    const auto base = crossfit_predictions(ds, fa);
    // Swap two other members of record 0's fold.
    std::vector<std::size_t> same;
    for (std::size_t i = 1; i < ds.size() && same.size() < 2; ++i)
      if (fa.fold_of[i] == fa.fold_of[0]) same.push_back(i);
    std::vector<std::size_t> perm(ds.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[same[0]], perm[same[1]]);
    const auto swapped = crossfit_predictions(ds.select(perm), fa);
    CHECK(swapped.q1[1][0] == doctest::Approx(base.q1[1][0]).epsilon(1e-12));
    CHECK(swapped.m[1][0] == doctest::Approx(base.m[1][0]).epsilon(1e-12));
    CHECK(swapped.h[0] == doctest::Approx(base.h[0]).epsilon(1e-12));
  }

  SUBCASE("changing the seed keeps k_hat") {
    const auto a = crossfit_predictions(ds, make_folds(ds, 4, 1));
    const auto b = crossfit_predictions(ds, make_folds(ds, 4, 2));
    CHECK(a.k_hat == b.k_hat);
    CHECK(a.m[1] != b.m[1]);
  }

  SUBCASE("fold failures are labelled") {
    std::vector<StudyRecord> r;
    for (int k = 0; k < 6; ++k) r.push_back(trial(k % 2, "t", k < 3 ? 1 : 0, k % 2));
    for (int k = 0; k < 40; ++k) r.push_back(trial(k % 2, "c", (k / 2) % 2, (k / 4) % 2));
    for (int k = 0; k < 40; ++k) r.push_back(target(k % 2));
    const StudyDataset tiny(binary_w(), std::move(r));
    CHECK_THROWS_WITH_AS(crossfit_predictions(tiny, make_folds(tiny, 3, 1)), doctest::Contains("fold "), FitError);
  }
}
