#include <doctest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"
#include "transport/errors.hpp"
#include "transport/estimators.hpp"

using namespace transport;
using namespace testing_support;

namespace {

// Three-record nuisance set with a single arm "a": a target record, an adherent
// trial record in arm a, and a trial record in another arm.
NuisanceSet hand_set() {
  NuisanceSet nu;
  nu.arms = {"a", "b"};
  nu.obs.trial = {0, 1, 1};
  nu.obs.arm = {-1, 0, 1};
  nu.obs.z = {0, 1, 1};
  nu.obs.y = {0.0, 1.0, 0.0};
  nu.q1 = {{0.6, 0.3, 0.3}, {0.5, 0.5, 0.5}};
  nu.q0 = {{0.6, 0.7, 0.7}, {0.5, 0.5, 0.5}};
  nu.m = {{0.8, 0.8, 0.8}, {0.5, 0.5, 0.5}};
  nu.g = {{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}};
  nu.h = {0.5, 0.5, 0.5};
  nu.n0 = 1;
  nu.n1 = 2;
  nu.k_hat = 0.5;
  return nu;
}

// The influence curve written out for one record, independently of the library.
double phi_scalar(bool trial, bool in_arm, int z, double y, double q1, double q0, double m, double g, double h,
                  double k, double delta, double psi) {
  if (!trial) return (q1 * m * delta + q0 * (1 - m * delta) - psi) / k;
  if (!in_arm) return 0.0;
  const double weight = z == 1 ? delta : (1 - m * delta) / (1 - m);
  const double q = z == 1 ? q1 : q0;
  return (1 / g) * ((1 - h) / h) * (weight * (y - q) + delta * (q1 - q0) * (z - m)) / k;
}

double empirical_mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

}  // namespace

TEST_CASE("g-computation on exact-frequency toy data matches the enumeration oracle") {
  const auto ds = exact_toy();
  const auto nu = fit_nuisance_set(ds);
  const auto spec = DgpSpec::toy();
  for (double d : {1.0, 0.0, 0.5, 0.75}) {
    CHECK(gcomp_psi(nu, "1", DeltaValue::constant(d)).point == doctest::Approx(oracle_psi(spec, "1", d)).epsilon(1e-9));
    CHECK(gcomp_psi(nu, "0", DeltaValue::constant(d)).point == doctest::Approx(oracle_psi(spec, "0", d)).epsilon(1e-9));
  }
  CHECK(gcomp_psi(nu, "1", DeltaValue::constant(1.0)).point == doctest::Approx(0.52).epsilon(1e-9));
  CHECK(gcomp_psi(nu, "1", DeltaValue::constant(0.0)).point == doctest::Approx(0.80).epsilon(1e-9));
  CHECK(gcomp_psi(nu, "1", DeltaValue::constant(0.5)).point == doctest::Approx(0.66).epsilon(1e-9));
  CHECK(gcomp_psi(nu, "1", DeltaValue::constant(1.0)).influence.empty());
}

TEST_CASE("influence curve at hand-computed records") {
  const auto nu = hand_set();
  const auto phi = eic_evaluate(nu, "a", DeltaValue::constant(1.0), 0.52);
  CHECK(phi[0] == doctest::Approx(0.16).epsilon(1e-12));
  CHECK(phi[1] == doctest::Approx(2.48).epsilon(1e-12));
  CHECK(phi[2] == 0.0);
  CHECK(phi[1] == doctest::Approx(phi_scalar(true, true, 1, 1.0, 0.3, 0.7, 0.8, 0.5, 0.5, 0.5, 1.0, 0.52)));
}

TEST_CASE("influence curve agrees with a scalar re-evaluation on sampled data") {
  const auto ds = toy_sample(1500, 800, 21);
  const auto nu = fit_nuisance_set(ds);
  for (double d : {0.3, 1.0, 1.1}) {
    const std::size_t a = nu.arm_index("0");
    const auto phi = eic_evaluate(nu, "0", DeltaValue::constant(d), 0.4);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double expected = phi_scalar(nu.obs.trial[i], nu.obs.arm[i] == static_cast<int>(a), nu.obs.z[i],
                                         nu.obs.y[i], nu.q1[a][i], nu.q0[a][i], nu.m[a][i], nu.g[a][i], nu.h[i],
                                         nu.k_hat, d, 0.4);
      CHECK(phi[i] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("one-step construction and mean-zero influence") {
  const auto ds = toy_sample(700, 500, 8);
  const auto nu = fit_nuisance_set(ds);
  for (double d : {0.0, 0.6, 1.0}) {
    const DeltaValue delta = DeltaValue::constant(d);
    const auto g = gcomp_psi(nu, "1", delta);
    const auto os = onestep_psi(nu, "1", delta);
    const double correction = empirical_mean(eic_evaluate(nu, "1", delta, g.point));
    CHECK(os.point == doctest::Approx(g.point + correction).epsilon(1e-12));
    CHECK(std::abs(empirical_mean(os.influence)) < 1e-10);
    CHECK(os.influence.size() == ds.size());
  }
}

TEST_CASE("at delta one the estimator reduces to the equal-adherence transport estimator") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto ds = toy_sample(600, 400, seed);
    const auto nu = fit_nuisance_set(ds);
    for (const char* arm : {"0", "1"}) {
      const auto os = onestep_psi(nu, arm, DeltaValue::constant(1.0));
      const auto ref = transport_onestep_setting1(nu, arm);
      CHECK(std::abs(os.point - ref.point) < 1e-12);
      for (std::size_t i = 0; i < ds.size(); ++i) CHECK(std::abs(os.influence[i] - ref.influence[i]) < 1e-10);
    }
  }
}

TEST_CASE("one-step estimate is close to the oracle at large n") {
  const auto ds = toy_sample(100000, 100000, 99);
  const auto nu = fit_nuisance_set(ds);
  CHECK(std::abs(onestep_psi(nu, "1", DeltaValue::constant(0.5)).point - 0.66) < 0.01);
  CHECK(std::abs(transport_onestep_setting1(nu, "1").point - 0.52) < 0.01);
}

TEST_CASE("both estimators are affine in a constant delta") {
  const auto ds = toy_sample(500, 500, 4);
  const auto nu = fit_nuisance_set(ds);
  for (auto est : {gcomp_psi, onestep_psi}) {
    const double v0 = est(nu, "1", DeltaValue::constant(0.0)).point;
    const double v1 = est(nu, "1", DeltaValue::constant(1.0)).point;
    const double vh = est(nu, "1", DeltaValue::constant(0.5)).point;
    CHECK(std::abs(vh - 0.5 * (v0 + v1)) < 1e-12);
  }
}

TEST_CASE("trial one-step estimator") {
  const auto ds = toy_sample(3000, 1000, 31);
  const auto nu = fit_nuisance_set(ds);

  SUBCASE("saturated fits give the directly standardized arm mean") {
    // Direct standardization over the trial covariate distribution.
    double cell_n[2] = {0, 0}, arm_n[2] = {0, 0}, arm_y[2] = {0, 0};
    for (const auto& r : ds.records()) {
      if (!r.trial) continue;
      const int w = static_cast<int>(r.w[0]);
      cell_n[w] += 1;
      if (*r.arm == "1") {
        arm_n[w] += 1;
        arm_y[w] += *r.y;
      }
    }
    const double standardized = (cell_n[0] * arm_y[0] / arm_n[0] + cell_n[1] * arm_y[1] / arm_n[1]) / (cell_n[0] + cell_n[1]);
    CHECK(trial_onestep(nu, "1").point == doctest::Approx(standardized).epsilon(1e-9));
  }

  SUBCASE("without covariates it is the arm's sample mean") {
    NuisanceOptions opt;
    opt.covariates = ModelCovariates{std::vector<std::size_t>{}, std::vector<std::size_t>{},
                                     std::vector<std::size_t>{}, std::vector<std::size_t>{}};
    const auto plain = fit_nuisance_set(ds, opt);
    double n = 0, s = 0;
    for (const auto& r : ds.records())
      if (r.trial && *r.arm == "0") {
        n += 1;
        s += *r.y;
      }
    CHECK(trial_onestep(plain, "0").point == doctest::Approx(s / n).epsilon(1e-9));
  }

  SUBCASE("target records do not enter") {
    std::vector<StudyRecord> more = ds.records();
    for (int k = 0; k < 500; ++k) more.push_back(target(k % 3 == 0 ? 1.0 : 0.0));
    const auto nu2 = fit_nuisance_set(StudyDataset(ds.schema(), std::move(more)));
    CHECK(trial_onestep(nu2, "1").point == doctest::Approx(trial_onestep(nu, "1").point).epsilon(1e-12));
  }
}

TEST_CASE("with a shared covariate law the transported estimate approaches the trial estimate") {
  DgpSpec spec = DgpSpec::toy(100000, 100000, 5);
  spec.p_target = spec.p_trial;
  const auto nu = fit_nuisance_set(generate_data(spec));
  CHECK(std::abs(transport_onestep_setting1(nu, "1").point - trial_onestep(nu, "1").point) < 0.01);
}

TEST_CASE("risk difference") {
  const auto ds = exact_toy();
  const auto nu = fit_nuisance_set(ds);
  const auto r1 = onestep_psi(nu, "1", DeltaValue::constant(1.0));
  const auto r0 = onestep_psi(nu, "0", DeltaValue::constant(1.0));

  CHECK(risk_difference(r1, r1).point == 0.0);
  const auto rd = risk_difference(r1, r0);
  CHECK(rd.point == doctest::Approx(0.52 - 0.33).epsilon(1e-9));
  CHECK(rd.estimand == Estimand::contrast);
  CHECK(rd.influence.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); i += 101) CHECK(rd.influence[i] == r1.influence[i] - r0.influence[i]);

  const auto g1 = gcomp_psi(nu, "1", DeltaValue::constant(1.0));
  const auto g0 = gcomp_psi(nu, "0", DeltaValue::constant(1.0));
  CHECK(risk_difference(g1, g0).influence.empty());
  CHECK_THROWS_AS(risk_difference(g1, r0), ConfigError);

  const auto other = fit_nuisance_set(toy_sample(2000, 1000, 1));
  CHECK_THROWS_AS(risk_difference(r1, onestep_psi(other, "0", DeltaValue::constant(1.0))), DataError);
}

TEST_CASE("delta invariant") {
  const auto nu = fit_nuisance_set(exact_toy());
  // m for arm 0 is 0.95 at W=0, so delta = 1.1 pushes m * delta above 1.
  CHECK_THROWS_WITH_AS(gcomp_psi(nu, "0", DeltaValue::constant(1.1)), doctest::Contains("arm '0'"), DeltaError);
  CHECK_THROWS_WITH_AS(onestep_psi(nu, "1", DeltaValue::constant(-0.1)), doctest::Contains("record"), DeltaError);
  CHECK_NOTHROW(gcomp_psi(nu, "1", DeltaValue::constant(1.25)));
  CHECK_THROWS_AS(DeltaValue::constant(std::nan("")), DeltaError);
  CHECK_THROWS_AS(gcomp_psi(nu, "2", DeltaValue::constant(1.0)), ConfigError);
}

TEST_CASE("stratified delta") {
  const auto ds = exact_toy();
  const auto nu = fit_nuisance_set(ds);
  const auto d = DeltaValue::by_stratum(ds, "w", {{"0", 1.0}, {"1", 0.5}});
  // 0.5 * (0.3 * 0.8 + 0.7 * 0.2) + 0.5 * (0.5 * 0.3 + 0.9 * 0.7)
  CHECK(gcomp_psi(nu, "1", d).point == doctest::Approx(0.58).epsilon(1e-9));
  const auto same = DeltaValue::by_stratum(ds, "w", {{"0", 0.7}, {"1", 0.7}});
  CHECK(onestep_psi(nu, "1", same).point ==
        doctest::Approx(onestep_psi(nu, "1", DeltaValue::constant(0.7)).point).epsilon(1e-12));
  CHECK_THROWS_AS(DeltaValue::by_stratum(ds, "w", {{"0", 1.0}}), ConfigError);
  CHECK_THROWS_AS(DeltaValue::by_stratum(ds, "w", {{"0", 1.0}, {"1", 1.0}, {"2", 1.0}}), ConfigError);
  CHECK_THROWS_AS(DeltaValue::by_stratum(ds, "v", {{"0", 1.0}}), ConfigError);

  const CovariateSchema cont({Covariate{"x", CovariateKind::continuous, {}}});
  const StudyDataset cds(cont, {StudyRecord{true, {0.3}, "t", 1, 1.0}, StudyRecord{false, {1.2}, {}, {}, {}}});
  CHECK_THROWS_AS(DeltaValue::by_stratum(cds, "x", {{"0", 1.0}}), ConfigError);
}

TEST_CASE("estimates are not clipped but flagged when outside [0, 1]") {
  EstimateResult r;
  r.estimand = Estimand::psi_os;
  r.point = 1.02;
  CHECK(r.out_of_range());
  r.point = 0.4;
  CHECK_FALSE(r.out_of_range());
  r.estimand = Estimand::contrast;
  r.point = -0.3;
  CHECK_FALSE(r.out_of_range());
}
