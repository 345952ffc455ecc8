#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "transport/analysis.hpp"
#include "transport/data.hpp"
#include "transport/estimators.hpp"
#include "transport/nuisance.hpp"

namespace transport {

/// Trapezoidal density on [a, d]: rising linearly on [a, b], flat on [b, c], falling on [c, d].
/// a = b or c = d give one-sided shapes; a = b and c = d is uniform.
class TrapezoidDist {
 public:
  TrapezoidDist(double a, double b, double c, double d);

  double a() const { return a_; }
  double b() const { return b_; }
  double c() const { return c_; }
  double d() const { return d_; }

  double pdf(double x) const;
  double cdf(double x) const;
  double mean() const;
  // Inverse CDF: square-root inversion on the ramps, linear on the plateau.
  double quantile(double u) const;

  bool operator==(const TrapezoidDist&) const = default;

 private:
  double a_, b_, c_, d_;
  double height_;
};

double sample_trapezoid(const TrapezoidDist& dist, double u);

struct DeltaRange {
  double lower = 0.0;
  double upper = 1.0;
  bool operator==(const DeltaRange&) const = default;
};

// Constant, range (uniform when sampled), or trapezoid.
using ArmDeltaSpec = std::variant<double, DeltaRange, TrapezoidDist>;

// delta[lhs] <= delta[rhs]
struct DeltaConstraint {
  std::string lhs;
  std::string rhs;
};

struct DeltaScenario {
  std::map<std::string, ArmDeltaSpec> arms;
  std::size_t draws = 10000;
  std::uint64_t seed = 1;
  std::optional<DeltaConstraint> constraint;
};

// ---- static grid ----------------------------------------------------------

struct GridPoint {
  double arm_delta = 1.0;
  double referent_delta = 1.0;
};

struct GridRow {
  GridPoint deltas;
  Comparison comparison;
};

struct StaticGridResult {
  std::vector<GridRow> rows;
  std::optional<Comparison> setting1;  // equal-adherence reference estimators
};

// One comparison per grid point. With include_reference the (1, 1) point is added
// when absent and the equal-adherence reference comparison is computed as well.
StaticGridResult run_static_grid(const StudyDataset& ds, const NuisanceSet& nu, const std::string& arm,
                                 const std::string& referent, std::vector<GridPoint> grid,
                                 const AnalysisOptions& options, bool include_reference = true);

// ---- bounds -----------------------------------------------------------------

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct BoundsVertex {
  double arm_delta, referent_delta;
  double psi_arm, psi_referent, difference;
};

struct BoundsResult {
  DeltaRange arm_range, referent_range;
  Interval arm, referent, difference;
  std::vector<BoundsVertex> vertices;  // the four endpoint combinations
};

// The estimators are affine in a constant delta, so extremes sit at range endpoints.
BoundsResult run_bounds(const NuisanceSet& nu, const std::string& arm, const std::string& referent,
                        const DeltaRange& arm_range, const DeltaRange& referent_range, EstimatorKind estimator);

// ---- Monte Carlo ------------------------------------------------------------

struct McDraw {
  double delta_arm = 0.0, delta_referent = 0.0;
  double psi_arm = 0.0, psi_referent = 0.0;
  double se_arm = 0.0, se_referent = 0.0;
  double difference = 0.0, se_difference = 0.0;
  bool flagged = false;  // delta invariant violated; excluded from summaries
};

struct McTable {
  std::string arm, referent;
  std::uint64_t seed = 0;
  std::vector<McDraw> draws;
  std::size_t flagged = 0;
};

// Draws (delta_arm, delta_referent) pairs from independent per-arm streams.
std::vector<std::pair<double, double>> draw_delta_pairs(const DeltaScenario& scenario, const NuisanceSet& nu,
                                                        const std::string& arm, const std::string& referent);

// One-step estimates with influence-curve standard errors for every draw. Nuisances
// are reused across draws. Draws violating the delta invariant are flagged; more than
// 5% flagged is a DeltaError.
McTable run_mc(const NuisanceSet& nu, const DeltaScenario& scenario, const std::string& arm,
               const std::string& referent, unsigned threads = 1);

struct QuantitySummary {
  double median = 0.0;
  double lower = 0.0;  // 2.5th percentile
  double upper = 0.0;  // 97.5th percentile
};

struct McSummaryBlock {
  bool augmented = false;
  bool constrained = false;
  std::size_t subset_size = 0;
  QuantitySummary psi_arm, psi_referent, difference;
};

// Medians and type-7 percentile intervals. With se_augment each estimate has an
// independent N(0, se^2) draw subtracted first; those draws come from their own
// stream keyed by draw index.
McSummaryBlock summarize_mc(const McTable& table, bool se_augment, const std::optional<DeltaConstraint>& constraint,
                            std::uint64_t seed);

// All draws and constrained subset, each without and with random error.
std::vector<McSummaryBlock> summarize_all(const McTable& table, const std::optional<DeltaConstraint>& constraint,
                                          std::uint64_t seed);

// ---- adherence --------------------------------------------------------------

struct AdherenceSummary {
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

// Distribution of m_a(w) * delta over target records.
AdherenceSummary predicted_adherence_under_delta(const NuisanceSet& nu, const std::string& arm, double delta);

}  // namespace transport
