#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "transport/data.hpp"
#include "transport/estimators.hpp"
#include "transport/nuisance.hpp"

namespace transport {

enum class VarianceMethod { eic, bootstrap, sandwich };
std::string_view to_string(VarianceMethod m);
VarianceMethod parse_variance_method(std::string_view text);

enum class EstimatorKind { gcomp, onestep };
std::string_view to_string(EstimatorKind k);
EstimatorKind parse_estimator_kind(std::string_view text);

struct VarianceEstimate {
  VarianceMethod method = VarianceMethod::eic;
  double variance = 0.0;
  double se = 0.0;
  std::size_t replicates = 0;       // bootstrap: successful replicates
  std::size_t failed_replicates = 0;
  std::size_t stack_dimension = 0;  // sandwich only
};

struct CiResult {
  double level = 0.95;
  double lower = 0.0;
  double upper = 0.0;
  double point = 0.0;
};

// Sample variance of the influence values divided by their count.
VarianceEstimate eic_variance(std::span<const double> influence);

// A full re-estimation on a resampled dataset: refit nuisances, then estimate.
// Returns one or more statistics per replicate.
using BootstrapPipeline = std::function<std::vector<double>(const StudyDataset&)>;

struct BootstrapReplicates {
  std::vector<std::vector<double>> values;  // [replicate][statistic], successful replicates only
  std::size_t requested = 0;
  std::size_t failed = 0;
};

// Resamples trial and target records separately with replacement (n1 and n0 fixed).
// Records are put in a canonical order before resampling, so the result does not
// depend on the input row order. Replicates that throw a transport::Error are dropped;
// more than 5% failures is a FitError.
BootstrapReplicates bootstrap_replicates(const StudyDataset& ds, const BootstrapPipeline& pipeline,
                                         std::size_t replicates, std::uint64_t seed, unsigned threads = 1);

VarianceEstimate bootstrap_variance(const StudyDataset& ds, const std::function<double(const StudyDataset&)>& pipeline,
                                    std::size_t replicates, std::uint64_t seed, unsigned threads = 1);

// Variance of statistic `column` across the successful replicates.
VarianceEstimate bootstrap_variance(const BootstrapReplicates& reps, std::size_t column);

struct ArmDelta {
  std::string arm;
  DeltaValue delta;
};

/// Stacked estimating equations for the nuisance coefficients and one or more
/// transported means, evaluated on untruncated logistic predictions.
///
/// Parameter layout: for each distinct arm (beta1, beta0, alpha); for the one-step
/// stack also the treatment block(s) gamma and the selection block epsilon; then one
/// psi per requested (arm, delta).
class SandwichStack {
 public:
  SandwichStack(const StudyDataset& ds, const NuisanceSet& nu, std::vector<ArmDelta> targets, EstimatorKind kind);

  std::size_t dimension() const { return static_cast<std::size_t>(theta_.size()); }
  const Eigen::VectorXd& estimate() const { return theta_; }
  std::size_t psi_position(std::size_t target) const { return psi_offset_ + target; }

  // n x dimension matrix of per-record scores.
  Eigen::MatrixXd scores(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd mean_scores(const Eigen::VectorXd& theta) const;

  // Central-difference Jacobian of the mean score at the estimate.
  Eigen::MatrixXd bread() const;
  Eigen::MatrixXd meat() const;
  // (1/n) bread^-1 meat bread^-T. Throws FitError when the bread is singular.
  Eigen::MatrixXd covariance() const;

 private:
  struct Block {
    std::size_t offset;
    std::size_t width;
  };
  struct ArmBlocks {
    std::size_t arm;
    Block beta1, beta0, alpha;
  };

  std::size_t n_ = 0;
  EstimatorKind kind_;
  std::size_t arm_count_ = 0;
  Observations obs_;
  std::vector<ArmDelta> targets_;
  std::vector<std::size_t> target_block_;  // index into arm_blocks_
  Eigen::MatrixXd xq_, xm_, xg_, xh_;
  std::vector<ArmBlocks> arm_blocks_;
  std::vector<std::pair<std::size_t, Block>> treatment_blocks_;  // (modeled arm, block)
  Block selection_block_{0, 0};
  std::size_t psi_offset_ = 0;
  Eigen::VectorXd theta_;

  double treatment_probability(std::size_t arm, const std::vector<Eigen::VectorXd>& treatment_eta,
                               Eigen::Index i) const;
};

VarianceEstimate sandwich_variance(const StudyDataset& ds, const NuisanceSet& nu, std::string_view arm,
                                   const DeltaValue& delta, EstimatorKind which);

CiResult wald_ci(double point, const VarianceEstimate& var, double level = 0.95);

}  // namespace transport
