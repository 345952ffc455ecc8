#pragma once

#include <Eigen/Dense>

namespace transport {

struct LogisticOptions {
  double tolerance = 1e-8;   // on the max-norm of the score
  int max_iterations = 100;
  double separation_bound = 15.0;  // |coefficient| beyond this is treated as separation
};

struct LogisticModel {
  Eigen::VectorXd coefficients;
  bool converged = false;
  int iterations = 0;
  double log_likelihood = 0.0;

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

double expit(double eta);
double logit(double p);

// Bernoulli maximum likelihood by Newton-Raphson (IRLS) with step halving.
// Responses may be fractional in [0, 1] (quasi-binomial). Throws FitError when the
// response is constant, the design is rank deficient, or the data are separated.
// Non-convergence within max_iterations is returned with converged == false.
LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LogisticOptions& options = {});

}  // namespace transport
