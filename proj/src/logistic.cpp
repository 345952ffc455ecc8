#include "transport/logistic.hpp"

#include <cmath>
#include <string>

#include "transport/errors.hpp"

namespace transport {

double expit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

Eigen::VectorXd LogisticModel::predict(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd eta = x * coefficients;
  return eta.unaryExpr([](double v) { return expit(v); });
}

namespace {

// log(1 + exp(eta)) without overflow.
double log1pexp(double eta) { return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

double log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y[i] * eta[i] - log1pexp(eta[i]);
  return ll;
}

}  // namespace

LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LogisticOptions& options) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (y.size() != n) throw FitError("design has " + std::to_string(n) + " rows but response has " + std::to_string(y.size()));
  if (n < p) throw FitError("fewer records (" + std::to_string(n) + ") than coefficients (" + std::to_string(p) + ")");
  if (y.maxCoeff() == y.minCoeff()) throw FitError("response is constant; logistic fit is undefined");

  {
    Eigen::MatrixXd gram = x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    if (ev.minCoeff() <= 1e-10 * std::max(1.0, ev.maxCoeff()))
      throw FitError("design matrix is not of full column rank");
  }

  LogisticModel model;
  model.coefficients = Eigen::VectorXd::Zero(p);
  // Start the intercept at the logit of the mean; the first column is the intercept.
  const double ybar = y.mean();
  model.coefficients[0] = logit(ybar);

  Eigen::VectorXd eta = x * model.coefficients;
  double ll = log_likelihood(eta, y);
  Eigen::VectorXd prob(n), weight(n);

  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = expit(eta[i]);
      weight[i] = prob[i] * (1.0 - prob[i]);
    }
    const Eigen::VectorXd score = x.transpose() * (y - prob);
    model.iterations = iter;
    if (score.cwiseAbs().maxCoeff() <= options.tolerance) {
      model.converged = true;
      break;
    }
    if (iter == options.max_iterations) break;

    const Eigen::MatrixXd info = x.transpose() * weight.asDiagonal() * x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) break;
    const Eigen::VectorXd step = ldlt.solve(score);
    if (!step.allFinite()) break;

    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 30; ++half) {
      const Eigen::VectorXd trial = model.coefficients + scale * step;
      const Eigen::VectorXd trial_eta = x * trial;
      const double trial_ll = log_likelihood(trial_eta, y);
      if (trial_ll >= ll - 1e-12 * std::abs(ll)) {
        model.coefficients = trial;
        eta = trial_eta;
        ll = trial_ll;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;
  }
  model.log_likelihood = ll;

  if (model.coefficients.cwiseAbs().maxCoeff() > options.separation_bound)
    throw FitError("complete separation detected (|coefficient| > " + std::to_string(options.separation_bound) + ")");
  return model;
}

}  // namespace transport
