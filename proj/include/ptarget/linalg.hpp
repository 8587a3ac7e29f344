#pragma once

// Least squares with rank diagnostics, HC1 covariance, and a (weighted)
// logistic regression solved by iteratively reweighted least squares.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ptarget/error.hpp"

namespace ptarget {

/// Throws NumericalError naming the columns of X that are linearly dependent
/// on the others (relative pivot threshold 1e-10).
inline void require_full_rank(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                              const std::string& what) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  const auto rank = qr.rank();
  if (rank == X.cols()) return;
  std::string cols;
  const auto& perm = qr.colsPermutation().indices();
  std::vector<int> bad;
  for (Eigen::Index k = rank; k < X.cols(); ++k) bad.push_back(perm[k]);
  std::sort(bad.begin(), bad.end());
  for (int c : bad) {
    cols += " ";
    cols += (static_cast<std::size_t>(c) < names.size()) ? names[c] : "#" + std::to_string(c);
  }
  throw NumericalError(what + ": rank-deficient design (rank " + std::to_string(rank) + " of " +
                       std::to_string(X.cols()) + "); collinear columns:" + cols);
}

struct OlsFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd xtx_inv;
};

inline OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const std::vector<std::string>& names = {}, const std::string& what = "OLS") {
  if (X.rows() < X.cols()) {
    throw NumericalError(what + ": fewer observations (" + std::to_string(X.rows()) +
                         ") than design columns (" + std::to_string(X.cols()) + ")");
  }
  require_full_rank(X, names, what);
  OlsFit fit;
  const Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  fit.coef = ldlt.solve(X.transpose() * y);
  fit.residuals = y - X * fit.coef;
  fit.xtx_inv = ldlt.solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
  return fit;
}

/// Heteroskedasticity-robust (HC1) covariance of an OLS fit.
inline Eigen::MatrixXd hc1_covariance(const Eigen::MatrixXd& X, const OlsFit& fit) {
  const double n = static_cast<double>(X.rows());
  const double k = static_cast<double>(X.cols());
  Eigen::MatrixXd meat = X.transpose() * fit.residuals.array().square().matrix().asDiagonal() * X;
  Eigen::MatrixXd cov = fit.xtx_inv * meat * fit.xtx_inv;
  if (n > k) cov *= n / (n - k);
  return cov;
}

inline double logistic(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

struct LogitOptions {
  int max_iterations = 100;
  double gradient_tol = 1e-8;
  double step_tol = 1e-6;
  double loglik_rel_tol = 1e-10;
  /// |linear predictor| beyond which fitted probabilities are treated as
  /// degenerate, signalling (quasi-)separation.
  double separation_eta = 30.0;
};

enum class LogitStatus { converged, separated, not_converged };

struct LogitFit {
  Eigen::VectorXd coef;
  LogitStatus status = LogitStatus::not_converged;
  int iterations = 0;
  double loglik = 0.0;
};

/// Maximum-likelihood logit of y in {0,1} on X with case weights w, by Newton
/// steps (IRLS) with step halving whenever the log-likelihood decreases.
inline LogitFit fit_logit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, const LogitOptions& opt = {}) {
  const Eigen::Index n = X.rows(), p = X.cols();
  auto loglik = [&](const Eigen::VectorXd& eta) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      // log(1 + exp(eta)) computed stably
      const double e = eta[i];
      const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
      ll += w[i] * (y[i] * e - softplus);
    }
    return ll;
  };

  LogitFit fit;
  fit.coef = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double ll = loglik(eta);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    fit.iterations = it;
    Eigen::VectorXd prob(n), hw(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = logistic(eta[i]);
      hw[i] = w[i] * prob[i] * (1.0 - prob[i]);
    }
    const Eigen::VectorXd grad = X.transpose() * (w.array() * (y - prob).array()).matrix();
    const bool flat = grad.cwiseAbs().maxCoeff() < opt.gradient_tol;
    const Eigen::MatrixXd hess = X.transpose() * hw.asDiagonal() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Eigen::VectorXd step = ldlt.solve(grad);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      fit.status = eta.cwiseAbs().maxCoeff() > opt.separation_eta / 2 ? LogitStatus::separated
                                                                      : LogitStatus::not_converged;
      fit.loglik = ll;
      return fit;
    }
    // Under separation the gradient vanishes like exp(-|eta|) while the
    // Newton step stays O(1), so a flat gradient alone is not convergence.
    if (flat && step.cwiseAbs().maxCoeff() <= opt.step_tol * (1.0 + fit.coef.cwiseAbs().maxCoeff())) {
      fit.status = LogitStatus::converged;
      break;
    }
    double scale = 1.0;
    Eigen::VectorXd coef_new, eta_new;
    double ll_new = ll;
    for (int half = 0; half < 40; ++half) {
      coef_new = fit.coef + scale * step;
      eta_new = X * coef_new;
      ll_new = loglik(eta_new);
      if (ll_new >= ll - 1e-12 * std::abs(ll)) break;
      scale *= 0.5;
    }
    const double change = std::abs(ll_new - ll);
    fit.coef = coef_new;
    eta = eta_new;
    const double ll_old = ll;
    ll = ll_new;
    if (eta.cwiseAbs().maxCoeff() > opt.separation_eta) {
      fit.status = LogitStatus::separated;
      break;
    }
    if (change <= opt.loglik_rel_tol * std::max(1e-300, std::abs(ll_old))) {
      fit.status = LogitStatus::converged;
      break;
    }
  }
  fit.loglik = ll;
  return fit;
}

}  // namespace ptarget
