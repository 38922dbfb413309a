#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. None of them call into the code under test for the
// quantity being checked.

#include <Eigen/Dense>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <functional>
#include <vector>

namespace nidda::oracle {

struct PosteriorMoments {
  double mean = 0, variance = 0;
};

/// Mean and variance of lambda under Gamma(lambda; a, b) * prod Poisson(x_i; lambda),
/// by numerical integration of the unnormalized density.
inline PosteriorMoments integrate_posterior(double a, double b, const std::vector<int>& x) {
  auto log_density = [&](double lambda) {
    if (lambda <= 0) return -std::numeric_limits<double>::infinity();
    double lp = a * std::log(b) - std::lgamma(a) + (a - 1) * std::log(lambda) - b * lambda;
    for (int xi : x) lp += xi * std::log(lambda) - lambda - std::lgamma(xi + 1.0);
    return lp;
  };
  // Locate the bulk on a coarse grid first.
  const double hi = 400.0;
  const int grid = 40000;
  double best = -std::numeric_limits<double>::infinity(), at = 0;
  for (int i = 1; i <= grid; ++i) {
    const double l = hi * i / grid;
    const double v = log_density(l);
    if (v > best) best = v, at = l;
  }
  auto f = [&](double l, int power) {
    const double v = std::exp(log_density(l) - best);
    return power == 0 ? v : power == 1 ? l * v : l * l * v;
  };
  // Split around the peak so the quadrature sees it.
  const double w = std::max(1.0, 0.25 * at);
  std::vector<double> cuts{0.0};
  for (double c : {at - 4 * w, at - w, at + w, at + 4 * w}) {
    if (c > cuts.back() && c < hi) cuts.push_back(c);
  }
  cuts.push_back(hi);
  boost::math::quadrature::tanh_sinh<double> q;
  double m[3] = {0, 0, 0};
  for (int p = 0; p < 3; ++p) {
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
      m[p] += q.integrate([&](double l) { return f(l, p); }, cuts[s], cuts[s + 1], 1e-13);
    }
  }
  const double mean = m[1] / m[0];
  return {mean, m[2] / m[0] - mean * mean};
}

/// Central finite difference of a scalar function of a parameter vector.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& at, double h = 1e-5) {
  Eigen::VectorXd g(at.size());
  Eigen::VectorXd p = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = f(p);
    p[i] = keep - h;
    const double down = f(p);
    p[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// Max relative error with an absolute floor, as used for gradient checks.
inline double gradient_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric, double floor = 1e-4) {
  double worst = 0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double d = std::fabs(analytic[i] - numeric[i]);
    worst = std::max(worst, d / std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), floor}));
  }
  return worst;
}

/// Brute-force confusion counts by enumerating every record.
struct Counts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
};
inline Counts count_pairs(const std::vector<int>& labels, const std::vector<int>& preds, int positive) {
  Counts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool l = labels[i] == positive, p = preds[i] == positive;
    if (l && p) ++c.tp;
    else if (!l && !p) ++c.tn;
    else if (!l && p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

/// Probability of the positive class for two isotropic Gaussians with equal
/// priors and covariance sigma^2 I, evaluated at x.
inline double gaussian_posterior(const Eigen::VectorXd& x, const Eigen::VectorXd& mu0, const Eigen::VectorXd& mu1,
                                 double sigma) {
  const double d = ((x - mu0).squaredNorm() - (x - mu1).squaredNorm()) / (2 * sigma * sigma);
  return 1.0 / (1.0 + std::exp(-d));
}

/// Bayes accuracy of the same problem: Phi(|mu1 - mu0| / (2 sigma)).
inline double gaussian_bayes_accuracy(const Eigen::VectorXd& mu0, const Eigen::VectorXd& mu1, double sigma) {
  const double delta = (mu1 - mu0).norm() / (2 * sigma);
  return 0.5 * std::erfc(-delta / std::sqrt(2.0));
}

}  // namespace nidda::oracle
