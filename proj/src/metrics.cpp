#include "nacu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "nacu/error.hpp"
#include "nacu/rng.hpp"

namespace nacu {

double pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorKind::shape_mismatch, "correlation inputs differ in length");
  require(x.size() >= 3, ErrorKind::invalid_argument, "correlation needs at least 3 samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  require(std::isfinite(sxx) && std::isfinite(syy) && std::isfinite(sxy), ErrorKind::non_finite,
          "correlation inputs are non-finite");
  require(sxx > 0.0 && syy > 0.0, ErrorKind::undefined_correlation,
          "correlation undefined: zero variance in " + std::string(sxx > 0.0 ? "second" : "first") + " input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double point_biserial(std::span<const double> x, std::span<const int> labels) {
  require(x.size() == labels.size(), ErrorKind::shape_mismatch, "correlation inputs differ in length");
  double s0 = 0.0, s1 = 0.0;
  std::size_t n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, ErrorKind::invalid_argument, "labels must be 0 or 1");
    (labels[i] ? s1 : s0) += x[i];
    ++(labels[i] ? n1 : n0);
  }
  require(n0 > 0 && n1 > 0, ErrorKind::undefined_correlation, "point-biserial needs both label values");
  const double n = static_cast<double>(x.size());
  const double mean = (s0 + s1) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  require(ss > 0.0, ErrorKind::undefined_correlation, "correlation undefined: zero variance in first input");
  const double sn = std::sqrt(ss / n);
  const double p = static_cast<double>(n1) / n;
  return (s1 / static_cast<double>(n1) - s0 / static_cast<double>(n0)) / sn * std::sqrt(p * (1.0 - p));
}

std::vector<double> per_sample_squared_error(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), ErrorKind::shape_mismatch,
          "prediction and target shapes differ");
  require(pred.cols() > 0, ErrorKind::invalid_argument, "need at least one output column");
  std::vector<double> out(static_cast<std::size_t>(pred.rows()));
  for (Eigen::Index i = 0; i < pred.rows(); ++i)
    out[static_cast<std::size_t>(i)] = (pred.row(i) - target.row(i)).squaredNorm() / static_cast<double>(pred.cols());
  return out;
}

double student_t_quantile(double probability, double degrees_of_freedom) {
  const boost::math::students_t dist(degrees_of_freedom);
  return boost::math::quantile(dist, probability);
}

Interval confidence_interval(std::span<const double> per_run, double level) {
  require(per_run.size() >= 2, ErrorKind::invalid_argument, "confidence interval needs at least 2 runs");
  require(level > 0.0 && level < 1.0, ErrorKind::invalid_argument, "confidence level must lie in (0,1)");
  if (std::all_of(per_run.begin(), per_run.end(), [&](double v) { return v == per_run.front(); })) {
    return {per_run.front(), per_run.front()};
  }
  const double r = static_cast<double>(per_run.size());
  const double mean = std::accumulate(per_run.begin(), per_run.end(), 0.0) / r;
  double ss = 0.0;
  for (double v : per_run) ss += (v - mean) * (v - mean);
  const double half = student_t_quantile(0.5 + level / 2.0, r - 1.0) * std::sqrt(ss / (r - 1.0)) / std::sqrt(r);
  return {mean - half, mean + half};
}

Interval bootstrap_correlation_interval(std::span<const double> x, std::span<const double> y, std::size_t resamples,
                                        std::uint64_t seed, double level) {
  require(x.size() == y.size(), ErrorKind::shape_mismatch, "correlation inputs differ in length");
  require(resamples >= 2, ErrorKind::invalid_argument, "bootstrap needs at least 2 resamples");
  auto rng = make_rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  std::vector<double> rhos, bx(x.size()), by(y.size());
  for (std::size_t b = 0; b < resamples; ++b) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto k = pick(rng);
      bx[i] = x[k];
      by[i] = y[k];
    }
    try {
      rhos.push_back(pearson(bx, by));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::undefined_correlation) throw;
    }
  }
  require(rhos.size() >= 2, ErrorKind::undefined_correlation, "bootstrap correlations are undefined");
  std::sort(rhos.begin(), rhos.end());
  const auto at = [&](double q) {
    const double pos = q * static_cast<double>(rhos.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, rhos.size() - 1);
    return rhos[lo] + (pos - static_cast<double>(lo)) * (rhos[hi] - rhos[lo]);
  };
  const double tail = (1.0 - level) / 2.0;
  return {at(tail), at(1.0 - tail)};
}

CorrelationReport aggregate_runs(std::string method, std::span<const double> per_run_rhos, double level) {
  const auto ci = confidence_interval(per_run_rhos, level);
  CorrelationReport out;
  out.method = std::move(method);
  out.rho = std::accumulate(per_run_rhos.begin(), per_run_rhos.end(), 0.0) / static_cast<double>(per_run_rhos.size());
  out.ci_low = std::min(ci.low, out.rho);
  out.ci_high = std::max(ci.high, out.rho);
  out.n = per_run_rhos.size();
  return out;
}

}  // namespace nacu
