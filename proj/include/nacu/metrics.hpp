#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nacu {

/// Pearson product-moment correlation. Throws
/// ErrorKind::undefined_correlation when either input has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Closed-form point-biserial coefficient of x against 0/1 labels:
/// (m1 - m0) / s_n * sqrt(p q), with s_n the population std of x.
double point_biserial(std::span<const double> x, std::span<const int> labels);

/// Row-wise mean over outputs of the squared prediction error.
std::vector<double> per_sample_squared_error(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

double student_t_quantile(double probability, double degrees_of_freedom);

/// mean +/- t_{(1+level)/2, R-1} * s / sqrt(R) over per-run values.
Interval confidence_interval(std::span<const double> per_run, double level = 0.95);

/// Percentile bootstrap interval of pearson(x, y) over resampled sample
/// pairs. Resamples with an undefined correlation are skipped.
Interval bootstrap_correlation_interval(std::span<const double> x, std::span<const double> y,
                                        std::size_t resamples, std::uint64_t seed, double level = 0.95);

struct CorrelationReport {
  std::string method;
  double rho = 0.0;  // mean over runs
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;  // number of runs aggregated
};

CorrelationReport aggregate_runs(std::string method, std::span<const double> per_run_rhos, double level = 0.95);

}  // namespace nacu
