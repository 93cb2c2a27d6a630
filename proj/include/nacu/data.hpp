#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nacu {

/// Columns whose original standard deviation is below this are treated as
/// constant and standardized with a unit divisor.
inline constexpr double kMinStd = 1e-12;

/// A tabular dataset held in standardized units (one sample per row).
///
/// The per-column mean/std are those of the full source table. Subsets and
/// derived datasets keep the parent's statistics so every partition shares
/// one coordinate system.
struct Dataset {
  std::string name;
  Eigen::MatrixXd features;  // N x D, standardized
  Eigen::MatrixXd targets;   // N x T, standardized
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_std;
  Eigen::VectorXd target_mean;
  Eigen::VectorXd target_std;

  std::vector<std::string> header;            // source column order
  std::vector<std::size_t> target_positions;  // ascending positions in header
  std::vector<std::size_t> row_ids;           // row index in the source table

  std::size_t rows() const noexcept { return static_cast<std::size_t>(features.rows()); }
  std::size_t feature_count() const noexcept { return static_cast<std::size_t>(features.cols()); }
  std::size_t target_count() const noexcept { return static_cast<std::size_t>(targets.cols()); }
  bool empty() const noexcept { return rows() == 0; }
};

/// Builds a standardized dataset from raw (original-unit) columns.
/// `header` may be empty, in which case x0.., y0.. names are generated with
/// the targets placed last.
Dataset make_dataset(std::string name, const Eigen::MatrixXd& raw_features,
                     const Eigen::MatrixXd& raw_targets, std::vector<std::string> header = {},
                     std::vector<std::size_t> target_positions = {});

Eigen::MatrixXd raw_features(const Dataset& ds);
Eigen::MatrixXd raw_targets(const Dataset& ds);

/// Rows of `ds` in the given order; statistics are inherited.
Dataset subset(const Dataset& ds, std::span<const std::size_t> rows);

/// Row-wise concatenation of datasets sharing one column layout.
Dataset concat(const Dataset& a, const Dataset& b);

/// Target column selector. Negative entries count from the end (-1 = last).
using TargetSelector = std::vector<long>;

Dataset load_csv(const std::filesystem::path& path, const TargetSelector& targets = {-1});
Dataset parse_csv(std::istream& in, std::string name, const TargetSelector& targets = {-1});

/// Writes the dataset in original units with the source header order.
void write_csv(const Dataset& ds, std::ostream& out);
void write_csv(const Dataset& ds, const std::filesystem::path& path);

struct SplitSpec {
  double train_frac = 0.7;
  double test_frac = 0.2;
  double sweep_frac = 0.0;
  double calib_frac = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Partitions {
  Dataset train;
  Dataset test;
  Dataset sweep;
  Dataset calib;
};

/// Partition sizes for `n` rows: floor(f*n) per part, then the rows left
/// below floor(sum(f)*n) go one each to the parts with the largest
/// fractional remainders (earlier part wins ties).
std::vector<std::size_t> partition_sizes(std::size_t n, std::span<const double> fractions);

/// Seeded permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

Partitions split(const Dataset& ds, const SplitSpec& spec);

struct OodSpec {
  double shift_factor = 4.0;
  double noise_std_factor = 0.5;
  std::uint64_t seed = 0;
  bool random_sign = false;  // extension: per-sample +/- shift

  void validate() const;
};

/// Adds Normal(shift_factor, noise_std_factor) noise (in standardized
/// units, i.e. Normal(shift*sigma, noise*sigma) in original units) to every
/// non-constant feature. Targets are copied.
Dataset generate_ood(const Dataset& ds, const OodSpec& spec);

}  // namespace nacu
