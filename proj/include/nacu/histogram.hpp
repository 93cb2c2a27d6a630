#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace nacu {

/// Fixed-range histogram over [0, 1] with uniform, left-closed bins; the
/// last bin also takes 1.0. Accumulators merge by bin-wise addition.
class NeuronHistogram {
 public:
  explicit NeuronHistogram(std::size_t bins = 50);

  std::size_t bin_count() const noexcept { return counts_.size(); }
  std::uint64_t total() const noexcept { return total_; }
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

  /// Bin holding `value`; throws unless value is in [0, 1].
  std::size_t bin_of(double value) const;

  void add(double value, std::uint64_t weight = 1);
  void merge(const NeuronHistogram& other);

  /// Relative frequency count(bin_of(value)) / total.
  double frequency(double value) const;

  /// Rebuilds a histogram from stored counts (used by file loaders).
  static NeuronHistogram from_counts(std::vector<std::uint64_t> counts);

  friend bool operator==(const NeuronHistogram&, const NeuronHistogram&) = default;

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// Clipped recognition score min(kappa(value), r) / r, in [0, 1].
double phi(const NeuronHistogram& hist, double value, double r);

}  // namespace nacu
