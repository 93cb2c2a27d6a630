#include "nacu/histogram.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nacu/error.hpp"

namespace nacu {

NeuronHistogram::NeuronHistogram(std::size_t bins) : counts_(bins, 0) {
  require(bins > 0, ErrorKind::invalid_argument, "histogram needs at least one bin");
}

std::size_t NeuronHistogram::bin_of(double value) const {
  require(value >= 0.0 && value <= 1.0, ErrorKind::invalid_argument,
          "histogram value " + std::to_string(value) + " outside [0,1]");
  const auto b = counts_.size();
  const double scaled = static_cast<double>(b);
  auto idx = static_cast<std::size_t>(value * scaled);
  // The product may round up onto a bin edge; fma gives the exact sign.
  if (idx > 0 && std::fma(value, scaled, -static_cast<double>(idx)) < 0.0) --idx;
  return std::min(idx, b - 1);
}

void NeuronHistogram::add(double value, std::uint64_t weight) {
  counts_[bin_of(value)] += weight;
  total_ += weight;
}

void NeuronHistogram::merge(const NeuronHistogram& other) {
  require(other.counts_.size() == counts_.size(), ErrorKind::shape_mismatch,
          "cannot merge histograms with different bin counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  total_ += other.total_;
}

double NeuronHistogram::frequency(double value) const {
  require(total_ > 0, ErrorKind::invalid_argument, "histogram is empty");
  return static_cast<double>(counts_[bin_of(value)]) / static_cast<double>(total_);
}

NeuronHistogram NeuronHistogram::from_counts(std::vector<std::uint64_t> counts) {
  NeuronHistogram h(counts.size());
  h.total_ = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  h.counts_ = std::move(counts);
  return h;
}

double phi(const NeuronHistogram& hist, double value, double r) {
  require(r > 0.0 && std::isfinite(r), ErrorKind::invalid_argument, "clip level r must be positive");
  return std::min(hist.frequency(value), r) / r;
}

}  // namespace nacu
