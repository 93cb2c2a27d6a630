#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nacu/data.hpp"
#include "nacu/histogram.hpp"
#include "nacu/mlp.hpp"
#include "nacu/pseudo_loss.hpp"

namespace nacu {

/// Hidden-layer indices (0 = first hidden layer) whose neurons are covered.
using LayerSet = std::vector<std::size_t>;

/// Per-hidden-layer activation states of one sample.
using ActivationStates = std::vector<Eigen::VectorXd>;

inline constexpr double kMinScore = 1e-12;

/// Numerically stable logistic function, clamped to [0, 1].
double logistic(double t) noexcept;

/// Elementwise logistic(z * dL/dz) for every hidden layer.
ActivationStates activation_states(const TapRecord& taps, const std::vector<Eigen::VectorXd>& grads);

/// Tapped forward pass, pseudo-loss gradient, reverse sweep and activation
/// states for a single input.
ActivationStates compute_states(const MlpModel& model, const PseudoLoss& pl, const Eigen::VectorXd& x);
std::vector<ActivationStates> compute_states_batch(const MlpModel& model, const PseudoLoss& pl, const Eigen::MatrixXd& xs);

struct NacScore {
  double score = 0.0;        // S, sum of layer means, in [0, |M|]
  double uncertainty = 0.0;  // 1 / max(S, 1e-12)
  std::vector<double> layer_means;
};

class NacCalibration {
 public:
  /// `layer_widths[k]` is the neuron count of hidden layer `layers[k]`.
  NacCalibration(LayerSet layers, std::vector<std::size_t> layer_widths, std::size_t bins, double clip,
                 PseudoLoss pseudo_loss);

  const LayerSet& layers() const noexcept { return layers_; }
  const std::vector<std::size_t>& layer_widths() const noexcept { return widths_; }
  std::size_t bins() const noexcept { return bins_; }
  double clip() const noexcept { return clip_; }
  const PseudoLoss& pseudo_loss() const noexcept { return pseudo_loss_; }
  std::size_t neuron_total() const noexcept;
  std::uint64_t sample_count() const noexcept { return samples_; }

  /// Histogram of neuron `neuron` in the k-th tapped layer.
  const NeuronHistogram& histogram(std::size_t k, std::size_t neuron) const;

  /// Adds one sample's states (indexed by model hidden layer).
  void accumulate(const ActivationStates& states);
  void merge(const NacCalibration& other);

  NacScore score_states(const ActivationStates& states) const;

  /// Same histograms under a different clip level.
  NacCalibration with_clip(double clip) const;

  /// Throws unless this calibration fits the model's hidden layers.
  void check_model(const MlpModel& model) const;

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static NacCalibration load(std::istream& in);
  static NacCalibration load(const std::filesystem::path& path);

  friend bool operator==(const NacCalibration& a, const NacCalibration& b);

 private:
  LayerSet layers_;
  std::vector<std::size_t> widths_;
  std::size_t bins_;
  double clip_;
  PseudoLoss pseudo_loss_;
  std::vector<std::vector<NeuronHistogram>> hists_;
  std::uint64_t samples_ = 0;
};

/// Hidden-layer widths of `model` for the chosen layers.
std::vector<std::size_t> tapped_widths(const MlpModel& model, const LayerSet& layers);

/// Regression calibration: fits the Mahalanobis pseudo-loss on the model's
/// predictions over `calib`, then fills the histograms from the same rows.
NacCalibration calibrate(const MlpModel& model, const Dataset& calib, const LayerSet& layers,
                         std::size_t bins = 50, double clip = 0.01, double epsilon_reg = 1e-6);

/// Calibration with an explicit pseudo-loss (classification or a pre-fitted
/// regression loss). `features` is N x D.
NacCalibration calibrate(const MlpModel& model, const Eigen::MatrixXd& features, const LayerSet& layers,
                         std::size_t bins, double clip, const PseudoLoss& pl);

NacScore score(const NacCalibration& cal, const MlpModel& model, const Eigen::VectorXd& x);
std::vector<NacScore> score_batch(const NacCalibration& cal, const MlpModel& model, const Eigen::MatrixXd& xs);

/// CSV: sample_index,S,U_NAC,layer_<m>... with one row per score.
void write_scores_csv(std::ostream& out, const NacCalibration& cal, std::span<const NacScore> scores);

}  // namespace nacu
