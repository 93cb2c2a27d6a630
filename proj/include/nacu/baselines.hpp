#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "nacu/data.hpp"
#include "nacu/mlp.hpp"

namespace nacu {

struct EnsembleModel {
  std::vector<MlpModel> members;
  std::vector<std::uint64_t> member_seeds;
};

/// Row indices of a size-n resample drawn with replacement.
std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed);

/// Seeds used by train_ensemble for `members` members derived from `seed`.
std::vector<std::uint64_t> ensemble_member_seeds(std::uint64_t seed, std::size_t members);

/// Trains one member per seed; each seed drives the member's bootstrap
/// resample, initialization and minibatch order. Members train
/// concurrently.
EnsembleModel train_ensemble(const MlpSpec& spec, const Dataset& ds, const TrainConfig& cfg,
                             const std::vector<std::uint64_t>& member_seeds);
EnsembleModel train_ensemble(const MlpSpec& spec, const Dataset& ds, const TrainConfig& cfg, std::size_t members);

/// Sample standard deviation (n-1) of the values. The values are sorted
/// first so the result does not depend on their order.
double sample_std(std::vector<double> values);

/// Per-output sample std across member predictions, averaged over outputs.
double ensemble_uncertainty(const EnsembleModel& em, const Eigen::VectorXd& x);

struct McDropoutConfig {
  double dropout_rate = 0.1;
  std::size_t passes = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-output sample std across `passes` dropout-active forward passes,
/// averaged over outputs. Pass k uses derive_seed(cfg.seed, k).
double mc_dropout_uncertainty(const MlpModel& model, const Eigen::VectorXd& x, const McDropoutConfig& cfg);

/// Manifest plus one model file per member inside `dir`.
void save_ensemble(const EnsembleModel& em, const std::filesystem::path& dir);
EnsembleModel load_ensemble(const std::filesystem::path& dir);

}  // namespace nacu
