#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nacu/data.hpp"
#include "nacu/mlp.hpp"
#include "nacu/nac.hpp"
#include "nacu/synthetic.hpp"

namespace nacu {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kOutputDirEnv = "NACU_OUTPUT_DIR";

struct DatasetSource {
  std::string name;
  std::optional<SyntheticSpec> synthetic;  // either a generator ...
  std::filesystem::path path;              // ... or a CSV file
  TargetSelector targets{-1};
};

/// `train` and `test` are fractions of the whole table; sweep and calib
/// rows are carved out of the training portion and never used to fit.
struct SplitConfig {
  double train = 0.7;
  double test = 0.2;
  double sweep_of_train = 0.1;
  double calib_of_train = 0.1;

  SplitSpec to_split_spec(std::uint64_t seed) const;
};

struct NacGrid {
  std::vector<std::size_t> bins{10, 25, 50};
  std::vector<double> clips{0.001, 0.01, 0.05, 0.1};
  std::vector<LayerSet> layer_sets;  // empty: {all hidden layers}
  double epsilon_reg = 1e-6;
};

struct EnsembleSettings {
  bool enabled = true;
  std::size_t members = 10;
};

struct McDropoutSettings {
  bool enabled = true;
  double rate = 0.1;
  std::size_t passes = 10;
  bool sweep_rate = true;
  std::vector<double> sweep_rates{0.05, 0.1, 0.2, 0.3};
};

enum class CiMode { seeds, bootstrap };

struct ExperimentConfig {
  std::vector<DatasetSource> datasets;
  SplitConfig split;
  std::vector<std::size_t> hidden{128, 128, 128};
  Activation activation = Activation::selu;
  TrainConfig train;
  OodSpec ood;
  NacGrid nac;
  EnsembleSettings ensemble;
  McDropoutSettings mc_dropout;
  CiMode ci_mode = CiMode::seeds;
  std::size_t bootstrap_resamples = 1000;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output_dir;
  std::size_t workers = 1;

  void validate() const;
  /// Layer sets of the sweep grid with the empty default expanded.
  std::vector<LayerSet> layer_sets() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Stable 64-bit hash (FNV-1a) of the canonical JSON form, as hex.
std::string config_hash(const ExperimentConfig& cfg);

/// Output directory precedence: explicit value, config, $NACU_OUTPUT_DIR,
/// then "nacu-out".
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

/// The configuration used by the acceptance suite: the three synthetic
/// regression tasks, 8 features and 2000 rows each.
ExperimentConfig synthetic_suite_config(std::vector<std::uint64_t> seeds);

Dataset load_source(const DatasetSource& src);

}  // namespace nacu
