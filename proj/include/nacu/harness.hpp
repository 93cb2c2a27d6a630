#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nacu/config.hpp"
#include "nacu/data.hpp"
#include "nacu/metrics.hpp"
#include "nacu/mlp.hpp"
#include "nacu/nac.hpp"

namespace nacu {

enum class Study { ood, mse };

std::string_view to_string(Study s) noexcept;
Study parse_study(std::string_view name);

inline constexpr const char* kMethodNac = "nac";
inline constexpr const char* kMethodEnsemble = "ensemble";
inline constexpr const char* kMethodMcDropout = "mc_dropout";

struct SweepGrid {
  std::vector<std::size_t> bins;
  std::vector<double> clips;
  std::vector<LayerSet> layer_sets;
  double epsilon_reg = 1e-6;
};

struct NacChoice {
  std::size_t bins = 0;
  double clip = 0.0;
  LayerSet layers;
  double rho = 0.0;
};

/// True when `a` wins the sweep over `b`: higher rho, then smaller B,
/// larger r, larger |M|.
bool sweep_prefers(const NacChoice& a, const NacChoice& b);

/// Scores every grid point on sweep-ID plus an equal number of synthesized
/// sweep-OoD rows (label 1), calibrating on `calib`, and returns the point
/// with the best point-biserial correlation.
NacChoice sweep_nac(const MlpModel& model, const Dataset& calib, const Dataset& sweep, const OodSpec& ood,
                    const SweepGrid& grid);

/// Samples shared by every method of one study run.
struct EvaluationSet {
  Dataset samples;
  std::vector<double> reference;  // OoD label (0/1) or per-sample squared error
  std::vector<int> labels;        // ood study only
  std::vector<double> squared_errors;  // base model, mse study only
};

/// Extra uncertainty source evaluated next to the built-in methods (used
/// for wiring checks): returns one value per evaluation sample.
using MethodHook = std::function<std::vector<double>(const EvaluationSet&)>;

struct ExtraMethod {
  std::string name;
  MethodHook uncertainty;
};

struct RunRecord {
  std::string dataset;
  std::uint64_t seed = 0;
  Study study = Study::ood;
  std::string method;
  std::optional<double> rho;
  std::optional<Interval> bootstrap_ci;
  std::string failure;  // empty on success
};

struct HyperparameterRecord {
  std::string dataset;
  std::uint64_t seed = 0;
  NacChoice nac;
  std::optional<double> mc_dropout_rate;
};

struct SampleTable {
  std::string dataset;
  std::uint64_t seed = 0;
  Study study = Study::ood;
  std::vector<std::size_t> row_ids;
  std::vector<double> reference;
  std::vector<std::string> methods;
  std::vector<std::vector<double>> uncertainty;  // per method, per sample
};

struct ReportRow {
  std::string dataset;
  std::string method;
  Study study = Study::ood;
  double rho_mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_runs = 0;
  std::string failure;  // non-empty when the cell could not be aggregated
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  std::vector<RunRecord> runs;
  std::vector<HyperparameterRecord> hyperparameters;
  std::vector<SampleTable> samples;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;

  const ReportRow* find(std::string_view dataset, std::string_view method, Study study) const;
};

/// Seed-derived pieces of one (dataset, seed) cell, shared with the CLI so
/// `train`/`calibrate` reproduce the study's NAC model.
Partitions study_partitions(const ExperimentConfig& cfg, const Dataset& ds, std::uint64_t seed);
MlpSpec study_model_spec(const ExperimentConfig& cfg, const Dataset& ds, std::uint64_t seed);
TrainConfig study_train_config(const ExperimentConfig& cfg, std::uint64_t seed);
SweepGrid study_sweep_grid(const ExperimentConfig& cfg);
OodSpec study_sweep_ood(const ExperimentConfig& cfg, std::uint64_t seed);

/// Trains each (dataset, seed) cell once and evaluates every requested
/// study on the same models.
ExperimentReport run_studies(const ExperimentConfig& cfg, const std::vector<Study>& studies,
                             const std::vector<ExtraMethod>& extra = {});
ExperimentReport run_ood_study(const ExperimentConfig& cfg, const std::vector<ExtraMethod>& extra = {});
ExperimentReport run_mse_study(const ExperimentConfig& cfg, const std::vector<ExtraMethod>& extra = {});

/// report.csv, runs.csv, hyperparameters.csv, failures.csv,
/// provenance.json and samples/*.csv inside `dir`.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

void write_report_csv(const ExperimentReport& report, std::ostream& out);
/// Parses report.csv back into report rows.
ExperimentReport read_report_csv(std::istream& in);
ExperimentReport read_report_csv(const std::filesystem::path& path);

/// <study>_plot.csv (dataset,method,rho_mean,ci_low,ci_high) for both
/// studies, plus an SVG bar chart per study when `svg` is set.
std::vector<std::filesystem::path> emit_plot_data(const ExperimentReport& report, const std::filesystem::path& dir,
                                                  bool svg = true);

}  // namespace nacu
