// nacu: command-line front end for NAC uncertainty estimation and the
// OoD / ID-error correlation studies.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nacu/config.hpp"
#include "nacu/error.hpp"
#include "nacu/harness.hpp"
#include "nacu/mlp.hpp"
#include "nacu/nac.hpp"

namespace {

using namespace nacu;
namespace fs = std::filesystem;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string dataset;
  std::vector<long> target_cols;
};

void add_common(CLI::App& cmd, CommonOptions& o) {
  cmd.add_option("--config", o.config, "JSON experiment configuration");
  cmd.add_option("--seed", o.seed, "Run seed (replaces the config's seed list)");
  cmd.add_option("--out", o.out, "Output directory (default: config, then $NACU_OUTPUT_DIR)");
  cmd.add_option("--dataset", o.dataset, "CSV dataset (replaces the config's datasets)");
  cmd.add_option("--target-col", o.target_cols, "Target column index; negative counts from the end")
      ->allow_extra_args(false);
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    cfg = load_config(o.config);
  } else {
    cfg.datasets.clear();
  }
  if (!o.dataset.empty()) {
    DatasetSource src;
    src.path = o.dataset;
    src.name = fs::path(o.dataset).stem().string();
    if (!o.target_cols.empty()) src.targets = o.target_cols;
    cfg.datasets = {src};
  } else if (!o.target_cols.empty()) {
    for (auto& d : cfg.datasets) d.targets = o.target_cols;
  }
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.out.empty()) cfg.output_dir = o.out;
  cfg.validate();
  return cfg;
}

fs::path output_dir(const ExperimentConfig& cfg) {
  const auto dir = resolve_output_dir(cfg);
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorKind::io_error, "cannot create output directory '" + dir.string() + "'");
  return dir;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

nlohmann::json choice_json(const NacChoice& c) {
  return {{"bins", c.bins}, {"clip", c.clip}, {"layers", c.layers}, {"rho", c.rho}};
}

int cmd_train(const CommonOptions& o) {
  const auto cfg = resolve_config(o);
  const auto seed = cfg.seeds.front();
  const Dataset ds = load_source(cfg.datasets.front());
  const auto parts = study_partitions(cfg, ds, seed);
  const auto result = train(MlpModel::init(study_model_spec(cfg, ds, seed)), parts.train, study_train_config(cfg, seed));
  const auto dir = output_dir(cfg);
  result.model.save(dir / "model.txt");
  std::ofstream curve(dir / "loss_curve.csv");
  curve << "epoch,mse\n";
  for (std::size_t e = 0; e < result.loss_curve.size(); ++e) curve << e + 1 << ',' << result.loss_curve[e] << '\n';
  print_json({{"model", (dir / "model.txt").string()},
              {"epochs", result.loss_curve.size()},
              {"final_mse", result.loss_curve.back()},
              {"train_rows", parts.train.rows()}});
  return 0;
}

int cmd_calibrate(const CommonOptions& o, const std::string& model_path, std::optional<std::size_t> bins,
                  std::optional<double> clip, std::vector<std::size_t> layers) {
  const auto cfg = resolve_config(o);
  const auto seed = cfg.seeds.front();
  const Dataset ds = load_source(cfg.datasets.front());
  const auto parts = study_partitions(cfg, ds, seed);
  const auto model = MlpModel::load(fs::path(model_path));
  if (layers.empty()) layers = cfg.layer_sets().front();
  const auto cal = calibrate(model, parts.calib, layers, bins.value_or(50), clip.value_or(0.01), cfg.nac.epsilon_reg);
  const auto dir = output_dir(cfg);
  cal.save(dir / "calibration.txt");
  print_json({{"calibration", (dir / "calibration.txt").string()},
              {"samples", cal.sample_count()},
              {"neurons", cal.neuron_total()}});
  return 0;
}

int cmd_score(const CommonOptions& o, const std::string& model_path, const std::string& cal_path,
              const std::string& split_name) {
  const auto cfg = resolve_config(o);
  const Dataset ds = load_source(cfg.datasets.front());
  Dataset target = ds;
  if (split_name != "all") {
    const auto parts = study_partitions(cfg, ds, cfg.seeds.front());
    if (split_name == "train") target = parts.train;
    else if (split_name == "test") target = parts.test;
    else if (split_name == "sweep") target = parts.sweep;
    else if (split_name == "calib") target = parts.calib;
    else fail(ErrorKind::invalid_argument, "unknown split '" + split_name + "'");
  }
  const auto model = MlpModel::load(fs::path(model_path));
  const auto cal = NacCalibration::load(fs::path(cal_path));
  const auto scores = score_batch(cal, model, target.features);
  const auto dir = output_dir(cfg);
  std::ofstream out(dir / "scores.csv");
  require(static_cast<bool>(out), ErrorKind::io_error, "cannot write scores.csv");
  write_scores_csv(out, cal, scores);
  print_json({{"scores", (dir / "scores.csv").string()}, {"rows", scores.size()}});
  return 0;
}

int cmd_sweep(const CommonOptions& o, const std::string& model_path) {
  const auto cfg = resolve_config(o);
  const auto seed = cfg.seeds.front();
  const Dataset ds = load_source(cfg.datasets.front());
  const auto parts = study_partitions(cfg, ds, seed);
  const auto model = MlpModel::load(fs::path(model_path));
  const auto choice = sweep_nac(model, parts.calib, parts.sweep, study_sweep_ood(cfg, seed), study_sweep_grid(cfg));
  const auto dir = output_dir(cfg);
  std::ofstream(dir / "sweep.json") << choice_json(choice).dump(2) << '\n';
  print_json(choice_json(choice));
  return 0;
}

int cmd_study(const CommonOptions& o, Study study, bool plots) {
  const auto cfg = resolve_config(o);
  const auto report = run_studies(cfg, {study});
  const auto dir = output_dir(cfg);
  write_report(report, dir);
  if (plots) emit_plot_data(report, dir / "plots");
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row{{"dataset", r.dataset}, {"method", r.method}, {"n_runs", r.n_runs}};
    row["rho_mean"] = std::isnan(r.rho_mean) ? nlohmann::json(nullptr) : nlohmann::json(r.rho_mean);
    if (!r.failure.empty()) row["failure"] = r.failure;
    rows.push_back(std::move(row));
  }
  print_json({{"report", (dir / "report.csv").string()}, {"study", to_string(study)}, {"cells", rows}});
  return 0;
}

int cmd_emit_plots(const std::string& report_path, const std::string& out, bool svg) {
  const auto report = read_report_csv(fs::path(report_path));
  const auto files = emit_plot_data(report, out, svg);
  nlohmann::json written = nlohmann::json::array();
  for (const auto& f : files) written.push_back(f.string());
  print_json({{"files", written}});
  return 0;
}

int report_error(std::string_view kind, const std::string& message, int code) {
  std::cerr << nlohmann::json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NAC uncertainty estimation for regression MLPs"};
  app.require_subcommand(1);

  CommonOptions train_o, cal_o, score_o, sweep_o, ood_o, mse_o;
  std::string model_path, cal_path, split_name = "all", report_path, plots_out = "plots";
  std::optional<std::size_t> bins;
  std::optional<double> clip;
  std::vector<std::size_t> layers;
  bool plots = true, no_svg = false;

  auto* train_cmd = app.add_subcommand("train", "Train the base regression MLP on the training split");
  add_common(*train_cmd, train_o);

  auto* cal_cmd = app.add_subcommand("calibrate", "Build NAC histograms on the calibration split");
  add_common(*cal_cmd, cal_o);
  cal_cmd->add_option("--model", model_path, "Model file")->required();
  cal_cmd->add_option("--bins", bins, "Histogram bin count (default 50)");
  cal_cmd->add_option("--clip", clip, "Clip level r (default 0.01)");
  cal_cmd->add_option("--layers", layers, "Hidden layer indices to cover (default: all)");

  auto* score_cmd = app.add_subcommand("score", "Write per-sample NAC scores");
  add_common(*score_cmd, score_o);
  score_cmd->add_option("--model", model_path, "Model file")->required();
  score_cmd->add_option("--calibration", cal_path, "Calibration file")->required();
  score_cmd->add_option("--split", split_name, "all|train|test|sweep|calib");

  auto* sweep_cmd = app.add_subcommand("sweep", "Choose NAC hyperparameters on the sweep split");
  add_common(*sweep_cmd, sweep_o);
  sweep_cmd->add_option("--model", model_path, "Model file")->required();

  auto* ood_cmd = app.add_subcommand("ood-study", "Correlation of uncertainty with synthetic OoD labels");
  add_common(*ood_cmd, ood_o);
  ood_cmd->add_flag("!--no-plots", plots, "Skip plot data");

  auto* mse_cmd = app.add_subcommand("mse-study", "Correlation of uncertainty with test-split squared error");
  add_common(*mse_cmd, mse_o);
  mse_cmd->add_flag("!--no-plots", plots, "Skip plot data");

  auto* plot_cmd = app.add_subcommand("emit-plots", "Plot data from a report.csv");
  plot_cmd->add_option("--report", report_path, "report.csv")->required();
  plot_cmd->add_option("--out", plots_out, "Output directory");
  plot_cmd->add_flag("--no-svg", no_svg, "Only write CSV plot data");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 64);
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_o);
    if (cal_cmd->parsed()) return cmd_calibrate(cal_o, model_path, bins, clip, layers);
    if (score_cmd->parsed()) return cmd_score(score_o, model_path, cal_path, split_name);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_o, model_path);
    if (ood_cmd->parsed()) return cmd_study(ood_o, Study::ood, plots);
    if (mse_cmd->parsed()) return cmd_study(mse_o, Study::mse, plots);
    if (plot_cmd->parsed()) return cmd_emit_plots(report_path, plots_out, !no_svg);
  } catch (const Error& e) {
    return report_error(to_string(e.kind()), e.what(), 1);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 2);
  }
  return 0;
}
