#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "nacu/config.hpp"
#include "nacu/error.hpp"
#include "nacu/harness.hpp"
#include "nacu/metrics.hpp"

using namespace nacu;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.datasets.clear();
  DatasetSource src;
  src.name = "linear";
  src.synthetic = SyntheticSpec{SyntheticKind::linear, 200, 3, 0.1, 1};
  cfg.datasets.push_back(src);
  cfg.hidden = {8, 8};
  cfg.train.epochs = 5;
  cfg.nac.bins = {10};
  cfg.nac.clips = {0.05};
  cfg.ensemble.members = 2;
  cfg.mc_dropout.passes = 3;
  cfg.mc_dropout.sweep_rates = {0.1, 0.2};
  cfg.seeds = {0, 1};
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("nacu_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("sweep tie-break rule") {
  const NacChoice base{25, 0.01, {0, 1}, 0.5};
  CHECK(sweep_prefers(NacChoice{50, 0.01, {0, 1}, 0.6}, base));
  CHECK(sweep_prefers(NacChoice{10, 0.01, {0, 1}, 0.5}, base));
  CHECK_FALSE(sweep_prefers(NacChoice{50, 0.01, {0, 1}, 0.5}, base));
  CHECK(sweep_prefers(NacChoice{25, 0.05, {0, 1}, 0.5}, base));
  CHECK(sweep_prefers(NacChoice{25, 0.01, {0, 1, 2}, 0.5}, base));
  CHECK_FALSE(sweep_prefers(base, base));
}

TEST_CASE("sweep over a grid matches exhaustive evaluation") {
  const auto cfg = tiny_config();
  const auto ds = load_source(cfg.datasets.front());
  const auto parts = study_partitions(cfg, ds, 3);
  const auto model = train(MlpModel::init(study_model_spec(cfg, ds, 3)), parts.train, study_train_config(cfg, 3)).model;
  const auto ood = study_sweep_ood(cfg, 3);

  SUBCASE("singleton grid returns its point") {
    const SweepGrid grid{{25}, {0.05}, {{1}}, 1e-6};
    const auto c = sweep_nac(model, parts.calib, parts.sweep, ood, grid);
    CHECK(c.bins == 25);
    CHECK(c.clip == 0.05);
    CHECK(c.layers == LayerSet{1});
  }
  SUBCASE("full grid") {
    const SweepGrid grid{{5, 10, 25}, {0.01, 0.05, 0.1}, {{0}, {1}, {0, 1}}, 1e-6};
    const auto c = sweep_nac(model, parts.calib, parts.sweep, ood, grid);
    const auto pl = fit_pseudo_loss(model.predict_batch(parts.calib.features), 1e-6);
    const auto shifted = generate_ood(parts.sweep, ood);
    const auto eval = concat(parts.sweep, shifted);
    std::vector<double> labels(eval.rows(), 0.0);
    for (std::size_t i = parts.sweep.rows(); i < labels.size(); ++i) labels[i] = 1.0;
    std::optional<NacChoice> best;
    for (const auto& layers : grid.layer_sets)
      for (auto b : grid.bins)
        for (double r : grid.clips) {
          const auto cal = calibrate(model, parts.calib.features, layers, b, r, pl);
          std::vector<double> u;
          for (const auto& s : score_batch(cal, model, eval.features)) u.push_back(s.uncertainty);
          const double rho = pearson(u, labels);
          const bool better = !best || rho > best->rho ||
                              (rho == best->rho && (b < best->bins || (b == best->bins && (r > best->clip || (r == best->clip && layers.size() > best->layers.size())))));
          if (better) best = NacChoice{b, r, layers, rho};
        }
    REQUIRE(best);
    CHECK(c.bins == best->bins);
    CHECK(c.clip == best->clip);
    CHECK(c.layers == best->layers);
    CHECK(c.rho == best->rho);
  }
}

TEST_CASE("study wiring with mock methods") {
  auto cfg = tiny_config();
  const std::vector<ExtraMethod> extra{
      {"oracle_label", [](const EvaluationSet& e) { return e.reference; }},
      {"constant", [](const EvaluationSet& e) { return std::vector<double>(e.samples.rows(), 1.0); }},
  };
  const auto report = run_studies(cfg, {Study::ood, Study::mse}, extra);

  for (const auto& t : report.samples) {
    CHECK(t.row_ids.size() == t.reference.size());
    CHECK(t.methods.size() == t.uncertainty.size());
    for (const auto& u : t.uncertainty) CHECK(u.size() == t.row_ids.size());
    if (t.study == Study::ood) {
      std::size_t ones = 0;
      for (double v : t.reference) ones += v == 1.0;
      CHECK(ones * 2 == t.reference.size());
    }
  }

  const auto* ood_mock = report.find("linear", "oracle_label", Study::ood);
  REQUIRE(ood_mock);
  CHECK(ood_mock->rho_mean == doctest::Approx(1.0).epsilon(1e-12));
  const auto* mse_mock = report.find("linear", "oracle_label", Study::mse);
  REQUIRE(mse_mock);
  CHECK(mse_mock->rho_mean == doctest::Approx(1.0).epsilon(1e-12));

  const auto* constant = report.find("linear", "constant", Study::ood);
  REQUIRE(constant);
  CHECK(constant->n_runs == 0);
  CHECK(constant->failure.find("zero variance") != std::string::npos);

  for (const char* m : {kMethodNac, kMethodEnsemble, kMethodMcDropout}) {
    const auto* row = report.find("linear", m, Study::ood);
    REQUIRE(row);
    CHECK(row->n_runs == 2);
    CHECK(row->failure.empty());
    CHECK(row->ci_low <= row->rho_mean);
    CHECK(row->rho_mean <= row->ci_high);
  }
  CHECK(report.hyperparameters.size() == 2);
}

TEST_CASE("partitions are disjoint and the evaluation set is the test split") {
  const auto cfg = tiny_config();
  const auto ds = load_source(cfg.datasets.front());
  const auto p = study_partitions(cfg, ds, 0);
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (const Dataset* d : {&p.train, &p.test, &p.sweep, &p.calib}) {
    CHECK_FALSE(d->empty());
    for (auto r : d->row_ids) seen.insert(r);
    total += d->rows();
  }
  CHECK(seen.size() == total);
  CHECK(total <= ds.rows());

  auto one = cfg;
  one.seeds = {0};
  one.ensemble.enabled = false;
  one.mc_dropout.enabled = false;
  const auto report = run_studies(one, {Study::mse});
  REQUIRE(report.samples.size() == 1);
  CHECK(report.samples.front().row_ids == p.test.row_ids);
}

TEST_CASE("single-seed cells keep rho but are flagged") {
  auto cfg = tiny_config();
  cfg.seeds = {4};
  cfg.ensemble.enabled = false;
  cfg.mc_dropout.enabled = false;
  const auto report = run_studies(cfg, {Study::ood});
  const auto* row = report.find("linear", kMethodNac, Study::ood);
  REQUIRE(row);
  CHECK(row->n_runs == 1);
  CHECK_FALSE(std::isnan(row->rho_mean));
  CHECK_FALSE(row->failure.empty());
}

TEST_CASE("studies are deterministic") {
  auto cfg = tiny_config();
  cfg.workers = 2;
  std::ostringstream a, b;
  write_report_csv(run_studies(cfg, {Study::ood}), a);
  cfg.workers = 1;
  write_report_csv(run_studies(cfg, {Study::ood}), b);
  CHECK(a.str() == b.str());
}

TEST_CASE("report CSV round trip and plot data") {
  ExperimentReport report;
  for (const char* d : {"linear", "sinusoidal", "quadratic"})
    for (const char* m : {kMethodNac, kMethodEnsemble, kMethodMcDropout}) {
      report.rows.push_back({d, m, Study::ood, 0.7, 0.6, 0.8, 10, {}});
      report.rows.push_back({d, m, Study::mse, 0.2, 0.1, 0.3, 10, {}});
    }
  std::stringstream csv;
  write_report_csv(report, csv);
  const auto back = read_report_csv(csv);
  REQUIRE(back.rows.size() == report.rows.size());
  for (std::size_t i = 0; i < back.rows.size(); ++i) {
    CHECK(back.rows[i].dataset == report.rows[i].dataset);
    CHECK(back.rows[i].method == report.rows[i].method);
    CHECK(back.rows[i].study == report.rows[i].study);
    CHECK(back.rows[i].rho_mean == report.rows[i].rho_mean);
    CHECK(back.rows[i].n_runs == 10);
  }

  const auto dir = scratch("plots");
  emit_plot_data(report, dir);
  const auto ood = slurp(dir / "ood_plot.csv");
  CHECK(ood.rfind("dataset,method,rho_mean,ci_low,ci_high\n", 0) == 0);
  CHECK(std::count(ood.begin(), ood.end(), '\n') == 10);
  CHECK(fs::exists(dir / "ood_plot.svg"));

  const auto empty_dir = scratch("plots_empty");
  emit_plot_data(ExperimentReport{}, empty_dir, false);
  CHECK(slurp(empty_dir / "ood_plot.csv") == "dataset,method,rho_mean,ci_low,ci_high\n");
  CHECK(slurp(empty_dir / "mse_plot.csv") == "dataset,method,rho_mean,ci_low,ci_high\n");
  CHECK_FALSE(fs::exists(empty_dir / "ood_plot.svg"));
}

TEST_CASE("config JSON round trip") {
  const auto cfg = tiny_config();
  const auto back = config_from_json(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));
  CHECK(config_hash(back) == config_hash(cfg));
  auto other = cfg;
  other.output_dir = "elsewhere";
  CHECK(config_hash(other) == config_hash(cfg));
  other.train.epochs = 6;
  CHECK(config_hash(other) != config_hash(cfg));
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"version", 2}, {"datasets", nlohmann::json::array()}}), Error);
}

#ifdef NACU_CLI_PATH
namespace {

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + NACU_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
#ifdef WEXITSTATUS
  return WEXITSTATUS(rc);
#else
  return rc;
#endif
}

}  // namespace

TEST_CASE("command line workflow") {
  const auto dir = scratch("cli");
  auto cfg = tiny_config();
  cfg.seeds = {0, 1};
  std::ofstream(dir / "config.json") << config_to_json(cfg).dump(2);
  const auto c = (dir / "config.json").string();
  const auto log = dir / "log.txt";

  CHECK(run_cli("train --config \"" + c + "\" --out \"" + (dir / "m").string() + "\"", log) == 0);
  CHECK(fs::exists(dir / "m" / "model.txt"));
  const auto model = (dir / "m" / "model.txt").string();
  CHECK(run_cli("calibrate --config \"" + c + "\" --model \"" + model + "\" --bins 10 --clip 0.05 --out \"" +
                    (dir / "m").string() + "\"",
                log) == 0);
  CHECK(run_cli("score --config \"" + c + "\" --model \"" + model + "\" --calibration \"" +
                    (dir / "m" / "calibration.txt").string() + "\" --split test --out \"" + (dir / "m").string() + "\"",
                log) == 0);
  CHECK(slurp(dir / "m" / "scores.csv").rfind("sample_index,S,U_NAC,layer_0,layer_1\n", 0) == 0);
  CHECK(run_cli("sweep --config \"" + c + "\" --model \"" + model + "\" --out \"" + (dir / "m").string() + "\"", log) == 0);
  CHECK(slurp(log).find("\"rho\"") != std::string::npos);

  CHECK(run_cli("mse-study --config \"" + c + "\" --out \"" + (dir / "s").string() + "\"", log) == 0);
  CHECK(fs::exists(dir / "s" / "report.csv"));
  CHECK(fs::exists(dir / "s" / "runs.csv"));
  CHECK(fs::exists(dir / "s" / "provenance.json"));
  CHECK(fs::exists(dir / "s" / "plots" / "mse_plot.csv"));
  CHECK(run_cli("emit-plots --report \"" + (dir / "s" / "report.csv").string() + "\" --out \"" + (dir / "p").string() +
                    "\" --no-svg",
                log) == 0);
  CHECK(fs::exists(dir / "p" / "mse_plot.csv"));

  CHECK(run_cli("calibrate --config \"" + c + "\" --model \"" + (dir / "missing.txt").string() + "\"", log) == 1);
  CHECK(slurp(log).find("\"kind\":\"io_error\"") != std::string::npos);
  CHECK(run_cli("no-such-command", log) == 64);
}
#endif
