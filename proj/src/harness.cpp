#include "nacu/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nacu/baselines.hpp"
#include "nacu/error.hpp"
#include "nacu/rng.hpp"
#include "text_io.hpp"

namespace nacu {

std::string_view to_string(Study s) noexcept { return s == Study::ood ? "ood" : "mse"; }

Study parse_study(std::string_view name) {
  if (name == "ood") return Study::ood;
  if (name == "mse") return Study::mse;
  fail(ErrorKind::invalid_argument, "unknown study '" + std::string(name) + "'");
}

bool sweep_prefers(const NacChoice& a, const NacChoice& b) {
  if (a.rho != b.rho) return a.rho > b.rho;
  if (a.bins != b.bins) return a.bins < b.bins;
  if (a.clip != b.clip) return a.clip > b.clip;
  return a.layers.size() > b.layers.size();
}

namespace {

std::vector<int> ood_labels(std::size_t id_rows, std::size_t ood_rows) {
  std::vector<int> labels(id_rows + ood_rows, 0);
  std::fill(labels.begin() + static_cast<std::ptrdiff_t>(id_rows), labels.end(), 1);
  return labels;
}

std::vector<double> as_doubles(const std::vector<int>& v) { return {v.begin(), v.end()}; }

}  // namespace

NacChoice sweep_nac(const MlpModel& model, const Dataset& calib, const Dataset& sweep, const OodSpec& ood,
                    const SweepGrid& grid) {
  require(!sweep.empty(), ErrorKind::invalid_argument, "sweep split is empty");
  require(!calib.empty(), ErrorKind::invalid_argument, "calibration split is empty");
  require(!grid.bins.empty() && !grid.clips.empty() && !grid.layer_sets.empty(), ErrorKind::invalid_argument,
          "sweep grid is empty");

  const PseudoLoss pl = fit_pseudo_loss(model.predict_batch(calib.features), grid.epsilon_reg);
  const auto calib_states = compute_states_batch(model, pl, calib.features);
  const Dataset sweep_ood = generate_ood(sweep, ood);
  auto eval_states = compute_states_batch(model, pl, sweep.features);
  for (auto& s : compute_states_batch(model, pl, sweep_ood.features)) eval_states.push_back(std::move(s));
  const auto labels = as_doubles(ood_labels(sweep.rows(), sweep_ood.rows()));

  std::optional<NacChoice> best;
  std::string last_failure;
  for (const auto& layers : grid.layer_sets) {
    for (auto bins : grid.bins) {
      NacCalibration base(layers, tapped_widths(model, layers), bins, grid.clips.front(), pl);
      for (const auto& s : calib_states) base.accumulate(s);
      for (double clip : grid.clips) {
        const NacCalibration cal = base.with_clip(clip);
        std::vector<double> u;
        u.reserve(eval_states.size());
        for (const auto& s : eval_states) u.push_back(cal.score_states(s).uncertainty);
        NacChoice cand{bins, clip, layers, 0.0};
        try {
          cand.rho = pearson(u, labels);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::undefined_correlation) throw;
          last_failure = e.what();
          continue;
        }
        if (!best || sweep_prefers(cand, *best)) best = std::move(cand);
      }
    }
  }
  require(best.has_value(), ErrorKind::undefined_correlation,
          "every sweep grid point gave an undefined correlation (" + last_failure + ")");
  return *best;
}

Partitions study_partitions(const ExperimentConfig& cfg, const Dataset& ds, std::uint64_t seed) {
  return split(ds, cfg.split.to_split_spec(derive_seed(seed, "split")));
}

MlpSpec study_model_spec(const ExperimentConfig& cfg, const Dataset& ds, std::uint64_t seed) {
  MlpSpec spec;
  spec.layer_widths.push_back(ds.feature_count());
  for (auto w : cfg.hidden) spec.layer_widths.push_back(w);
  spec.layer_widths.push_back(ds.target_count());
  spec.activation = cfg.activation;
  spec.seed = derive_seed(seed, "nac-init");
  return spec;
}

TrainConfig study_train_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(seed, "nac-train");
  return tc;
}

SweepGrid study_sweep_grid(const ExperimentConfig& cfg) {
  return {cfg.nac.bins, cfg.nac.clips, cfg.layer_sets(), cfg.nac.epsilon_reg};
}

OodSpec study_sweep_ood(const ExperimentConfig& cfg, std::uint64_t seed) {
  OodSpec o = cfg.ood;
  o.seed = derive_seed(seed, "sweep-ood");
  return o;
}

const ReportRow* ExperimentReport::find(std::string_view dataset, std::string_view method, Study study) const {
  for (const auto& r : rows)
    if (r.dataset == dataset && r.method == method && r.study == study) return &r;
  return nullptr;
}

namespace {

struct CellResult {
  std::vector<RunRecord> runs;
  std::optional<HyperparameterRecord> hyper;
  std::vector<SampleTable> samples;
};

std::vector<std::string> method_names(const ExperimentConfig& cfg, const std::vector<ExtraMethod>& extra) {
  std::vector<std::string> names{kMethodNac};
  if (cfg.ensemble.enabled) names.emplace_back(kMethodEnsemble);
  if (cfg.mc_dropout.enabled) names.emplace_back(kMethodMcDropout);
  for (const auto& e : extra) names.push_back(e.name);
  return names;
}

double mc_rho(const MlpModel& model, const Dataset& samples, const std::vector<double>& labels, double rate,
              std::size_t passes, std::uint64_t seed) {
  std::vector<double> u;
  u.reserve(samples.rows());
  for (Eigen::Index i = 0; i < samples.features.rows(); ++i) {
    const McDropoutConfig mc{rate, passes, derive_seed(seed, static_cast<std::uint64_t>(i))};
    u.push_back(mc_dropout_uncertainty(model, samples.features.row(i).transpose(), mc));
  }
  return pearson(u, labels);
}

CellResult run_cell(const ExperimentConfig& cfg, const Dataset& ds, std::uint64_t seed,
                    const std::vector<Study>& studies, const std::vector<ExtraMethod>& extra) {
  CellResult out;
  const auto methods = method_names(cfg, extra);
  auto fail_all = [&](const std::string& why) {
    for (auto study : studies)
      for (const auto& m : methods) out.runs.push_back({ds.name, seed, study, m, std::nullopt, std::nullopt, why});
  };

  std::optional<Partitions> parts;
  MlpSpec spec;
  std::optional<MlpModel> model;
  std::optional<NacCalibration> cal;
  HyperparameterRecord hyper{ds.name, seed, {}, std::nullopt};
  try {
    parts = study_partitions(cfg, ds, seed);
    spec = study_model_spec(cfg, ds, seed);
    model = train(MlpModel::init(spec), parts->train, study_train_config(cfg, seed)).model;
    hyper.nac = sweep_nac(*model, parts->calib, parts->sweep, study_sweep_ood(cfg, seed), study_sweep_grid(cfg));
    cal = calibrate(*model, parts->calib, hyper.nac.layers, hyper.nac.bins, hyper.nac.clip, cfg.nac.epsilon_reg);
  } catch (const Error& e) {
    fail_all(e.what());
    return out;
  }

  // Baseline models; a failure here only affects that baseline.
  std::optional<EnsembleModel> ensemble;
  std::string ensemble_failure;
  if (cfg.ensemble.enabled) {
    try {
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(seed, "ensemble");
      ensemble = train_ensemble(spec, parts->train, tc, cfg.ensemble.members);
    } catch (const Error& e) {
      ensemble_failure = e.what();
    }
  }
  std::optional<MlpModel> mc_model;
  std::string mc_failure;
  double mc_rate = cfg.mc_dropout.rate;
  if (cfg.mc_dropout.enabled) {
    try {
      MlpSpec ms = spec;
      ms.dropout_rate = cfg.mc_dropout.rate;
      ms.seed = derive_seed(seed, "mc-init");
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(seed, "mc-train");
      mc_model = train(MlpModel::init(ms), parts->train, tc).model;
      if (cfg.mc_dropout.sweep_rate && !cfg.mc_dropout.sweep_rates.empty()) {
        const Dataset sweep_set = concat(parts->sweep, generate_ood(parts->sweep, study_sweep_ood(cfg, seed)));
        const auto labels = as_doubles(ood_labels(parts->sweep.rows(), parts->sweep.rows()));
        double best = -std::numeric_limits<double>::infinity();
        for (double rate : cfg.mc_dropout.sweep_rates) {
          try {
            const double rho = mc_rho(*mc_model, sweep_set, labels, rate, cfg.mc_dropout.passes,
                                      derive_seed(seed, "mc-sweep"));
            if (rho > best) {
              best = rho;
              mc_rate = rate;
            }
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::undefined_correlation) throw;
          }
        }
      }
      hyper.mc_dropout_rate = mc_rate;
    } catch (const Error& e) {
      mc_failure = e.what();
    }
  }
  out.hyper = hyper;

  for (auto study : studies) {
    EvaluationSet eval;
    if (study == Study::ood) {
      OodSpec eo = cfg.ood;
      eo.seed = derive_seed(seed, "eval-ood");
      const Dataset shifted = generate_ood(parts->test, eo);
      eval.samples = concat(parts->test, shifted);
      eval.labels = ood_labels(parts->test.rows(), shifted.rows());
      eval.reference = as_doubles(eval.labels);
    } else {
      eval.samples = parts->test;
      eval.squared_errors = per_sample_squared_error(model->predict_batch(eval.samples.features), eval.samples.targets);
      eval.reference = eval.squared_errors;
    }
    const auto& xs = eval.samples.features;
    const auto n = static_cast<std::size_t>(xs.rows());

    SampleTable table;
    table.dataset = ds.name;
    table.seed = seed;
    table.study = study;
    table.row_ids = eval.samples.row_ids;
    table.reference = eval.reference;

    auto record = [&](const std::string& method, const std::function<std::vector<double>()>& uncertainty,
                      const std::function<std::vector<double>()>& reference) {
      RunRecord rec{ds.name, seed, study, method, std::nullopt, std::nullopt, {}};
      try {
        const auto u = uncertainty();
        require(u.size() == n, ErrorKind::shape_mismatch, "method returned a wrong number of values");
        table.methods.push_back(method);
        table.uncertainty.push_back(u);
        const auto ref = reference();
        rec.rho = pearson(u, ref);
        if (cfg.ci_mode == CiMode::bootstrap) {
          rec.bootstrap_ci = bootstrap_correlation_interval(u, ref, cfg.bootstrap_resamples,
                                                            derive_seed(seed, "bootstrap-" + method));
        }
      } catch (const Error& e) {
        rec.failure = e.what();
      }
      out.runs.push_back(std::move(rec));
    };
    auto fixed_reference = [&] { return eval.reference; };
    auto own_reference = [&](const std::function<Eigen::MatrixXd()>& predict) {
      return [&eval, study, predict] {
        if (study == Study::ood) return eval.reference;
        return per_sample_squared_error(predict(), eval.samples.targets);
      };
    };

    record(
        kMethodNac,
        [&] {
          std::vector<double> u;
          u.reserve(n);
          for (const auto& s : score_batch(*cal, *model, xs)) u.push_back(s.uncertainty);
          return u;
        },
        fixed_reference);

    if (cfg.ensemble.enabled) {
      if (!ensemble) {
        out.runs.push_back({ds.name, seed, study, kMethodEnsemble, std::nullopt, std::nullopt, ensemble_failure});
      } else {
        record(
            kMethodEnsemble,
            [&] {
              std::vector<double> u(n);
              for (std::size_t i = 0; i < n; ++i)
                u[i] = ensemble_uncertainty(*ensemble, xs.row(static_cast<Eigen::Index>(i)).transpose());
              return u;
            },
            own_reference([&] {
              Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(xs.rows(), static_cast<Eigen::Index>(ds.target_count()));
              for (const auto& m : ensemble->members) mean += m.predict_batch(xs);
              return Eigen::MatrixXd(mean / static_cast<double>(ensemble->members.size()));
            }));
      }
    }
    if (cfg.mc_dropout.enabled) {
      if (!mc_model) {
        out.runs.push_back({ds.name, seed, study, kMethodMcDropout, std::nullopt, std::nullopt, mc_failure});
      } else {
        record(
            kMethodMcDropout,
            [&] {
              std::vector<double> u(n);
              const auto base = derive_seed(seed, "mc-eval");
              for (std::size_t i = 0; i < n; ++i) {
                const McDropoutConfig mc{mc_rate, cfg.mc_dropout.passes, derive_seed(base, i)};
                u[i] = mc_dropout_uncertainty(*mc_model, xs.row(static_cast<Eigen::Index>(i)).transpose(), mc);
              }
              return u;
            },
            own_reference([&] { return mc_model->predict_batch(xs); }));
      }
    }
    for (const auto& e : extra) record(e.name, [&] { return e.uncertainty(eval); }, fixed_reference);
    out.samples.push_back(std::move(table));
  }
  return out;
}

}  // namespace

ExperimentReport run_studies(const ExperimentConfig& cfg, const std::vector<Study>& studies,
                             const std::vector<ExtraMethod>& extra) {
  cfg.validate();
  require(!studies.empty(), ErrorKind::invalid_argument, "no study requested");
  ExperimentReport report;
  report.config_hash = config_hash(cfg);
  report.seeds = cfg.seeds;
  const auto methods = method_names(cfg, extra);

  struct Job {
    std::size_t dataset;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t d = 0; d < cfg.datasets.size(); ++d)
    for (auto s : cfg.seeds) jobs.push_back({d, s});

  std::vector<std::optional<Dataset>> data(cfg.datasets.size());
  std::vector<std::string> load_failure(cfg.datasets.size());
  for (std::size_t d = 0; d < cfg.datasets.size(); ++d) {
    try {
      data[d] = load_source(cfg.datasets[d]);
    } catch (const Error& e) {
      load_failure[d] = e.what();
    }
  }

  auto work = [&](const Job& job) {
    if (!data[job.dataset]) {
      CellResult r;
      for (auto study : studies)
        for (const auto& m : methods)
          r.runs.push_back({cfg.datasets[job.dataset].name, job.seed, study, m, std::nullopt, std::nullopt,
                            load_failure[job.dataset]});
      return r;
    }
    return run_cell(cfg, *data[job.dataset], job.seed, studies, extra);
  };

  // Cells are independent; results are assembled in job order.
  std::vector<CellResult> cells(jobs.size());
  for (std::size_t start = 0; start < jobs.size(); start += cfg.workers) {
    const std::size_t end = std::min(jobs.size(), start + cfg.workers);
    if (cfg.workers == 1) {
      cells[start] = work(jobs[start]);
      continue;
    }
    std::vector<std::future<CellResult>> futures;
    for (std::size_t k = start; k < end; ++k) futures.push_back(std::async(std::launch::async, work, jobs[k]));
    for (std::size_t k = start; k < end; ++k) cells[k] = futures[k - start].get();
  }

  for (auto& c : cells) {
    for (auto& r : c.runs) report.runs.push_back(std::move(r));
    if (c.hyper) report.hyperparameters.push_back(std::move(*c.hyper));
    for (auto& t : c.samples) report.samples.push_back(std::move(t));
  }

  for (const auto& src : cfg.datasets) {
    for (auto study : studies) {
      for (const auto& method : methods) {
        ReportRow row{src.name, method, study, std::nan(""), std::nan(""), std::nan(""), 0, {}};
        std::vector<double> rhos;
        std::vector<Interval> cis;
        std::string first_failure;
        for (const auto& r : report.runs) {
          if (r.dataset != src.name || r.study != study || r.method != method) continue;
          if (r.rho) {
            rhos.push_back(*r.rho);
            if (r.bootstrap_ci) cis.push_back(*r.bootstrap_ci);
          } else if (first_failure.empty()) {
            first_failure = r.failure;
          }
        }
        row.n_runs = rhos.size();
        if (rhos.empty()) {
          row.failure = first_failure.empty() ? "no successful runs" : first_failure;
        } else if (cfg.ci_mode == CiMode::bootstrap) {
          double lo = 0.0, hi = 0.0, mean = 0.0;
          for (std::size_t k = 0; k < rhos.size(); ++k) {
            mean += rhos[k];
            lo += cis[k].low;
            hi += cis[k].high;
          }
          const double r = static_cast<double>(rhos.size());
          row.rho_mean = mean / r;
          row.ci_low = std::min(lo / r, row.rho_mean);
          row.ci_high = std::max(hi / r, row.rho_mean);
        } else if (rhos.size() < 2) {
          row.rho_mean = rhos.front();
          row.failure = "confidence interval needs at least 2 successful runs";
        } else {
          const auto agg = aggregate_runs(method, rhos);
          row.rho_mean = agg.rho;
          row.ci_low = agg.ci_low;
          row.ci_high = agg.ci_high;
        }
        report.rows.push_back(std::move(row));
      }
    }
  }
  return report;
}

ExperimentReport run_ood_study(const ExperimentConfig& cfg, const std::vector<ExtraMethod>& extra) {
  return run_studies(cfg, {Study::ood}, extra);
}

ExperimentReport run_mse_study(const ExperimentConfig& cfg, const std::vector<ExtraMethod>& extra) {
  return run_studies(cfg, {Study::mse}, extra);
}

namespace {

std::string num(double v) { return std::isnan(v) ? "nan" : text_io::decimal(v); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  require(static_cast<bool>(out), ErrorKind::io_error, "cannot write '" + p.string() + "'");
  return out;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec && std::filesystem::is_directory(dir), ErrorKind::io_error,
          "cannot create directory '" + dir.string() + "'");
}

}  // namespace

void write_report_csv(const ExperimentReport& report, std::ostream& out) {
  out << "dataset,method,study,rho_mean,ci_low,ci_high,n_runs\n";
  for (const auto& r : report.rows) {
    out << csv_field(r.dataset) << ',' << csv_field(r.method) << ',' << to_string(r.study) << ',' << num(r.rho_mean)
        << ',' << num(r.ci_low) << ',' << num(r.ci_high) << ',' << r.n_runs << '\n';
  }
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  ensure_dir(dir);
  {
    auto out = open_out(dir / "report.csv");
    write_report_csv(report, out);
  }
  {
    auto out = open_out(dir / "runs.csv");
    out << "dataset,seed,study,method,rho,failure\n";
    for (const auto& r : report.runs) {
      out << csv_field(r.dataset) << ',' << r.seed << ',' << to_string(r.study) << ',' << csv_field(r.method) << ','
          << (r.rho ? num(*r.rho) : "nan") << ',' << csv_field(r.failure) << '\n';
    }
  }
  {
    auto out = open_out(dir / "failures.csv");
    out << "dataset,method,study,reason\n";
    for (const auto& r : report.rows)
      if (!r.failure.empty())
        out << csv_field(r.dataset) << ',' << csv_field(r.method) << ',' << to_string(r.study) << ','
            << csv_field(r.failure) << '\n';
  }
  {
    auto out = open_out(dir / "hyperparameters.csv");
    out << "dataset,seed,nac_bins,nac_clip,nac_layers,nac_sweep_rho,mc_dropout_rate\n";
    for (const auto& h : report.hyperparameters) {
      std::string layers;
      for (auto l : h.nac.layers) layers += (layers.empty() ? "" : " ") + std::to_string(l);
      out << csv_field(h.dataset) << ',' << h.seed << ',' << h.nac.bins << ',' << num(h.nac.clip) << ',' << layers
          << ',' << num(h.nac.rho) << ',' << (h.mc_dropout_rate ? num(*h.mc_dropout_rate) : "") << '\n';
    }
  }
  {
    const nlohmann::json prov{{"config_hash", report.config_hash},
                              {"seeds", report.seeds},
                              {"format_version", kConfigVersion},
                              {"tool", "nacu"}};
    auto out = open_out(dir / "provenance.json");
    out << prov.dump(2) << '\n';
  }
  const auto sample_dir = dir / "samples";
  ensure_dir(sample_dir);
  for (const auto& t : report.samples) {
    auto out = open_out(sample_dir / (t.dataset + "_seed" + std::to_string(t.seed) + "_" +
                                      std::string(to_string(t.study)) + ".csv"));
    out << "sample_index,row_id," << (t.study == Study::ood ? "ood_label" : "squared_error");
    for (const auto& m : t.methods) out << ",u_" << m;
    out << '\n';
    for (std::size_t i = 0; i < t.row_ids.size(); ++i) {
      out << i << ',' << t.row_ids[i] << ',' << num(t.reference[i]);
      for (const auto& u : t.uncertainty) out << ',' << num(u[i]);
      out << '\n';
    }
  }
}

namespace {

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double parse_num(const std::string& s) {
  if (s == "nan") return std::nan("");
  std::istringstream in(s);
  text_io::Reader rd(in, "report.csv");
  return rd.real();
}

}  // namespace

ExperimentReport read_report_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::parse_error, "report.csv is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "dataset,method,study,rho_mean,ci_low,ci_high,n_runs", ErrorKind::parse_error,
          "report.csv has an unexpected header");
  ExperimentReport report;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = parse_csv_line(line);
    require(f.size() == 7, ErrorKind::parse_error, "report.csv row has " + std::to_string(f.size()) + " fields");
    ReportRow r;
    r.dataset = f[0];
    r.method = f[1];
    r.study = parse_study(f[2]);
    r.rho_mean = parse_num(f[3]);
    r.ci_low = parse_num(f[4]);
    r.ci_high = parse_num(f[5]);
    std::istringstream nin(f[6]);
    text_io::Reader rd(nin, "report.csv");
    r.n_runs = rd.u64();
    report.rows.push_back(std::move(r));
  }
  return report;
}

ExperimentReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io_error, "cannot open '" + path.string() + "'");
  return read_report_csv(in);
}

}  // namespace nacu
