#include "nacu/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "nacu/baselines.hpp"
#include "nacu/error.hpp"

namespace nacu {

using nlohmann::json;

SplitSpec SplitConfig::to_split_spec(std::uint64_t seed) const {
  SplitSpec s;
  s.train_frac = train * (1.0 - sweep_of_train - calib_of_train);
  s.test_frac = test;
  s.sweep_frac = train * sweep_of_train;
  s.calib_frac = train * calib_of_train;
  s.seed = seed;
  return s;
}

void ExperimentConfig::validate() const {
  require(!datasets.empty(), ErrorKind::invalid_argument, "config needs at least one dataset");
  require(!seeds.empty(), ErrorKind::invalid_argument, "config needs at least one seed");
  for (const auto& d : datasets) {
    require(!d.name.empty(), ErrorKind::invalid_argument, "every dataset needs a name");
    require(d.synthetic.has_value() != !d.path.empty(), ErrorKind::invalid_argument,
            "dataset '" + d.name + "' needs exactly one of 'synthetic' or 'path'");
  }
  require(split.sweep_of_train > 0.0 && split.calib_of_train > 0.0 &&
              split.sweep_of_train + split.calib_of_train < 1.0,
          ErrorKind::invalid_argument, "sweep/calib shares of the training data must be positive and sum below 1");
  split.to_split_spec(0).validate();
  require(!hidden.empty(), ErrorKind::invalid_argument, "at least one hidden layer is required");
  for (auto w : hidden) require(w > 0, ErrorKind::invalid_argument, "hidden widths must be positive");
  train.validate();
  ood.validate();
  require(!nac.bins.empty() && !nac.clips.empty(), ErrorKind::invalid_argument, "NAC sweep grid must be non-empty");
  for (auto b : nac.bins) require(b > 0, ErrorKind::invalid_argument, "NAC bin counts must be positive");
  for (auto r : nac.clips) require(r > 0.0, ErrorKind::invalid_argument, "NAC clip levels must be positive");
  for (const auto& m : layer_sets()) {
    require(!m.empty(), ErrorKind::invalid_argument, "NAC layer sets must be non-empty");
    for (auto l : m) require(l < hidden.size(), ErrorKind::invalid_argument, "NAC layer index out of range");
  }
  require(ensemble.members >= 2, ErrorKind::invalid_argument, "ensemble needs at least 2 members");
  McDropoutConfig{mc_dropout.rate, mc_dropout.passes, 0}.validate();
  require(mc_dropout.rate > 0.0, ErrorKind::invalid_argument, "MC-dropout rate must be positive");
  for (double r : mc_dropout.sweep_rates)
    require(r > 0.0 && r < 1.0, ErrorKind::invalid_argument, "MC-dropout sweep rates must lie in (0,1)");
  require(workers >= 1, ErrorKind::invalid_argument, "workers must be >= 1");
}

std::vector<LayerSet> ExperimentConfig::layer_sets() const {
  if (!nac.layer_sets.empty()) return nac.layer_sets;
  LayerSet all(hidden.size());
  for (std::size_t l = 0; l < all.size(); ++l) all[l] = l;
  return {all};
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  try {
    require(j.is_object(), ErrorKind::parse_error, "config must be a JSON object");
    const int version = j.value("version", kConfigVersion);
    require(version == kConfigVersion, ErrorKind::parse_error,
            "unsupported config version " + std::to_string(version));
    ExperimentConfig cfg;

    for (const auto& d : j.at("datasets")) {
      DatasetSource src;
      src.name = d.at("name").get<std::string>();
      if (d.contains("synthetic")) {
        const auto& s = d.at("synthetic");
        SyntheticSpec spec;
        spec.kind = parse_synthetic_kind(s.value("kind", src.name));
        read(s, "rows", spec.rows);
        read(s, "features", spec.features);
        read(s, "noise_std", spec.noise_std);
        read(s, "seed", spec.seed);
        src.synthetic = spec;
      }
      if (d.contains("path")) {
        std::filesystem::path p = d.at("path").get<std::string>();
        src.path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
      }
      read(d, "target_columns", src.targets);
      cfg.datasets.push_back(std::move(src));
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      read(s, "train", cfg.split.train);
      read(s, "test", cfg.split.test);
      read(s, "sweep_of_train", cfg.split.sweep_of_train);
      read(s, "calib_of_train", cfg.split.calib_of_train);
    }
    if (j.contains("mlp")) {
      const auto& m = j.at("mlp");
      read(m, "hidden", cfg.hidden);
      if (m.contains("activation")) cfg.activation = parse_activation(m.at("activation").get<std::string>());
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      read(t, "epochs", cfg.train.epochs);
      read(t, "batch_size", cfg.train.batch_size);
      read(t, "learning_rate", cfg.train.learning_rate);
      if (t.contains("optimizer")) cfg.train.optimizer = parse_optimizer(t.at("optimizer").get<std::string>());
    }
    if (j.contains("ood")) {
      const auto& o = j.at("ood");
      read(o, "shift_factor", cfg.ood.shift_factor);
      read(o, "noise_std_factor", cfg.ood.noise_std_factor);
      read(o, "random_sign", cfg.ood.random_sign);
    }
    if (j.contains("nac")) {
      const auto& n = j.at("nac");
      read(n, "bins", cfg.nac.bins);
      read(n, "clips", cfg.nac.clips);
      read(n, "layer_sets", cfg.nac.layer_sets);
      read(n, "epsilon_reg", cfg.nac.epsilon_reg);
    }
    if (j.contains("ensemble")) {
      read(j.at("ensemble"), "enabled", cfg.ensemble.enabled);
      read(j.at("ensemble"), "members", cfg.ensemble.members);
    }
    if (j.contains("mc_dropout")) {
      const auto& m = j.at("mc_dropout");
      read(m, "enabled", cfg.mc_dropout.enabled);
      read(m, "rate", cfg.mc_dropout.rate);
      read(m, "passes", cfg.mc_dropout.passes);
      read(m, "sweep_rate", cfg.mc_dropout.sweep_rate);
      read(m, "sweep_rates", cfg.mc_dropout.sweep_rates);
    }
    if (j.contains("ci")) {
      const auto mode = j.at("ci").value("mode", std::string("seeds"));
      require(mode == "seeds" || mode == "bootstrap", ErrorKind::parse_error, "ci.mode must be seeds or bootstrap");
      cfg.ci_mode = mode == "seeds" ? CiMode::seeds : CiMode::bootstrap;
      read(j.at("ci"), "bootstrap_resamples", cfg.bootstrap_resamples);
    }
    read(j, "seeds", cfg.seeds);
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    read(j, "workers", cfg.workers);
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    fail(ErrorKind::parse_error, std::string("config: ") + e.what());
  }
}

json config_to_json(const ExperimentConfig& cfg) {
  json datasets = json::array();
  for (const auto& d : cfg.datasets) {
    json e{{"name", d.name}, {"target_columns", d.targets}};
    if (d.synthetic) {
      e["synthetic"] = {{"kind", std::string(to_string(d.synthetic->kind))},
                        {"rows", d.synthetic->rows},
                        {"features", d.synthetic->features},
                        {"noise_std", d.synthetic->noise_std},
                        {"seed", d.synthetic->seed}};
    } else {
      e["path"] = d.path.string();
    }
    datasets.push_back(std::move(e));
  }
  json j{
      {"version", kConfigVersion},
      {"datasets", std::move(datasets)},
      {"split",
       {{"train", cfg.split.train},
        {"test", cfg.split.test},
        {"sweep_of_train", cfg.split.sweep_of_train},
        {"calib_of_train", cfg.split.calib_of_train}}},
      {"mlp", {{"hidden", cfg.hidden}, {"activation", std::string(to_string(cfg.activation))}}},
      {"train",
       {{"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"learning_rate", cfg.train.learning_rate},
        {"optimizer", std::string(to_string(cfg.train.optimizer))}}},
      {"ood",
       {{"shift_factor", cfg.ood.shift_factor},
        {"noise_std_factor", cfg.ood.noise_std_factor},
        {"random_sign", cfg.ood.random_sign}}},
      {"nac",
       {{"bins", cfg.nac.bins},
        {"clips", cfg.nac.clips},
        {"layer_sets", cfg.nac.layer_sets},
        {"epsilon_reg", cfg.nac.epsilon_reg}}},
      {"ensemble", {{"enabled", cfg.ensemble.enabled}, {"members", cfg.ensemble.members}}},
      {"mc_dropout",
       {{"enabled", cfg.mc_dropout.enabled},
        {"rate", cfg.mc_dropout.rate},
        {"passes", cfg.mc_dropout.passes},
        {"sweep_rate", cfg.mc_dropout.sweep_rate},
        {"sweep_rates", cfg.mc_dropout.sweep_rates}}},
      {"ci",
       {{"mode", cfg.ci_mode == CiMode::seeds ? "seeds" : "bootstrap"},
        {"bootstrap_resamples", cfg.bootstrap_resamples}}},
      {"seeds", cfg.seeds},
      {"workers", cfg.workers},
  };
  if (!cfg.output_dir.empty()) j["output_dir"] = cfg.output_dir.string();
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io_error, "cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::parse_error, "config '" + path.string() + "': " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = config_to_json(cfg);
  j.erase("output_dir");
  j.erase("workers");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "nacu-out";
}

ExperimentConfig synthetic_suite_config(std::vector<std::uint64_t> seeds) {
  ExperimentConfig cfg;
  std::uint64_t gen_seed = 1;
  for (auto kind : {SyntheticKind::linear, SyntheticKind::sinusoidal, SyntheticKind::quadratic}) {
    DatasetSource src;
    src.name = std::string(to_string(kind));
    src.synthetic = SyntheticSpec{kind, 2000, 8, 0.1, gen_seed++};
    cfg.datasets.push_back(std::move(src));
  }
  cfg.seeds = std::move(seeds);
  return cfg;
}

Dataset load_source(const DatasetSource& src) {
  Dataset ds = src.synthetic ? make_synthetic(*src.synthetic) : load_csv(src.path, src.targets);
  ds.name = src.name;
  return ds;
}

}  // namespace nacu
