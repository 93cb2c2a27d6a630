#include "nacu/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>

#include "nacu/error.hpp"
#include "nacu/rng.hpp"
#include "text_io.hpp"

namespace nacu {

std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed) {
  require(n > 0, ErrorKind::invalid_argument, "cannot resample an empty dataset");
  auto rng = make_rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

std::vector<std::uint64_t> ensemble_member_seeds(std::uint64_t seed, std::size_t members) {
  std::vector<std::uint64_t> seeds(members);
  for (std::size_t k = 0; k < members; ++k) seeds[k] = derive_seed(seed, k);
  return seeds;
}

EnsembleModel train_ensemble(const MlpSpec& spec, const Dataset& ds, const TrainConfig& cfg,
                             const std::vector<std::uint64_t>& member_seeds) {
  require(member_seeds.size() >= 2, ErrorKind::invalid_argument, "an ensemble needs at least 2 members");
  spec.validate();
  cfg.validate();

  auto train_member = [&](std::size_t k) {
    const auto seed = member_seeds[k];
    const auto rows = bootstrap_indices(ds.rows(), derive_seed(seed, "bootstrap"));
    MlpSpec member_spec = spec;
    member_spec.seed = derive_seed(seed, "init");
    TrainConfig member_cfg = cfg;
    member_cfg.seed = derive_seed(seed, "train");
    try {
      return train(MlpModel::init(member_spec), subset(ds, rows), member_cfg).model;
    } catch (const Error& e) {
      throw Error(e.kind(), "ensemble member " + std::to_string(k) + ": " + e.what());
    }
  };

  std::vector<std::future<MlpModel>> jobs;
  jobs.reserve(member_seeds.size());
  for (std::size_t k = 0; k < member_seeds.size(); ++k) jobs.push_back(std::async(std::launch::async, train_member, k));
  EnsembleModel em;
  em.member_seeds = member_seeds;
  for (auto& j : jobs) em.members.push_back(j.get());
  return em;
}

EnsembleModel train_ensemble(const MlpSpec& spec, const Dataset& ds, const TrainConfig& cfg, std::size_t members) {
  return train_ensemble(spec, ds, cfg, ensemble_member_seeds(cfg.seed, members));
}

double sample_std(std::vector<double> values) {
  require(values.size() >= 2, ErrorKind::invalid_argument, "sample std needs at least 2 values");
  std::sort(values.begin(), values.end());
  if (values.front() == values.back()) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (n - 1.0));
}

namespace {

double mean_output_std(const std::vector<Eigen::VectorXd>& preds) {
  const auto t = preds.front().size();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < t; ++j) {
    std::vector<double> column;
    column.reserve(preds.size());
    for (const auto& p : preds) column.push_back(p(j));
    acc += sample_std(std::move(column));
  }
  return acc / static_cast<double>(t);
}

}  // namespace

double ensemble_uncertainty(const EnsembleModel& em, const Eigen::VectorXd& x) {
  require(em.members.size() >= 2, ErrorKind::invalid_argument, "ensemble has fewer than 2 trained members");
  std::vector<Eigen::VectorXd> preds;
  preds.reserve(em.members.size());
  for (const auto& m : em.members) preds.push_back(m.predict(x));
  return mean_output_std(preds);
}

void McDropoutConfig::validate() const {
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorKind::invalid_argument, "dropout rate must lie in [0,1)");
  require(passes >= 2, ErrorKind::invalid_argument, "MC dropout needs at least 2 passes");
}

double mc_dropout_uncertainty(const MlpModel& model, const Eigen::VectorXd& x, const McDropoutConfig& cfg) {
  cfg.validate();
  std::vector<Eigen::VectorXd> preds;
  preds.reserve(cfg.passes);
  for (std::size_t k = 0; k < cfg.passes; ++k)
    preds.push_back(model.forward_with_dropout(x, cfg.dropout_rate, derive_seed(cfg.seed, k)).output);
  return mean_output_std(preds);
}

void save_ensemble(const EnsembleModel& em, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream manifest(dir / "ensemble.txt");
  require(static_cast<bool>(manifest), ErrorKind::io_error, "cannot write ensemble manifest in '" + dir.string() + "'");
  manifest << "nacu-ensemble 1\nmembers " << em.members.size() << '\n';
  for (std::size_t k = 0; k < em.members.size(); ++k) {
    const std::string file = "member_" + std::to_string(k) + ".txt";
    em.members[k].save(dir / file);
    manifest << "member " << k << ' ' << em.member_seeds.at(k) << ' ' << file << '\n';
  }
  manifest << "end\n";
}

EnsembleModel load_ensemble(const std::filesystem::path& dir) {
  std::ifstream in(dir / "ensemble.txt");
  require(static_cast<bool>(in), ErrorKind::io_error, "cannot open ensemble manifest in '" + dir.string() + "'");
  text_io::Reader rd(in, "ensemble manifest");
  rd.expect("nacu-ensemble");
  require(rd.u64() == 1, ErrorKind::parse_error, "unsupported ensemble manifest version");
  rd.expect("members");
  const auto n = rd.u64();
  EnsembleModel em;
  for (std::uint64_t k = 0; k < n; ++k) {
    rd.expect("member");
    require(rd.u64() == k, ErrorKind::parse_error, "ensemble members out of order");
    em.member_seeds.push_back(rd.u64());
    em.members.push_back(MlpModel::load(dir / rd.token()));
  }
  rd.expect("end");
  for (const auto& m : em.members) {
    require(m.spec().layer_widths == em.members.front().spec().layer_widths, ErrorKind::parse_error,
            "ensemble members disagree on their widths");
  }
  return em;
}

}  // namespace nacu
