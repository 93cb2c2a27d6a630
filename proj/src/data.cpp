#include "nacu/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "nacu/error.hpp"
#include "nacu/rng.hpp"

namespace nacu {
namespace {

void column_stats(const Eigen::MatrixXd& m, Eigen::VectorXd& mean, Eigen::VectorXd& stddev) {
  const auto n = m.rows();
  mean = Eigen::VectorXd::Zero(m.cols());
  stddev = Eigen::VectorXd::Zero(m.cols());
  if (n == 0) return;
  mean = m.colwise().mean().transpose();
  if (n < 2) return;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double ss = (m.col(j).array() - mean(j)).square().sum();
    stddev(j) = std::sqrt(ss / static_cast<double>(n - 1));
  }
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& raw, const Eigen::VectorXd& mean,
                            const Eigen::VectorXd& stddev) {
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const double s = stddev(j) < kMinStd ? 1.0 : stddev(j);
    out.col(j) = (raw.col(j).array() - mean(j)) / s;
  }
  return out;
}

Eigen::MatrixXd destandardize(const Eigen::MatrixXd& z, const Eigen::VectorXd& mean,
                              const Eigen::VectorXd& stddev) {
  Eigen::MatrixXd out(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double s = stddev(j) < kMinStd ? 1.0 : stddev(j);
    out.col(j) = z.col(j).array() * s + mean(j);
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      return fields;
    }
    fields.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Dataset make_dataset(std::string name, const Eigen::MatrixXd& raw_features,
                     const Eigen::MatrixXd& raw_targets, std::vector<std::string> header,
                     std::vector<std::size_t> target_positions) {
  const auto n = raw_features.rows();
  require(n >= 1, ErrorKind::invalid_argument, "dataset needs at least one row");
  require(raw_features.cols() >= 1, ErrorKind::invalid_argument, "dataset needs at least one feature");
  require(raw_targets.cols() >= 1, ErrorKind::invalid_argument, "dataset needs at least one target");
  require(raw_targets.rows() == n, ErrorKind::shape_mismatch, "feature and target row counts differ");
  require(raw_features.allFinite() && raw_targets.allFinite(), ErrorKind::non_finite,
          "dataset contains non-finite values");

  const auto d = static_cast<std::size_t>(raw_features.cols());
  const auto t = static_cast<std::size_t>(raw_targets.cols());
  if (header.empty()) {
    for (std::size_t j = 0; j < d; ++j) header.push_back("x" + std::to_string(j));
    for (std::size_t j = 0; j < t; ++j) header.push_back("y" + std::to_string(j));
    target_positions.clear();
    for (std::size_t j = 0; j < t; ++j) target_positions.push_back(d + j);
  }
  require(header.size() == d + t && target_positions.size() == t, ErrorKind::shape_mismatch,
          "header does not match column counts");

  Dataset ds;
  ds.name = std::move(name);
  ds.header = std::move(header);
  ds.target_positions = std::move(target_positions);
  column_stats(raw_features, ds.feature_mean, ds.feature_std);
  column_stats(raw_targets, ds.target_mean, ds.target_std);
  ds.features = standardize(raw_features, ds.feature_mean, ds.feature_std);
  ds.targets = standardize(raw_targets, ds.target_mean, ds.target_std);
  ds.row_ids.resize(static_cast<std::size_t>(n));
  std::iota(ds.row_ids.begin(), ds.row_ids.end(), std::size_t{0});
  return ds;
}

Eigen::MatrixXd raw_features(const Dataset& ds) {
  return destandardize(ds.features, ds.feature_mean, ds.feature_std);
}

Eigen::MatrixXd raw_targets(const Dataset& ds) {
  return destandardize(ds.targets, ds.target_mean, ds.target_std);
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> rows) {
  Dataset out;
  out.name = ds.name;
  out.feature_mean = ds.feature_mean;
  out.feature_std = ds.feature_std;
  out.target_mean = ds.target_mean;
  out.target_std = ds.target_std;
  out.header = ds.header;
  out.target_positions = ds.target_positions;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), ds.features.cols());
  out.targets.resize(static_cast<Eigen::Index>(rows.size()), ds.targets.cols());
  out.row_ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < ds.rows(), ErrorKind::invalid_argument, "subset row out of range");
    const auto src = static_cast<Eigen::Index>(rows[i]);
    out.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(src);
    out.targets.row(static_cast<Eigen::Index>(i)) = ds.targets.row(src);
    out.row_ids.push_back(ds.row_ids[rows[i]]);
  }
  return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  require(a.feature_count() == b.feature_count() && a.target_count() == b.target_count(),
          ErrorKind::shape_mismatch, "cannot concatenate datasets with different columns");
  Dataset out = a;
  out.features.resize(a.features.rows() + b.features.rows(), a.features.cols());
  out.features << a.features, b.features;
  out.targets.resize(a.targets.rows() + b.targets.rows(), a.targets.cols());
  out.targets << a.targets, b.targets;
  out.row_ids.insert(out.row_ids.end(), b.row_ids.begin(), b.row_ids.end());
  return out;
}

Dataset parse_csv(std::istream& in, std::string name, const TargetSelector& selector) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::parse_error,
          "CSV '" + name + "' is empty (header row required)");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header;
  for (auto f : split_fields(line)) header.emplace_back(f);
  const std::size_t cols = header.size();

  std::vector<std::size_t> target_positions;
  for (long sel : selector) {
    const long pos = sel < 0 ? static_cast<long>(cols) + sel : sel;
    require(pos >= 0 && pos < static_cast<long>(cols), ErrorKind::invalid_argument,
            "target column " + std::to_string(sel) + " out of range for " + std::to_string(cols) +
                " columns");
    target_positions.push_back(static_cast<std::size_t>(pos));
  }
  if (target_positions.empty()) target_positions.push_back(cols - 1);
  std::sort(target_positions.begin(), target_positions.end());
  target_positions.erase(std::unique(target_positions.begin(), target_positions.end()),
                         target_positions.end());
  require(target_positions.size() < cols, ErrorKind::invalid_argument,
          "at least one feature column is required");

  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_fields(line);
    require(fields.size() == cols, ErrorKind::parse_error,
            "row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                " cells, expected " + std::to_string(cols));
    for (std::size_t c = 0; c < cols; ++c) {
      double v = 0.0;
      const auto f = fields[c];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc{} || ptr != f.data() + f.size() || f.empty() || !std::isfinite(v)) {
        fail(ErrorKind::parse_error, "non-numeric cell '" + std::string(f) + "' at row " +
                                         std::to_string(row) + ", column " + std::to_string(c + 1) +
                                         " (" + header[c] + ")");
      }
      values.push_back(v);
    }
  }
  require(row >= 2, ErrorKind::parse_error, "CSV '" + name + "' needs at least 2 data rows");

  const auto n = static_cast<Eigen::Index>(row);
  const auto t = static_cast<Eigen::Index>(target_positions.size());
  const auto d = static_cast<Eigen::Index>(cols) - t;
  Eigen::MatrixXd x(n, d), y(n, t);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index xi = 0, yi = 0;
    std::size_t next_target = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = values[static_cast<std::size_t>(i) * cols + c];
      if (next_target < target_positions.size() && target_positions[next_target] == c) {
        y(i, yi++) = v;
        ++next_target;
      } else {
        x(i, xi++) = v;
      }
    }
  }
  return make_dataset(std::move(name), x, y, std::move(header), std::move(target_positions));
}

Dataset load_csv(const std::filesystem::path& path, const TargetSelector& targets) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io_error, "cannot open '" + path.string() + "'");
  return parse_csv(in, path.stem().string(), targets);
}

void write_csv(const Dataset& ds, std::ostream& out) {
  for (std::size_t c = 0; c < ds.header.size(); ++c) out << (c ? "," : "") << ds.header[c];
  out << '\n';
  const Eigen::MatrixXd x = raw_features(ds);
  const Eigen::MatrixXd y = raw_targets(ds);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index xi = 0, yi = 0;
    std::size_t next_target = 0;
    for (std::size_t c = 0; c < ds.header.size(); ++c) {
      double v;
      if (next_target < ds.target_positions.size() && ds.target_positions[next_target] == c) {
        v = y(i, yi++);
        ++next_target;
      } else {
        v = x(i, xi++);
      }
      out << (c ? "," : "") << format_double(v);
    }
    out << '\n';
  }
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io_error, "cannot write '" + path.string() + "'");
  write_csv(ds, out);
}

void SplitSpec::validate() const {
  for (double f : {train_frac, test_frac}) {
    require(f > 0.0 && f < 1.0, ErrorKind::invalid_argument, "train/test fractions must lie in (0,1)");
  }
  for (double f : {sweep_frac, calib_frac}) {
    require(f >= 0.0 && f < 1.0, ErrorKind::invalid_argument, "sweep/calib fractions must lie in [0,1)");
  }
  require(train_frac + test_frac + sweep_frac + calib_frac <= 1.0 + 1e-12, ErrorKind::invalid_argument,
          "split fractions sum to more than 1");
}

std::vector<std::size_t> partition_sizes(std::size_t n, std::span<const double> fractions) {
  const double total_frac = std::accumulate(fractions.begin(), fractions.end(), 0.0);
  require(total_frac <= 1.0 + 1e-12, ErrorKind::invalid_argument, "split fractions sum to more than 1");
  const double nd = static_cast<double>(n);
  const auto total = std::min(n, static_cast<std::size_t>(std::floor(total_frac * nd + 1e-9)));

  std::vector<std::size_t> sizes(fractions.size());
  std::vector<double> remainder(fractions.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = fractions[i] * nd;
    sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[i] = exact - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  std::vector<std::size_t> order(fractions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total && k < order.size(); ++k) {
    if (fractions[order[k]] <= 0.0) continue;
    ++sizes[order[k]];
    ++assigned;
  }
  return sizes;
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  auto rng = make_rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(p[i - 1], p[pick(rng)]);
  }
  return p;
}

Partitions split(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  const double fracs[] = {spec.train_frac, spec.test_frac, spec.sweep_frac, spec.calib_frac};
  const auto sizes = partition_sizes(ds.rows(), fracs);
  static constexpr const char* kNames[] = {"train", "test", "sweep", "calib"};
  for (std::size_t i = 0; i < 4; ++i) {
    require(fracs[i] <= 0.0 || sizes[i] > 0, ErrorKind::invalid_argument,
            std::string(kNames[i]) + " partition is empty for " + std::to_string(ds.rows()) + " rows");
  }
  const auto perm = permutation(ds.rows(), spec.seed);
  std::span<const std::size_t> rest(perm);
  Dataset parts[4];
  for (std::size_t i = 0; i < 4; ++i) {
    parts[i] = subset(ds, rest.first(sizes[i]));
    rest = rest.subspan(sizes[i]);
  }
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2]), std::move(parts[3])};
}

void OodSpec::validate() const {
  require(std::isfinite(shift_factor) && std::isfinite(noise_std_factor), ErrorKind::invalid_argument,
          "OoD factors must be finite");
  require(noise_std_factor >= 0.0, ErrorKind::invalid_argument, "OoD noise factor must be >= 0");
}

Dataset generate_ood(const Dataset& ds, const OodSpec& spec) {
  spec.validate();
  require(!ds.empty(), ErrorKind::invalid_argument, "cannot synthesize OoD data from an empty dataset");
  Dataset out = ds;
  out.name = ds.name + "-ood";
  auto rng = make_rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
    const double sign = spec.random_sign && coin(rng) ? -1.0 : 1.0;
    for (Eigen::Index j = 0; j < out.features.cols(); ++j) {
      const double n = noise(rng);
      if (ds.feature_std(j) < kMinStd) continue;
      out.features(i, j) += sign * spec.shift_factor + spec.noise_std_factor * n;
    }
  }
  return out;
}

}  // namespace nacu
