#include "nacu/synthetic.hpp"

#include <cmath>

#include "nacu/error.hpp"
#include "nacu/rng.hpp"

namespace nacu {

SyntheticKind parse_synthetic_kind(std::string_view name) {
  if (name == "linear") return SyntheticKind::linear;
  if (name == "sinusoidal") return SyntheticKind::sinusoidal;
  if (name == "quadratic") return SyntheticKind::quadratic;
  fail(ErrorKind::invalid_argument, "unknown synthetic generator '" + std::string(name) + "'");
}

std::string_view to_string(SyntheticKind kind) noexcept {
  switch (kind) {
    case SyntheticKind::linear: return "linear";
    case SyntheticKind::sinusoidal: return "sinusoidal";
    case SyntheticKind::quadratic: return "quadratic";
  }
  return "unknown";
}

Dataset make_synthetic(const SyntheticSpec& spec) {
  require(spec.rows >= 2 && spec.features >= 1, ErrorKind::invalid_argument,
          "synthetic dataset needs >= 2 rows and >= 1 feature");
  require(spec.noise_std >= 0.0, ErrorKind::invalid_argument, "synthetic noise must be >= 0");
  auto rng = make_rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto n = static_cast<Eigen::Index>(spec.rows);
  const auto d = static_cast<Eigen::Index>(spec.features);
  Eigen::VectorXd w(d);
  for (Eigen::Index j = 0; j < d; ++j) w(j) = normal(rng);

  Eigen::MatrixXd x(n, d), y(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double v = normal(rng);
      x(i, j) = v;
      switch (spec.kind) {
        case SyntheticKind::linear: acc += w(j) * v; break;
        case SyntheticKind::sinusoidal: acc += std::sin(v); break;
        case SyntheticKind::quadratic: acc += v * v; break;
      }
    }
    y(i, 0) = acc + spec.noise_std * normal(rng);
  }
  return make_dataset(std::string(to_string(spec.kind)), x, y);
}

}  // namespace nacu
