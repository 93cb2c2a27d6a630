#pragma once

// Reference implementations written directly from the definitions. They
// share no code with the library beyond its data types.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "nacu/mlp.hpp"

namespace oracle {

inline double act(nacu::Activation a, double v) {
  constexpr double lambda = 1.0507009873554804934;
  constexpr double alpha = 1.6732632423543772848;
  switch (a) {
    case nacu::Activation::selu: return v > 0 ? lambda * v : lambda * alpha * (std::exp(v) - 1.0);
    case nacu::Activation::relu: return v > 0 ? v : 0.0;
    case nacu::Activation::tanh: return std::tanh(v);
  }
  return v;
}

// Random weights and biases, so pre-activations hit both branches.
inline nacu::MlpModel random_model(std::vector<std::size_t> widths, nacu::Activation a, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<nacu::DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(widths[l]);
    const auto out = static_cast<Eigen::Index>(widths[l + 1]);
    nacu::DenseLayer d{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
    for (Eigen::Index i = 0; i < d.weight.size(); ++i) d.weight.data()[i] = n(rng) / std::sqrt(static_cast<double>(in));
    for (Eigen::Index i = 0; i < out; ++i) d.bias(i) = 0.5 * n(rng);
    layers.push_back(std::move(d));
  }
  return nacu::MlpModel(nacu::MlpSpec{std::move(widths), a, 0.0, seed}, std::move(layers));
}

// Network output as a function of hidden layer `from`'s output vector.
inline Eigen::VectorXd downstream(const nacu::MlpModel& m, std::size_t from, Eigen::VectorXd z) {
  const auto& layers = m.layers();
  for (std::size_t l = from + 1; l < layers.size(); ++l) {
    Eigen::VectorXd pre = layers[l].weight * z + layers[l].bias;
    if (l + 1 < layers.size())
      for (Eigen::Index i = 0; i < pre.size(); ++i) pre(i) = act(m.spec().activation, pre(i));
    z = pre;
  }
  return z;
}

// KL(u || softmax(logits)).
inline double kl_uniform(const Eigen::VectorXd& logits) {
  const double c = static_cast<double>(logits.size());
  const double mx = logits.maxCoeff();
  double z = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) z += std::exp(logits(i) - mx);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double log_p = logits(i) - mx - std::log(z);
    total += (1.0 / c) * (std::log(1.0 / c) - log_p);
  }
  return total;
}

inline double mahalanobis(const Eigen::VectorXd& p, const Eigen::VectorXd& mean, const Eigen::MatrixXd& inv) {
  const Eigen::VectorXd d = p - mean;
  double q = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    for (Eigen::Index j = 0; j < d.size(); ++j) q += d(i) * inv(i, j) * d(j);
  return std::sqrt(std::max(q, 0.0));
}

// Two-pass (n-1) covariance of the rows of x.
inline Eigen::MatrixXd covariance(const Eigen::MatrixXd& x) {
  const auto n = x.rows();
  const auto t = x.cols();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(t);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < t; ++c) mean(c) += x(r, c);
  mean /= static_cast<double>(n);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(t, t);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index a = 0; a < t; ++a)
      for (Eigen::Index b = 0; b < t; ++b) cov(a, b) += (x(r, a) - mean(a)) * (x(r, b) - mean(b));
  return cov / static_cast<double>(n - 1);
}

// Bin k holds values with k <= v*B < k+1; the product is exact in long
// double for the small bin counts used here. 1.0 lands in the last bin.
inline std::size_t bin(double v, std::size_t bins) {
  const long double scaled = static_cast<long double>(v) * static_cast<long double>(bins);
  for (std::size_t k = 0; k < bins; ++k)
    if (scaled >= static_cast<long double>(k) && scaled < static_cast<long double>(k + 1)) return k;
  return bins - 1;
}

// Recognition score of one sample from the raw calibration states.
// states[sample][layer](neuron), layers index into states.
inline double nac_score(const std::vector<std::vector<Eigen::VectorXd>>& calib,
                        const std::vector<Eigen::VectorXd>& sample, const std::vector<std::size_t>& layers,
                        std::size_t bins, double r) {
  double s = 0.0;
  for (auto l : layers) {
    const auto width = sample[l].size();
    double layer_sum = 0.0;
    for (Eigen::Index i = 0; i < width; ++i) {
      const auto target = bin(sample[l](i), bins);
      std::size_t count = 0;
      for (const auto& c : calib)
        if (bin(c[l](i), bins) == target) ++count;
      const double kappa = static_cast<double>(count) / static_cast<double>(calib.size());
      layer_sum += std::min(kappa, r) / r;
    }
    s += layer_sum / static_cast<double>(width);
  }
  return s;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double sample_std(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace oracle
