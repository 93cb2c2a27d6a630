#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nacu/data.hpp"

namespace nacu {

enum class Activation { selu, relu, tanh };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a) noexcept;

// Self-normalizing SELU constants.
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;

double activate(Activation a, double pre) noexcept;
/// d activate / d pre, evaluated at the pre-activation value.
double activation_slope(Activation a, double pre) noexcept;

struct MlpSpec {
  std::vector<std::size_t> layer_widths;  // input, hidden..., output
  Activation activation = Activation::selu;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t input_dim() const { return layer_widths.front(); }
  std::size_t output_dim() const { return layer_widths.back(); }
  std::size_t hidden_layers() const { return layer_widths.size() - 2; }
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Intermediate values of one forward pass. `hidden[l]` is the
/// post-activation (post-dropout, if active) output of hidden layer l;
/// `pre_activation[l]` is the affine output feeding it.
struct TapRecord {
  std::vector<Eigen::VectorXd> pre_activation;
  std::vector<Eigen::VectorXd> hidden;
  Eigen::VectorXd output;
};

class MlpModel {
 public:
  MlpModel(MlpSpec spec, std::vector<DenseLayer> layers);

  /// Weights ~ Normal(0, 1/sqrt(fan_in)), zero biases, seeded by spec.seed.
  static MlpModel init(const MlpSpec& spec);

  const MlpSpec& spec() const noexcept { return spec_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  /// Forward pass recording every hidden output. With `dropout_active`,
  /// hidden units are dropped with the spec's rate (inverted dropout).
  TapRecord forward_tapped(const Eigen::VectorXd& x, bool dropout_active = false,
                           std::uint64_t seed = 0) const;
  /// Same, with an explicit dropout rate in [0, 1).
  TapRecord forward_with_dropout(const Eigen::VectorXd& x, double rate, std::uint64_t seed) const;

  /// dL/dz for every hidden post-activation output, given dL/dp.
  /// Dropout is inactive during the sweep.
  std::vector<Eigen::VectorXd> grad_wrt_taps(const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& loss_grad_at_output) const;
  std::vector<Eigen::VectorXd> grad_wrt_taps(const TapRecord& taps,
                                             const Eigen::VectorXd& loss_grad_at_output) const;

  Eigen::VectorXd predict(const Eigen::VectorXd& x) const;
  /// Row-wise prediction: N x D in, N x T out.
  Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& xs) const;

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static MlpModel load(std::istream& in);
  static MlpModel load(const std::filesystem::path& path);

  friend bool operator==(const MlpModel& a, const MlpModel& b);

 private:
  void check_input(const Eigen::VectorXd& x) const;

  MlpSpec spec_;
  std::vector<DenseLayer> layers_;
};

enum class Optimizer { sgd, adam };

Optimizer parse_optimizer(std::string_view name);
std::string_view to_string(Optimizer o) noexcept;

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  MlpModel model;
  std::vector<double> loss_curve;  // per-epoch mean squared error
};

/// Minibatch MSE training. Dropout (spec.dropout_rate) is active during
/// training. Throws ErrorKind::training_diverged on a non-finite loss.
TrainResult train(const MlpModel& model, const Dataset& ds, const TrainConfig& cfg);

}  // namespace nacu
