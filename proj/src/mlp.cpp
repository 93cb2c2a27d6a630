#include "nacu/mlp.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "nacu/error.hpp"
#include "nacu/rng.hpp"
#include "text_io.hpp"

namespace nacu {

Activation parse_activation(std::string_view name) {
  if (name == "selu") return Activation::selu;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  fail(ErrorKind::invalid_argument, "unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) noexcept {
  switch (a) {
    case Activation::selu: return "selu";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "unknown";
}

double activate(Activation a, double pre) noexcept {
  switch (a) {
    case Activation::selu: return pre > 0.0 ? kSeluLambda * pre : kSeluLambda * kSeluAlpha * std::expm1(pre);
    case Activation::relu: return pre > 0.0 ? pre : 0.0;
    case Activation::tanh: return std::tanh(pre);
  }
  return pre;
}

double activation_slope(Activation a, double pre) noexcept {
  switch (a) {
    case Activation::selu: return pre > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(pre);
    case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

void MlpSpec::validate() const {
  require(layer_widths.size() >= 3, ErrorKind::invalid_argument,
          "MLP needs input, at least one hidden layer and output widths");
  for (auto w : layer_widths) require(w > 0, ErrorKind::invalid_argument, "layer widths must be positive");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorKind::invalid_argument,
          "dropout rate must lie in [0,1)");
}

MlpModel::MlpModel(MlpSpec spec, std::vector<DenseLayer> layers)
    : spec_(std::move(spec)), layers_(std::move(layers)) {
  spec_.validate();
  require(layers_.size() == spec_.layer_widths.size() - 1, ErrorKind::shape_mismatch,
          "layer count does not match spec");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(spec_.layer_widths[l]);
    const auto out = static_cast<Eigen::Index>(spec_.layer_widths[l + 1]);
    const auto& layer = layers_[l];
    require(layer.weight.rows() == out && layer.weight.cols() == in && layer.bias.size() == out,
            ErrorKind::shape_mismatch, "layer " + std::to_string(l) + " parameter shape mismatch");
    require(layer.weight.allFinite() && layer.bias.allFinite(), ErrorKind::non_finite,
            "layer " + std::to_string(l) + " has non-finite parameters");
  }
}

MlpModel MlpModel::init(const MlpSpec& spec) {
  spec.validate();
  auto rng = make_rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(spec.layer_widths[l]);
    const auto out = static_cast<Eigen::Index>(spec.layer_widths[l + 1]);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = scale * normal(rng);
    layers.push_back(std::move(layer));
  }
  return MlpModel(spec, std::move(layers));
}

void MlpModel::check_input(const Eigen::VectorXd& x) const {
  require(static_cast<std::size_t>(x.size()) == spec_.input_dim(), ErrorKind::shape_mismatch,
          "input has length " + std::to_string(x.size()) + ", expected " + std::to_string(spec_.input_dim()));
  require(x.allFinite(), ErrorKind::non_finite, "input contains non-finite values");
}

TapRecord MlpModel::forward_tapped(const Eigen::VectorXd& x, bool dropout_active, std::uint64_t seed) const {
  return forward_with_dropout(x, dropout_active ? spec_.dropout_rate : 0.0, seed);
}

TapRecord MlpModel::forward_with_dropout(const Eigen::VectorXd& x, double rate, std::uint64_t seed) const {
  check_input(x);
  require(rate >= 0.0 && rate < 1.0, ErrorKind::invalid_argument, "dropout rate must lie in [0,1)");
  const std::size_t hidden = spec_.hidden_layers();
  TapRecord rec;
  rec.pre_activation.reserve(hidden);
  rec.hidden.reserve(hidden);

  Rng rng = make_rng(seed);
  std::bernoulli_distribution keep(1.0 - rate);
  const double rescale = 1.0 / (1.0 - rate);

  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < hidden; ++l) {
    Eigen::VectorXd pre = layers_[l].weight * a + layers_[l].bias;
    Eigen::VectorXd z = pre.unaryExpr([act = spec_.activation](double v) { return activate(act, v); });
    if (rate > 0.0) {
      for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = keep(rng) ? z(i) * rescale : 0.0;
    }
    rec.pre_activation.push_back(std::move(pre));
    rec.hidden.push_back(z);
    a = std::move(z);
  }
  rec.output = layers_.back().weight * a + layers_.back().bias;
  return rec;
}

std::vector<Eigen::VectorXd> MlpModel::grad_wrt_taps(const Eigen::VectorXd& x,
                                                     const Eigen::VectorXd& loss_grad_at_output) const {
  return grad_wrt_taps(forward_tapped(x), loss_grad_at_output);
}

std::vector<Eigen::VectorXd> MlpModel::grad_wrt_taps(const TapRecord& taps,
                                                     const Eigen::VectorXd& loss_grad_at_output) const {
  const std::size_t hidden = spec_.hidden_layers();
  require(static_cast<std::size_t>(loss_grad_at_output.size()) == spec_.output_dim(), ErrorKind::shape_mismatch,
          "output gradient has length " + std::to_string(loss_grad_at_output.size()) + ", expected " +
              std::to_string(spec_.output_dim()));
  require(taps.hidden.size() == hidden && taps.pre_activation.size() == hidden, ErrorKind::shape_mismatch,
          "tap record does not match the model");
  require(loss_grad_at_output.allFinite(), ErrorKind::non_finite, "output gradient is non-finite");

  std::vector<Eigen::VectorXd> grads(hidden);
  grads[hidden - 1] = layers_.back().weight.transpose() * loss_grad_at_output;
  for (std::size_t l = hidden - 1; l > 0; --l) {
    const auto& pre = taps.pre_activation[l];
    Eigen::VectorXd delta(pre.size());
    for (Eigen::Index i = 0; i < pre.size(); ++i) delta(i) = activation_slope(spec_.activation, pre(i)) * grads[l](i);
    grads[l - 1] = layers_[l].weight.transpose() * delta;
  }
  return grads;
}

Eigen::VectorXd MlpModel::predict(const Eigen::VectorXd& x) const { return forward_tapped(x).output; }

Eigen::MatrixXd MlpModel::predict_batch(const Eigen::MatrixXd& xs) const {
  require(static_cast<std::size_t>(xs.cols()) == spec_.input_dim(), ErrorKind::shape_mismatch,
          "batch has " + std::to_string(xs.cols()) + " columns, expected " + std::to_string(spec_.input_dim()));
  require(xs.allFinite(), ErrorKind::non_finite, "input contains non-finite values");
  // Column per sample, mirroring the single-sample path term by term.
  Eigen::MatrixXd out(xs.rows(), static_cast<Eigen::Index>(spec_.output_dim()));
  for (Eigen::Index i = 0; i < xs.rows(); ++i) out.row(i) = predict(Eigen::VectorXd(xs.row(i).transpose())).transpose();
  return out;
}

void MlpModel::save(std::ostream& out) const {
  out << "nacu-mlp 1\n";
  out << "activation " << to_string(spec_.activation) << '\n';
  out << "dropout_rate " << text_io::hex(spec_.dropout_rate) << '\n';
  out << "seed " << spec_.seed << '\n';
  out << "widths " << spec_.layer_widths.size();
  for (auto w : spec_.layer_widths) out << ' ' << w;
  out << '\n';
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    out << "weight " << l << ' ' << layer.weight.rows() << ' ' << layer.weight.cols() << '\n';
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) out << (c ? " " : "") << text_io::hex(layer.weight(r, c));
      out << '\n';
    }
    out << "bias " << l << ' ' << layer.bias.size() << '\n';
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out << (r ? " " : "") << text_io::hex(layer.bias(r));
    out << '\n';
  }
  out << "end\n";
}

void MlpModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io_error, "cannot write '" + path.string() + "'");
  save(out);
}

MlpModel MlpModel::load(std::istream& in) {
  text_io::Reader rd(in, "model file");
  rd.expect("nacu-mlp");
  require(rd.u64() == 1, ErrorKind::parse_error, "unsupported model file version");
  MlpSpec spec;
  rd.expect("activation");
  spec.activation = parse_activation(rd.token());
  rd.expect("dropout_rate");
  spec.dropout_rate = rd.real();
  rd.expect("seed");
  spec.seed = rd.u64();
  rd.expect("widths");
  const auto count = rd.u64();
  require(count >= 3 && count < 1024, ErrorKind::parse_error, "bad layer count in model file");
  for (std::uint64_t i = 0; i < count; ++i) spec.layer_widths.push_back(rd.u64());
  spec.validate();

  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
    rd.expect("weight");
    require(rd.u64() == l, ErrorKind::parse_error, "layers out of order in model file");
    const auto rows = static_cast<Eigen::Index>(rd.u64());
    const auto cols = static_cast<Eigen::Index>(rd.u64());
    require(rows == static_cast<Eigen::Index>(spec.layer_widths[l + 1]) &&
                cols == static_cast<Eigen::Index>(spec.layer_widths[l]),
            ErrorKind::parse_error, "weight shape disagrees with widths");
    DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = rd.real();
    rd.expect("bias");
    require(rd.u64() == l, ErrorKind::parse_error, "layers out of order in model file");
    require(static_cast<Eigen::Index>(rd.u64()) == rows, ErrorKind::parse_error, "bias length disagrees");
    for (Eigen::Index r = 0; r < rows; ++r) layer.bias(r) = rd.real();
    layers.push_back(std::move(layer));
  }
  rd.expect("end");
  return MlpModel(std::move(spec), std::move(layers));
}

MlpModel MlpModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io_error, "cannot open '" + path.string() + "'");
  return load(in);
}

bool operator==(const MlpModel& a, const MlpModel& b) {
  if (a.spec_.layer_widths != b.spec_.layer_widths || a.spec_.activation != b.spec_.activation ||
      a.spec_.dropout_rate != b.spec_.dropout_rate || a.spec_.seed != b.spec_.seed)
    return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) return false;
  }
  return true;
}

Optimizer parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "adam") return Optimizer::adam;
  fail(ErrorKind::invalid_argument, "unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(Optimizer o) noexcept { return o == Optimizer::sgd ? "sgd" : "adam"; }

void TrainConfig::validate() const {
  require(epochs > 0 && batch_size > 0, ErrorKind::invalid_argument, "epochs and batch size must be positive");
  // Zero is accepted so a run can be frozen at its initial parameters.
  require(std::isfinite(learning_rate) && learning_rate >= 0.0, ErrorKind::invalid_argument,
          "learning rate must be finite and non-negative");
}

namespace {

struct AdamState {
  Eigen::MatrixXd m_w, v_w;
  Eigen::VectorXd m_b, v_b;
};

}  // namespace

TrainResult train(const MlpModel& model, const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  const auto& spec = model.spec();
  require(!ds.empty(), ErrorKind::invalid_argument, "cannot train on an empty dataset");
  require(ds.feature_count() == spec.input_dim() && ds.target_count() == spec.output_dim(),
          ErrorKind::shape_mismatch, "dataset columns do not match the network widths");

  std::vector<DenseLayer> layers = model.layers();
  const std::size_t n_layers = layers.size();
  const std::size_t hidden = spec.hidden_layers();
  const auto act = spec.activation;
  const double rate = spec.dropout_rate;

  std::vector<AdamState> adam(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    adam[l].m_w = Eigen::MatrixXd::Zero(layers[l].weight.rows(), layers[l].weight.cols());
    adam[l].v_w = adam[l].m_w;
    adam[l].m_b = Eigen::VectorXd::Zero(layers[l].bias.size());
    adam[l].v_b = adam[l].m_b;
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::uint64_t step = 0;

  // Samples as columns for the batched passes.
  const Eigen::MatrixXd xt = ds.features.transpose();
  const Eigen::MatrixXd yt = ds.targets.transpose();
  const std::size_t n = ds.rows();
  const auto t_out = static_cast<double>(spec.output_dim());

  std::vector<Eigen::MatrixXd> pre(hidden), post(hidden), mask(hidden);
  std::vector<Eigen::MatrixXd> grad_w(n_layers);
  std::vector<Eigen::VectorXd> grad_b(n_layers);
  Rng dropout_rng = make_rng(derive_seed(cfg.seed, "dropout"));
  std::bernoulli_distribution keep(1.0 - rate);

  TrainResult result{model, {}};
  result.loss_curve.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = permutation(n, derive_seed(cfg.seed, epoch));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, n - start);
      const auto bi = static_cast<Eigen::Index>(b);
      Eigen::MatrixXd a(xt.rows(), bi), y(yt.rows(), bi);
      for (std::size_t k = 0; k < b; ++k) {
        a.col(static_cast<Eigen::Index>(k)) = xt.col(static_cast<Eigen::Index>(order[start + k]));
        y.col(static_cast<Eigen::Index>(k)) = yt.col(static_cast<Eigen::Index>(order[start + k]));
      }
      const Eigen::MatrixXd input = a;
      for (std::size_t l = 0; l < hidden; ++l) {
        pre[l] = (layers[l].weight * a).colwise() + layers[l].bias;
        post[l] = pre[l].unaryExpr([act](double v) { return activate(act, v); });
        if (rate > 0.0) {
          mask[l].resize(post[l].rows(), post[l].cols());
          for (Eigen::Index c = 0; c < mask[l].cols(); ++c)
            for (Eigen::Index r = 0; r < mask[l].rows(); ++r) mask[l](r, c) = keep(dropout_rng) ? 1.0 / (1.0 - rate) : 0.0;
          post[l] = post[l].cwiseProduct(mask[l]);
        }
        a = post[l];
      }
      const Eigen::MatrixXd out = (layers.back().weight * a).colwise() + layers.back().bias;
      const Eigen::MatrixXd diff = out - y;
      const double batch_loss = diff.squaredNorm() / (static_cast<double>(b) * t_out);
      if (!std::isfinite(batch_loss)) {
        fail(ErrorKind::training_diverged, "training diverged at epoch " + std::to_string(epoch + 1));
      }
      epoch_loss += batch_loss * static_cast<double>(b);

      // Reverse sweep over the mean squared error.
      Eigen::MatrixXd delta = diff * (2.0 / (static_cast<double>(b) * t_out));
      for (std::size_t l = n_layers; l-- > 0;) {
        const Eigen::MatrixXd& below = l == 0 ? input : post[l - 1];
        grad_w[l] = delta * below.transpose();
        grad_b[l] = delta.rowwise().sum();
        if (l == 0) break;
        Eigen::MatrixXd up = layers[l].weight.transpose() * delta;
        if (rate > 0.0) up = up.cwiseProduct(mask[l - 1]);
        delta = up.cwiseProduct(pre[l - 1].unaryExpr([act](double v) { return activation_slope(act, v); }));
      }

      ++step;
      if (cfg.optimizer == Optimizer::sgd) {
        for (std::size_t l = 0; l < n_layers; ++l) {
          layers[l].weight -= cfg.learning_rate * grad_w[l];
          layers[l].bias -= cfg.learning_rate * grad_b[l];
        }
      } else {
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        const double lr = cfg.learning_rate;
        for (std::size_t l = 0; l < n_layers; ++l) {
          auto& s = adam[l];
          s.m_w = beta1 * s.m_w + (1.0 - beta1) * grad_w[l];
          s.v_w = beta2 * s.v_w + (1.0 - beta2) * grad_w[l].cwiseAbs2();
          s.m_b = beta1 * s.m_b + (1.0 - beta1) * grad_b[l];
          s.v_b = beta2 * s.v_b + (1.0 - beta2) * grad_b[l].cwiseAbs2();
          layers[l].weight.array() -= lr * (s.m_w.array() / c1) / ((s.v_w.array() / c2).sqrt() + adam_eps);
          layers[l].bias.array() -= lr * (s.m_b.array() / c1) / ((s.v_b.array() / c2).sqrt() + adam_eps);
        }
      }
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(n));
  }
  result.model = MlpModel(spec, std::move(layers));
  return result;
}

}  // namespace nacu
