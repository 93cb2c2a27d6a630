#include "nacu/nac.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>

#include "nacu/error.hpp"
#include "text_io.hpp"

namespace nacu {

double logistic(double t) noexcept {
  double v;
  if (t >= 0.0) {
    v = 1.0 / (1.0 + std::exp(-t));
  } else {
    const double e = std::exp(t);
    v = e / (1.0 + e);
  }
  return std::clamp(v, 0.0, 1.0);
}

ActivationStates activation_states(const TapRecord& taps, const std::vector<Eigen::VectorXd>& grads) {
  require(taps.hidden.size() == grads.size(), ErrorKind::shape_mismatch,
          "tap and gradient layer counts differ");
  ActivationStates states(grads.size());
  for (std::size_t l = 0; l < grads.size(); ++l) {
    const auto& z = taps.hidden[l];
    const auto& g = grads[l];
    require(z.size() == g.size(), ErrorKind::shape_mismatch,
            "tap and gradient widths differ at layer " + std::to_string(l));
    states[l].resize(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) states[l](i) = logistic(z(i) * g(i));
  }
  return states;
}

ActivationStates compute_states(const MlpModel& model, const PseudoLoss& pl, const Eigen::VectorXd& x) {
  const TapRecord taps = model.forward_tapped(x);
  const LossValue loss = evaluate_pseudo_loss(pl, taps.output);
  return activation_states(taps, model.grad_wrt_taps(taps, loss.gradient));
}

std::vector<ActivationStates> compute_states_batch(const MlpModel& model, const PseudoLoss& pl,
                                                   const Eigen::MatrixXd& xs) {
  std::vector<ActivationStates> out;
  out.reserve(static_cast<std::size_t>(xs.rows()));
  for (Eigen::Index i = 0; i < xs.rows(); ++i) out.push_back(compute_states(model, pl, Eigen::VectorXd(xs.row(i).transpose())));
  return out;
}

NacCalibration::NacCalibration(LayerSet layers, std::vector<std::size_t> layer_widths, std::size_t bins,
                               double clip, PseudoLoss pseudo_loss)
    : layers_(std::move(layers)),
      widths_(std::move(layer_widths)),
      bins_(bins),
      clip_(clip),
      pseudo_loss_(std::move(pseudo_loss)) {
  require(!layers_.empty(), ErrorKind::invalid_argument, "tapped layer set must be non-empty");
  require(layers_.size() == widths_.size(), ErrorKind::shape_mismatch, "one width per tapped layer required");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    require(widths_[k] > 0, ErrorKind::invalid_argument, "tapped layers need at least one neuron");
    for (std::size_t j = 0; j < k; ++j) {
      require(layers_[j] != layers_[k], ErrorKind::invalid_argument, "tapped layer set has duplicates");
    }
  }
  require(bins_ > 0, ErrorKind::invalid_argument, "bin count must be positive");
  require(clip_ > 0.0 && std::isfinite(clip_), ErrorKind::invalid_argument, "clip level r must be positive");
  if (const auto* kl = std::get_if<KlPseudoLoss>(&pseudo_loss_)) {
    require(kl->class_count >= 2, ErrorKind::invalid_argument, "KL pseudo-loss needs at least 2 classes");
  }
  hists_.resize(layers_.size());
  for (std::size_t k = 0; k < layers_.size(); ++k) hists_[k].assign(widths_[k], NeuronHistogram(bins_));
}

std::size_t NacCalibration::neuron_total() const noexcept {
  std::size_t n = 0;
  for (auto w : widths_) n += w;
  return n;
}

const NeuronHistogram& NacCalibration::histogram(std::size_t k, std::size_t neuron) const {
  require(k < hists_.size() && neuron < hists_[k].size(), ErrorKind::invalid_argument,
          "histogram index out of range");
  return hists_[k][neuron];
}

void NacCalibration::accumulate(const ActivationStates& states) {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    require(layers_[k] < states.size(), ErrorKind::shape_mismatch, "states miss a tapped layer");
    const auto& s = states[layers_[k]];
    require(static_cast<std::size_t>(s.size()) == widths_[k], ErrorKind::shape_mismatch,
            "state width differs from the calibrated layer width");
    for (std::size_t i = 0; i < widths_[k]; ++i) hists_[k][i].add(s(static_cast<Eigen::Index>(i)));
  }
  ++samples_;
}

void NacCalibration::merge(const NacCalibration& other) {
  require(other.layers_ == layers_ && other.widths_ == widths_ && other.bins_ == bins_, ErrorKind::shape_mismatch,
          "cannot merge calibrations with different layouts");
  for (std::size_t k = 0; k < hists_.size(); ++k)
    for (std::size_t i = 0; i < hists_[k].size(); ++i) hists_[k][i].merge(other.hists_[k][i]);
  samples_ += other.samples_;
}

NacScore NacCalibration::score_states(const ActivationStates& states) const {
  require(samples_ > 0, ErrorKind::invalid_argument, "calibration holds no samples");
  NacScore out;
  out.layer_means.reserve(layers_.size());
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    require(layers_[k] < states.size(), ErrorKind::shape_mismatch, "states miss a tapped layer");
    const auto& s = states[layers_[k]];
    require(static_cast<std::size_t>(s.size()) == widths_[k], ErrorKind::shape_mismatch,
            "state width differs from the calibrated layer width");
    double sum = 0.0;
    for (std::size_t i = 0; i < widths_[k]; ++i) sum += phi(hists_[k][i], s(static_cast<Eigen::Index>(i)), clip_);
    const double mean = sum / static_cast<double>(widths_[k]);
    out.layer_means.push_back(mean);
    out.score += mean;
  }
  out.uncertainty = 1.0 / std::max(out.score, kMinScore);
  return out;
}

NacCalibration NacCalibration::with_clip(double clip) const {
  NacCalibration out = *this;
  require(clip > 0.0 && std::isfinite(clip), ErrorKind::invalid_argument, "clip level r must be positive");
  out.clip_ = clip;
  return out;
}

std::vector<std::size_t> tapped_widths(const MlpModel& model, const LayerSet& layers) {
  const auto& widths = model.spec().layer_widths;
  const std::size_t hidden = model.spec().hidden_layers();
  std::vector<std::size_t> out;
  for (auto l : layers) {
    require(l < hidden, ErrorKind::invalid_argument,
            "tapped layer " + std::to_string(l) + " does not exist (model has " + std::to_string(hidden) +
                " hidden layers)");
    out.push_back(widths[l + 1]);
  }
  return out;
}

void NacCalibration::check_model(const MlpModel& model) const {
  const std::size_t hidden = model.spec().hidden_layers();
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    require(layers_[k] < hidden && model.spec().layer_widths[layers_[k] + 1] == widths_[k], ErrorKind::shape_mismatch,
            "calibration layer set does not match the model");
  }
  require(output_dim(pseudo_loss_) == model.spec().output_dim(), ErrorKind::shape_mismatch,
          "pseudo-loss output size does not match the model");
}

NacCalibration calibrate(const MlpModel& model, const Eigen::MatrixXd& features, const LayerSet& layers,
                         std::size_t bins, double clip, const PseudoLoss& pl) {
  require(features.rows() > 0, ErrorKind::invalid_argument, "calibration set must be non-empty");
  NacCalibration cal(layers, tapped_widths(model, layers), bins, clip, pl);
  cal.check_model(model);
  for (Eigen::Index i = 0; i < features.rows(); ++i) cal.accumulate(compute_states(model, pl, Eigen::VectorXd(features.row(i).transpose())));
  return cal;
}

NacCalibration calibrate(const MlpModel& model, const Dataset& calib, const LayerSet& layers, std::size_t bins,
                         double clip, double epsilon_reg) {
  require(!calib.empty(), ErrorKind::invalid_argument, "calibration set must be non-empty");
  require(!layers.empty(), ErrorKind::invalid_argument, "tapped layer set must be non-empty");
  const PseudoLoss pl = fit_pseudo_loss(model.predict_batch(calib.features), epsilon_reg);
  return calibrate(model, calib.features, layers, bins, clip, pl);
}

NacScore score(const NacCalibration& cal, const MlpModel& model, const Eigen::VectorXd& x) {
  cal.check_model(model);
  return cal.score_states(compute_states(model, cal.pseudo_loss(), x));
}

std::vector<NacScore> score_batch(const NacCalibration& cal, const MlpModel& model, const Eigen::MatrixXd& xs) {
  cal.check_model(model);
  std::vector<NacScore> out;
  out.reserve(static_cast<std::size_t>(xs.rows()));
  for (Eigen::Index i = 0; i < xs.rows(); ++i)
    out.push_back(cal.score_states(compute_states(model, cal.pseudo_loss(), Eigen::VectorXd(xs.row(i).transpose()))));
  return out;
}

void write_scores_csv(std::ostream& out, const NacCalibration& cal, std::span<const NacScore> scores) {
  out << "sample_index,S,U_NAC";
  for (auto l : cal.layers()) out << ",layer_" << l;
  out << '\n';
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out << i << ',' << text_io::decimal(scores[i].score) << ',' << text_io::decimal(scores[i].uncertainty);
    for (double m : scores[i].layer_means) out << ',' << text_io::decimal(m);
    out << '\n';
  }
}

void NacCalibration::save(std::ostream& out) const {
  out << "nacu-calibration 1\n";
  out << "bins " << bins_ << '\n';
  out << "clip " << text_io::hex(clip_) << '\n';
  out << "layers " << layers_.size();
  for (auto l : layers_) out << ' ' << l;
  out << "\nwidths " << widths_.size();
  for (auto w : widths_) out << ' ' << w;
  out << '\n';
  if (const auto* kl = std::get_if<KlPseudoLoss>(&pseudo_loss_)) {
    out << "pseudo_loss kl " << kl->class_count << '\n';
  } else {
    const auto& m = std::get<MahalanobisPseudoLoss>(pseudo_loss_);
    out << "pseudo_loss mahalanobis " << m.mean.size() << ' ' << text_io::hex(m.epsilon_reg) << '\n';
    out << "mean";
    for (Eigen::Index i = 0; i < m.mean.size(); ++i) out << ' ' << text_io::hex(m.mean(i));
    out << "\ninv_covariance";
    for (Eigen::Index r = 0; r < m.inv_covariance.rows(); ++r)
      for (Eigen::Index c = 0; c < m.inv_covariance.cols(); ++c) out << ' ' << text_io::hex(m.inv_covariance(r, c));
    out << '\n';
  }
  out << "samples " << samples_ << '\n';
  for (std::size_t k = 0; k < hists_.size(); ++k) {
    for (std::size_t i = 0; i < hists_[k].size(); ++i) {
      out << "hist " << k << ' ' << i;
      for (auto c : hists_[k][i].counts()) out << ' ' << c;
      out << '\n';
    }
  }
  out << "end\n";
}

void NacCalibration::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io_error, "cannot write '" + path.string() + "'");
  save(out);
}

NacCalibration NacCalibration::load(std::istream& in) {
  text_io::Reader rd(in, "calibration file");
  rd.expect("nacu-calibration");
  require(rd.u64() == 1, ErrorKind::parse_error, "unsupported calibration file version");
  rd.expect("bins");
  const auto bins = rd.u64();
  require(bins > 0 && bins < (1u << 24), ErrorKind::parse_error, "bad bin count");
  rd.expect("clip");
  const double clip = rd.real();
  rd.expect("layers");
  const auto n_layers = rd.u64();
  require(n_layers > 0 && n_layers < 4096, ErrorKind::parse_error, "bad layer count");
  LayerSet layers;
  for (std::uint64_t k = 0; k < n_layers; ++k) layers.push_back(rd.u64());
  rd.expect("widths");
  require(rd.u64() == n_layers, ErrorKind::parse_error, "width count differs from layer count");
  std::vector<std::size_t> widths;
  for (std::uint64_t k = 0; k < n_layers; ++k) widths.push_back(rd.u64());

  rd.expect("pseudo_loss");
  PseudoLoss pl;
  const auto kind = rd.token();
  if (kind == "kl") {
    pl = KlPseudoLoss{rd.u64()};
  } else if (kind == "mahalanobis") {
    MahalanobisPseudoLoss m;
    const auto t = static_cast<Eigen::Index>(rd.u64());
    require(t > 0 && t < 65536, ErrorKind::parse_error, "bad output size");
    m.epsilon_reg = rd.real();
    rd.expect("mean");
    m.mean.resize(t);
    for (Eigen::Index i = 0; i < t; ++i) m.mean(i) = rd.real();
    rd.expect("inv_covariance");
    m.inv_covariance.resize(t, t);
    for (Eigen::Index r = 0; r < t; ++r)
      for (Eigen::Index c = 0; c < t; ++c) m.inv_covariance(r, c) = rd.real();
    pl = std::move(m);
  } else {
    fail(ErrorKind::parse_error, "unknown pseudo-loss kind '" + kind + "'");
  }

  NacCalibration cal(std::move(layers), std::move(widths), bins, clip, std::move(pl));
  rd.expect("samples");
  cal.samples_ = rd.u64();
  for (std::size_t k = 0; k < cal.hists_.size(); ++k) {
    for (std::size_t i = 0; i < cal.hists_[k].size(); ++i) {
      rd.expect("hist");
      require(rd.u64() == k && rd.u64() == i, ErrorKind::parse_error, "histograms out of order");
      std::vector<std::uint64_t> counts(bins);
      for (auto& c : counts) c = rd.u64();
      cal.hists_[k][i] = NeuronHistogram::from_counts(std::move(counts));
      require(cal.hists_[k][i].total() == cal.samples_, ErrorKind::parse_error,
              "histogram total differs from the sample count");
    }
  }
  rd.expect("end");
  return cal;
}

NacCalibration NacCalibration::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io_error, "cannot open '" + path.string() + "'");
  return load(in);
}

bool operator==(const NacCalibration& a, const NacCalibration& b) {
  if (a.layers_ != b.layers_ || a.widths_ != b.widths_ || a.bins_ != b.bins_ || a.clip_ != b.clip_ ||
      a.samples_ != b.samples_ || a.hists_ != b.hists_ || a.pseudo_loss_.index() != b.pseudo_loss_.index())
    return false;
  if (const auto* kl = std::get_if<KlPseudoLoss>(&a.pseudo_loss_)) {
    return kl->class_count == std::get<KlPseudoLoss>(b.pseudo_loss_).class_count;
  }
  const auto& ma = std::get<MahalanobisPseudoLoss>(a.pseudo_loss_);
  const auto& mb = std::get<MahalanobisPseudoLoss>(b.pseudo_loss_);
  return ma.epsilon_reg == mb.epsilon_reg && ma.mean == mb.mean && ma.inv_covariance == mb.inv_covariance;
}

}  // namespace nacu
