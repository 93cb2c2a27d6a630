#include "nacu/pseudo_loss.hpp"

#include <cmath>
#include <string>

#include "nacu/error.hpp"

namespace nacu {

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  require(logits.size() >= 1 && logits.allFinite(), ErrorKind::non_finite, "softmax needs finite logits");
  const Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

LossValue kl_pseudo_loss(const Eigen::VectorXd& p) {
  const auto c = p.size();
  require(c >= 2, ErrorKind::invalid_argument, "KL pseudo-loss needs at least 2 classes");
  require(p.allFinite(), ErrorKind::non_finite, "probabilities are non-finite");
  require((p.array() > 0.0).all(), ErrorKind::invalid_argument, "probabilities must be strictly positive");
  require(std::abs(p.sum() - 1.0) <= 1e-6, ErrorKind::invalid_argument, "probabilities must sum to 1");
  const double u = 1.0 / static_cast<double>(c);
  double value = 0.0;
  for (Eigen::Index i = 0; i < c; ++i) value += u * std::log(u / p(i));
  return {std::max(value, 0.0), (p.array() - u).matrix()};
}

LossValue mahalanobis_pseudo_loss(const Eigen::VectorXd& p, const MahalanobisPseudoLoss& pl) {
  require(p.size() == pl.mean.size() && pl.inv_covariance.rows() == p.size() && pl.inv_covariance.cols() == p.size(),
          ErrorKind::shape_mismatch, "prediction length does not match the pseudo-loss");
  require(p.allFinite(), ErrorKind::non_finite, "prediction is non-finite");
  const Eigen::VectorXd delta = p - pl.mean;
  const Eigen::VectorXd weighted = pl.inv_covariance * delta;
  const double d = std::sqrt(std::max(delta.dot(weighted), 0.0));
  if (d < kMahalanobisZeroThreshold) return {d, Eigen::VectorXd::Zero(p.size())};
  return {d, weighted / d};
}

MahalanobisPseudoLoss fit_pseudo_loss(const Eigen::MatrixXd& predictions, double epsilon_reg) {
  const auto n = predictions.rows();
  const auto t = predictions.cols();
  require(n >= 2, ErrorKind::invalid_argument, "need at least 2 calibration predictions");
  require(t >= 1, ErrorKind::invalid_argument, "predictions need at least one output");
  require(predictions.allFinite(), ErrorKind::non_finite, "calibration predictions are non-finite");
  require(std::isfinite(epsilon_reg) && epsilon_reg >= 0.0, ErrorKind::invalid_argument,
          "epsilon_reg must be finite and non-negative");

  MahalanobisPseudoLoss pl;
  pl.epsilon_reg = epsilon_reg;
  pl.mean = predictions.colwise().mean().transpose();
  const Eigen::MatrixXd centered = predictions.rowwise() - pl.mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  cov.diagonal().array() += epsilon_reg;

  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  require(llt.info() == Eigen::Success, ErrorKind::factorization_failed,
          "prediction covariance is not positive definite (epsilon_reg = " + std::to_string(epsilon_reg) + ")");
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(t, t));
  pl.inv_covariance = 0.5 * (inv + inv.transpose());
  require(pl.inv_covariance.allFinite(), ErrorKind::factorization_failed, "inverse covariance is non-finite");
  return pl;
}

LossValue evaluate_pseudo_loss(const PseudoLoss& pl, const Eigen::VectorXd& network_output) {
  if (const auto* kl = std::get_if<KlPseudoLoss>(&pl)) {
    require(kl->class_count >= 2, ErrorKind::invalid_argument, "KL pseudo-loss needs at least 2 classes");
    require(static_cast<std::size_t>(network_output.size()) == kl->class_count, ErrorKind::shape_mismatch,
            "network output does not match the class count");
    // Log-domain evaluation; softmax entries may underflow for extreme logits.
    const double top = network_output.maxCoeff();
    const double lse = top + std::log((network_output.array() - top).exp().sum());
    const double u = 1.0 / static_cast<double>(kl->class_count);
    const double value = -std::log(static_cast<double>(kl->class_count)) - u * (network_output.array() - lse).sum();
    return {std::max(value, 0.0), (softmax(network_output).array() - u).matrix()};
  }
  return mahalanobis_pseudo_loss(network_output, std::get<MahalanobisPseudoLoss>(pl));
}

std::size_t output_dim(const PseudoLoss& pl) {
  if (const auto* kl = std::get_if<KlPseudoLoss>(&pl)) return kl->class_count;
  return static_cast<std::size_t>(std::get<MahalanobisPseudoLoss>(pl).mean.size());
}

}  // namespace nacu
