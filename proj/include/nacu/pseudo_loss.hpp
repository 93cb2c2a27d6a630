#pragma once

#include <cstddef>
#include <variant>

#include <Eigen/Dense>

namespace nacu {

/// KL(u || softmax(logits)) against the uniform class vector u = 1/C.
struct KlPseudoLoss {
  std::size_t class_count = 2;
};

/// Mahalanobis distance to the mean calibration output.
struct MahalanobisPseudoLoss {
  Eigen::VectorXd mean;
  Eigen::MatrixXd inv_covariance;
  double epsilon_reg = 1e-6;
};

using PseudoLoss = std::variant<KlPseudoLoss, MahalanobisPseudoLoss>;

inline constexpr double kMahalanobisZeroThreshold = 1e-9;

struct LossValue {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

/// L = sum_c (1/C) log((1/C) / p_c). The gradient is taken with respect to
/// the pre-softmax logits, which is p - u.
LossValue kl_pseudo_loss(const Eigen::VectorXd& probabilities);

/// d = sqrt((p - m)^T S^-1 (p - m)); gradient S^-1 (p - m) / d, or zero when
/// d < 1e-9.
LossValue mahalanobis_pseudo_loss(const Eigen::VectorXd& p, const MahalanobisPseudoLoss& pl);

/// Mean and (n-1)-normalized covariance of calibration predictions (N x T),
/// regularized by epsilon_reg * I and inverted through a Cholesky factor.
MahalanobisPseudoLoss fit_pseudo_loss(const Eigen::MatrixXd& predictions, double epsilon_reg = 1e-6);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// Loss and gradient with respect to the raw network output: the logits for
/// the KL loss, the prediction itself for Mahalanobis.
LossValue evaluate_pseudo_loss(const PseudoLoss& pl, const Eigen::VectorXd& network_output);

std::size_t output_dim(const PseudoLoss& pl);

}  // namespace nacu
