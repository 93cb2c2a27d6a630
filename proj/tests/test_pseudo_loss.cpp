#include <doctest.h>

#include <cmath>
#include <random>

#include "nacu/error.hpp"
#include "nacu/pseudo_loss.hpp"
#include "oracles.hpp"

using namespace nacu;

TEST_CASE("KL at the uniform distribution is zero with zero gradient") {
  for (std::size_t c : {2u, 3u, 10u}) {
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(c), 1.0 / static_cast<double>(c));
    const auto v = kl_pseudo_loss(u);
    CHECK(std::abs(v.value) < 1e-12);
    CHECK(v.gradient.cwiseAbs().maxCoeff() < 1e-10);
    const auto from_logits = evaluate_pseudo_loss(KlPseudoLoss{c}, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(c), 0.7));
    CHECK(std::abs(from_logits.value) < 1e-12);
    CHECK(from_logits.gradient.cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("KL of a two-class distribution") {
  const auto v = kl_pseudo_loss(Eigen::Vector2d(0.9, 0.1));
  CHECK(v.value == doctest::Approx(0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1)).epsilon(1e-12));
  CHECK(v.value == doctest::Approx(0.5108).epsilon(1e-4));
  CHECK(v.gradient(0) == doctest::Approx(0.4));
  CHECK(v.gradient(1) == doctest::Approx(-0.4));
}

TEST_CASE("KL rejects invalid distributions") {
  CHECK_THROWS_AS(kl_pseudo_loss(Eigen::Vector2d(0.5, 0.6)), Error);
  CHECK_THROWS_AS(kl_pseudo_loss(Eigen::Vector2d(1.0, 0.0)), Error);
  CHECK_THROWS_AS(evaluate_pseudo_loss(KlPseudoLoss{3}, Eigen::Vector2d(0.0, 1.0)), Error);
}

TEST_CASE("KL from logits is stable for large logits") {
  const auto v = evaluate_pseudo_loss(KlPseudoLoss{2}, Eigen::Vector2d(1000.0, -1000.0));
  CHECK(std::isfinite(v.value));
  CHECK(v.value == doctest::Approx(oracle::kl_uniform(Eigen::Vector2d(1000.0, -1000.0))));
  CHECK(v.gradient.allFinite());
}

TEST_CASE("KL logit gradient matches finite differences") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd logits(4);
    for (Eigen::Index i = 0; i < 4; ++i) logits(i) = n(rng);
    const auto v = evaluate_pseudo_loss(KlPseudoLoss{4}, logits);
    CHECK(v.value == doctest::Approx(oracle::kl_uniform(logits)).epsilon(1e-12));
    for (Eigen::Index i = 0; i < 4; ++i) {
      Eigen::VectorXd up = logits, dn = logits;
      up(i) += 1e-6;
      dn(i) -= 1e-6;
      const double fd = (oracle::kl_uniform(up) - oracle::kl_uniform(dn)) / 2e-6;
      CHECK(std::abs(fd - v.gradient(i)) < 1e-4 * std::max(std::abs(fd), 1e-4));
    }
  }
}

TEST_CASE("Mahalanobis distance basics") {
  MahalanobisPseudoLoss pl{Eigen::Vector2d(0.0, 0.0), Eigen::Matrix2d::Identity(), 0.0};
  const auto at_mean = mahalanobis_pseudo_loss(Eigen::Vector2d(0.0, 0.0), pl);
  CHECK(at_mean.value == 0.0);
  CHECK(at_mean.gradient.isZero(0.0));
  const auto v = mahalanobis_pseudo_loss(Eigen::Vector2d(3.0, 4.0), pl);
  CHECK(v.value == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(v.gradient(0) == doctest::Approx(0.6));
  CHECK(v.gradient(1) == doctest::Approx(0.8));

  MahalanobisPseudoLoss one{Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Constant(1, 1, 0.25), 0.0};
  const auto w = mahalanobis_pseudo_loss(Eigen::VectorXd::Constant(1, 5.0), one);
  CHECK(w.value == doctest::Approx(2.0));
  CHECK(w.gradient(0) == doctest::Approx(0.5));
  const auto below = mahalanobis_pseudo_loss(Eigen::VectorXd::Constant(1, 1.0 + 1e-12), one);
  CHECK(below.gradient(0) == 0.0);
}

TEST_CASE("fit_pseudo_loss on constant predictions is epsilon regularized") {
  const Eigen::MatrixXd preds = Eigen::MatrixXd::Constant(5, 2, 3.0);
  const auto pl = fit_pseudo_loss(preds, 1e-6);
  CHECK(pl.mean(0) == 3.0);
  CHECK(pl.mean(1) == 3.0);
  CHECK(pl.inv_covariance(0, 0) == doctest::Approx(1e6));
  CHECK(pl.inv_covariance(1, 1) == doctest::Approx(1e6));
  CHECK(pl.inv_covariance(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("fit_pseudo_loss on two points") {
  Eigen::MatrixXd preds(2, 1);
  preds << 0.0, 2.0;
  const auto pl = fit_pseudo_loss(preds, 1e-6);
  CHECK(pl.mean(0) == doctest::Approx(1.0));
  CHECK(1.0 / pl.inv_covariance(0, 0) == doctest::Approx(2.0 + 1e-6).epsilon(1e-12));
}

TEST_CASE("fit_pseudo_loss matches a two-pass covariance") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd preds(200, 3);
  for (Eigen::Index r = 0; r < 200; ++r) {
    const double a = n(rng), b = n(rng), c = n(rng);
    preds(r, 0) = a + 5.0;
    preds(r, 1) = 0.5 * a + b;
    preds(r, 2) = -a + 0.2 * b + 2.0 * c;
  }
  const auto pl = fit_pseudo_loss(preds, 1e-6);
  Eigen::MatrixXd cov = oracle::covariance(preds);
  cov.diagonal().array() += 1e-6;
  const Eigen::MatrixXd product = cov * pl.inv_covariance;
  CHECK((product - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((pl.inv_covariance - pl.inv_covariance.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(pl.mean(0) == doctest::Approx(preds.col(0).mean()));
}

TEST_CASE("fit_pseudo_loss rejects degenerate input") {
  CHECK_THROWS_AS(fit_pseudo_loss(Eigen::MatrixXd::Zero(1, 1)), Error);
  CHECK_THROWS_AS(fit_pseudo_loss(Eigen::MatrixXd::Zero(4, 1), 0.0), Error);
}

TEST_CASE("Mahalanobis distance of calibration rows has unit scale") {
  // For Gaussian rows, E[d^2] equals the output dimension.
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd preds(20000, 2);
  for (Eigen::Index r = 0; r < preds.rows(); ++r) {
    const double a = n(rng), b = n(rng);
    preds(r, 0) = 3.0 * a;
    preds(r, 1) = a + 0.1 * b;
  }
  const auto pl = fit_pseudo_loss(preds);
  double sum_sq = 0.0;
  for (Eigen::Index r = 0; r < preds.rows(); ++r) {
    const double d = mahalanobis_pseudo_loss(preds.row(r).transpose(), pl).value;
    sum_sq += d * d;
  }
  CHECK(sum_sq / static_cast<double>(preds.rows()) == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("composite gradient through the network matches finite differences") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t out = trial % 2 == 0 ? 2 : 3;
    const auto m = oracle::random_model({3, 5, 4, out}, Activation::selu, static_cast<std::uint64_t>(trial));
    Eigen::Vector3d x(n(rng), n(rng), n(rng));
    PseudoLoss pl;
    if (trial % 4 < 2) {
      Eigen::MatrixXd preds(30, static_cast<Eigen::Index>(out));
      for (Eigen::Index i = 0; i < preds.size(); ++i) preds.data()[i] = n(rng);
      pl = fit_pseudo_loss(preds);
    } else {
      pl = KlPseudoLoss{out};
    }
    auto loss = [&](const Eigen::VectorXd& p) {
      if (const auto* mp = std::get_if<MahalanobisPseudoLoss>(&pl)) return oracle::mahalanobis(p, mp->mean, mp->inv_covariance);
      return oracle::kl_uniform(p);
    };
    const auto taps = m.forward_tapped(x);
    const auto grads = m.grad_wrt_taps(taps, evaluate_pseudo_loss(pl, taps.output).gradient);
    for (std::size_t l = 0; l < taps.hidden.size(); ++l) {
      for (Eigen::Index i = 0; i < taps.hidden[l].size(); ++i) {
        Eigen::VectorXd up = taps.hidden[l], dn = taps.hidden[l];
        up(i) += 1e-6;
        dn(i) -= 1e-6;
        const double fd = (loss(oracle::downstream(m, l, up)) - loss(oracle::downstream(m, l, dn))) / 2e-6;
        const double an = grads[l](i);
        CHECK(std::abs(fd - an) <= std::max(1e-4 * std::max(std::abs(fd), std::abs(an)), 1e-8));
      }
    }
  }
}

TEST_CASE("softmax sums to one") {
  const auto p = softmax(Eigen::Vector3d(1.0, 2.0, 3.0));
  CHECK(p.sum() == doctest::Approx(1.0));
  CHECK(p(2) > p(1));
  CHECK(output_dim(KlPseudoLoss{4}) == 4);
}
