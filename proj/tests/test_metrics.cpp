#include <doctest.h>

#include <cmath>
#include <random>

#include "nacu/error.hpp"
#include "nacu/metrics.hpp"
#include "oracles.hpp"

using namespace nacu;

TEST_CASE("pearson on exact cases") {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0};
  std::vector<double> neg;
  for (double v : x) neg.push_back(-v);
  CHECK(pearson(x, x) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson(x, neg) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(pearson(std::vector<double>{1.0, 2.0, 3.0}, std::vector<double>{1.0, 3.0, 2.0}) == doctest::Approx(0.5));
  // sqrt(3) / 2
  CHECK(pearson(std::vector<double>{1.0, 2.0, 3.0}, std::vector<double>{1.0, 1.0, 2.0}) ==
        doctest::Approx(0.8660254037844386));
}

TEST_CASE("pearson matches a two-pass oracle and is affine invariant") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x, y, y2;
    for (int i = 0; i < 100; ++i) {
      x.push_back(n(rng));
      y.push_back(0.3 * x.back() + n(rng));
      y2.push_back(7.0 * y.back() - 3.0);
    }
    const double r = pearson(x, y);
    CHECK(r == doctest::Approx(oracle::pearson(x, y)).epsilon(1e-12));
    CHECK(pearson(x, y2) == doctest::Approx(r).epsilon(1e-12));
  }
}

TEST_CASE("pearson errors") {
  const std::vector<double> c{2.0, 2.0, 2.0, 2.0};
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  try {
    pearson(c, v);
    FAIL("expected an undefined correlation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::undefined_correlation);
    CHECK(std::string(e.what()).find("zero variance") != std::string::npos);
  }
  CHECK_THROWS_AS(pearson(v, c), Error);
  CHECK_THROWS_AS(pearson(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0}), Error);
  CHECK_THROWS_AS(pearson(v, std::vector<double>{1.0, 2.0, 3.0}), Error);
}

TEST_CASE("point-biserial equals pearson against the labels") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> x, lab;
  std::vector<int> labels;
  for (int i = 0; i < 300; ++i) {
    const int l = i % 3 == 0;
    labels.push_back(l);
    lab.push_back(l);
    x.push_back(n(rng) + 1.5 * l);
  }
  CHECK(point_biserial(x, labels) == doctest::Approx(pearson(x, lab)).epsilon(1e-12));
  CHECK_THROWS_AS(point_biserial(x, std::vector<int>(300, 0)), Error);
}

TEST_CASE("per-sample squared error") {
  Eigen::MatrixXd p(2, 1), t(2, 1);
  p << 1.0, 0.0;
  t << 4.0, 0.0;
  CHECK(per_sample_squared_error(p, t) == std::vector<double>{9.0, 0.0});
  Eigen::MatrixXd p2(1, 2), t2(1, 2);
  p2 << 1.0, 1.0;
  t2 << 2.0, 4.0;
  CHECK(per_sample_squared_error(p2, t2) == std::vector<double>{5.0});
  CHECK_THROWS_AS(per_sample_squared_error(p, t2), Error);
}

TEST_CASE("t confidence interval") {
  CHECK(student_t_quantile(0.975, 1.0) == doctest::Approx(12.706204736).epsilon(1e-9));
  const std::vector<double> runs{0.4, 0.6};
  const auto ci = confidence_interval(runs);
  CHECK(ci.low == doctest::Approx(0.5 - 1.2706204736).epsilon(1e-9));
  CHECK(ci.high == doctest::Approx(0.5 + 1.2706204736).epsilon(1e-9));
  const std::vector<double> same{0.3, 0.3, 0.3};
  const auto zero = confidence_interval(same);
  CHECK(zero.low == 0.3);
  CHECK(zero.high == 0.3);
  CHECK_THROWS_AS(confidence_interval(std::vector<double>{0.5}), Error);

  const auto rep = aggregate_runs("nac", runs);
  CHECK(rep.method == "nac");
  CHECK(rep.rho == doctest::Approx(0.5));
  CHECK(rep.n == 2);
}

TEST_CASE("bootstrap correlation interval brackets the estimate") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> x, y;
  for (int i = 0; i < 200; ++i) {
    x.push_back(n(rng));
    y.push_back(x.back() + n(rng));
  }
  const double r = pearson(x, y);
  const auto ci = bootstrap_correlation_interval(x, y, 500, 3);
  CHECK(ci.low < r);
  CHECK(ci.high > r);
  CHECK(ci.high - ci.low < 0.3);
  const auto again = bootstrap_correlation_interval(x, y, 500, 3);
  CHECK(again.low == ci.low);
  CHECK(again.high == ci.high);
}
