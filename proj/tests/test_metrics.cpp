#include <catch2/catch_amalgamated.hpp>

#include "mlquant/metrics.hpp"

using namespace mlquant;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<long>(v.size()));
  long i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("ae worked examples") {
  REQUIRE(ae_multilabel(vec({0.1, 0.9}), vec({0.1, 0.9})) == 0.0);
  REQUIRE(ae_multilabel(vec({0.1, 0.9}), vec({0.3, 0.7})) == Catch::Approx(0.2).margin(1e-12));
  REQUIRE(ae_multilabel(vec({0.0, 1.0, 0.5}), vec({1.0, 0.0, 0.5})) ==
          Catch::Approx(2.0 / 3.0).margin(1e-12));
  REQUIRE_THROWS_AS(ae_multilabel(vec({0.1}), vec({0.1, 0.2})), DataError);
}

TEST_CASE("ae is symmetric and satisfies the triangle inequality") {
  Eigen::VectorXd a = vec({0.2, 0.7, 0.1});
  Eigen::VectorXd b = vec({0.5, 0.5, 0.4});
  Eigen::VectorXd c = vec({0.9, 0.1, 0.3});
  REQUIRE(ae_multilabel(a, b) == ae_multilabel(b, a));
  REQUIRE(ae_multilabel(a, c) <= ae_multilabel(a, b) + ae_multilabel(b, c) + 1e-15);
}

TEST_CASE("smoothing arithmetic") {
  REQUIRE(smooth(0.0, 100) == Catch::Approx(0.005 / 1.01).margin(1e-15));
  REQUIRE(smooth(0.5, 100) == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(smooth(0.3, 50) + smooth(0.7, 50) == Catch::Approx(1.0).margin(1e-15));
  // order preserving
  REQUIRE(smooth(0.2, 10) < smooth(0.21, 10));
}

TEST_CASE("rae worked examples") {
  // unsmoothed: (1/4) * (0.25/0.5 + 0.25/0.5) * 2 classes = 0.5
  REQUIRE(rae_core(vec({0.5, 0.5}), vec({0.25, 0.75})) == Catch::Approx(0.5).margin(1e-12));
  // smoothed with |sigma| = 100: delta = 0.25/1.01, rae = delta/0.5 = 0.5/1.01
  REQUIRE(rae_multilabel(vec({0.5, 0.5}), vec({0.25, 0.75}), 100) ==
          Catch::Approx(0.5 / 1.01).margin(1e-12));
  REQUIRE(rae_multilabel(vec({0.5, 0.5}), vec({0.5, 0.5}), 100) == 0.0);
  // zero entries are finite after smoothing
  double v = rae_multilabel(vec({0.0, 1.0}), vec({1.0, 0.0}), 5);
  REQUIRE(std::isfinite(v));
  REQUIRE(v > 0.0);
}

TEST_CASE("prevalence overloads agree with raw vectors") {
  PrevalenceVector p, q;
  p.values = vec({0.1, 0.9});
  q.values = vec({0.3, 0.7});
  REQUIRE(ae_multilabel(p, q) == ae_multilabel(p.values, q.values));
  REQUIRE(rae_multilabel(p, q, 20) == rae_multilabel(p.values, q.values, 20));
}

TEST_CASE("aggregate_by_bin means, counts, absent bins") {
  auto out = aggregate_by_bin({0, 0, 2}, {1.0, 3.0, 5.0}, 3);
  REQUIRE(out[0].has_value());
  REQUIRE(out[0]->mean == Catch::Approx(2.0));
  REQUIRE(out[0]->count == 2);
  REQUIRE_FALSE(out[1].has_value());
  REQUIRE(out[2]->mean == Catch::Approx(5.0));

  // global mean equals count-weighted mean of bin means
  double weighted = (out[0]->mean * 2 + out[2]->mean * 1) / 3.0;
  REQUIRE(weighted == Catch::Approx((1.0 + 3.0 + 5.0) / 3.0).margin(1e-12));

  REQUIRE_THROWS_AS(aggregate_by_bin({0, 5}, {1.0, 2.0}, 3), DataError);
  REQUIRE_THROWS_AS(aggregate_by_bin({0}, {1.0, 2.0}, 3), DataError);
}
