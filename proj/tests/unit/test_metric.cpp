#include "couplab/errors.hpp"
#include "couplab/metric.hpp"
#include "couplab/transport.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace couplab;

namespace {

Trajectory path(std::initializer_list<double> xs) {
  Trajectory t;
  for (double x : xs) t.states.push_back({x});
  return t;
}

Trajectory random_path(couplab::Rng& rng, std::size_t n) {
  Trajectory t;
  for (std::size_t i = 0; i <= n; ++i) t.states.push_back({rng.uniform() * 3.0});
  return t;
}

}  // namespace

TEST_CASE("path metric of identical trajectories is 0") {
  const Trajectory x = path({0.1, 0.7, 0.3});
  const PathDistance r = path_metric(x, x, metrics::euclidean_truncated());
  CHECK(r.value == 0.0);
  CHECK(r.tail_bound == 0.125);
}

TEST_CASE("path metric with a single unit difference at index 0 is 1/2") {
  CHECK(path_metric(path({0.0, 0.5}), path({1.0, 0.5}), metrics::euclidean_truncated()).value == 0.5);
}

TEST_CASE("path metric of base distances (1, 1/2, 1/4, 0) is 0.65625 with tail 1/16") {
  const PathDistance r = path_metric(path({0, 0, 0, 0}), path({1, 0.5, 0.25, 0}), metrics::euclidean_truncated());
  CHECK(r.value == 0.65625);
  CHECK(r.tail_bound == 0.0625);
}

TEST_CASE("path metric rejects mismatched horizons") {
  CHECK_THROWS_AS(path_metric(path({0, 1}), path({0, 1, 2}), metrics::euclidean_truncated()), InputError);
}

TEST_CASE("path metric obeys the triangle inequality") {
  couplab::Rng rng(4);
  const Metric base = metrics::euclidean_truncated();
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = rng.index(12);
    const Trajectory a = random_path(rng, n), b = random_path(rng, n), c = random_path(rng, n);
    CHECK(path_metric(a, c, base).value <= path_metric(a, b, base).value + path_metric(b, c, base).value + 1e-12);
  }
}

TEST_CASE("path metric on a metric pair defaults to rho and can select d") {
  const MetricPair pair = make_metric_pair(metrics::euclidean_truncated(), metrics::discrete());
  const Trajectory x = path({0.0, 0.0}), y = path({0.25, 0.0});
  CHECK(path_metric(x, y, pair).value == 0.125);
  CHECK(path_metric(x, y, pair, PathBase::d).value == 0.5);
}

TEST_CASE("threshold cost is closed at eps") {
  const Metric d = metrics::euclidean();
  CHECK(threshold_cost(d, 0.5)({0.0}, {0.3}) == 0.0);
  CHECK(threshold_cost(d, 0.3)({0.0}, {0.3}) == 0.0);
  CHECK(threshold_cost(d, 0.3)({0.0}, {0.31}) == 1.0);
  CHECK_THROWS_AS(threshold_cost(d, 0.0), InputError);
  CHECK_THROWS_AS(threshold_cost(d, -1.0), InputError);
}

TEST_CASE("threshold cost is monotone in eps and costs stay in [0, 1]") {
  couplab::Rng rng(6);
  const Metric d = metrics::euclidean();
  for (int t = 0; t < 1000; ++t) {
    const Point a{rng.uniform() * 2}, b{rng.uniform() * 2};
    const double e1 = rng.uniform() + 1e-6, e2 = e1 + rng.uniform();
    const double h1 = threshold_cost(d, e1)(a, b), h2 = threshold_cost(d, e2)(a, b);
    CHECK(h1 >= h2);
    CHECK((h1 == 0.0 || h1 == 1.0));
    const double k = cost_from_metric(metrics::euclidean_truncated())(a, b);
    CHECK((k >= 0.0 && k <= 1.0));
    CHECK(discrete_cost()(a, b) == (a == b ? 0.0 : 1.0));
  }
}

TEST_CASE("discrete cost") {
  CHECK(discrete_cost()({1.0}, {1.0}) == 0.0);
  CHECK(discrete_cost()({1.0}, {2.0}) == 1.0);
}

TEST_CASE("discrete-cost transport between (1/2, 1/2) and (1, 0) is 1/2") {
  const DiscreteMeasure mu({{0.0}, {1.0}}, {0.5, 0.5});
  const DiscreteMeasure nu({{0.0}, {1.0}}, {1.0, 0.0});
  CHECK(minimal_distance(mu, nu, discrete_cost()).first == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(total_variation(mu, nu) / 2.0 == 0.5);
}

TEST_CASE("built-in metrics are symmetric, vanish on the diagonal and respect their bounds") {
  couplab::Rng rng(12);
  for (const char* name : {"euclidean", "euclidean-truncated", "torus-1d", "discrete"}) {
    const Metric m = metric_by_name(name);
    for (int t = 0; t < 300; ++t) {
      const Point a{rng.uniform()}, b{rng.uniform()}, c{rng.uniform()};
      CHECK(m(a, b) == m(b, a));
      CHECK(m(a, a) == 0.0);
      CHECK(m(a, b) <= m.bound);
      CHECK(m(a, c) <= m(a, b) + m(b, c) + 1e-12);
    }
  }
  const Metric flip = metric_by_name("torus-product-flip");
  CHECK(flip({0.1, 1}, {0.9, -1}) == doctest::Approx(0.2 + 2.0));
  CHECK(flip({0.25, 1}, {0.25, 1}) == 0.0);
  CHECK(flip.bound == 2.5);
  const Metric sup = metric_by_name("sup-norm-on-segment", 1);
  CHECK(sup({0, 0, 0}, {0.1, -0.5, 0.2}) == 0.5);
  CHECK_THROWS_AS(metric_by_name("nope"), InputError);
}

TEST_CASE("metric pair truncates rho at 1 and requires a bounded d") {
  const MetricPair pair = make_metric_pair(metrics::euclidean());
  CHECK(pair.rho({0.0}, {5.0}) == 1.0);
  CHECK(pair.rho.bound <= 1.0);
  CHECK(pair.d_is_rho);
  CHECK_THROWS_AS(make_metric_pair(metrics::euclidean(), metrics::euclidean()), InputError);
  const MetricPair mixed = make_metric_pair(metrics::euclidean(), metrics::torus_1d());
  couplab::Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const Point a{rng.uniform() * 4}, b{rng.uniform() * 4};
    CHECK(mixed.rho(a, b) == mixed.rho(b, a));
    CHECK(mixed.rho(a, b) <= 1.0);
    CHECK(mixed.d(a, b) == mixed.d(b, a));
    CHECK(mixed.d(a, a) == 0.0);
  }
}
