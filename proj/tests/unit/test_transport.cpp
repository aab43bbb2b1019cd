#include <sstream>

#include "couplab/errors.hpp"
#include "couplab/metric.hpp"
#include "couplab/transport.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace couplab;

namespace {

Eigen::MatrixXd random_cost(couplab::Rng& rng, Eigen::Index m, Eigen::Index n) {
  Eigen::MatrixXd c(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) c(i, j) = rng.bernoulli(0.3) ? std::floor(rng.uniform() * 3.0) : rng.uniform();
  return c;
}

void check_marginals(const TransportSolution& s, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  CHECK(oracle::l1(s.plan.rowwise().sum(), a) <= 1e-9);
  CHECK(oracle::l1(s.plan.colwise().sum().transpose(), b) <= 1e-9);
  CHECK(s.plan.minCoeff() >= 0.0);
}

}  // namespace

TEST_CASE("identical measures have distance 0 with a diagonal plan") {
  couplab::Rng rng(1);
  const DiscreteMeasure mu = oracle::random_measure(rng, 5);
  const auto [value, plan] = minimal_distance(mu, mu, cost_from_metric(metrics::euclidean_truncated()));
  CHECK(value == doctest::Approx(0.0).epsilon(1e-15));
  const Eigen::MatrixXd off = plan.weights() - Eigen::MatrixXd(plan.weights().diagonal().asDiagonal());
  CHECK(off.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("forced transport between opposite point masses costs 1") {
  const DiscreteMeasure mu({{0.0}, {1.0}}, {1.0, 0.0});
  const DiscreteMeasure nu({{0.0}, {1.0}}, {0.0, 1.0});
  CHECK(minimal_distance(mu, nu, discrete_cost()).first == 1.0);
}

TEST_CASE("(1/2, 1/2) against (1/4, 3/4) under the discrete cost is 1/4") {
  const DiscreteMeasure mu({{0.0}, {1.0}}, {0.5, 0.5});
  const DiscreteMeasure nu({{0.0}, {1.0}}, {0.25, 0.75});
  const auto [value, plan] = minimal_distance(mu, nu, discrete_cost());
  CHECK(value == doctest::Approx(0.25).epsilon(1e-15));
  Eigen::MatrixXd c(2, 2);
  c << 0, 1, 1, 0;
  CHECK(oracle::transport_by_vertices(mu.weight_vector(), nu.weight_vector(), c) == doctest::Approx(0.25));
  CHECK(plan.marginal_error(mu.weight_vector(), nu.weight_vector()) <= 1e-12);
}

TEST_CASE("solver matches vertex enumeration on random instances up to 4x4") {
  couplab::Rng rng(2024);
  for (int t = 0; t < 300; ++t) {
    const auto m = static_cast<Eigen::Index>(1 + rng.index(4)), n = static_cast<Eigen::Index>(1 + rng.index(4));
    const Eigen::VectorXd a = oracle::random_simplex(rng, static_cast<std::size_t>(m), 0.2);
    const Eigen::VectorXd b = oracle::random_simplex(rng, static_cast<std::size_t>(n), 0.2);
    const Eigen::MatrixXd c = random_cost(rng, m, n);
    const TransportSolution s = solve_transport(a, b, c);
    std::size_t vertices = 0;
    CHECK(std::abs(s.value - oracle::transport_by_vertices(a, b, c, &vertices)) <= 1e-10);
    CHECK(vertices >= 1);
    CHECK(s.certificate_residual <= 1e-9);
    CHECK(std::abs((s.plan.array() * c.array()).sum() - s.value) <= 1e-12);
    check_marginals(s, a, b);
  }
}

TEST_CASE("dual potentials are feasible and complementary") {
  couplab::Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index m = 2 + static_cast<Eigen::Index>(rng.index(10)), n = 2 + static_cast<Eigen::Index>(rng.index(10));
    const Eigen::VectorXd a = oracle::random_simplex(rng, static_cast<std::size_t>(m));
    const Eigen::VectorXd b = oracle::random_simplex(rng, static_cast<std::size_t>(n));
    const Eigen::MatrixXd c = random_cost(rng, m, n);
    const TransportSolution s = solve_transport(a, b, c);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < n; ++j) CHECK(s.row_potential[i] + s.col_potential[j] <= c(i, j) + 1e-9);
    CHECK(std::abs(a.dot(s.row_potential) + b.dot(s.col_potential) - s.value) <= 1e-9);
  }
}

TEST_CASE("discrete cost distance is half the total variation") {
  couplab::Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    const DiscreteMeasure mu = oracle::random_measure(rng, 1 + rng.index(8), 12);
    const DiscreteMeasure nu = oracle::random_measure(rng, 1 + rng.index(8), 12);
    CHECK(std::abs(2.0 * minimal_distance(mu, nu, discrete_cost()).first - total_variation(mu, nu)) <= 1e-10);
  }
}

TEST_CASE("max closeness of equal point masses is 1 and of distant ones is 0") {
  const Metric d = metrics::euclidean();
  CHECK(max_closeness(DiscreteMeasure::dirac({0.3}), DiscreteMeasure::dirac({0.3}), d, 1e-6).first == 1.0);
  CHECK(max_closeness(DiscreteMeasure::dirac({0.0}), DiscreteMeasure::dirac({1.0}), d, 0.5).first == 0.0);
  CHECK(max_closeness(DiscreteMeasure::dirac({0.0}), DiscreteMeasure::dirac({1.0}), d, 1.0).first == 1.0);
}

TEST_CASE("max closeness equals one minus the vertex optimum of the threshold cost") {
  couplab::Rng rng(9);
  const Metric d = metrics::euclidean();
  for (int t = 0; t < 100; ++t) {
    const DiscreteMeasure mu = oracle::random_measure(rng, 1 + rng.index(4));
    const DiscreteMeasure nu = oracle::random_measure(rng, 1 + rng.index(4));
    const double eps = 0.05 + 0.5 * rng.uniform();
    const Eigen::MatrixXd c = cost_matrix(mu.points(), nu.points(), threshold_cost(d, eps).h);
    const auto [value, plan] = max_closeness(mu, nu, d, eps);
    CHECK(std::abs(value - (1.0 - oracle::transport_by_vertices(mu.weight_vector(), nu.weight_vector(), c))) <= 1e-10);
    CHECK(std::abs(plan.probability([&](const Point& x, const Point& y) { return d(x, y) <= eps; }) - value) <= 1e-10);
  }
}

TEST_CASE("max closeness is nondecreasing in eps") {
  couplab::Rng rng(10);
  const Metric d = metrics::euclidean();
  for (int t = 0; t < 50; ++t) {
    const DiscreteMeasure mu = oracle::random_measure(rng, 6), nu = oracle::random_measure(rng, 6);
    double last = 0.0;
    for (double eps = 0.01; eps <= 1.0; eps += 0.07) {
      const double v = max_closeness(mu, nu, d, eps).first;
      CHECK(v >= last - 1e-12);
      last = v;
    }
  }
}

TEST_CASE("measures with supports at distance delta are never eps-close below delta") {
  couplab::Rng rng(11);
  const Metric d = metrics::euclidean();
  for (int t = 0; t < 30; ++t) {
    std::vector<Point> left, right;
    for (int i = 0; i < 4; ++i) left.push_back({rng.uniform() * 0.4});
    for (int i = 0; i < 4; ++i) right.push_back({0.6 + rng.uniform() * 0.4});
    const DiscreteMeasure mu(left, {0.1, 0.2, 0.3, 0.4}), nu(right, {0.25, 0.25, 0.25, 0.25});
    for (double eps : {0.01, 0.1, 0.19}) CHECK(max_closeness(mu, nu, d, eps).first == 0.0);
  }
}

TEST_CASE("KR distance examples") {
  const Metric base = metrics::euclidean_truncated();
  CHECK(kr_distance(DiscreteMeasure::dirac({0.1}), DiscreteMeasure::dirac({0.4}), base) == doctest::Approx(0.3));
  const DiscreteMeasure half({{0.0}, {1.0}}, {0.5, 0.5});
  CHECK(kr_distance(half, half, base) == 0.0);
  const DiscreteMeasure a = DiscreteMeasure::uniform({{0.0}, {0.5}});
  const DiscreteMeasure b = DiscreteMeasure::uniform({{0.25}, {0.75}});
  CHECK(kr_distance(a, b, metrics::torus_1d()) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK_THROWS_AS(kr_distance(a, b, metrics::euclidean()), InputError);
}

TEST_CASE("KR distance satisfies the triangle inequality") {
  couplab::Rng rng(12);
  const Metric base = metrics::euclidean_truncated();
  for (int t = 0; t < 100; ++t) {
    const DiscreteMeasure a = oracle::random_measure(rng, 5), b = oracle::random_measure(rng, 5),
                          c = oracle::random_measure(rng, 5);
    CHECK(kr_distance(a, c, base) <= kr_distance(a, b, base) + kr_distance(b, c, base) + 1e-9);
    CHECK(std::abs(kr_distance(a, b, base) - kr_distance(b, a, base)) <= 1e-12);
  }
}

TEST_CASE("degenerate and oversized inputs are rejected") {
  Eigen::VectorXd a(2), b(2);
  a << 0.5, 0.5;
  b << 1.5, -0.5;
  CHECK_THROWS_AS(solve_transport(a, b, Eigen::MatrixXd::Zero(2, 2)), InputError);
  b << 0.5, 0.5;
  CHECK_THROWS_AS(solve_transport(a, b, Eigen::MatrixXd::Zero(3, 2)), InputError);
  TransportOptions small;
  small.max_support = 1;
  CHECK_THROWS_AS(solve_transport(a, b, Eigen::MatrixXd::Zero(2, 2), small), ResourceError);
}

TEST_CASE("plans survive a text round trip bit for bit") {
  couplab::Rng rng(13);
  const DiscreteMeasure mu = oracle::random_measure(rng, 4), nu = oracle::random_measure(rng, 3);
  const CouplingPlan plan = minimal_distance(mu, nu, cost_from_metric(metrics::euclidean_truncated())).second;
  std::stringstream text;
  write_plan(text, plan);
  const CouplingPlan back = read_plan(text);
  CHECK(back.weights() == plan.weights());
  CHECK(back.row_support() == plan.row_support());
  CHECK(back.col_support() == plan.col_support());
  CHECK(back.value() == plan.value());
  std::stringstream again;
  write_plan(again, back);
  std::stringstream first;
  write_plan(first, plan);
  CHECK(again.str() == first.str());
  std::istringstream junk("couplab-plan 2\n");
  CHECK_THROWS_AS(read_plan(junk), InputError);
}

TEST_CASE("larger random instances keep exact marginals and certificates") {
  couplab::Rng rng(14);
  for (int t = 0; t < 10; ++t) {
    const Eigen::Index m = 40 + static_cast<Eigen::Index>(rng.index(40)), n = 40 + static_cast<Eigen::Index>(rng.index(40));
    const Eigen::VectorXd a = oracle::random_simplex(rng, static_cast<std::size_t>(m), 0.1);
    const Eigen::VectorXd b = oracle::random_simplex(rng, static_cast<std::size_t>(n), 0.1);
    const TransportSolution s = solve_transport(a, b, random_cost(rng, m, n));
    check_marginals(s, a, b);
    CHECK(s.certificate_residual <= 1e-9);
  }
}
