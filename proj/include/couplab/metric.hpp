#pragma once

#include <functional>
#include <limits>
#include <string>
#include <string_view>

#include "couplab/chain.hpp"

namespace couplab {

// A metric on points together with a declared upper bound (infinity when
// unbounded).
struct Metric {
  std::string name;
  std::function<double(const Point&, const Point&)> fn;
  double bound = std::numeric_limits<double>::infinity();

  double operator()(const Point& a, const Point& b) const { return fn(a, b); }
};

// min(m, 1). Metrics already bounded by 1 are returned unchanged.
Metric truncated(Metric m);

namespace metrics {

Metric euclidean();
// min(|x - y|_2, 1)
Metric euclidean_truncated();
// Distance on the circle [0,1) using the first coordinate.
Metric torus_1d();
// Points (u, i) with i in {-1, 1}: torus distance of u plus |j - i|.
Metric torus_product_flip();
// 1 when the points differ, 0 otherwise.
Metric discrete();
// Points are flattened segments of `dim`-vectors; max over nodes of the
// Euclidean distance between corresponding nodes.
Metric sup_norm_segment(std::size_t dim);

}  // namespace metrics

// Built-in metric by config key: euclidean, euclidean-truncated, torus-1d,
// torus-product-flip, discrete, sup-norm-on-segment (uses `dim`).
Metric metric_by_name(std::string_view key, std::size_t dim = 1);

// The initial metric rho (forced into [0,1]) and the convergence metric d.
struct MetricPair {
  Metric rho;
  Metric d;
  bool d_is_rho = false;
};

MetricPair make_metric_pair(Metric rho, Metric d);
MetricPair make_metric_pair(Metric rho);

// Symmetric cost with values in [0,1] vanishing on the diagonal.
struct DistanceLikeCost {
  std::string name;
  std::function<double(const Point&, const Point&)> h;

  double operator()(const Point& a, const Point& b) const { return h(a, b); }
};

// h(x,y) = 1 if d(x,y) > eps, else 0. The threshold is closed on the near
// side, matching the event {d <= eps}.
DistanceLikeCost threshold_cost(const Metric& d, double eps);

DistanceLikeCost discrete_cost();

// Cost h = base; requires base to be bounded by 1.
DistanceLikeCost cost_from_metric(const Metric& base);

struct PathDistance {
  double value = 0.0;
  // Weight of the omitted tail, 2^-(N+1), valid for bases bounded by 1.
  double tail_bound = 0.0;
};

// sum_{n=0}^{N} 2^-(n+1) base(x_n, y_n)
PathDistance path_metric(const Trajectory& x, const Trajectory& y, const Metric& base);

enum class PathBase { rho, d };
PathDistance path_metric(const Trajectory& x, const Trajectory& y, const MetricPair& pair,
                         PathBase which = PathBase::rho);

// Metric on pairs of paths: path(x, y) + path(x', y').
PathDistance pair_path_metric(const Trajectory& x, const Trajectory& x_prime, const Trajectory& y,
                              const Trajectory& y_prime, const Metric& base);

}  // namespace couplab
