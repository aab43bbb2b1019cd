#include "couplab/metric.hpp"

#include <algorithm>
#include <cmath>

#include "couplab/errors.hpp"

namespace couplab {

namespace {

void require_same_dim(const Point& a, const Point& b, const char* who) {
  if (a.size() != b.size()) throw InputError(std::string(who) + ": points have different dimensions");
}

double circle_gap(double u, double v) {
  double gap = std::fmod(std::abs(u - v), 1.0);
  return std::min(gap, 1.0 - gap);
}

}  // namespace

Metric truncated(Metric m) {
  if (m.bound <= 1.0) return m;
  auto inner = std::move(m.fn);
  return Metric{m.name + "^1", [inner](const Point& a, const Point& b) { return std::min(inner(a, b), 1.0); }, 1.0};
}

namespace metrics {

Metric euclidean() {
  return Metric{"euclidean",
                [](const Point& a, const Point& b) {
                  require_same_dim(a, b, "euclidean");
                  double s = 0.0;
                  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
                  return std::sqrt(s);
                },
                std::numeric_limits<double>::infinity()};
}

Metric euclidean_truncated() {
  Metric m = truncated(euclidean());
  m.name = "euclidean-truncated";
  return m;
}

Metric torus_1d() {
  return Metric{"torus-1d",
                [](const Point& a, const Point& b) {
                  require_same_dim(a, b, "torus-1d");
                  return circle_gap(a.at(0), b.at(0));
                },
                0.5};
}

Metric torus_product_flip() {
  return Metric{"torus-product-flip",
                [](const Point& a, const Point& b) {
                  if (a.size() != 2 || b.size() != 2) throw InputError("torus-product-flip: points must be (u, i)");
                  return circle_gap(a[0], b[0]) + std::abs(b[1] - a[1]);
                },
                2.5};
}

Metric discrete() {
  return Metric{"discrete", [](const Point& a, const Point& b) { return a == b ? 0.0 : 1.0; }, 1.0};
}

Metric sup_norm_segment(std::size_t dim) {
  if (dim == 0) throw InputError("sup-norm-on-segment: dimension must be positive");
  return Metric{"sup-norm-on-segment",
                [dim](const Point& a, const Point& b) {
                  require_same_dim(a, b, "sup-norm-on-segment");
                  if (a.size() % dim != 0) throw InputError("sup-norm-on-segment: length is not a multiple of dim");
                  double worst = 0.0;
                  for (std::size_t node = 0; node < a.size(); node += dim) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < dim; ++c) s += (a[node + c] - b[node + c]) * (a[node + c] - b[node + c]);
                    worst = std::max(worst, std::sqrt(s));
                  }
                  return worst;
                },
                std::numeric_limits<double>::infinity()};
}

}  // namespace metrics

Metric metric_by_name(std::string_view key, std::size_t dim) {
  if (key == "euclidean") return metrics::euclidean();
  if (key == "euclidean-truncated") return metrics::euclidean_truncated();
  if (key == "torus-1d") return metrics::torus_1d();
  if (key == "torus-product-flip") return metrics::torus_product_flip();
  if (key == "discrete") return metrics::discrete();
  if (key == "sup-norm-on-segment") return metrics::sup_norm_segment(dim);
  throw InputError("unknown metric '" + std::string(key) + "'");
}

MetricPair make_metric_pair(Metric rho, Metric d) {
  if (!std::isfinite(d.bound)) throw InputError("metric pair: d must be bounded; truncate it first");
  const bool same = rho.name == d.name;
  return MetricPair{truncated(std::move(rho)), std::move(d), same};
}

MetricPair make_metric_pair(Metric rho) {
  Metric r = truncated(std::move(rho));
  return MetricPair{r, r, true};
}

DistanceLikeCost threshold_cost(const Metric& d, double eps) {
  if (!(eps > 0.0)) throw InputError("threshold cost: eps must be positive");
  auto fn = d.fn;
  return DistanceLikeCost{"threshold(" + d.name + ")",
                          [fn, eps](const Point& a, const Point& b) { return fn(a, b) > eps ? 1.0 : 0.0; }};
}

DistanceLikeCost discrete_cost() {
  return DistanceLikeCost{"discrete", [](const Point& a, const Point& b) { return a == b ? 0.0 : 1.0; }};
}

DistanceLikeCost cost_from_metric(const Metric& base) {
  if (!(base.bound <= 1.0)) throw InputError("cost: base metric '" + base.name + "' is not bounded by 1");
  return DistanceLikeCost{base.name, base.fn};
}

PathDistance path_metric(const Trajectory& x, const Trajectory& y, const Metric& base) {
  if (x.states.size() != y.states.size()) throw InputError("path metric: trajectories have different horizons");
  if (x.states.empty()) throw InputError("path metric: empty trajectories");
  PathDistance out;
  double weight = 0.5;
  for (std::size_t n = 0; n < x.states.size(); ++n) {
    out.value += weight * base(x[n], y[n]);
    weight *= 0.5;
  }
  out.tail_bound = 2.0 * weight;
  return out;
}

PathDistance path_metric(const Trajectory& x, const Trajectory& y, const MetricPair& pair, PathBase which) {
  return path_metric(x, y, which == PathBase::rho ? pair.rho : truncated(pair.d));
}

PathDistance pair_path_metric(const Trajectory& x, const Trajectory& x_prime, const Trajectory& y,
                              const Trajectory& y_prime, const Metric& base) {
  const PathDistance first = path_metric(x, y, base);
  const PathDistance second = path_metric(x_prime, y_prime, base);
  return PathDistance{first.value + second.value, first.tail_bound + second.tail_bound};
}

}  // namespace couplab
