#include "couplab/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>

#include "couplab/diagnostics.hpp"
#include "couplab/errors.hpp"
#include "couplab/report.hpp"
#include "couplab/transport.hpp"

namespace couplab {

namespace {

bool is_power_of_two(std::size_t k) { return k != 0 && (k & (k - 1)) == 0; }

std::string fmt(double v) { return format_number(v); }

// Effective parameters: defaults overridden by the caller, unknown keys rejected.
class ParamReader {
 public:
  ParamReader(const CatalogEntry& entry, const InstanceParams& given) : id_(entry.id), values_(entry.defaults) {
    for (const auto& [key, value] : given) {
      if (!values_.count(key)) throw InputError("instance " + id_ + ": unknown parameter '" + key + "'");
      if (!std::isfinite(value)) throw InputError("instance " + id_ + ": parameter '" + key + "' is not finite");
      values_[key] = value;
    }
  }

  double real(const std::string& key, double lo, double hi) const {
    const double v = values_.at(key);
    if (!(v >= lo && v <= hi)) {
      throw InputError("instance " + id_ + ": parameter '" + key + "' = " + fmt(v) + " outside [" + fmt(lo) + ", " +
                       fmt(hi) + "]");
    }
    return v;
  }

  std::size_t integer(const std::string& key, std::size_t lo, std::size_t hi) const {
    const double v = real(key, static_cast<double>(lo), static_cast<double>(hi));
    if (v != std::floor(v)) throw InputError("instance " + id_ + ": parameter '" + key + "' must be an integer");
    return static_cast<std::size_t>(v);
  }

  const InstanceParams& values() const { return values_; }

 private:
  std::string id_;
  InstanceParams values_;
};

// Symmetry, identity, nonnegativity and the declared bound on a
// deterministic sample of state pairs.
void validate_metric(const std::vector<Point>& points, const Metric& m, const std::string& id) {
  Rng rng(0x5eed);
  const std::size_t n = points.size();
  const std::size_t samples = std::min<std::size_t>(200, n * n);
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t i = n * n <= 200 ? s / n : static_cast<std::size_t>(rng.index(n));
    const std::size_t j = n * n <= 200 ? s % n : static_cast<std::size_t>(rng.index(n));
    const double dij = m(points[i], points[j]);
    const double dji = m(points[j], points[i]);
    if (!(dij >= 0.0) || dij > m.bound * (1.0 + 1e-12) || std::abs(dij - dji) > 1e-12 ||
        m(points[i], points[i]) != 0.0) {
      throw ModelError("instance " + id + ": metric '" + m.name + "' violates an axiom on the state points");
    }
  }
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

Assertion invariant_assertion(std::shared_ptr<const FiniteChain> chain, Eigen::VectorXd expected, bool unique,
                              std::string what) {
  return {std::move(what), [chain, expected, unique](std::string& detail) {
            const InvariantResult inv = invariant_measure(*chain);
            const double residual = invariance_residual(*chain, expected);
            detail = "residual " + fmt(residual) + ", closed classes " + std::to_string(inv.null_dimension);
            return residual <= 1e-10 && inv.unique == unique;
          }};
}

Eigen::VectorXd dirac_vector(std::size_t n, std::size_t i) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  v[static_cast<Eigen::Index>(i)] = 1.0;
  return v;
}

FiniteChain deterministic_chain(std::vector<Point> points, const std::vector<std::size_t>& next) {
  const std::size_t n = points.size();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(next[i])) = 1.0;
  return FiniteChain(std::move(points), std::move(P));
}

SamplerChain doubling_sampler() {
  return SamplerChain{1,
                      [](const Point& x, Rng&) {
                        const double y = 2.0 * x.at(0);
                        return Point{y >= 1.0 ? y - 1.0 : y};
                      },
                      "x -> 2x mod 1"};
}

// Doubling with the lowest mantissa bit refreshed from the stream. The
// exact map in double precision reaches 0 once the 53 bits have shifted
// out; refreshing the bit realizes the shift on a Lebesgue-random point.
double refreshed_doubling(double y, Rng& rng) {
  double z = 2.0 * y;
  if (z >= 1.0) z -= 1.0;
  return z + static_cast<double>(rng.next() >> 63) * 0x1.0p-53;
}

const std::vector<CatalogEntry>& catalog_storage() {
  static const std::vector<CatalogEntry> catalog{
      {"5.1", "5.1",
       "doubling map x -> 2x mod 1 on the torus; delta_0 and the uniform law are both invariant, the time "
       "average near 0 fails while the probability limsup is 1",
       {{"depth", 12}, {"x", 0}}},
      {"5.2", "5.2", "two-state flip p01 = p10 = 1; unique invariant (1/2, 1/2), transition probabilities oscillate",
       {{"x", 0}, {"y", 0}}},
      {"5.3", "5.3",
       "deterministic escape a_1 -> a_2 -> ..., a_k = k at powers of two and 1/k otherwise; averaged closeness to 0 "
       "holds while P_n(x, .) does not converge",
       {{"size", 64}, {"x", 1}}},
      {"5.4", "5.4", "0 <- 1 <- 1/2 <- 1/4 <- ...; converges to delta_0 in total variation but is not an e-chain",
       {{"depth", 20}, {"x", -1}, {"y", 0}}},
      {"5.5", "5.5",
       "birth-death chain absorbed at 0 (down 1/3, up 2/3); a generalized coupling drives X_n to 0 although "
       "P_n(x, .) does not converge",
       {{"size", 50}, {"x", 5}}},
      {"5.6", "5.6", "rotation-flip chain on [0,1) x {-1,1} with an irrational-surrogate rotation a/q",
       {{"q", 89}, {"a", 55}, {"x", 0}, {"y", -1}}},
      {"5.7", "5.7",
       "coupled rotation-flip chain with switching p(z) = min(1, (z/scale)^power); gap and mismatch converge to 0 "
       "in probability",
       {{"q", 4181}, {"a", 2584}, {"power", 4}, {"scale", 0.2}, {"start_gap", 2090}}},
      {"aperiodic-3", "", "aperiodic ergodic 3-state chain on {0, 1/2, 1}", {{"x", 0}, {"y", 2}}},
      {"aperiodic-5", "", "aperiodic ergodic 5-state chain on {0, 1/4, 1/2, 3/4, 1}", {{"x", 0}, {"y", 4}}},
      {"identity", "", "identity chain P = I on n points of [0,1]; every delta_x is invariant", {{"size", 3}}},
      {"contraction-16", "",
       "16-point grid, i -> round(i/2) + {-1, 0, 1} with probabilities 1/4, 1/2, 1/4 (clamped)", {{"x", 0}, {"y", 15}}},
      {"single-state", "", "one absorbing state", {}},
  };
  return catalog;
}

const CatalogEntry& catalog_entry(std::string_view id) {
  for (const CatalogEntry& e : catalog_storage()) {
    if (e.id == id) return e;
  }
  throw InputError("unknown instance '" + std::string(id) + "'");
}

ExampleInstance base_instance(const CatalogEntry& entry, const ParamReader& params) {
  ExampleInstance inst;
  inst.id = entry.id;
  inst.anchor = entry.anchor;
  inst.title = entry.description;
  inst.params = params.values();
  return inst;
}

void attach_chain(ExampleInstance& inst, FiniteChain chain, MetricPair metric) {
  validate_metric(chain.points(), metric.d, inst.id);
  validate_metric(chain.points(), metric.rho, inst.id);
  inst.chain.emplace(std::move(chain));
  inst.metric = std::move(metric);
}

ExampleInstance build_5_1(const CatalogEntry& entry, const ParamReader& params) {
  ExampleInstance inst = base_instance(entry, params);
  const std::size_t depth = params.integer("depth", 2, 13);
  const std::size_t m = (std::size_t{1} << depth) - 1;
  const std::size_t x = params.integer("x", 0, m - 1);
  std::vector<Point> points(m);
  std::vector<std::size_t> next(m);
  for (std::size_t k = 0; k < m; ++k) {
    points[k] = {static_cast<double>(k) / static_cast<double>(m)};
    next[k] = (2 * k) % m;
  }
  attach_chain(inst, deterministic_chain(std::move(points), next), make_metric_pair(metrics::torus_1d()));
  inst.sampler = doubling_sampler();
  inst.expected =
      "On the grid {k/(2^D - 1)} the doubling map is a permutation fixing 0, so delta_0 and the uniform law are "
      "invariant and ergodic. Coupling delta_0 with a Lebesgue-random start, each path returns near 0 infinitely "
      "often while the time average of 1{d <= eps} tends to 2 eps.";
  inst.pair = PairSimulator([](std::size_t horizon, Rng& rng) {
    WeightedPairTrajectory out;
    double y = static_cast<double>(rng.next() >> 11) * 0x1.0p-53;
    out.x.states.assign(horizon + 1, Point{0.0});
    out.y.states.reserve(horizon + 1);
    out.y.states.push_back({y});
    for (std::size_t k = 0; k < horizon; ++k) {
      y = refreshed_doubling(y, rng);
      out.y.states.push_back({y});
    }
    return out;
  });
  auto chain = std::make_shared<const FiniteChain>(*inst.chain);
  inst.assertions.push_back(invariant_assertion(chain, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), 1.0 / m),
                                                false, "uniform law is invariant; invariant law not unique"));
  inst.assertions.push_back(invariant_assertion(chain, dirac_vector(m, 0), false, "delta_0 is invariant"));
  inst.assertions.push_back({"the doubling orbit of the start state is periodic", [chain, x, m](std::string& detail) {
                               std::size_t k = x, period = 0;
                               do {
                                 k = (2 * k) % m;
                                 ++period;
                               } while (k != x && period <= m);
                               detail = "period " + std::to_string(period);
                               return k == x;
                             }});
  inst.assertions.push_back({"exact doubling from 1/3 gives (1/3, 2/3, 1/3)", [s = *inst.sampler](std::string& detail) {
                               const Trajectory t = simulate(s, Point{1.0 / 3.0}, 2, std::uint64_t{1});
                               detail = fmt(t[1][0]) + ", " + fmt(t[2][0]);
                               return near(t[1][0], 2.0 / 3.0, 1e-15) && near(t[2][0], 1.0 / 3.0, 1e-15);
                             }});
  return inst;
}

ExampleInstance build_5_2(const CatalogEntry& entry, const ParamReader& params) {
  ExampleInstance inst = base_instance(entry, params);
  const std::size_t x = params.integer("x", 0, 1), y = params.integer("y", 0, 1);
  Eigen::MatrixXd P(2, 2);
  P << 0, 1, 1, 0;
  attach_chain(inst, FiniteChain({{0.0}, {1.0}}, P), make_metric_pair(metrics::euclidean_truncated()));
  inst.expected =
      "Unique invariant law (1/2, 1/2); P_n(x, .) alternates between point masses and does not converge, while the "
      "time-averaged transition probabilities converge to (1/2, 1/2).";
  inst.pair = independent_pair(*inst.chain, x, y);
  auto chain = std::make_shared<const FiniteChain>(*inst.chain);
  inst.assertions.push_back(invariant_assertion(chain, Eigen::Vector2d(0.5, 0.5), true, "unique invariant (1/2, 1/2)"));
  inst.assertions.push_back({"P_3(0, .) = delta_1 and P_4(0, .) = delta_0", [chain](std::string& detail) {
                               const Eigen::VectorXd r3 = chain->n_step_row(0, 3), r4 = chain->n_step_row(0, 4);
                               detail = "P_3(0,1) = " + fmt(r3[1]) + ", P_4(0,0) = " + fmt(r4[0]);
                               return r3[1] == 1.0 && r4[0] == 1.0;
                             }});
  inst.assertions.push_back({"Cesaro averages of P_n(0, .) approach (1/2, 1/2)", [chain](std::string& detail) {
                               Eigen::VectorXd avg = Eigen::VectorXd::Zero(2);
                               const std::size_t N = 1000;
                               for (std::size_t n = 1; n <= N; ++n) avg += chain->n_step_row(0, n % 2);
                               avg /= static_cast<double>(N);
                               detail = "average after " + std::to_string(N) + " steps: " + fmt(avg[0]);
                               return near(avg[0], 0.5, 1.0 / N);
                             }});
  return inst;
}

ExampleInstance build_5_3(const CatalogEntry& entry, const ParamReader& params) {
  ExampleInstance inst = base_instance(entry, params);
  const std::size_t N = params.integer("size", 4, 1u << 16);
  const std::size_t x = params.integer("x", 0, N);
  std::vector<Point> points{{0.0}};
  std::vector<std::size_t> next{0};
  for (std::size_t k = 1; k <= N; ++k) {
    points.push_back({is_power_of_two(k) ? static_cast<double>(k) : 1.0 / static_cast<double>(k)});
    next.push_back(k == N ? 0 : k + 1);
  }
  attach_chain(inst, deterministic_chain(std::move(points), next), make_metric_pair(metrics::euclidean_truncated()));
  inst.expected =
      "delta_0 is the unique invariant law. From a_j the deterministic coupling with Y = 0 is eps-close for a "
      "time fraction tending to 1, yet P_n(a_j, .) sits at distance 1 from delta_0 whenever a_{j+n} is a power of "
      "two (until the truncation returns the orbit to 0).";
  inst.pair = independent_pair(*inst.chain, x, 0);
  auto chain = std::make_shared<const FiniteChain>(*inst.chain);
  inst.assertions.push_back(invariant_assertion(chain, dirac_vector(N + 1, 0), true, "delta_0 is the unique invariant law"));
  inst.assertions.push_back({"averaged closeness: fraction of k <= N with d(a_k, 0) <= 0.1", [N](std::string& detail) {
                               std::size_t close = 0;
                               for (std::size_t k = 1; k <= N; ++k) {
                                 const double a = is_power_of_two(k) ? static_cast<double>(k) : 1.0 / static_cast<double>(k);
                                 close += std::min(1.0, a) <= 0.1 ? 1 : 0;
                               }
                               const double fraction = static_cast<double>(close) / static_cast<double>(N);
                               const double bound = 1.0 - (10.0 + std::log2(static_cast<double>(N)) + 1.0) / static_cast<double>(N);
                               detail = "fraction " + fmt(fraction) + ", lower bound " + fmt(bound);
                               return fraction >= bound;
                             }});
  inst.assertions.push_back({"KR(P_n(a_1, .), delta_0) = 1 at every n with a_{n+1} a power of two",
                             [chain, N](std::string& detail) {
                               const Metric base = metrics::euclidean_truncated();
                               const DiscreteMeasure zero = DiscreteMeasure::dirac({0.0});
                               std::size_t checked = 0;
                               for (std::size_t k = 2; k <= N; k *= 2) {
                                 const double kr = kr_distance(n_step_law(*chain, 1, k - 1), zero, base);
                                 if (kr != 1.0) {
                                   detail = "KR = " + fmt(kr) + " at n = " + std::to_string(k - 1);
                                   return false;
                                 }
                                 ++checked;
                               }
                               detail = std::to_string(checked) + " horizons checked";
                               return checked > 0;
                             }});
  return inst;
}

ExampleInstance build_5_4(const CatalogEntry& entry, const ParamReader& params) {
  ExampleInstance inst = base_instance(entry, params);
  const std::size_t K = params.integer("depth", 2, 60);
  // index 0 -> 0, index j >= 1 -> 2^{-(j-1)}; x = -1 selects the deepest state
  const std::size_t x = params.real("x", -1, static_cast<double>(K + 1)) < 0 ? K + 1 : params.integer("x", 0, K + 1);
  const std::size_t y = params.integer("y", 0, K + 1);
  inst.params["x"] = static_cast<double>(x);
  std::vector<Point> points{{0.0}};
  std::vector<std::size_t> next{0};
  for (std::size_t j = 1; j <= K + 1; ++j) {
    points.push_back({std::ldexp(1.0, -static_cast<int>(j - 1))});
    next.push_back(j == 1 ? 0 : j - 1);
  }
  attach_chain(inst, deterministic_chain(std::move(points), next), make_metric_pair(metrics::euclidean_truncated()));
  inst.expected =
      "P_n(x, .) = delta_0 for n > K from every state (total variation convergence), yet pairs 2^{-k}, 2^{-m} "
      "arbitrarily close keep sup_n KR(P_n(x, .), P_n(y, .)) >= 1/2: not an e-chain.";
  inst.pair = independent_pair(*inst.chain, x, y);
  auto chain = std::make_shared<const FiniteChain>(*inst.chain);
  inst.assertions.push_back(invariant_assertion(chain, dirac_vector(K + 2, 0), true, "delta_0 is the unique invariant law"));
  inst.assertions.push_back({"TV(P_n(x, .), delta_0) = 0 for every x at n = K + 1", [chain, K](std::string& detail) {
                               double worst = 0.0;
                               for (std::size_t s = 0; s < chain->size(); ++s) {
                                 worst = std::max(worst, 1.0 - chain->n_step_row(s, K + 1)[0]);
                               }
                               detail = "worst TV/2 " + fmt(worst);
                               return worst == 0.0;
                             }});
  inst.assertions.push_back({"e-chain probe at 0 refutes with sup-distance >= 1/2", [chain, K](std::string& detail) {
                               std::vector<double> radii;
                               for (std::size_t j = 0; j <= K; ++j) radii.push_back(std::ldexp(1.0, -static_cast<int>(j)));
                               std::vector<std::size_t> grid;
                               for (std::size_t n = 0; n <= K + 2; ++n) grid.push_back(n);
                               const ConvergenceReport r =
                                   e_chain_probe(*chain, metrics::euclidean_truncated(), 0, radii, grid);
                               detail = "sup-distance " + fmt(r.statistic("sup_distance")) + " at radius " +
                                        fmt(r.statistic("smallest_radius"));
                               return r.verdict == Verdict::refutes && r.statistic("sup_distance") >= 0.5 - 1e-9;
                             }});
  return inst;
}

ExampleInstance build_5_5(const CatalogEntry& entry, const ParamReader& params) {
  ExampleInstance inst = base_instance(entry, params);
  const std::size_t N = params.integer("size", 2, 5000);
  const std::size_t x = params.integer("x", 1, N);
  attach_chain(inst, birth_death_chain(N), make_metric_pair(metrics::euclidean_truncated()));
  inst.expected =
      "delta_0 is the unique invariant law. From x > 0 the chain drifts upward: P_n(x, {0}) stays near the ruin "
      "probability 2^{-x} over any practical horizon (on the truncation the reflecting top returns mass only "
      "after about 2^N steps). Under the generalized coupling X follows the drift-to-zero kernel and is absorbed "
      "at 0 almost surely, although its path law is singular to the chain's in the limit.";
  inst.pair = birth_death_generalized_pair(N, x);
  auto chain = std::make_shared<const FiniteChain>(*inst.chain);
  inst.assertions.push_back(invariant_assertion(chain, dirac_vector(N + 1, 0), true, "delta_0 is the unique invariant law"));
  inst.assertions.push_back({"P_n(x, {0}) at n = 2000 stays at the ruin probability, far from 1",
                             [chain, x, N](std::string& detail) {
                               const double mass = chain->n_step_row(x, 2000)[0];
                               const double r = 0.5;
                               const double ruin = (std::pow(r, x) - std::pow(r, N)) / (1.0 - std::pow(r, N));
                               detail = "P_2000(x, {0}) = " + fmt(mass) + ", ruin probability " + fmt(ruin);
                               return mass <= ruin + 1e-6 && mass < 0.5;
                             }});
  inst.assertions.push_back({"drift-to-zero kernel absorbs x by n = 40 (x + 20 sd)", [x, N](std::string& detail) {
                               const FiniteChain q = drift_to_zero_kernel(N);
                               const std::size_t n = 40 * (x + 1);
                               const double mass = q.n_step_row(x, n)[0];
                               detail = "Q_" + std::to_string(n) + "(x, {0}) = " + fmt(mass);
                               return mass >= 0.999;
                             }});
  return inst;
}

ExampleInstance build_5_6(const CatalogEntry& entry, const ParamReader& params) {
  ExampleInstance inst = base_instance(entry, params);
  const std::size_t q = params.integer("q", 2, 2048);
  const std::size_t a = params.integer("a", 1, q - 1);
  if (std::gcd(a, q) != 1) throw InputError("instance 5.6: a and q must be coprime");
  // y = -1 selects state q, the point (floor(q/2)/q, -1 or 1) across the torus
  const std::size_t x = params.integer("x", 0, 2 * q - 1);
  const std::size_t y = params.real("y", -1, static_cast<double>(2 * q - 1)) < 0 ? q : params.integer("y", 0, 2 * q - 1);
  inst.params["y"] = static_cast<double>(y);
  // state 2k + s carries (k/q, s ? 1 : -1)
  const std::size_t m = 2 * q;
  std::vector<Point> points(m);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t k = 0; k < q; ++k) {
    for (std::size_t s = 0; s < 2; ++s) {
      const std::size_t i = 2 * k + s;
      points[i] = {static_cast<double>(k) / static_cast<double>(q), s ? 1.0 : -1.0};
      P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(2 * ((k + a) % q) + s)) += 0.5;
      P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(2 * k + (1 - s))) += 0.5;
    }
  }
  attach_chain(inst, FiniteChain(std::move(points), std::move(P)),
               make_metric_pair(metrics::torus_product_flip(), metrics::torus_product_flip()));
  inst.expected =
      "The uniform law on grid x {-1, 1} is invariant and P_n(x, .) converges to it. Components with equal second "
      "coordinates keep their distance under matched moves, and differing second coordinates put them at distance "
      ">= 2, so the distance can only vanish by coinciding exactly.";
  inst.pair = independent_pair(*inst.chain, x, y);
  auto chain = std::make_shared<const FiniteChain>(*inst.chain);
  inst.assertions.push_back(invariant_assertion(chain, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), 1.0 / m),
                                                true, "uniform law is the unique invariant law"));
  inst.assertions.push_back({"differing second coordinates put states at distance >= 2", [chain](std::string& detail) {
                               const Metric d = metrics::torus_product_flip();
                               double least = 3.0;
                               for (const Point& u : chain->points()) {
                                 for (const Point& v : chain->points()) {
                                   if (u[1] != v[1]) least = std::min(least, d(u, v));
                                 }
                               }
                               detail = "least distance " + fmt(least);
                               return least >= 2.0;
                             }});
  inst.assertions.push_back({"matched moves (both rotate or both flip) preserve the distance", [chain, q, a](std::string& detail) {
                               const Metric d = metrics::torus_product_flip();
                               double worst = 0.0;
                               const auto rotate = [&](const Point& p) {
                                 const auto k = static_cast<std::size_t>(std::llround(p[0] * static_cast<double>(q)));
                                 return Point{static_cast<double>((k + a) % q) / static_cast<double>(q), p[1]};
                               };
                               for (const Point& u : chain->points()) {
                                 for (const Point& v : chain->points()) {
                                   if (u[1] != v[1]) continue;
                                   worst = std::max(worst, std::abs(d(rotate(u), rotate(v)) - d(u, v)));
                                   worst = std::max(worst, std::abs(d(Point{u[0], -u[1]}, Point{v[0], -v[1]}) - d(u, v)));
                                 }
                               }
                               detail = "largest change " + fmt(worst);
                               return worst <= 1e-12;
                             }});
  inst.assertions.push_back({"KR(P_n((0, -1), .), uniform) <= 0.05 at n = 1024", [chain, m](std::string& detail) {
                               const DiscreteMeasure law = n_step_law(*chain, 0, 1024);
                               const DiscreteMeasure uniform = DiscreteMeasure::uniform(chain->points());
                               const double kr = kr_distance(law, uniform, truncated(metrics::torus_product_flip()));
                               detail = "KR = " + fmt(kr) + " over " + std::to_string(m) + " states";
                               return kr <= 0.05;
                             }});
  return inst;
}

ExampleInstance build_5_7(const CatalogEntry& entry, const ParamReader& params) {
  ExampleInstance inst = base_instance(entry, params);
  const auto q = static_cast<std::uint32_t>(params.integer("q", 3, 1u << 24));
  const auto a = static_cast<std::uint32_t>(params.integer("a", 1, q - 1));
  if (std::gcd(a, q) != 1) throw InputError("instance 5.7: a and q must be coprime");
  const double power = params.real("power", 0.5, 16.0);
  const double scale = params.real("scale", 1e-6, 1.0);
  const auto start_gap = static_cast<std::uint32_t>(params.integer("start_gap", 0, q - 1));
  SwitchingFunction p{"min(1, (z/" + fmt(scale) + ")^" + fmt(power) + ")",
                      [power, scale](double z) { return std::min(1.0, std::pow(z / scale, power)); }};
  auto coupling = std::make_shared<const RotationFlipCoupling>(p, q, a);

  inst.sampler = SamplerChain{2,
                              [q, a](const Point& s, Rng& rng) {
                                const auto k = static_cast<std::uint64_t>(std::llround(s.at(0) * q)) % q;
                                if (rng.uniform() < 0.5) return Point{static_cast<double>((k + a) % q) / q, s.at(1)};
                                return Point{static_cast<double>(k) / q, -s.at(1)};
                              },
                              "rotation by a/q or flip, 1/2 each"};
  inst.metric = make_metric_pair(metrics::torus_product_flip(), metrics::torus_product_flip());
  const RotationFlipCoupling::State start{0, start_gap, 1, 1};
  validate_metric({coupling->point_x(start), coupling->point_y(start), coupling->point_x({1, 2, 1, -1})}, inst.metric.d,
                  inst.id);
  inst.pair = coupling->simulator(start);
  inst.expected =
      "The joint chain keeps each component a copy of the rotation-flip chain. The gap Z_n holds for a geometric "
      "time with mean 1/p(Z_n), then moves by 0 or +-2a/q, so with p vanishing fast at 0 both Z_n and the "
      "mismatch indicator tend to 0 in probability.";
  inst.assertions.push_back({"each component moves by rotation or flip with probability 1/2", [coupling](std::string& detail) {
                               double worst = 0.0;
                               for (const RotationFlipCoupling::State s :
                                    {RotationFlipCoupling::State{0, 7, 1, 1}, RotationFlipCoupling::State{3, 3, -1, -1},
                                     RotationFlipCoupling::State{5, 900, 1, -1}}) {
                                 double x_rot = 0.0, y_rot = 0.0, total = 0.0;
                                 for (const auto& t : coupling->transitions(s)) {
                                   total += t.probability;
                                   if (t.next.ix == s.ix) x_rot += t.probability;
                                   if (t.next.iy == s.iy) y_rot += t.probability;
                                 }
                                 worst = std::max({worst, std::abs(x_rot - 0.5), std::abs(y_rot - 0.5), std::abs(total - 1.0)});
                               }
                               detail = "largest deviation " + fmt(worst);
                               return worst <= 1e-15;
                             }});
  inst.assertions.push_back({"after a mismatch the gap moves to z, z + 2r, z - 2r with 1/2, 1/4, 1/4",
                             [coupling](std::string& detail) {
                               const std::uint32_t q = coupling->q(), a = coupling->a();
                               const RotationFlipCoupling::State s{0, 40, 1, 1};
                               std::map<std::uint32_t, double> law;  // gap index k_y - k_x after resync
                               double desync = 0.0;
                               for (const auto& t1 : coupling->transitions(s)) {
                                 if (!coupling->mismatched(t1.next)) continue;
                                 desync += t1.probability;
                                 for (const auto& t2 : coupling->transitions(t1.next)) {
                                   law[(t2.next.ky + q - t2.next.kx) % q] += t1.probability * t2.probability;
                                 }
                               }
                               const double z = 40, up = (40 + 2 * a) % q, down = (40 + 2 * (q - a)) % q;
                               const double pz = law[static_cast<std::uint32_t>(z)] / desync;
                               const double pu = law[static_cast<std::uint32_t>(up)] / desync;
                               const double pd = law[static_cast<std::uint32_t>(down)] / desync;
                               detail = "conditional law " + fmt(pz) + ", " + fmt(pu) + ", " + fmt(pd);
                               return near(pz, 0.5, 1e-12) && near(pu, 0.25, 1e-12) && near(pd, 0.25, 1e-12);
                             }});
  inst.assertions.push_back({"500 reps at n = 10^4: mismatch <= 0.05 and P(Z_n <= 0.05) >= 0.9",
                             [coupling, start](std::string& detail) {
                               std::size_t mismatched = 0, close = 0;
                               const std::size_t reps = 500;
                               for (std::size_t r = 0; r < reps; ++r) {
                                 Rng rng = Rng::stream(57, r);
                                 const auto end = coupling->run(start, 10000, rng);
                                 mismatched += coupling->mismatched(end) ? 1 : 0;
                                 close += coupling->gap(end) <= 0.05 ? 1 : 0;
                               }
                               const double pm = static_cast<double>(mismatched) / reps;
                               const double pc = static_cast<double>(close) / reps;
                               detail = "mismatch " + fmt(pm) + ", P(Z <= 0.05) " + fmt(pc);
                               return pm <= 0.05 && pc >= 0.9;
                             }});
  return inst;
}

MetricPair truncated_euclidean_pair() { return make_metric_pair(metrics::euclidean_truncated()); }

ExampleInstance build_named(const CatalogEntry& entry, const ParamReader& params) {
  ExampleInstance inst = base_instance(entry, params);
  if (entry.id == "aperiodic-3") {
    Eigen::MatrixXd P(3, 3);
    P << 0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.2, 0.3, 0.5;
    attach_chain(inst, FiniteChain({{0.0}, {0.5}, {1.0}}, P), truncated_euclidean_pair());
    inst.expected = "irreducible and aperiodic: gamma -> 1 and P_n(x, .) -> mu geometrically";
  } else if (entry.id == "aperiodic-5") {
    Eigen::MatrixXd P(5, 5);
    P << 0.5, 0.3, 0.1, 0.1, 0.0,  //
        0.2, 0.4, 0.2, 0.1, 0.1,   //
        0.1, 0.2, 0.4, 0.2, 0.1,   //
        0.1, 0.1, 0.2, 0.4, 0.2,   //
        0.0, 0.1, 0.1, 0.3, 0.5;
    attach_chain(inst, FiniteChain({{0.0}, {0.25}, {0.5}, {0.75}, {1.0}}, P), truncated_euclidean_pair());
    inst.expected = "irreducible and aperiodic: gamma -> 1 and P_n(x, .) -> mu geometrically";
  } else if (entry.id == "identity") {
    const std::size_t n = params.integer("size", 1, 1024);
    std::vector<Point> points(n);
    for (std::size_t i = 0; i < n; ++i) points[i] = {n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1)};
    attach_chain(inst, FiniteChain(std::move(points), Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))),
                 truncated_euclidean_pair());
    inst.expected = "every delta_x is invariant; KR(P_n(x, .), P_n(y, .)) = d(x, y) for all n";
  } else if (entry.id == "contraction-16") {
    const std::size_t n = 16;
    std::vector<Point> points(n);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      points[i] = {static_cast<double>(i) / 15.0};
      const auto centre = static_cast<long>((i + 1) / 2);
      const double w[3] = {0.25, 0.5, 0.25};
      for (long o = -1; o <= 1; ++o) {
        const long j = std::clamp(centre + o, 0L, 15L);
        P(static_cast<Eigen::Index>(i), j) += w[o + 1];
      }
    }
    attach_chain(inst, FiniteChain(std::move(points), std::move(P)), truncated_euclidean_pair());
    inst.expected = "contracting: nearby starts stay close uniformly in time (an e-chain)";
  } else if (entry.id == "single-state") {
    attach_chain(inst, FiniteChain({{0.0}}, Eigen::MatrixXd::Ones(1, 1)), truncated_euclidean_pair());
    inst.expected = "trivial chain: gamma = 1";
  }
  const std::size_t n = inst.chain->size();
  const std::size_t x = inst.params.count("x") ? params.integer("x", 0, n - 1) : 0;
  const std::size_t y = inst.params.count("y") ? params.integer("y", 0, n - 1) : 0;
  inst.pair = independent_pair(*inst.chain, x, y);
  auto chain = std::make_shared<const FiniteChain>(*inst.chain);
  inst.assertions.push_back({"rows are stochastic and an invariant law exists", [chain](std::string& detail) {
                               const InvariantResult inv = invariant_measure(*chain);
                               detail = "residual " + fmt(inv.residual);
                               return inv.residual <= 1e-10;
                             }});
  return inst;
}

}  // namespace

std::vector<AssertionOutcome> ExampleInstance::run_assertions() const {
  std::vector<AssertionOutcome> out;
  for (const Assertion& a : assertions) {
    AssertionOutcome o{a.description, false, {}};
    try {
      o.passed = a.check(o.detail);
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail = std::string("error: ") + e.what();
    }
    out.push_back(std::move(o));
  }
  return out;
}

const std::vector<CatalogEntry>& instance_catalog() { return catalog_storage(); }

ExampleInstance build_instance(std::string_view id, const InstanceParams& params) {
  const CatalogEntry& entry = catalog_entry(id);
  const ParamReader reader(entry, params);
  if (id == "5.1") return build_5_1(entry, reader);
  if (id == "5.2") return build_5_2(entry, reader);
  if (id == "5.3") return build_5_3(entry, reader);
  if (id == "5.4") return build_5_4(entry, reader);
  if (id == "5.5") return build_5_5(entry, reader);
  if (id == "5.6") return build_5_6(entry, reader);
  if (id == "5.7") return build_5_7(entry, reader);
  return build_named(entry, reader);
}

ExampleInstance build_example(std::string_view id, const InstanceParams& params) {
  if (catalog_entry(id).anchor.empty()) throw InputError("'" + std::string(id) + "' is not an example id");
  return build_instance(id, params);
}

SwitchingFunction quartic_switching(double scale) {
  if (!(scale > 0.0)) throw InputError("switching function: scale must be positive");
  return {"min(1, (z/" + fmt(scale) + ")^4)", [scale](double z) { return std::min(1.0, std::pow(z / scale, 4.0)); }};
}

SwitchingFunction quadratic_switching() {
  return {"min(1, z^2)", [](double z) { return std::min(1.0, z * z); }};
}

SwitchingFunction switching_by_name(std::string_view name) {
  if (name == "quartic") return quartic_switching();
  if (name == "quadratic") return quadratic_switching();
  throw InputError("unknown switching function '" + std::string(name) + "'");
}

RotationFlipCoupling::RotationFlipCoupling(SwitchingFunction p, std::uint32_t q, std::uint32_t a)
    : p_(std::move(p)), q_(q), a_(a) {
  if (q_ < 2 || a_ == 0 || a_ >= q_) throw InputError("rotation-flip coupling: need 0 < a < q");
  if (p_.p(0.0) != 0.0) throw InputError("rotation-flip coupling: p(0) must be 0");
  for (std::uint32_t k = 1; k <= q_ / 2; ++k) {
    const double v = p_.p(static_cast<double>(k) / q_);
    if (!(v > 0.0 && v <= 1.0)) throw InputError("rotation-flip coupling: p must lie in (0, 1] off 0");
  }
}

double RotationFlipCoupling::gap(const State& s) const {
  const std::uint32_t diff = (s.ky + q_ - s.kx) % q_;
  return static_cast<double>(std::min(diff, q_ - diff)) / static_cast<double>(q_);
}

std::vector<RotationFlipCoupling::Transition> RotationFlipCoupling::transitions(const State& s) const {
  const auto rot = [this](std::uint32_t k) { return (k + a_) % q_; };
  const State x_flip_y_rot{s.kx, rot(s.ky), -s.ix, s.iy};
  const State x_rot_y_flip{rot(s.kx), s.ky, s.ix, -s.iy};
  if (mismatched(s)) return {{x_flip_y_rot, 0.5}, {x_rot_y_flip, 0.5}};
  const double p = p_.p(gap(s));
  std::vector<Transition> out{{{rot(s.kx), rot(s.ky), s.ix, s.iy}, 0.5 * (1.0 - p)},
                              {{s.kx, s.ky, -s.ix, -s.iy}, 0.5 * (1.0 - p)},
                              {x_flip_y_rot, 0.5 * p},
                              {x_rot_y_flip, 0.5 * p}};
  std::erase_if(out, [](const Transition& t) { return t.probability == 0.0; });
  return out;
}

RotationFlipCoupling::State RotationFlipCoupling::step(const State& s, Rng& rng) const {
  const double u = rng.uniform();
  const auto rot = [this](std::uint32_t k) { return (k + a_) % q_; };
  if (mismatched(s)) return u < 0.5 ? State{s.kx, rot(s.ky), -s.ix, s.iy} : State{rot(s.kx), s.ky, s.ix, -s.iy};
  const double p = p_.p(gap(s));
  if (u < 0.5 * (1.0 - p)) return {rot(s.kx), rot(s.ky), s.ix, s.iy};
  if (u < 1.0 - p) return {s.kx, s.ky, -s.ix, -s.iy};
  if (u < 1.0 - 0.5 * p) return {s.kx, rot(s.ky), -s.ix, s.iy};
  return {rot(s.kx), s.ky, s.ix, -s.iy};
}

RotationFlipCoupling::State RotationFlipCoupling::run(State s, std::size_t n, Rng& rng) const {
  for (std::size_t k = 0; k < n; ++k) s = step(s, rng);
  return s;
}

std::size_t RotationFlipCoupling::holding_time(const State& s, Rng& rng, std::size_t cap) const {
  if (mismatched(s)) throw InputError("holding time: start from matched second coordinates");
  State cur = s;
  for (std::size_t k = 1; k <= cap; ++k) {
    cur = step(cur, rng);
    if (mismatched(cur)) return k;
  }
  return cap;
}

Point RotationFlipCoupling::point_x(const State& s) const {
  return {static_cast<double>(s.kx) / static_cast<double>(q_), static_cast<double>(s.ix)};
}

Point RotationFlipCoupling::point_y(const State& s) const {
  return {static_cast<double>(s.ky) / static_cast<double>(q_), static_cast<double>(s.iy)};
}

PairSimulator RotationFlipCoupling::simulator(State start) const {
  auto self = std::make_shared<const RotationFlipCoupling>(*this);
  return [self, start](std::size_t horizon, Rng& rng) {
    WeightedPairTrajectory out;
    out.x.states.reserve(horizon + 1);
    out.y.states.reserve(horizon + 1);
    State s = start;
    out.x.states.push_back(self->point_x(s));
    out.y.states.push_back(self->point_y(s));
    for (std::size_t k = 0; k < horizon; ++k) {
      s = self->step(s, rng);
      out.x.states.push_back(self->point_x(s));
      out.y.states.push_back(self->point_y(s));
    }
    return out;
  };
}

namespace {

FiniteChain walk_chain(std::size_t size, double down) {
  if (size < 1) throw InputError("birth-death chain: truncation must be at least 1");
  const auto n = static_cast<Eigen::Index>(size + 1);
  std::vector<Point> points(size + 1);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  P(0, 0) = 1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    points[static_cast<std::size_t>(i)] = {static_cast<double>(i)};
    if (i == 0) continue;
    P(i, i - 1) = down;
    P(i, i + 1 < n ? i + 1 : i) += 1.0 - down;
  }
  return FiniteChain(std::move(points), std::move(P));
}

}  // namespace

FiniteChain birth_death_chain(std::size_t size) { return walk_chain(size, 1.0 / 3.0); }
FiniteChain drift_to_zero_kernel(std::size_t size) { return walk_chain(size, 2.0 / 3.0); }

PairSimulator birth_death_generalized_pair(std::size_t size, std::size_t x) {
  auto chain = std::make_shared<const FiniteChain>(birth_death_chain(size));
  auto kernel = std::make_shared<const FiniteChain>(drift_to_zero_kernel(size));
  if (x > size) throw InputError("birth-death coupling: start beyond the truncation");
  return [chain, kernel, x](std::size_t horizon, Rng& rng) {
    WeightedPairTrajectory out;
    out.x.states.reserve(horizon + 1);
    std::size_t s = x;
    out.x.states.push_back(chain->point(s));
    out.y.states.assign(horizon + 1, Point{0.0});
    for (std::size_t k = 0; k < horizon; ++k) {
      const std::size_t next = sample_row(*kernel, s, rng);
      out.log_density_1 += std::log(kernel->matrix()(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(next)) /
                                    chain->matrix()(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(next)));
      s = next;
      out.x.states.push_back(chain->point(s));
    }
    return out;
  };
}

}  // namespace couplab
