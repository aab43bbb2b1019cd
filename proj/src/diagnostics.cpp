#include "couplab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "couplab/errors.hpp"
#include "couplab/parallel.hpp"

namespace couplab {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
constexpr std::size_t kDenseDistanceLimit = 2048;

// Pairwise state distances, tabulated for small chains.
class StateDistances {
 public:
  StateDistances(const FiniteChain& chain, const Metric& d) : chain_(chain), d_(d) {
    if (chain.size() <= kDenseDistanceLimit) {
      table_.resize(static_cast<Eigen::Index>(chain.size()), static_cast<Eigen::Index>(chain.size()));
      for (std::size_t i = 0; i < chain.size(); ++i) {
        for (std::size_t j = 0; j < chain.size(); ++j) {
          table_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d(chain.point(i), chain.point(j));
        }
      }
    }
  }

  double operator()(std::size_t i, std::size_t j) const {
    if (table_.size() > 0) return table_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return d_(chain_.point(i), chain_.point(j));
  }

 private:
  const FiniteChain& chain_;
  const Metric& d_;
  Eigen::MatrixXd table_;
};

std::vector<std::size_t> support_of(const Eigen::VectorXd& w) {
  std::vector<std::size_t> s;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] > 0.0) s.push_back(static_cast<std::size_t>(i));
  }
  return s;
}

Eigen::VectorXd normalized(Eigen::VectorXd v) {
  v = v.cwiseMax(0.0);
  const double total = v.sum();
  if (!(total > 0.0)) throw SolverError("n-step row lost all mass");
  return v / total;
}

// rows[h][k] = P^{horizons[h]}(states[k], .); horizons ascending.
std::vector<std::vector<Eigen::VectorXd>> n_step_rows(const FiniteChain& chain, const std::vector<std::size_t>& states,
                                                      const std::vector<std::size_t>& horizons,
                                                      const NStepOptions& options) {
  if (!std::is_sorted(horizons.begin(), horizons.end())) throw InputError("n-step rows: horizons must be ascending");
  std::vector<std::vector<Eigen::VectorXd>> rows(horizons.size(), std::vector<Eigen::VectorXd>(states.size()));
  const Eigen::MatrixXd& P = chain.matrix();
  for (std::size_t k = 0; k < states.size(); ++k) {
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(P.rows());
    v[static_cast<Eigen::Index>(states[k])] = 1.0;
    std::size_t current = 0;
    for (std::size_t h = 0; h < horizons.size(); ++h) {
      const std::size_t delta = horizons[h] - current;
      if (delta <= options.squaring_threshold) {
        for (std::size_t s = 0; s < delta; ++s) v = v * P;
      } else {
        v = chain.n_step_row(states[k], horizons[h], options).transpose();
      }
      current = horizons[h];
      rows[h][k] = normalized(v.transpose());
    }
  }
  return rows;
}

double gamma_rows(const StateDistances& dist, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double eps,
                  const TransportOptions& options) {
  if (!(eps >= 0.0)) throw InputError("gamma: eps must be nonnegative");
  const std::vector<std::size_t> sa = support_of(a);
  const std::vector<std::size_t> sb = support_of(b);
  const auto close = [&](std::size_t i, std::size_t j) { return dist(i, j) <= eps; };
  if (sa.size() == 1 || sb.size() == 1) {
    // A point mass couples only through the product plan.
    double total = 0.0;
    if (sa.size() == 1) {
      for (std::size_t j : sb) total += close(sa[0], j) ? b[static_cast<Eigen::Index>(j)] : 0.0;
      return std::clamp(total / b.sum(), 0.0, 1.0);
    }
    for (std::size_t i : sa) total += close(i, sb[0]) ? a[static_cast<Eigen::Index>(i)] : 0.0;
    return std::clamp(total / a.sum(), 0.0, 1.0);
  }
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(sa.size()), static_cast<Eigen::Index>(sb.size()));
  bool any_close = false, any_far = false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    for (std::size_t j = 0; j < sb.size(); ++j) {
      const bool c = close(sa[i], sb[j]);
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c ? 0.0 : 1.0;
      any_close |= c;
      any_far |= !c;
    }
  }
  if (!any_far) return 1.0;
  if (!any_close) return 0.0;
  Eigen::VectorXd wa(static_cast<Eigen::Index>(sa.size())), wb(static_cast<Eigen::Index>(sb.size()));
  for (std::size_t i = 0; i < sa.size(); ++i) wa[static_cast<Eigen::Index>(i)] = a[static_cast<Eigen::Index>(sa[i])];
  for (std::size_t j = 0; j < sb.size(); ++j) wb[static_cast<Eigen::Index>(j)] = b[static_cast<Eigen::Index>(sb[j])];
  wa /= wa.sum();
  wb /= wb.sum();
  return std::clamp(1.0 - solve_transport(wa, wb, cost, options).value, 0.0, 1.0);
}

// KR distance between two state-weight vectors under a metric bounded by 1.
double kr_rows(const StateDistances& dist, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
               const TransportOptions& options) {
  const std::vector<std::size_t> sa = support_of(a);
  const std::vector<std::size_t> sb = support_of(b);
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(sa.size()), static_cast<Eigen::Index>(sb.size()));
  for (std::size_t i = 0; i < sa.size(); ++i) {
    for (std::size_t j = 0; j < sb.size(); ++j) {
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::min(1.0, dist(sa[i], sb[j]));
    }
  }
  Eigen::VectorXd wa(static_cast<Eigen::Index>(sa.size())), wb(static_cast<Eigen::Index>(sb.size()));
  for (std::size_t i = 0; i < sa.size(); ++i) wa[static_cast<Eigen::Index>(i)] = a[static_cast<Eigen::Index>(sa[i])];
  for (std::size_t j = 0; j < sb.size(); ++j) wb[static_cast<Eigen::Index>(j)] = b[static_cast<Eigen::Index>(sb[j])];
  if (sa.size() == 1) return (cost.row(0).array() * wb.transpose().array()).sum() / wb.sum();
  if (sb.size() == 1) return (cost.col(0).array() * wa.array()).sum() / wa.sum();
  wa /= wa.sum();
  wb /= wb.sum();
  return std::max(0.0, solve_transport(wa, wb, cost, options).value);
}

std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

void require_state(const FiniteChain& chain, std::size_t x, const char* what) {
  if (x >= chain.size()) throw InputError(std::string(what) + ": state index " + std::to_string(x) + " out of range");
}

void require_nonempty(bool empty, const char* what) {
  if (empty) throw InputError(std::string(what) + ": empty grid");
}

// Self-normalized weighted mean with a CLT half-width.
struct WeightedEstimate {
  double mean = 0.0;
  double half_width = 0.0;
};

std::vector<double> normalized_weights(const std::vector<double>& log_weights, double& ess) {
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  std::vector<double> w(log_weights.size());
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t r = 0; r < w.size(); ++r) {
    w[r] = std::isfinite(log_weights[r]) ? std::exp(log_weights[r] - top) : 0.0;
    sum += w[r];
    sum_sq += w[r] * w[r];
  }
  if (!(sum > 0.0)) throw SimulationError("all importance weights vanish", 0);
  ess = sum * sum / sum_sq;
  for (double& x : w) x /= sum;
  return w;
}

WeightedEstimate weighted_estimate(const std::vector<double>& w, const std::vector<double>& values, double z) {
  WeightedEstimate e;
  for (std::size_t r = 0; r < w.size(); ++r) e.mean += w[r] * values[r];
  double var = 0.0;
  for (std::size_t r = 0; r < w.size(); ++r) var += w[r] * w[r] * (values[r] - e.mean) * (values[r] - e.mean);
  e.half_width = z * std::sqrt(var);
  return e;
}

std::vector<WeightedPairTrajectory> simulate_reps(const PairSimulator& simulator, std::size_t horizon,
                                                  const MonteCarloOptions& mc) {
  if (mc.reps == 0) throw InputError("Monte-Carlo check: reps must be positive");
  std::vector<WeightedPairTrajectory> out(mc.reps);
  parallel_for(mc.reps, mc.threads, [&](std::size_t r) {
    Rng rng = Rng::stream(mc.seed, r);
    out[r] = simulator(horizon, rng);
    if (out[r].x.states.size() != horizon + 1 || out[r].y.states.size() != horizon + 1) {
      throw SimulationError("pair simulator returned a trajectory of the wrong length", r);
    }
  });
  return out;
}

Verdict interval_verdict(double estimate, double half_width, double threshold) {
  if (estimate - half_width >= threshold) return Verdict::supports;
  if (estimate + half_width < threshold) return Verdict::refutes;
  return Verdict::inconclusive;
}

}  // namespace

double gamma_from_rows(const FiniteChain& chain, const Metric& d, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       double eps, const TransportOptions& options) {
  if (a.size() != static_cast<Eigen::Index>(chain.size()) || b.size() != static_cast<Eigen::Index>(chain.size())) {
    throw InputError("gamma: weight vectors do not match the chain");
  }
  const StateDistances dist(chain, d);
  return gamma_rows(dist, a, b, eps, options);
}

double gamma(const FiniteChain& chain, const Metric& d, std::size_t x, std::size_t y, std::size_t n, double eps,
             const DiagnosticOptions& options) {
  require_state(chain, x, "gamma");
  require_state(chain, y, "gamma");
  if (!(eps >= 0.0)) throw InputError("gamma: eps must be nonnegative");
  if (x == y) return 1.0;
  const auto rows = n_step_rows(chain, {x, y}, {n}, options.n_step);
  const StateDistances dist(chain, d);
  return gamma_rows(dist, rows[0][0], rows[0][1], eps, options.transport);
}

GammaTable::GammaTable(std::vector<StatePair> pairs, std::vector<std::size_t> horizons, std::vector<double> epsilons,
                       std::vector<double> values)
    : pairs_(std::move(pairs)), horizons_(std::move(horizons)), epsilons_(std::move(epsilons)), values_(std::move(values)) {
  if (values_.size() != pairs_.size() * horizons_.size() * epsilons_.size()) {
    throw InputError("gamma table: value count does not match the grid");
  }
}

double GammaTable::value(std::size_t pair, std::size_t horizon, std::size_t eps) const {
  return values_.at((pair * horizons_.size() + horizon) * epsilons_.size() + eps);
}

std::vector<std::size_t> GammaTable::tail_window() const {
  std::vector<std::size_t> window;
  if (horizons_.empty()) return window;
  const auto [lo, hi] = std::minmax_element(horizons_.begin(), horizons_.end());
  const double middle = 0.5 * (static_cast<double>(*lo) + static_cast<double>(*hi));
  for (std::size_t h = 0; h < horizons_.size(); ++h) {
    if (static_cast<double>(horizons_[h]) >= middle) window.push_back(h);
  }
  return window;
}

double GammaTable::gamma_eps(std::size_t pair, std::size_t eps) const {
  double best = 1.0;
  for (std::size_t h : tail_window()) best = std::min(best, value(pair, h, eps));
  return best;
}

double GammaTable::gamma_limit(std::size_t pair) const {
  double best = 1.0;
  for (std::size_t e = 0; e < epsilons_.size(); ++e) best = std::min(best, gamma_eps(pair, e));
  return best;
}

double GammaTable::invariant_violation() const {
  double worst = 0.0;
  for (double v : values_) worst = std::max({worst, -v, v - 1.0});
  std::vector<std::size_t> order(epsilons_.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return epsilons_[a] < epsilons_[b]; });
  for (std::size_t p = 0; p < pairs_.size(); ++p) {
    for (std::size_t h = 0; h < horizons_.size(); ++h) {
      for (std::size_t k = 1; k < order.size(); ++k) {
        worst = std::max(worst, value(p, h, order[k - 1]) - value(p, h, order[k]));
      }
    }
  }
  return worst;
}

ConvergenceReport GammaTable::to_report() const {
  ConvergenceReport r;
  r.quantity = "gamma^{n,eps}_{x,y}";
  r.hypothesis = "values in [0,1], nondecreasing in eps";
  r.columns = {"x", "y", "n", "eps", "gamma"};
  for (std::size_t p = 0; p < pairs_.size(); ++p) {
    for (std::size_t h = 0; h < horizons_.size(); ++h) {
      for (std::size_t e = 0; e < epsilons_.size(); ++e) {
        r.add_row({cell(pairs_[p].x), cell(pairs_[p].y), cell(horizons_[h]), cell(epsilons_[e]), cell(value(p, h, e))});
      }
    }
  }
  const double violation = invariant_violation();
  r.tolerances = {{"violation", 1e-9}};
  r.statistics = {{"worst_violation", violation}};
  r.margin = 1e-9 - violation;
  r.verdict = violation <= 1e-9 ? Verdict::supports : Verdict::refutes;
  return r;
}

std::vector<StatePair> support_pairs(const Eigen::VectorXd& weights) {
  const std::vector<std::size_t> s = support_of(weights);
  std::vector<StatePair> out;
  out.reserve(s.size() * s.size());
  for (std::size_t x : s) {
    for (std::size_t y : s) out.push_back({x, y});
  }
  return out;
}

std::vector<StatePair> all_pairs(std::size_t states) {
  std::vector<StatePair> out;
  out.reserve(states * states);
  for (std::size_t x = 0; x < states; ++x) {
    for (std::size_t y = 0; y < states; ++y) out.push_back({x, y});
  }
  return out;
}

GammaTable gamma_table(const FiniteChain& chain, const Metric& d, std::vector<StatePair> pairs,
                       std::vector<std::size_t> horizons, std::vector<double> epsilons,
                       const DiagnosticOptions& options) {
  require_nonempty(pairs.empty(), "gamma table pairs");
  require_nonempty(horizons.empty(), "gamma table horizons");
  require_nonempty(epsilons.empty(), "gamma table epsilons");
  for (double e : epsilons) {
    if (!(e >= 0.0)) throw InputError("gamma table: eps must be nonnegative");
  }
  std::vector<std::size_t> states;
  for (const StatePair& p : pairs) {
    require_state(chain, p.x, "gamma table");
    require_state(chain, p.y, "gamma table");
    states.push_back(p.x);
    states.push_back(p.y);
  }
  states = sorted_unique(std::move(states));
  std::vector<std::size_t> position(chain.size(), kNone);
  for (std::size_t k = 0; k < states.size(); ++k) position[states[k]] = k;

  const std::vector<std::size_t> sorted_h = sorted_unique(horizons);
  const auto rows = n_step_rows(chain, states, sorted_h, options.n_step);
  std::vector<std::size_t> h_index(horizons.size());
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    h_index[h] = static_cast<std::size_t>(std::lower_bound(sorted_h.begin(), sorted_h.end(), horizons[h]) - sorted_h.begin());
  }

  // One task per unordered off-diagonal pair; mirrored pairs reuse it.
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> task_of;
  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (const StatePair& p : pairs) {
    if (p.x == p.y) continue;
    const auto key = std::minmax(p.x, p.y);
    if (task_of.emplace(key, tasks.size()).second) tasks.push_back(key);
  }
  const std::size_t cells = sorted_h.size() * epsilons.size();
  std::vector<double> task_values(tasks.size() * cells);
  const StateDistances dist(chain, d);
  parallel_for(tasks.size(), options.threads, [&](std::size_t t) {
    const std::size_t a = position[tasks[t].first];
    const std::size_t b = position[tasks[t].second];
    for (std::size_t h = 0; h < sorted_h.size(); ++h) {
      for (std::size_t e = 0; e < epsilons.size(); ++e) {
        task_values[t * cells + h * epsilons.size() + e] =
            gamma_rows(dist, rows[h][a], rows[h][b], epsilons[e], options.transport);
      }
    }
  });

  std::vector<double> values;
  values.reserve(pairs.size() * horizons.size() * epsilons.size());
  for (const StatePair& p : pairs) {
    for (std::size_t h = 0; h < horizons.size(); ++h) {
      for (std::size_t e = 0; e < epsilons.size(); ++e) {
        if (p.x == p.y) {
          values.push_back(1.0);
        } else {
          const std::size_t t = task_of.at(std::minmax(p.x, p.y));
          values.push_back(task_values[t * cells + h_index[h] * epsilons.size() + e]);
        }
      }
    }
  }
  return GammaTable(std::move(pairs), std::move(horizons), std::move(epsilons), std::move(values));
}

Eigen::VectorXd state_weights(const FiniteChain& chain, const DiscreteMeasure& mu) {
  std::map<Point, std::size_t> index;
  for (std::size_t i = 0; i < chain.size(); ++i) index.emplace(chain.point(i), i);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(chain.size()));
  for (std::size_t k = 0; k < mu.size(); ++k) {
    const auto it = index.find(mu.point(k));
    if (it == index.end()) throw InputError("measure atom is not a state of the chain");
    w[static_cast<Eigen::Index>(it->second)] += mu.weight(k);
  }
  return w;
}

double invariance_residual(const FiniteChain& chain, const Eigen::VectorXd& mu) {
  return (chain.matrix().transpose() * mu - mu).cwiseAbs().sum();
}

BigGammaResult big_gamma(const FiniteChain& chain, const Metric& d, const DiscreteMeasure& mu, std::size_t n,
                         double eps, const DiagnosticOptions& options) {
  const Eigen::VectorXd w = state_weights(chain, mu);
  BigGammaResult out;
  out.invariance_residual = invariance_residual(chain, w);
  out.invariant = out.invariance_residual <= 1e-8;
  const GammaTable table = gamma_table(chain, d, support_pairs(w), {n}, {eps}, options);
  for (std::size_t p = 0; p < table.pairs().size(); ++p) {
    const StatePair& sp = table.pairs()[p];
    out.value += w[static_cast<Eigen::Index>(sp.x)] * w[static_cast<Eigen::Index>(sp.y)] * table.value(p, 0, 0);
  }
  return out;
}

ConvergenceReport check_conv1_condition(const GammaTable& table, const Eigen::VectorXd& mu,
                                        const Conv1Thresholds& thresholds) {
  ConvergenceReport r;
  r.quantity = "gamma_{x,y} proxy: min over eps of min over the tail window of gamma^{n,eps}_{x,y}";
  r.hypothesis = "gamma_{x,y} > 0 for mu (x) mu almost all (x, y)";
  r.tolerances = {{"gamma_threshold", thresholds.gamma_threshold},
                  {"mass_fraction", thresholds.mass_fraction},
                  {"zero_tolerance", thresholds.zero_tolerance}};
  r.columns = {"x", "y", "weight", "gamma_limit"};
  for (std::size_t e = 0; e < table.epsilons().size(); ++e) r.columns.push_back("gamma_eps@" + format_number(table.epsilons()[e]));
  double pass = 0.0, fail = 0.0, total = 0.0;
  for (std::size_t p = 0; p < table.pairs().size(); ++p) {
    const StatePair& sp = table.pairs()[p];
    const double weight = mu[static_cast<Eigen::Index>(sp.x)] * mu[static_cast<Eigen::Index>(sp.y)];
    const double g = table.gamma_limit(p);
    total += weight;
    if (g >= thresholds.gamma_threshold) pass += weight;
    if (g <= thresholds.zero_tolerance) fail += weight;
    std::vector<ConvergenceReport::Cell> row{cell(sp.x), cell(sp.y), cell(weight), cell(g)};
    for (std::size_t e = 0; e < table.epsilons().size(); ++e) row.push_back(cell(table.gamma_eps(p, e)));
    r.add_row(std::move(row));
  }
  if (total > 0.0) {
    pass /= total;
    fail /= total;
  }
  r.statistics = {{"passing_mass", pass}, {"failing_mass", fail}, {"horizons", static_cast<double>(table.horizons().size())}};
  const auto window = table.tail_window();
  r.notes.push_back("tail window: " + std::to_string(window.size()) + " of " + std::to_string(table.horizons().size()) +
                    " horizons, from n = " + std::to_string(table.horizons()[window.front()]));
  if (table.horizons().size() < thresholds.min_horizons) {
    r.verdict = Verdict::inconclusive;
    r.notes.push_back("fewer than " + std::to_string(thresholds.min_horizons) + " horizons");
    return r;
  }
  if (pass >= thresholds.mass_fraction) {
    r.verdict = Verdict::supports;
    r.margin = pass - thresholds.mass_fraction;
  } else if (fail > 1.0 - thresholds.mass_fraction) {
    r.verdict = Verdict::refutes;
    r.margin = fail - (1.0 - thresholds.mass_fraction);
  } else {
    r.verdict = Verdict::inconclusive;
    r.margin = pass - thresholds.mass_fraction;
  }
  return r;
}

ConvergenceReport check_unique_condition(const PairSimulator& simulator, const Metric& d, double eps,
                                         std::size_t n_max, const MonteCarloOptions& mc,
                                         const UniqueOptions& options) {
  if (!(eps >= 0.0)) throw InputError("unique check: eps must be nonnegative");
  if (n_max == 0) throw InputError("unique check: n_max must be positive");
  if (options.checkpoints == 0 || !(options.tail_fraction > 0.0 && options.tail_fraction <= 1.0)) {
    throw InputError("unique check: invalid checkpoint settings");
  }
  std::vector<std::size_t> checkpoints;
  for (std::size_t k = 1; k <= options.checkpoints; ++k) {
    checkpoints.push_back(std::max<std::size_t>(1, (n_max * k) / options.checkpoints));
  }
  checkpoints = sorted_unique(std::move(checkpoints));
  const double tail_start = static_cast<double>(n_max) * (1.0 - options.tail_fraction);

  const std::size_t reps = mc.reps;
  std::vector<std::vector<double>> averages(reps), indicators(reps);
  std::vector<double> log_weights(reps), path_limsup(reps);
  {
    const auto runs = simulate_reps(simulator, n_max, mc);
    for (std::size_t r = 0; r < reps; ++r) {
      log_weights[r] = runs[r].log_weight;
      std::size_t hits = 0, next = 0;
      double tail_max = 0.0;
      for (std::size_t i = 0; i < n_max; ++i) {
        const bool close = d(runs[r].x.states[i], runs[r].y.states[i]) <= eps;
        hits += close ? 1 : 0;
        if (static_cast<double>(i) >= tail_start && close) tail_max = 1.0;
        if (next < checkpoints.size() && checkpoints[next] == i + 1) {
          averages[r].push_back(static_cast<double>(hits) / static_cast<double>(i + 1));
          indicators[r].push_back(close ? 1.0 : 0.0);
          ++next;
        }
      }
      path_limsup[r] = tail_max;
    }
  }
  double ess = 0.0;
  const std::vector<double> w = normalized_weights(log_weights, ess);

  ConvergenceReport rep;
  rep.quantity = "time average (1/n) sum_{i<n} 1{d(X_i, Y_i) <= eps}";
  rep.hypothesis = "limsup_n of the time average >= alpha";
  rep.tolerances = {{"eps", eps}, {"alpha", options.alpha_min}, {"z", mc.z}, {"min_ess", mc.min_ess}};
  rep.columns = {"n", "time_average", "half_width", "probability_close", "probability_half_width"};
  Series avg_series{"time_average", "n", "time_average", {}, {}};
  double best = -1.0, best_hw = 0.0;
  std::size_t best_n = 0;
  std::vector<double> column(reps);
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    for (std::size_t r = 0; r < reps; ++r) column[r] = averages[r][c];
    const WeightedEstimate avg = weighted_estimate(w, column, mc.z);
    for (std::size_t r = 0; r < reps; ++r) column[r] = indicators[r][c];
    const WeightedEstimate prob = weighted_estimate(w, column, mc.z);
    rep.add_row({cell(checkpoints[c]), cell(avg.mean), cell(avg.half_width), cell(prob.mean), cell(prob.half_width)});
    avg_series.x.push_back(static_cast<double>(checkpoints[c]));
    avg_series.y.push_back(avg.mean);
    if (static_cast<double>(checkpoints[c]) >= tail_start && avg.mean > best) {
      best = avg.mean;
      best_hw = avg.half_width;
      best_n = checkpoints[c];
    }
  }
  rep.series.push_back(std::move(avg_series));
  const WeightedEstimate limsup_indicator = weighted_estimate(w, path_limsup, mc.z);
  rep.statistics = {{"limsup_time_average", best},
                    {"half_width", best_hw},
                    {"argmax_n", static_cast<double>(best_n)},
                    {"path_limsup_indicator", limsup_indicator.mean},
                    {"ess", ess},
                    {"reps", static_cast<double>(reps)}};
  rep.notes.push_back("tail window n >= " + format_number(tail_start) + " of n_max = " + std::to_string(n_max));
  rep.notes.push_back("path_limsup_indicator: weighted mean over paths of max over the tail window of 1{d <= eps}");
  rep.margin = best - options.alpha_min;
  if (ess < mc.min_ess) {
    rep.verdict = Verdict::inconclusive;
    rep.notes.push_back("effective sample size below " + format_number(mc.min_ess));
    return rep;
  }
  rep.verdict = interval_verdict(best, best_hw, options.alpha_min);
  return rep;
}

ConvergenceReport check_conv2_condition(const PairSimulator& simulator, const Metric& d,
                                        const std::vector<double>& eps_list, const std::vector<std::size_t>& n_grid,
                                        const MonteCarloOptions& mc, const Conv2Options& options) {
  require_nonempty(eps_list.empty(), "conv2 eps list");
  require_nonempty(n_grid.empty(), "conv2 horizon grid");
  const std::vector<std::size_t> grid = sorted_unique(n_grid);
  const std::size_t horizon = grid.back();
  const std::size_t reps = mc.reps;
  std::vector<std::vector<double>> distances(reps, std::vector<double>(grid.size()));
  std::vector<double> log_weights(reps);
  {
    const auto runs = simulate_reps(simulator, horizon, mc);
    for (std::size_t r = 0; r < reps; ++r) {
      log_weights[r] = runs[r].log_weight;
      for (std::size_t k = 0; k < grid.size(); ++k) distances[r][k] = d(runs[r].x.states[grid[k]], runs[r].y.states[grid[k]]);
    }
  }
  double ess = 0.0;
  const std::vector<double> w = normalized_weights(log_weights, ess);

  ConvergenceReport rep;
  rep.quantity = "xi(d(X_n, Y_n) <= eps)";
  rep.hypothesis = "lim_n xi(d(X_n, Y_n) <= eps) = 1 for every eps";
  rep.tolerances = {{"tolerance", options.tolerance}, {"z", mc.z}, {"min_ess", mc.min_ess}};
  rep.columns = {"eps", "n", "probability", "half_width"};
  const std::size_t window = std::max<std::size_t>(1, grid.size() / 4);
  bool all_support = true, any_refute = false;
  double margin = std::numeric_limits<double>::infinity();
  std::vector<double> column(reps);
  for (double eps : eps_list) {
    Series s{"probability_eps_" + format_number(eps), "n", "probability", {}, {}};
    double tail_min = 2.0, tail_hw = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      for (std::size_t r = 0; r < reps; ++r) column[r] = distances[r][k] <= eps ? 1.0 : 0.0;
      const WeightedEstimate est = weighted_estimate(w, column, mc.z);
      rep.add_row({cell(eps), cell(grid[k]), cell(est.mean), cell(est.half_width)});
      s.x.push_back(static_cast<double>(grid[k]));
      s.y.push_back(est.mean);
      if (k + window >= grid.size() && est.mean < tail_min) {
        tail_min = est.mean;
        tail_hw = est.half_width;
      }
    }
    rep.series.push_back(std::move(s));
    const Verdict v = interval_verdict(tail_min, tail_hw, 1.0 - options.tolerance);
    all_support &= v == Verdict::supports;
    any_refute |= v == Verdict::refutes;
    margin = std::min(margin, tail_min - (1.0 - options.tolerance));
    rep.statistics.emplace_back("tail_min@" + format_number(eps), tail_min);
    rep.statistics.emplace_back("tail_half_width@" + format_number(eps), tail_hw);
  }
  rep.statistics.emplace_back("ess", ess);
  rep.notes.push_back("tail window: last " + std::to_string(window) + " of " + std::to_string(grid.size()) + " grid points");
  rep.margin = margin;
  if (ess < mc.min_ess) {
    rep.verdict = Verdict::inconclusive;
    rep.notes.push_back("effective sample size below " + format_number(mc.min_ess));
  } else {
    rep.verdict = any_refute ? Verdict::refutes : all_support ? Verdict::supports : Verdict::inconclusive;
  }
  return rep;
}

ConvergenceReport weak_in_prob_estimate(const FiniteChain& chain, const Metric& base, const DiscreteMeasure& mu,
                                        const std::vector<std::size_t>& n_grid, double eps,
                                        const WeakInProbOptions& options) {
  require_nonempty(n_grid.empty(), "weak-in-probability horizon grid");
  if (!(eps >= 0.0)) throw InputError("weak-in-probability: eps must be nonnegative");
  const Eigen::VectorXd w = state_weights(chain, mu);
  const std::vector<std::size_t> states = support_of(w);
  const std::vector<std::size_t> grid = sorted_unique(n_grid);
  const auto rows = n_step_rows(chain, states, grid, options.diagnostics.n_step);
  const StateDistances dist(chain, base);

  std::vector<double> kr(grid.size() * states.size());
  parallel_for(kr.size(), options.diagnostics.threads, [&](std::size_t t) {
    const std::size_t h = t / states.size(), k = t % states.size();
    kr[t] = kr_rows(dist, rows[h][k], w, options.diagnostics.transport);
  });

  ConvergenceReport rep;
  rep.quantity = "mu(x : KR(P_n(x,.), mu) > eps)";
  rep.hypothesis = "mass -> 0 as n grows";
  rep.tolerances = {{"eps", eps}, {"mass_tolerance", options.mass_tolerance}};
  rep.columns = {"n", "mass", "mean_distance", "markov_bound"};
  Series s{"mass", "n", "mass", {}, {}};
  std::vector<double> masses(grid.size());
  for (std::size_t h = 0; h < grid.size(); ++h) {
    double mass = 0.0, mean = 0.0;
    for (std::size_t k = 0; k < states.size(); ++k) {
      const double weight = w[static_cast<Eigen::Index>(states[k])];
      mean += weight * kr[h * states.size() + k];
      if (kr[h * states.size() + k] > eps) mass += weight;
    }
    masses[h] = mass;
    const double bound = eps > 0.0 ? mean / eps : std::numeric_limits<double>::infinity();
    rep.add_row({cell(grid[h]), cell(mass), cell(mean), cell(bound)});
    s.x.push_back(static_cast<double>(grid[h]));
    s.y.push_back(mass);
  }
  rep.series.push_back(std::move(s));
  const double residual = invariance_residual(chain, w);
  if (residual > 1e-8) rep.notes.push_back("mu is not invariant: residual " + format_number(residual));

  const std::size_t half = grid.size() / 2;
  const double tail_min = *std::min_element(masses.begin() + static_cast<std::ptrdiff_t>(half), masses.end());
  const double head_min = half > 0 ? *std::min_element(masses.begin(), masses.begin() + static_cast<std::ptrdiff_t>(half))
                                   : masses.front();
  rep.statistics = {{"final_mass", masses.back()}, {"tail_min_mass", tail_min}, {"invariance_residual", residual}};
  rep.margin = options.mass_tolerance - masses.back();
  if (masses.back() <= options.mass_tolerance) {
    rep.verdict = Verdict::supports;
  } else if (grid.size() >= 2 && tail_min > options.mass_tolerance && tail_min >= head_min - options.mass_tolerance) {
    rep.verdict = Verdict::refutes;
    rep.notes.push_back("no decrease of the mass over the second half of the grid");
  } else {
    rep.verdict = Verdict::inconclusive;
  }
  return rep;
}

namespace {

Verdict decay_verdict(const std::vector<double>& abs_values, double tolerance, double decay_ratio, double& margin) {
  const std::size_t half = abs_values.size() / 2;
  const double tail_max = *std::max_element(abs_values.begin() + static_cast<std::ptrdiff_t>(half), abs_values.end());
  const double head_max = half > 0 ? *std::max_element(abs_values.begin(), abs_values.begin() + static_cast<std::ptrdiff_t>(half))
                                   : abs_values.front();
  margin = tolerance - tail_max;
  if (tail_max <= tolerance || tail_max <= decay_ratio * head_max) return Verdict::supports;
  if (abs_values.size() >= 2 && tail_max >= head_max - tolerance) return Verdict::refutes;
  return Verdict::inconclusive;
}

}  // namespace

ConvergenceReport mixing_estimate(const FiniteChain& chain, const DiscreteMeasure& mu, const StateFunction& f,
                                  const StateFunction& g, const std::vector<std::size_t>& lags,
                                  const MixingOptions& options) {
  require_nonempty(lags.empty(), "mixing lag grid");
  const Eigen::VectorXd w = state_weights(chain, mu);
  Eigen::VectorXd fv(w.size()), gv(w.size());
  for (std::size_t i = 0; i < chain.size(); ++i) {
    fv[static_cast<Eigen::Index>(i)] = f(chain.point(i));
    gv[static_cast<Eigen::Index>(i)] = g(chain.point(i));
  }
  if (!fv.allFinite() || !gv.allFinite()) throw InputError("mixing: f or g is not finite on the state space");
  const double mean_f = w.dot(fv), mean_g = w.dot(gv);
  const std::vector<std::size_t> grid = sorted_unique(lags);

  ConvergenceReport rep;
  rep.quantity = "Cov(f(zeta_0), g(zeta_n)) under the stationary chain";
  rep.hypothesis = "covariance -> 0 (mixing)";
  rep.tolerances = {{"tolerance", options.tolerance}, {"decay_ratio", 0.01}};
  rep.columns = {"lag", "covariance"};
  Series s{"covariance", "lag", "covariance", {}, {}};
  std::vector<double> abs_values;
  Eigen::VectorXd h = gv;  // P^n g
  std::size_t current = 0;
  for (std::size_t lag : grid) {
    for (; current < lag; ++current) h = chain.matrix() * h;
    const double cov = w.dot(fv.cwiseProduct(h)) - mean_f * mean_g;
    rep.add_row({cell(lag), cell(cov)});
    s.x.push_back(static_cast<double>(lag));
    s.y.push_back(cov);
    abs_values.push_back(std::abs(cov));
  }
  rep.series.push_back(std::move(s));
  const double residual = invariance_residual(chain, w);
  if (residual > 1e-8) rep.notes.push_back("mu is not invariant: residual " + format_number(residual));
  rep.statistics = {{"final_abs_covariance", abs_values.back()},
                    {"max_abs_covariance", *std::max_element(abs_values.begin(), abs_values.end())}};
  rep.verdict = decay_verdict(abs_values, options.tolerance, 0.01, rep.margin);
  return rep;
}

ConvergenceReport mixing_estimate(const SamplerChain& chain, const std::function<Point(Rng&)>& initial,
                                  const StateFunction& f, const StateFunction& g, const std::vector<std::size_t>& lags,
                                  const MonteCarloOptions& mc) {
  require_nonempty(lags.empty(), "mixing lag grid");
  if (mc.reps < 2) throw InputError("mixing: at least two reps are required");
  const std::vector<std::size_t> grid = sorted_unique(lags);
  std::vector<double> f0(mc.reps), g0(mc.reps);
  std::vector<std::vector<double>> gn(mc.reps, std::vector<double>(grid.size()));
  parallel_for(mc.reps, mc.threads, [&](std::size_t r) {
    Rng rng = Rng::stream(mc.seed, r);
    const Point start = initial(rng);
    const Trajectory path = simulate(chain, start, grid.back(), rng);
    f0[r] = f(start);
    g0[r] = g(start);
    for (std::size_t k = 0; k < grid.size(); ++k) gn[r][k] = g(path.states[grid[k]]);
  });
  const double n = static_cast<double>(mc.reps);
  const double mean_f = std::accumulate(f0.begin(), f0.end(), 0.0) / n;
  const double mean_g = std::accumulate(g0.begin(), g0.end(), 0.0) / n;

  ConvergenceReport rep;
  rep.quantity = "Cov(f(zeta_0), g(zeta_n)), Monte-Carlo";
  rep.hypothesis = "covariance -> 0 (mixing)";
  rep.tolerances = {{"z", mc.z}};
  rep.columns = {"lag", "covariance", "half_width"};
  Series s{"covariance", "lag", "covariance", {}, {}};
  double tail_abs = 0.0, tail_hw = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    std::vector<double> prod(mc.reps);
    for (std::size_t r = 0; r < mc.reps; ++r) prod[r] = (f0[r] - mean_f) * gn[r][k];
    const double cov = std::accumulate(prod.begin(), prod.end(), 0.0) / n;
    double var = 0.0;
    for (double p : prod) var += (p - cov) * (p - cov);
    const double hw = mc.z * std::sqrt(var / (n - 1.0) / n);
    rep.add_row({cell(grid[k]), cell(cov), cell(hw)});
    s.x.push_back(static_cast<double>(grid[k]));
    s.y.push_back(cov);
    if (k + 1 == grid.size()) {
      tail_abs = std::abs(cov);
      tail_hw = hw;
    }
  }
  rep.series.push_back(std::move(s));
  rep.statistics = {{"final_abs_covariance", tail_abs}, {"final_half_width", tail_hw}, {"mean_g", mean_g}};
  rep.margin = tail_hw - tail_abs;
  rep.verdict = tail_abs > tail_hw ? Verdict::refutes : Verdict::inconclusive;
  if (tail_abs <= tail_hw && tail_hw <= 1e-12) rep.verdict = Verdict::supports;
  rep.notes.push_back("a covariance inside its half-width is reported inconclusive");
  return rep;
}

ConvergenceReport supermartingale_check(const FiniteChain& chain, const Metric& d, const DiscreteMeasure& mu,
                                        const std::vector<std::size_t>& n_grid, const std::vector<double>& eps_list,
                                        const SupermartingaleOptions& options) {
  require_nonempty(n_grid.empty(), "supermartingale horizon grid");
  require_nonempty(eps_list.empty(), "supermartingale eps list");
  const Eigen::VectorXd w = state_weights(chain, mu);
  const std::vector<std::size_t> grid = sorted_unique(n_grid);
  std::vector<std::size_t> horizons;
  for (std::size_t n : grid) {
    horizons.push_back(n);
    horizons.push_back(n + 1);
  }
  horizons = sorted_unique(std::move(horizons));
  const std::size_t m = chain.size();
  const GammaTable table = gamma_table(chain, d, all_pairs(m), horizons, eps_list, options.diagnostics);
  const Eigen::MatrixXd& P = chain.matrix();

  const auto gamma_matrix = [&](std::size_t h, std::size_t e) {
    Eigen::MatrixXd G(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    for (std::size_t x = 0; x < m; ++x) {
      for (std::size_t y = 0; y < m; ++y) G(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = table.value(x * m + y, h, e);
    }
    return G;
  };
  const auto horizon_index = [&](std::size_t n) {
    return static_cast<std::size_t>(std::lower_bound(horizons.begin(), horizons.end(), n) - horizons.begin());
  };

  ConvergenceReport rep;
  rep.quantity = "gamma^{n+1} - P (x) P gamma^n and Gamma^{n+1} - Gamma^n";
  rep.hypothesis = "both margins >= 0";
  rep.tolerances = {{"tolerance", options.tolerance}};
  rep.columns = {"eps", "n", "worst_pair_margin", "worst_x", "worst_y", "Gamma_n", "Gamma_n+1", "Gamma_margin"};
  double worst = std::numeric_limits<double>::infinity();
  std::size_t zeros = 0;
  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    Series s{"Gamma_eps_" + format_number(eps_list[e]), "n", "Gamma", {}, {}};
    for (std::size_t n : grid) {
      const Eigen::MatrixXd Gn = gamma_matrix(horizon_index(n), e);
      const Eigen::MatrixXd Gn1 = gamma_matrix(horizon_index(n + 1), e);
      const Eigen::MatrixXd margin = Gn1 - P * Gn * P.transpose();
      Eigen::Index wx = 0, wy = 0;
      const double pair_margin = margin.minCoeff(&wx, &wy);
      zeros += static_cast<std::size_t>((margin.array().abs() <= options.tolerance).count());
      const double big_n = w.dot(Gn * w), big_n1 = w.dot(Gn1 * w);
      rep.add_row({cell(eps_list[e]), cell(n), cell(pair_margin), cell(static_cast<std::size_t>(wx)),
                   cell(static_cast<std::size_t>(wy)), cell(big_n), cell(big_n1), cell(big_n1 - big_n)});
      s.x.push_back(static_cast<double>(n));
      s.y.push_back(big_n);
      worst = std::min({worst, pair_margin, big_n1 - big_n});
    }
    rep.series.push_back(std::move(s));
  }
  const double residual = invariance_residual(chain, w);
  if (residual > 1e-8) rep.notes.push_back("mu is not invariant: residual " + format_number(residual));
  rep.statistics = {{"worst_margin", worst}, {"zero_margins", static_cast<double>(zeros)}, {"invariance_residual", residual}};
  rep.margin = worst + options.tolerance;
  rep.verdict = worst >= -options.tolerance ? Verdict::supports : Verdict::refutes;
  return rep;
}

ConvergenceReport e_chain_probe(const FiniteChain& chain, const Metric& base, std::size_t x0,
                                const std::vector<double>& radius_grid, const std::vector<std::size_t>& n_grid,
                                const EChainOptions& options) {
  require_state(chain, x0, "e-chain probe");
  require_nonempty(radius_grid.empty(), "e-chain radius grid");
  require_nonempty(n_grid.empty(), "e-chain horizon grid");
  const StateDistances dist(chain, base);
  std::vector<double> radii = radius_grid;
  std::sort(radii.begin(), radii.end(), std::greater<>());
  radii.erase(std::unique(radii.begin(), radii.end()), radii.end());

  std::vector<std::size_t> ball;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (dist(i, x0) <= radii.front()) ball.push_back(i);
  }
  const std::vector<std::size_t> grid = sorted_unique(n_grid);
  const auto rows = n_step_rows(chain, ball, grid, options.diagnostics.n_step);

  // sup over the grid of KR(P_n(x,.), P_n(y,.)) for every pair in the outer ball.
  const std::size_t k = ball.size();
  std::vector<double> sup(k * k, 0.0);
  std::vector<std::size_t> arg(k * k, 0);
  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) tasks.emplace_back(a, b);
  }
  parallel_for(tasks.size(), options.diagnostics.threads, [&](std::size_t t) {
    const auto [a, b] = tasks[t];
    double best = -1.0;
    std::size_t best_n = 0;
    for (std::size_t h = 0; h < grid.size(); ++h) {
      const double v = kr_rows(dist, rows[h][a], rows[h][b], options.diagnostics.transport);
      if (v > best) {
        best = v;
        best_n = grid[h];
      }
    }
    sup[a * k + b] = best;
    arg[a * k + b] = best_n;
  });

  ConvergenceReport rep;
  rep.quantity = "max over pairs in B(x0, r) of sup_n KR(P_n(x,.), P_n(y,.))";
  rep.hypothesis = "e-chain: the sup-distance vanishes as the pair distance does";
  rep.tolerances = {{"threshold", options.threshold}};
  rep.columns = {"radius", "states_in_ball", "sup_distance", "witness_x", "witness_y", "pair_distance", "argmax_n"};
  Series s{"sup_distance", "radius", "sup_distance", {}, {}};
  bool any = false;
  double last_sup = 0.0;
  std::size_t last_x = 0, last_y = 0;
  double last_radius = 0.0;
  for (double r : radii) {
    std::vector<std::size_t> inside;
    for (std::size_t a = 0; a < k; ++a) {
      if (dist(ball[a], x0) <= r) inside.push_back(a);
    }
    if (inside.size() < 2) continue;
    double best = -1.0;
    std::size_t bx = 0, by = 0;
    for (std::size_t i = 0; i < inside.size(); ++i) {
      for (std::size_t j = i + 1; j < inside.size(); ++j) {
        const double v = sup[inside[i] * k + inside[j]];
        if (v > best) {
          best = v;
          bx = inside[i];
          by = inside[j];
        }
      }
    }
    rep.add_row({cell(r), cell(inside.size()), cell(best), cell(ball[bx]), cell(ball[by]), cell(dist(ball[bx], ball[by])),
                 cell(arg[bx * k + by])});
    s.x.push_back(r);
    s.y.push_back(best);
    any = true;
    last_sup = best;
    last_x = ball[bx];
    last_y = ball[by];
    last_radius = r;
  }
  rep.series.push_back(std::move(s));
  if (!any) {
    rep.verdict = Verdict::inconclusive;
    rep.notes.push_back("no radius holds two states");
    return rep;
  }
  rep.statistics = {{"smallest_radius", last_radius},
                    {"sup_distance", last_sup},
                    {"witness_x", static_cast<double>(last_x)},
                    {"witness_y", static_cast<double>(last_y)}};
  rep.margin = last_sup - options.threshold;
  rep.verdict = last_sup >= options.threshold ? Verdict::refutes : Verdict::supports;
  return rep;
}

}  // namespace couplab
