#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "couplab/chain.hpp"
#include "couplab/coupling.hpp"
#include "couplab/metric.hpp"
#include "couplab/report.hpp"
#include "couplab/transport.hpp"

namespace couplab {

struct StatePair {
  std::size_t x = 0;
  std::size_t y = 0;
  friend bool operator==(const StatePair&, const StatePair&) = default;
};

// Shared knobs for the exact diagnostics.
struct DiagnosticOptions {
  std::size_t threads = 1;
  TransportOptions transport{};
  NStepOptions n_step{};
};

// sup over couplings of P_n(x,.) and P_n(y,.) of the mass of {d <= eps}.
// eps = 0 selects the cost 1{d > 0}, i.e. 1 - TV/2 for a metric d.
double gamma(const FiniteChain& chain, const Metric& d, std::size_t x, std::size_t y, std::size_t n, double eps,
             const DiagnosticOptions& options = {});

// The same quantity for two explicit state-weight vectors of `chain`.
double gamma_from_rows(const FiniteChain& chain, const Metric& d, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       double eps, const TransportOptions& options = {});

// gamma over (pairs x horizons x epsilons). Values are stored pair-major,
// then horizon, then epsilon.
class GammaTable {
 public:
  GammaTable(std::vector<StatePair> pairs, std::vector<std::size_t> horizons, std::vector<double> epsilons,
             std::vector<double> values);

  const std::vector<StatePair>& pairs() const noexcept { return pairs_; }
  const std::vector<std::size_t>& horizons() const noexcept { return horizons_; }
  const std::vector<double>& epsilons() const noexcept { return epsilons_; }

  double value(std::size_t pair, std::size_t horizon, std::size_t eps) const;

  // Tail window: the horizons in the upper half of the horizon range
  // (at least the last one).
  std::vector<std::size_t> tail_window() const;

  // liminf proxy: min of gamma over the tail window.
  double gamma_eps(std::size_t pair, std::size_t eps) const;

  // lim_{eps -> 0} proxy: min over the eps grid of gamma_eps.
  double gamma_limit(std::size_t pair) const;

  // Largest violation of [0,1]-range and monotonicity in eps (0 when clean).
  double invariant_violation() const;

  ConvergenceReport to_report() const;

 private:
  std::vector<StatePair> pairs_;
  std::vector<std::size_t> horizons_;
  std::vector<double> epsilons_;
  std::vector<double> values_;
};

// Every ordered pair (x, y) of states carrying positive weight.
std::vector<StatePair> support_pairs(const Eigen::VectorXd& weights);
std::vector<StatePair> all_pairs(std::size_t states);

// Uses symmetry and the diagonal (gamma = 1) to skip solves; cells run on
// options.threads workers with a deterministic result layout.
GammaTable gamma_table(const FiniteChain& chain, const Metric& d, std::vector<StatePair> pairs,
                       std::vector<std::size_t> horizons, std::vector<double> epsilons,
                       const DiagnosticOptions& options = {});

// Weights of `mu` on the chain's states; throws InputError for atoms that
// are not states.
Eigen::VectorXd state_weights(const FiniteChain& chain, const DiscreteMeasure& mu);

// ||mu P - mu||_1.
double invariance_residual(const FiniteChain& chain, const Eigen::VectorXd& mu);

struct BigGammaResult {
  double value = 0.0;
  double invariance_residual = 0.0;
  bool invariant = true;  // residual <= 1e-8
};

// mu (x) mu average of gamma^{n,eps}.
BigGammaResult big_gamma(const FiniteChain& chain, const Metric& d, const DiscreteMeasure& mu, std::size_t n,
                         double eps, const DiagnosticOptions& options = {});

struct Conv1Thresholds {
  double gamma_threshold = 0.1;  // pairs with gamma_limit >= this count as passing
  double mass_fraction = 0.95;   // required mu (x) mu mass of passing pairs
  double zero_tolerance = 1e-9;  // gamma_limit <= this counts as failing
  std::size_t min_horizons = 4;
};

// Per-pair gamma_limit with verdict: supports if the passing mass reaches
// mass_fraction, refutes if the failing mass exceeds 1 - mass_fraction.
ConvergenceReport check_conv1_condition(const GammaTable& table, const Eigen::VectorXd& mu,
                                        const Conv1Thresholds& thresholds = {});

struct MonteCarloOptions {
  std::size_t reps = 200;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  double min_ess = 10.0;
  double z = 1.96;  // two-sided 95% CLT quantile
};

struct UniqueOptions {
  double alpha_min = 0.1;       // hypothesized lower bound on the limsup of the time average
  double tail_fraction = 0.5;   // window [n_max * (1 - tail_fraction), n_max]
  std::size_t checkpoints = 64; // time-average evaluation points
};

// Running time average (1/n) sum_{i<n} 1{d(X_i, Y_i) <= eps}, estimated
// with self-normalized weights; limsup proxy = max over the tail window.
ConvergenceReport check_unique_condition(const PairSimulator& simulator, const Metric& d, double eps,
                                         std::size_t n_max, const MonteCarloOptions& mc = {},
                                         const UniqueOptions& options = {});

struct Conv2Options {
  double tolerance = 0.05;  // supports when the tail estimate is >= 1 - tolerance
};

// Per eps, the curve n -> xi(d(X_n, Y_n) <= eps) over n_grid. The tail
// window is the last quarter of the grid (at least one point).
ConvergenceReport check_conv2_condition(const PairSimulator& simulator, const Metric& d,
                                        const std::vector<double>& eps_list, const std::vector<std::size_t>& n_grid,
                                        const MonteCarloOptions& mc = {}, const Conv2Options& options = {});

struct WeakInProbOptions {
  double mass_tolerance = 0.01;
  DiagnosticOptions diagnostics{};
};

// For each n, the mu-mass of states whose n-step law is more than eps from
// mu in the KR metric of `base` (truncated at 1 on ingestion).
ConvergenceReport weak_in_prob_estimate(const FiniteChain& chain, const Metric& base, const DiscreteMeasure& mu,
                                        const std::vector<std::size_t>& n_grid, double eps,
                                        const WeakInProbOptions& options = {});

using StateFunction = std::function<double(const Point&)>;

struct MixingOptions {
  double tolerance = 1e-9;
};

// Exact lag-n covariance sum_x mu(x) f(x) (P^n g)(x) - mu(f) mu(g).
ConvergenceReport mixing_estimate(const FiniteChain& chain, const DiscreteMeasure& mu, const StateFunction& f,
                                  const StateFunction& g, const std::vector<std::size_t>& lags,
                                  const MixingOptions& options = {});

// Monte-Carlo variant: zeta_0 drawn by `initial`, then `lag` sampler steps.
ConvergenceReport mixing_estimate(const SamplerChain& chain, const std::function<Point(Rng&)>& initial,
                                  const StateFunction& f, const StateFunction& g, const std::vector<std::size_t>& lags,
                                  const MonteCarloOptions& mc = {});

struct SupermartingaleOptions {
  double tolerance = 1e-9;
  DiagnosticOptions diagnostics{};
};

// Checks gamma^{n+1}(x,y) >= sum P(x,x')P(y,y') gamma^n(x',y') over all
// state pairs, and Gamma^{n+1} >= Gamma^n, for n in n_grid and each eps.
ConvergenceReport supermartingale_check(const FiniteChain& chain, const Metric& d, const DiscreteMeasure& mu,
                                        const std::vector<std::size_t>& n_grid, const std::vector<double>& eps_list,
                                        const SupermartingaleOptions& options = {});

struct EChainOptions {
  double threshold = 0.25;  // sup-distance kept above this at the smallest radius refutes
  DiagnosticOptions diagnostics{};
};

// For each radius, the largest sup_n KR(P_n(x,.), P_n(y,.)) over distinct
// states x, y within the radius of x0 (radii whose ball holds a single
// state are skipped). The verdict reads the smallest usable radius.
ConvergenceReport e_chain_probe(const FiniteChain& chain, const Metric& base, std::size_t x0,
                                const std::vector<double>& radius_grid, const std::vector<std::size_t>& n_grid,
                                const EChainOptions& options = {});

}  // namespace couplab
