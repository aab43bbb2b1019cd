#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "couplab/random.hpp"

namespace couplab {

// A state's coordinates in the metric point set. Finite chains index into a
// declared list of points; sampler chains carry the vector itself.
using Point = std::vector<double>;

// Finite-support probability measure. Duplicate points are merged on
// construction and the weights are renormalized to absorb rounding drift.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;
  DiscreteMeasure(std::vector<Point> points, std::vector<double> weights);

  static DiscreteMeasure dirac(Point point);
  static DiscreteMeasure uniform(std::vector<Point> points);

  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<Point>& points() const noexcept { return points_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const Point& point(std::size_t i) const { return points_.at(i); }
  double weight(std::size_t i) const { return weights_.at(i); }

  // Mass at `point`, zero when it is not in the support.
  double mass_of(const Point& point) const;

  Eigen::VectorXd weight_vector() const;

  // Same measure with zero-weight atoms dropped.
  DiscreteMeasure support_only() const;

 private:
  std::vector<Point> points_;
  std::vector<double> weights_;
};

// Sum of |mu_i - nu_i| over the union of supports.
double total_variation(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

// Simulated path X_0..X_N.
struct Trajectory {
  std::vector<Point> states;

  std::size_t horizon() const { return states.empty() ? 0 : states.size() - 1; }
  const Point& operator[](std::size_t i) const { return states[i]; }
};

struct NStepOptions {
  // Plain row iteration up to this horizon, repeated squaring beyond it.
  std::size_t squaring_threshold = 64;
  // Upper bound on k^3 * (number of squarings) before a ResourceError.
  double max_flops = 2e11;
};

// Row-stochastic transition matrix over an enumerated point set.
class FiniteChain {
 public:
  FiniteChain(std::vector<Point> points, Eigen::MatrixXd matrix, std::vector<std::string> labels = {});

  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<Point>& points() const noexcept { return points_; }
  const Point& point(std::size_t i) const { return points_.at(i); }
  const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::size_t index_of(std::string_view label) const;

  // Exact n-step row P_n(x, .) as a dense vector over all states.
  Eigen::VectorXd n_step_row(std::size_t x, std::size_t n, const NStepOptions& options = {}) const;

  // The full n-step matrix P^n.
  Eigen::MatrixXd n_step_matrix(std::size_t n, const NStepOptions& options = {}) const;

  // Measure over every state (zero weights included) so indices line up
  // with the chain's states.
  DiscreteMeasure law_from_row(const Eigen::VectorXd& row) const;

 private:
  std::vector<Point> points_;
  Eigen::MatrixXd matrix_;
  std::vector<std::string> labels_;
};

// Black-box kernel on vector-valued states. `step` must be a pure function of
// the state and the random stream it is handed.
struct SamplerChain {
  std::size_t state_dim = 1;
  std::function<Point(const Point&, Rng&)> step;
  std::string description;
};

DiscreteMeasure n_step_law(const FiniteChain& chain, std::size_t x, std::size_t n,
                           const NStepOptions& options = {});

enum class InvariantMethod { linear_solve, eigenvector };

struct InvariantResult {
  DiscreteMeasure measure;
  Eigen::VectorXd weights;  // aligned with the chain's states
  bool unique = true;
  // Number of closed communicating classes, which equals the dimension of
  // the null space of (P - I)^T.
  std::size_t null_dimension = 1;
  double residual = 0.0;  // ||pi P - pi||_1
};

// Stationary distribution of the closed class containing the smallest state
// index; flags non-uniqueness when there is more than one closed class.
InvariantResult invariant_measure(const FiniteChain& chain,
                                  InvariantMethod method = InvariantMethod::linear_solve);

// Closed communicating classes, each sorted, ordered by smallest member.
std::vector<std::vector<std::size_t>> closed_classes(const FiniteChain& chain);

// Samples the next state index from row x using the inverse CDF of one
// uniform variate.
std::size_t sample_row(const FiniteChain& chain, std::size_t x, Rng& rng);

std::vector<std::size_t> simulate_indices(const FiniteChain& chain, std::size_t x0, std::size_t n,
                                          std::uint64_t seed);
Trajectory simulate(const FiniteChain& chain, std::size_t x0, std::size_t n, std::uint64_t seed);
Trajectory simulate(const SamplerChain& chain, const Point& x0, std::size_t n, std::uint64_t seed);
Trajectory simulate(const SamplerChain& chain, const Point& x0, std::size_t n, Rng& rng);

DiscreteMeasure empirical_measure(std::span<const Point> samples);

}  // namespace couplab
