#include "couplab/chain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>

#include "couplab/errors.hpp"

namespace couplab {

namespace {

constexpr double kWeightTolerance = 1e-9;
constexpr double kRowTolerance = 1e-12;
constexpr double kDriftTolerance = 1e-10;

// Clears round-off negatives and renormalizes; drift above the tolerance
// means the computation went wrong and is reported instead of hidden.
void absorb_drift(Eigen::Ref<Eigen::VectorXd> v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] < 0.0) {
      if (v[i] < -kDriftTolerance) throw SolverError("n-step law has a negative entry " + std::to_string(v[i]));
      v[i] = 0.0;
    }
  }
  const double total = v.sum();
  if (std::abs(total - 1.0) > kDriftTolerance) {
    throw SolverError("n-step law drifted from unit mass by " + std::to_string(total - 1.0));
  }
  v /= total;
}

Eigen::MatrixXd matrix_power(const Eigen::MatrixXd& base, std::size_t n, const NStepOptions& options) {
  const double k = static_cast<double>(base.rows());
  const double squarings = static_cast<double>(std::bit_width(n));
  if (2.0 * k * k * k * squarings > options.max_flops) {
    throw ResourceError("n-step power exceeds the flop cap (states=" + std::to_string(base.rows()) +
                        ", n=" + std::to_string(n) + ")");
  }
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(base.rows(), base.cols());
  Eigen::MatrixXd power = base;
  while (n > 0) {
    if (n & 1U) result = result * power;
    n >>= 1U;
    if (n > 0) power = power * power;
  }
  return result;
}

}  // namespace

DiscreteMeasure::DiscreteMeasure(std::vector<Point> points, std::vector<double> weights) {
  if (points.size() != weights.size()) throw InputError("measure: points and weights differ in length");
  if (points.empty()) throw InputError("measure: empty support");
  std::map<Point, std::size_t> seen;
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double w = weights[i];
    if (!std::isfinite(w) || w < 0.0) throw InputError("measure: weight " + std::to_string(i) + " is negative or non-finite");
    total += w;
    auto [it, inserted] = seen.emplace(points[i], points_.size());
    if (inserted) {
      points_.push_back(std::move(points[i]));
      weights_.push_back(w);
    } else {
      weights_[it->second] += w;
    }
  }
  if (std::abs(total - 1.0) > kWeightTolerance) {
    throw InputError("measure: weights sum to " + std::to_string(total) + ", expected 1");
  }
  for (double& w : weights_) w /= total;
}

DiscreteMeasure DiscreteMeasure::dirac(Point point) { return DiscreteMeasure({std::move(point)}, {1.0}); }

DiscreteMeasure DiscreteMeasure::uniform(std::vector<Point> points) {
  const std::vector<double> weights(points.size(), 1.0 / static_cast<double>(points.size()));
  return DiscreteMeasure(std::move(points), weights);
}

double DiscreteMeasure::mass_of(const Point& point) const {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (points_[i] == point) return weights_[i];
  }
  return 0.0;
}

Eigen::VectorXd DiscreteMeasure::weight_vector() const {
  return Eigen::Map<const Eigen::VectorXd>(weights_.data(), static_cast<Eigen::Index>(weights_.size()));
}

DiscreteMeasure DiscreteMeasure::support_only() const {
  std::vector<Point> points;
  std::vector<double> weights;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (weights_[i] > 0.0) {
      points.push_back(points_[i]);
      weights.push_back(weights_[i]);
    }
  }
  return DiscreteMeasure(std::move(points), std::move(weights));
}

double total_variation(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  std::map<Point, double> diff;
  for (std::size_t i = 0; i < mu.size(); ++i) diff[mu.point(i)] += mu.weight(i);
  for (std::size_t j = 0; j < nu.size(); ++j) diff[nu.point(j)] -= nu.weight(j);
  double tv = 0.0;
  for (const auto& [point, delta] : diff) tv += std::abs(delta);
  return tv;
}

FiniteChain::FiniteChain(std::vector<Point> points, Eigen::MatrixXd matrix, std::vector<std::string> labels)
    : points_(std::move(points)), matrix_(std::move(matrix)), labels_(std::move(labels)) {
  const auto k = static_cast<Eigen::Index>(points_.size());
  if (k < 1) throw InputError("chain: at least one state is required");
  if (matrix_.rows() != k || matrix_.cols() != k) {
    throw InputError("chain: matrix is " + std::to_string(matrix_.rows()) + "x" + std::to_string(matrix_.cols()) +
                     " but there are " + std::to_string(k) + " states");
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const double p = matrix_(i, j);
      if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
        throw InputError("chain: entry (" + std::to_string(i) + "," + std::to_string(j) + ") is outside [0,1]");
      }
    }
    const double row_sum = matrix_.row(i).sum();
    if (std::abs(row_sum - 1.0) > kRowTolerance) {
      throw InputError("chain: row " + std::to_string(i) + " sums to " + std::to_string(row_sum));
    }
  }
  std::map<Point, std::size_t> seen;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!seen.emplace(points_[i], i).second) {
      throw InputError("chain: states " + std::to_string(seen[points_[i]]) + " and " + std::to_string(i) +
                       " share coordinates");
    }
  }
  if (labels_.empty()) {
    labels_.reserve(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) labels_.push_back(std::to_string(i));
  } else if (labels_.size() != points_.size()) {
    throw InputError("chain: label count does not match state count");
  }
}

std::size_t FiniteChain::index_of(std::string_view label) const {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw InputError("chain: unknown state label '" + std::string(label) + "'");
  return static_cast<std::size_t>(it - labels_.begin());
}

Eigen::VectorXd FiniteChain::n_step_row(std::size_t x, std::size_t n, const NStepOptions& options) const {
  if (x >= size()) throw InputError("chain: unknown state index " + std::to_string(x));
  Eigen::VectorXd row;
  if (n <= options.squaring_threshold) {
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(size()));
    v[static_cast<Eigen::Index>(x)] = 1.0;
    for (std::size_t step = 0; step < n; ++step) v = v * matrix_;
    row = v.transpose();
  } else {
    row = matrix_power(matrix_, n, options).row(static_cast<Eigen::Index>(x)).transpose();
  }
  absorb_drift(row);
  return row;
}

Eigen::MatrixXd FiniteChain::n_step_matrix(std::size_t n, const NStepOptions& options) const {
  Eigen::MatrixXd result;
  if (n <= options.squaring_threshold) {
    result = Eigen::MatrixXd::Identity(matrix_.rows(), matrix_.cols());
    for (std::size_t step = 0; step < n; ++step) result = result * matrix_;
  } else {
    result = matrix_power(matrix_, n, options);
  }
  for (Eigen::Index i = 0; i < result.rows(); ++i) {
    Eigen::VectorXd row = result.row(i).transpose();
    absorb_drift(row);
    result.row(i) = row.transpose();
  }
  return result;
}

DiscreteMeasure FiniteChain::law_from_row(const Eigen::VectorXd& row) const {
  if (row.size() != static_cast<Eigen::Index>(size())) throw InputError("chain: law has wrong length");
  return DiscreteMeasure(points_, std::vector<double>(row.data(), row.data() + row.size()));
}

DiscreteMeasure n_step_law(const FiniteChain& chain, std::size_t x, std::size_t n, const NStepOptions& options) {
  return chain.law_from_row(chain.n_step_row(x, n, options));
}

std::vector<std::vector<std::size_t>> closed_classes(const FiniteChain& chain) {
  // Iterative Tarjan over the support graph of P.
  const std::size_t k = chain.size();
  const Eigen::MatrixXd& p = chain.matrix();
  std::vector<std::vector<std::size_t>> adjacency(k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0) adjacency[i].push_back(j);
    }
  }
  constexpr std::size_t kUnvisited = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(k, kUnvisited), low(k, 0), component(k, kUnvisited);
  std::vector<bool> on_stack(k, false);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> components;
  std::size_t counter = 0;

  struct Frame {
    std::size_t node;
    std::size_t next_edge;
  };
  for (std::size_t root = 0; root < k; ++root) {
    if (index[root] != kUnvisited) continue;
    std::vector<Frame> frames{{root, 0}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!frames.empty()) {
      Frame& frame = frames.back();
      const std::size_t v = frame.node;
      if (frame.next_edge < adjacency[v].size()) {
        const std::size_t w = adjacency[v][frame.next_edge++];
        if (index[w] == kUnvisited) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          frames.push_back({w, 0});
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      if (low[v] == index[v]) {
        std::vector<std::size_t> members;
        std::size_t w = kUnvisited;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          component[w] = components.size();
          members.push_back(w);
        } while (w != v);
        components.push_back(std::move(members));
      }
      frames.pop_back();
      if (!frames.empty()) {
        const std::size_t parent = frames.back().node;
        low[parent] = std::min(low[parent], low[v]);
      }
    }
  }

  std::vector<std::vector<std::size_t>> closed;
  for (std::size_t c = 0; c < components.size(); ++c) {
    bool is_closed = true;
    for (std::size_t v : components[c]) {
      for (std::size_t w : adjacency[v]) {
        if (component[w] != c) {
          is_closed = false;
          break;
        }
      }
      if (!is_closed) break;
    }
    if (is_closed) {
      std::vector<std::size_t> members = components[c];
      std::sort(members.begin(), members.end());
      closed.push_back(std::move(members));
    }
  }
  std::sort(closed.begin(), closed.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return closed;
}

namespace {

Eigen::VectorXd class_stationary(const Eigen::MatrixXd& sub, InvariantMethod method) {
  const Eigen::Index m = sub.rows();
  if (m == 1) return Eigen::VectorXd::Ones(1);

  // A class of deterministic moves is a single cycle; its law is uniform.
  bool deterministic = true;
  for (Eigen::Index i = 0; i < m && deterministic; ++i) deterministic = (sub.row(i).array() == 1.0).count() == 1;
  if (deterministic) return Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));

  if (method == InvariantMethod::eigenvector) {
    Eigen::EigenSolver<Eigen::MatrixXd> solver(sub.transpose());
    if (solver.info() != Eigen::Success) throw SolverError("invariant measure: eigen decomposition failed");
    Eigen::Index best = 0;
    double best_gap = std::abs(solver.eigenvalues()[0] - std::complex<double>(1.0, 0.0));
    for (Eigen::Index i = 1; i < m; ++i) {
      const double gap = std::abs(solver.eigenvalues()[i] - std::complex<double>(1.0, 0.0));
      if (gap < best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    Eigen::VectorXd v = solver.eigenvectors().col(best).real();
    v /= v.sum();
    return v;
  }
  Eigen::MatrixXd a = sub.transpose() - Eigen::MatrixXd::Identity(m, m);
  a.row(m - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  rhs[m - 1] = 1.0;
  return a.fullPivLu().solve(rhs);
}

}  // namespace

InvariantResult invariant_measure(const FiniteChain& chain, InvariantMethod method) {
  const auto classes = closed_classes(chain);
  const auto& members = classes.front();
  const auto m = static_cast<Eigen::Index>(members.size());
  Eigen::MatrixXd sub(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      sub(i, j) = chain.matrix()(static_cast<Eigen::Index>(members[static_cast<std::size_t>(i)]),
                                 static_cast<Eigen::Index>(members[static_cast<std::size_t>(j)]));
    }
  }
  const Eigen::VectorXd local = class_stationary(sub, method);

  InvariantResult result;
  result.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(chain.size()));
  for (Eigen::Index i = 0; i < m; ++i) {
    result.weights[static_cast<Eigen::Index>(members[static_cast<std::size_t>(i)])] = std::max(0.0, local[i]);
  }
  result.weights /= result.weights.sum();
  const Eigen::RowVectorXd pi = result.weights.transpose();
  result.residual = (pi * chain.matrix() - pi).lpNorm<1>();
  if (!(result.residual <= 1e-10)) {
    throw SolverError("invariant measure: residual ||pi P - pi||_1 = " + std::to_string(result.residual));
  }
  result.null_dimension = classes.size();
  result.unique = classes.size() == 1;
  result.measure = chain.law_from_row(result.weights);
  return result;
}

std::size_t sample_row(const FiniteChain& chain, std::size_t x, Rng& rng) {
  const double u = rng.uniform();
  const auto row = chain.matrix().row(static_cast<Eigen::Index>(x));
  double cumulative = 0.0;
  std::size_t last_positive = x;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (row[j] <= 0.0) continue;
    cumulative += row[j];
    last_positive = static_cast<std::size_t>(j);
    if (u < cumulative) return last_positive;
  }
  return last_positive;
}

std::vector<std::size_t> simulate_indices(const FiniteChain& chain, std::size_t x0, std::size_t n,
                                          std::uint64_t seed) {
  if (x0 >= chain.size()) throw InputError("simulate: unknown state index " + std::to_string(x0));
  Rng rng(seed);
  std::vector<std::size_t> path{x0};
  path.reserve(n + 1);
  for (std::size_t step = 0; step < n; ++step) path.push_back(sample_row(chain, path.back(), rng));
  return path;
}

Trajectory simulate(const FiniteChain& chain, std::size_t x0, std::size_t n, std::uint64_t seed) {
  Trajectory out;
  for (std::size_t i : simulate_indices(chain, x0, n, seed)) out.states.push_back(chain.point(i));
  return out;
}

Trajectory simulate(const SamplerChain& chain, const Point& x0, std::size_t n, Rng& rng) {
  if (!chain.step) throw InputError("simulate: sampler chain has no step function");
  if (x0.size() != chain.state_dim) throw InputError("simulate: initial state has the wrong dimension");
  Trajectory out;
  out.states.reserve(n + 1);
  out.states.push_back(x0);
  for (std::size_t step = 1; step <= n; ++step) {
    Point next = chain.step(out.states.back(), rng);
    if (next.size() != chain.state_dim) throw SimulationError("sampler returned a state of wrong dimension", step);
    for (double c : next) {
      if (!std::isfinite(c)) throw SimulationError("sampler returned a non-finite state", step);
    }
    out.states.push_back(std::move(next));
  }
  return out;
}

Trajectory simulate(const SamplerChain& chain, const Point& x0, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return simulate(chain, x0, n, rng);
}

DiscreteMeasure empirical_measure(std::span<const Point> samples) {
  if (samples.empty()) throw InputError("empirical measure: no samples");
  const double w = 1.0 / static_cast<double>(samples.size());
  return DiscreteMeasure(std::vector<Point>(samples.begin(), samples.end()), std::vector<double>(samples.size(), w));
}

}  // namespace couplab
