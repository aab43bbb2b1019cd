#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <utility>
#include <vector>

#include "couplab/chain.hpp"
#include "couplab/metric.hpp"

namespace couplab {

struct TransportOptions {
  // Largest accepted support on either side.
  std::size_t max_support = 4096;
  // Pivot cap; 0 selects 50 * (m + n) * (m + n) + 1000.
  std::size_t max_iterations = 0;
  // Accepted duality gap plus worst negative reduced cost.
  double certificate_tolerance = 1e-9;
};

struct TransportSolution {
  Eigen::MatrixXd plan;  // rows x cols, zero rows/columns where a weight was 0
  double value = 0.0;
  // Dual potentials with u_i + v_j <= c_ij, complementary to `plan`.
  Eigen::VectorXd row_potential;
  Eigen::VectorXd col_potential;
  double certificate_residual = 0.0;
  std::size_t iterations = 0;
};

// Exact balanced transport between weight vectors `a` and `b` under `cost`.
// Primal network simplex on the complete bipartite graph with a strongly
// feasible spanning tree (no cycling on degenerate pivots). Throws
// InputError on invalid weights, ResourceError above the support cap and
// SolverError when the pivot cap is hit or the optimum fails its
// complementary-slackness certificate.
TransportSolution solve_transport(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::MatrixXd& cost,
                                  const TransportOptions& options = {});

// Joint weights on the product of two finite supports.
class CouplingPlan {
 public:
  CouplingPlan() = default;
  CouplingPlan(std::vector<Point> rows, std::vector<Point> cols, Eigen::MatrixXd weights, double value = 0.0);

  const std::vector<Point>& row_support() const noexcept { return rows_; }
  const std::vector<Point>& col_support() const noexcept { return cols_; }
  const Eigen::MatrixXd& weights() const noexcept { return weights_; }
  double value() const noexcept { return value_; }
  void set_value(double value) { value_ = value; }

  Eigen::VectorXd row_marginal() const { return weights_.rowwise().sum(); }
  Eigen::VectorXd col_marginal() const { return weights_.colwise().sum().transpose(); }
  double total_mass() const { return weights_.sum(); }

  // Mass of the pairs (x, y) with pred(x, y) true.
  double probability(const std::function<bool(const Point&, const Point&)>& pred) const;
  double probability(const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& mask) const;

  // Expected cost under the plan.
  double expectation(const std::function<double(const Point&, const Point&)>& f) const;

  // Max deviation of the marginals from the given weight vectors.
  double marginal_error(const Eigen::VectorXd& row_weights, const Eigen::VectorXd& col_weights) const;

 private:
  std::vector<Point> rows_;
  std::vector<Point> cols_;
  Eigen::MatrixXd weights_;
  double value_ = 0.0;
};

Eigen::MatrixXd cost_matrix(const std::vector<Point>& rows, const std::vector<Point>& cols,
                            const std::function<double(const Point&, const Point&)>& cost);

// inf over couplings of the expected cost, with an optimal plan.
std::pair<double, CouplingPlan> minimal_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                                 const DistanceLikeCost& h, const TransportOptions& options = {});

// sup over couplings of xi(d(X, Y) <= eps), with an attaining plan whose
// value() holds the probability.
std::pair<double, CouplingPlan> max_closeness(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Metric& d,
                                              double eps, const TransportOptions& options = {});

// Kantorovich-Rubinstein distance for a base metric bounded by 1.
double kr_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Metric& base,
                   const TransportOptions& options = {});

// Plan text format, version 1:
//   couplab-plan 1
//   rows <m> cols <n> value <v>
//   row <i> <coords...>          (m lines)
//   col <j> <coords...>          (n lines)
//   <m lines of n weights>
// Numbers are written in shortest round-trip form.
void write_plan(std::ostream& out, const CouplingPlan& plan);
CouplingPlan read_plan(std::istream& in);

}  // namespace couplab
