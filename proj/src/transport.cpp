#include "couplab/transport.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "couplab/errors.hpp"
#include "couplab/report.hpp"

namespace couplab {

namespace {

// Primal network simplex for the balanced transportation problem on
// m supply and n demand nodes. An artificial root joins every node; the
// initial tree uses only artificial arcs, oriented so that the tree is
// strongly feasible. Leaving arcs are chosen by the "last blocking arc from
// the apex" rule, which keeps the tree strongly feasible and rules out
// cycling on degenerate pivots.
class NetworkSimplex {
 public:
  NetworkSimplex(std::vector<double> supply, std::vector<double> demand, Eigen::MatrixXd cost)
      : m_(supply.size()),
        n_(demand.size()),
        nodes_(m_ + n_ + 1),
        root_(m_ + n_),
        real_arcs_(m_ * n_),
        supply_(std::move(supply)),
        demand_(std::move(demand)),
        cost_(std::move(cost)) {
    double max_cost = 0.0;
    for (Eigen::Index i = 0; i < cost_.size(); ++i) max_cost = std::max(max_cost, std::abs(cost_.data()[i]));
    artificial_cost_ = (max_cost + 1.0) * static_cast<double>(nodes_);
    price_tolerance_ = 1e-12 * (max_cost + 1.0);

    const std::size_t arcs = real_arcs_ + m_ + n_;
    flow_.assign(arcs, 0.0);
    tree_position_.assign(arcs, kNone);
    tree_arcs_.resize(m_ + n_);
    for (std::size_t i = 0; i < m_; ++i) {
      flow_[real_arcs_ + i] = supply_[i];
      tree_arcs_[i] = real_arcs_ + i;
    }
    for (std::size_t j = 0; j < n_; ++j) {
      flow_[real_arcs_ + m_ + j] = demand_[j];
      tree_arcs_[m_ + j] = real_arcs_ + m_ + j;
    }
    for (std::size_t p = 0; p < tree_arcs_.size(); ++p) tree_position_[tree_arcs_[p]] = p;

    parent_.assign(nodes_, kNone);
    pred_.assign(nodes_, kNone);
    up_.assign(nodes_, false);
    depth_.assign(nodes_, 0);
    potential_.assign(nodes_, 0.0);
    offsets_.assign(nodes_ + 1, 0);
    incident_.assign(2 * tree_arcs_.size(), 0);
    queue_.assign(nodes_, 0);
    block_size_ = std::max<std::size_t>(16, static_cast<std::size_t>(std::sqrt(static_cast<double>(real_arcs_))));
    rebuild_tree();
  }

  std::size_t run(std::size_t max_iterations) {
    std::size_t iterations = 0;
    while (true) {
      const std::size_t entering = find_entering();
      if (entering == kNone) return iterations;
      if (++iterations > max_iterations) {
        throw SolverError("transport: pivot cap of " + std::to_string(max_iterations) + " reached");
      }
      pivot(entering);
    }
  }

  double flow(std::size_t i, std::size_t j) const { return flow_[i * n_ + j]; }
  double artificial_flow() const {
    double total = 0.0;
    for (std::size_t e = real_arcs_; e < flow_.size(); ++e) total += flow_[e];
    return total;
  }
  // Dual variables u_i = -pi_i, v_j = pi_{m+j}; u_i + v_j <= c_ij at the optimum.
  double row_dual(std::size_t i) const { return -potential_[i]; }
  double col_dual(std::size_t j) const { return potential_[m_ + j]; }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  std::size_t source(std::size_t e) const {
    if (e < real_arcs_) return e / n_;
    const std::size_t a = e - real_arcs_;
    return a < m_ ? a : root_;
  }
  std::size_t target(std::size_t e) const {
    if (e < real_arcs_) return m_ + e % n_;
    const std::size_t a = e - real_arcs_;
    return a < m_ ? root_ : a;  // a - m_ + m_
  }
  double arc_cost(std::size_t e) const {
    if (e < real_arcs_) return cost_(static_cast<Eigen::Index>(e / n_), static_cast<Eigen::Index>(e % n_));
    return artificial_cost_;
  }

  void rebuild_tree() {
    std::fill(offsets_.begin(), offsets_.end(), 0);
    for (std::size_t e : tree_arcs_) {
      ++offsets_[source(e) + 1];
      ++offsets_[target(e) + 1];
    }
    for (std::size_t v = 0; v < nodes_; ++v) offsets_[v + 1] += offsets_[v];
    cursor_.assign(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t e : tree_arcs_) {
      incident_[cursor_[source(e)]++] = e;
      incident_[cursor_[target(e)]++] = e;
    }
    std::fill(parent_.begin(), parent_.end(), kNone);
    parent_[root_] = root_;
    pred_[root_] = kNone;
    depth_[root_] = 0;
    potential_[root_] = 0.0;
    std::size_t head = 0;
    std::size_t tail = 0;
    queue_[tail++] = root_;
    while (head < tail) {
      const std::size_t u = queue_[head++];
      for (std::size_t k = offsets_[u]; k < offsets_[u + 1]; ++k) {
        const std::size_t e = incident_[k];
        const std::size_t other = source(e) == u ? target(e) : source(e);
        if (parent_[other] != kNone) continue;
        parent_[other] = u;
        pred_[other] = e;
        up_[other] = source(e) == other;
        depth_[other] = depth_[u] + 1;
        potential_[other] = up_[other] ? potential_[u] - arc_cost(e) : potential_[u] + arc_cost(e);
        queue_[tail++] = other;
      }
    }
    if (tail != nodes_) throw SolverError("transport: basis is not a spanning tree");
  }

  double reduced_cost(std::size_t e) const {
    const std::size_t i = e / n_;
    const std::size_t j = e % n_;
    return cost_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) + potential_[i] - potential_[m_ + j];
  }

  // Block search pricing: scan blocks cyclically and take the most negative
  // reduced cost from the first block that has any.
  std::size_t find_entering() {
    std::size_t best = kNone;
    double best_value = -price_tolerance_;
    std::size_t in_block = 0;
    for (std::size_t scanned = 0; scanned < real_arcs_; ++scanned) {
      const std::size_t e = next_arc_;
      next_arc_ = next_arc_ + 1 == real_arcs_ ? 0 : next_arc_ + 1;
      if (tree_position_[e] == kNone) {
        const double rc = reduced_cost(e);
        if (rc < best_value) {
          best_value = rc;
          best = e;
        }
      }
      if (++in_block == block_size_) {
        if (best != kNone) return best;
        in_block = 0;
      }
    }
    return best;
  }

  void pivot(std::size_t entering) {
    const std::size_t first = source(entering);
    const std::size_t second = target(entering);
    std::size_t join_u = first;
    std::size_t join_v = second;
    while (join_u != join_v) {
      if (depth_[join_u] >= depth_[join_v]) {
        join_u = parent_[join_u];
      } else {
        join_v = parent_[join_v];
      }
    }
    const std::size_t join = join_u;

    double delta = std::numeric_limits<double>::infinity();
    std::size_t leaving_node = kNone;
    // Apex -> first segment is traversed downwards: arcs pointing up block.
    for (std::size_t u = first; u != join; u = parent_[u]) {
      if (up_[u] && flow_[pred_[u]] < delta) {
        delta = flow_[pred_[u]];
        leaving_node = u;
      }
    }
    // second -> apex is traversed upwards and comes last: ties go here,
    // to the blocking arc nearest the apex.
    for (std::size_t u = second; u != join; u = parent_[u]) {
      if (!up_[u] && flow_[pred_[u]] <= delta) {
        delta = flow_[pred_[u]];
        leaving_node = u;
      }
    }
    if (leaving_node == kNone) throw SolverError("transport: unbounded pivot");

    if (delta > 0.0) {
      flow_[entering] += delta;
      for (std::size_t u = first; u != join; u = parent_[u]) flow_[pred_[u]] += up_[u] ? -delta : delta;
      for (std::size_t u = second; u != join; u = parent_[u]) flow_[pred_[u]] += up_[u] ? delta : -delta;
    }
    const std::size_t leaving = pred_[leaving_node];
    flow_[leaving] = 0.0;
    const std::size_t slot = tree_position_[leaving];
    tree_arcs_[slot] = entering;
    tree_position_[entering] = slot;
    tree_position_[leaving] = kNone;
    rebuild_tree();
  }

  std::size_t m_, n_, nodes_, root_, real_arcs_;
  std::vector<double> supply_, demand_;
  Eigen::MatrixXd cost_;
  double artificial_cost_ = 0.0;
  double price_tolerance_ = 0.0;

  std::vector<double> flow_;
  std::vector<std::size_t> tree_arcs_, tree_position_;
  std::vector<std::size_t> parent_, pred_, depth_;
  std::vector<bool> up_;
  std::vector<double> potential_;
  std::vector<std::size_t> offsets_, cursor_, incident_, queue_;
  std::size_t block_size_ = 16;
  std::size_t next_arc_ = 0;
};

void check_weights(const Eigen::VectorXd& w, const char* side) {
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i]) || w[i] < 0.0) {
      throw InputError(std::string("transport: ") + side + " weight " + std::to_string(i) + " is negative or non-finite");
    }
  }
}

}  // namespace

TransportSolution solve_transport(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::MatrixXd& cost,
                                  const TransportOptions& options) {
  check_weights(a, "row");
  check_weights(b, "column");
  if (cost.rows() != a.size() || cost.cols() != b.size()) throw InputError("transport: cost matrix shape mismatch");
  if (!cost.allFinite()) throw InputError("transport: cost matrix has non-finite entries");
  const double total_a = a.sum();
  const double total_b = b.sum();
  if (!(total_a > 0.0) || !(total_b > 0.0)) throw InputError("transport: a side has zero mass");
  if (std::abs(total_a - total_b) > 1e-9 * std::max(total_a, total_b)) {
    throw InputError("transport: unbalanced masses " + format_number(total_a) + " vs " + format_number(total_b));
  }

  std::vector<Eigen::Index> rows, cols;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] > 0.0) rows.push_back(i);
  }
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    if (b[j] > 0.0) cols.push_back(j);
  }
  if (rows.size() > options.max_support || cols.size() > options.max_support) {
    throw ResourceError("transport: support " + std::to_string(rows.size()) + "x" + std::to_string(cols.size()) +
                        " exceeds the cap of " + std::to_string(options.max_support));
  }

  std::vector<double> supply(rows.size()), demand(cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) supply[i] = a[rows[i]] / total_a;
  for (std::size_t j = 0; j < cols.size(); ++j) demand[j] = b[cols[j]] / total_b;
  Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      sub(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cost(rows[i], cols[j]);
    }
  }

  const std::size_t nodes = rows.size() + cols.size();
  const std::size_t cap = options.max_iterations > 0 ? options.max_iterations : 50 * nodes * nodes + 1000;
  NetworkSimplex simplex(supply, demand, sub);
  TransportSolution out;
  out.iterations = simplex.run(cap);

  out.plan = Eigen::MatrixXd::Zero(a.size(), b.size());
  out.row_potential = Eigen::VectorXd::Zero(a.size());
  out.col_potential = Eigen::VectorXd::Zero(b.size());
  double primal = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const double f = simplex.flow(i, j) * total_a;
      out.plan(rows[i], cols[j]) = f;
      primal += f * cost(rows[i], cols[j]);
    }
  }
  // Shift the duals so the smallest row potential is zero; the pair (u, v)
  // is only defined up to u + s, v - s.
  double shift = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows.size(); ++i) shift = std::min(shift, simplex.row_dual(i));
  double dual = 0.0;
  double worst_reduced = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row_potential[rows[i]] = simplex.row_dual(i) - shift;
    dual += a[rows[i]] * out.row_potential[rows[i]];
  }
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.col_potential[cols[j]] = simplex.col_dual(j) + shift;
    dual += b[cols[j]] * out.col_potential[cols[j]] * total_a / total_b;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const double rc = cost(rows[i], cols[j]) - out.row_potential[rows[i]] - out.col_potential[cols[j]];
      worst_reduced = std::max(worst_reduced, -rc);
    }
  }
  out.value = primal;
  out.certificate_residual =
      std::max({std::abs(primal - dual), worst_reduced, simplex.artificial_flow() * total_a});
  if (!(out.certificate_residual <= options.certificate_tolerance)) {
    throw SolverError("transport: optimality certificate failed, residual " + format_number(out.certificate_residual));
  }
  return out;
}

CouplingPlan::CouplingPlan(std::vector<Point> rows, std::vector<Point> cols, Eigen::MatrixXd weights, double value)
    : rows_(std::move(rows)), cols_(std::move(cols)), weights_(std::move(weights)), value_(value) {
  if (weights_.rows() != static_cast<Eigen::Index>(rows_.size()) ||
      weights_.cols() != static_cast<Eigen::Index>(cols_.size())) {
    throw InputError("coupling plan: weight matrix does not match the supports");
  }
}

double CouplingPlan::probability(const std::function<bool(const Point&, const Point&)>& pred) const {
  double total = 0.0;
  for (Eigen::Index i = 0; i < weights_.rows(); ++i) {
    for (Eigen::Index j = 0; j < weights_.cols(); ++j) {
      if (weights_(i, j) != 0.0 && pred(rows_[static_cast<std::size_t>(i)], cols_[static_cast<std::size_t>(j)])) {
        total += weights_(i, j);
      }
    }
  }
  return total;
}

double CouplingPlan::probability(const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& mask) const {
  if (mask.rows() != weights_.rows() || mask.cols() != weights_.cols()) throw InputError("coupling plan: mask shape");
  return mask.select(weights_.array(), 0.0).sum();
}

double CouplingPlan::expectation(const std::function<double(const Point&, const Point&)>& f) const {
  double total = 0.0;
  for (Eigen::Index i = 0; i < weights_.rows(); ++i) {
    for (Eigen::Index j = 0; j < weights_.cols(); ++j) {
      if (weights_(i, j) != 0.0) {
        total += weights_(i, j) * f(rows_[static_cast<std::size_t>(i)], cols_[static_cast<std::size_t>(j)]);
      }
    }
  }
  return total;
}

double CouplingPlan::marginal_error(const Eigen::VectorXd& row_weights, const Eigen::VectorXd& col_weights) const {
  return std::max((row_marginal() - row_weights).cwiseAbs().maxCoeff(),
                  (col_marginal() - col_weights).cwiseAbs().maxCoeff());
}

Eigen::MatrixXd cost_matrix(const std::vector<Point>& rows, const std::vector<Point>& cols,
                            const std::function<double(const Point&, const Point&)>& cost) {
  Eigen::MatrixXd c(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cost(rows[i], cols[j]);
    }
  }
  return c;
}

std::pair<double, CouplingPlan> minimal_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                                 const DistanceLikeCost& h, const TransportOptions& options) {
  const Eigen::MatrixXd c = cost_matrix(mu.points(), nu.points(), h.h);
  if ((c.array() < 0.0).any() || (c.array() > 1.0).any()) {
    throw InputError("minimal distance: cost '" + h.name + "' leaves [0,1]");
  }
  TransportSolution solution = solve_transport(mu.weight_vector(), nu.weight_vector(), c, options);
  CouplingPlan plan(mu.points(), nu.points(), std::move(solution.plan), solution.value);
  return {solution.value, std::move(plan)};
}

std::pair<double, CouplingPlan> max_closeness(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Metric& d,
                                              double eps, const TransportOptions& options) {
  auto [far_mass, plan] = minimal_distance(mu, nu, threshold_cost(d, eps), options);
  const double close = std::clamp(1.0 - far_mass, 0.0, 1.0);
  plan.set_value(close);
  return {close, std::move(plan)};
}

double kr_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Metric& base,
                   const TransportOptions& options) {
  return minimal_distance(mu, nu, cost_from_metric(base), options).first;
}

void write_plan(std::ostream& out, const CouplingPlan& plan) {
  const auto write_point = [&out](const char* tag, std::size_t index, const Point& p) {
    out << tag << ' ' << index;
    for (double c : p) out << ' ' << format_number(c);
    out << '\n';
  };
  out << "couplab-plan 1\n";
  out << "rows " << plan.row_support().size() << " cols " << plan.col_support().size() << " value "
      << format_number(plan.value()) << '\n';
  for (std::size_t i = 0; i < plan.row_support().size(); ++i) write_point("row", i, plan.row_support()[i]);
  for (std::size_t j = 0; j < plan.col_support().size(); ++j) write_point("col", j, plan.col_support()[j]);
  const Eigen::MatrixXd& w = plan.weights();
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) out << (j == 0 ? "" : " ") << format_number(w(i, j));
    out << '\n';
  }
}

CouplingPlan read_plan(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "couplab-plan 1") throw InputError("plan: missing 'couplab-plan 1' header");
  std::string tag_rows, tag_cols, tag_value;
  std::size_t m = 0, n = 0;
  double value = 0.0;
  if (!std::getline(in, line)) throw InputError("plan: missing size line");
  {
    std::istringstream is(line);
    if (!(is >> tag_rows >> m >> tag_cols >> n >> tag_value >> value) || tag_rows != "rows" || tag_cols != "cols" ||
        tag_value != "value") {
      throw InputError("plan: malformed size line");
    }
  }
  const auto read_points = [&](const char* tag, std::size_t count) {
    std::vector<Point> points;
    for (std::size_t k = 0; k < count; ++k) {
      if (!std::getline(in, line)) throw InputError(std::string("plan: missing ") + tag + " line");
      std::istringstream is(line);
      std::string t;
      std::size_t index = 0;
      if (!(is >> t >> index) || t != tag || index != k) throw InputError(std::string("plan: malformed ") + tag + " line");
      Point p;
      double c = 0.0;
      while (is >> c) p.push_back(c);
      points.push_back(std::move(p));
    }
    return points;
  };
  std::vector<Point> rows = read_points("row", m);
  std::vector<Point> cols = read_points("col", n);
  Eigen::MatrixXd w(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (!(in >> w(i, j))) throw InputError("plan: truncated weight matrix");
    }
  }
  return CouplingPlan(std::move(rows), std::move(cols), std::move(w), value);
}

}  // namespace couplab
