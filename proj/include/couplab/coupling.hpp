#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "couplab/chain.hpp"
#include "couplab/metric.hpp"
#include "couplab/random.hpp"
#include "couplab/transport.hpp"

namespace couplab {

using EventMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// A joint law xi on the product of the supports of two reference laws P and
// Q whose marginals are absolutely continuous w.r.t. P and Q. Rows are the
// atoms of P, columns the atoms of Q.
class FiniteJointLaw {
 public:
  FiniteJointLaw(DiscreteMeasure p, DiscreteMeasure q, Eigen::MatrixXd weights);

  const DiscreteMeasure& reference1() const noexcept { return p_; }
  const DiscreteMeasure& reference2() const noexcept { return q_; }
  const Eigen::MatrixXd& weights() const noexcept { return weights_; }
  CouplingPlan plan() const { return CouplingPlan(p_.points(), q_.points(), weights_); }

  Eigen::VectorXd marginal1() const { return weights_.rowwise().sum(); }
  Eigen::VectorXd marginal2() const { return weights_.colwise().sum().transpose(); }

  // Radon-Nikodym densities d pi_i(xi) / d ref_i per atom (0 off the
  // reference support, where the marginal vanishes too).
  Eigen::VectorXd density1() const;
  Eigen::VectorXd density2() const;

  // (sum_k ref_k * density_k^p)^(1/p)
  double lp_norm1(double p) const;
  double lp_norm2(double p) const;

  bool is_coupling(double tolerance = 1e-9) const;
  double probability(const EventMask& event) const;

 private:
  DiscreteMeasure p_;
  DiscreteMeasure q_;
  Eigen::MatrixXd weights_;
};

// Membership certificate for the class of generalized couplings whose
// marginal densities have L^p norm at most R.
struct GeneralizedCouplingCert {
  double p = 2.0;
  double R = 1.0;
  double lp_norm_1 = 0.0;
  double lp_norm_2 = 0.0;
  bool member = false;
};

GeneralizedCouplingCert certify(const FiniteJointLaw& xi, double p, double R);

// P (x) Q; densities are identically 1.
FiniteJointLaw independent_coupling(const DiscreteMeasure& p, const DiscreteMeasure& q);

struct SplitResult {
  CouplingPlan zeta;
  double beta = 0.0;     // gamma * xi(C_gamma)
  double leakage = 0.0;  // xi outside C_gamma
  double leakage1 = 0.0; // pi_1(xi) outside B^1_gamma
  double leakage2 = 0.0; // pi_2(xi) outside B^2_gamma
  std::vector<bool> in_b1, in_b2;
};

// Turns a generalized coupling into a true coupling of P and Q: keep gamma
// times xi on the set where both densities are at most 1/gamma and fill the
// remaining marginal mass with a normalized product. For xi(A) >= alpha,
// zeta(A) >= gamma * (alpha - leakage).
SplitResult split_construction_I(const FiniteJointLaw& xi, double gamma);

// Largest gamma in (0,1) with 4 gamma^(p-1) R^p <= alpha, which makes the
// leakage at most alpha / 2 for xi with L^p norms at most R.
double admissible_gamma_I(double p, double R, double alpha);

struct SplitIIResult {
  std::optional<FiniteJointLaw> zeta;  // empty when the precondition fails
  GeneralizedCouplingCert cert;        // at R = 1/gamma
  double leakage = 0.0;
  double alpha = 0.0;
  bool admissible = false;
  // Largest gamma whose leakage is at most alpha / 2 (admissible gammas
  // form an interval (0, max_admissible_gamma]).
  double max_admissible_gamma = 0.0;
};

// Bounded-density modification of a generalized coupling: the output's
// marginal densities are at most 1/gamma, and zeta(A) >= xi(A) - alpha/2
// whenever xi loses at most alpha/2 outside C_gamma.
SplitIIResult split_construction_II(const FiniteJointLaw& xi, double gamma, double alpha, double p = 2.0);

struct MixtureResult {
  CouplingPlan plan;
  double success = 0.0;  // xi(C)
  bool degenerate = false;
  // Largest density of the marginals of xi(. | not C) w.r.t. the marginals
  // of xi; bounded by 1 / (1 - success).
  double max_conditional_density = 0.0;
};

// xi restricted to C plus the product of the marginals of xi restricted to
// the complement, renormalized by 1 / (1 - xi(C)). Marginals are unchanged.
MixtureResult conditional_mixture(const CouplingPlan& xi, const EventMask& event);

// Event {d(x, y) <= eps} on the product of a plan's supports.
EventMask closeness_event(const CouplingPlan& plan, const Metric& d, double eps);

// Tensor product. Row (i, k) carries the point x_i ++ u_k and column (j, l)
// carries y_j ++ v_l, so the row marginal is the law of (X, U) and the
// column marginal the law of (Y, V).
CouplingPlan product_coupling(const CouplingPlan& xi1, const CouplingPlan& xi2);

// d((x,u),(y,v)) = min(d(x,y), d(u,v)) on concatenated points whose first
// block has `first_dim` coordinates.
Metric product_min_metric(const Metric& d, std::size_t first_dim);

// A draw from a (generalized) coupling of path laws, with the log
// Radon-Nikodym densities of each component's law against its reference
// chain, and an importance log-weight (0 when sampled from xi directly).
struct WeightedPairTrajectory {
  Trajectory x;
  Trajectory y;
  double log_density_1 = 0.0;
  double log_density_2 = 0.0;
  double log_weight = 0.0;
};

using PairSimulator = std::function<WeightedPairTrajectory(std::size_t horizon, Rng& rng)>;

// Synchronous coupling of a sampler chain: both components use the same
// random stream, hence coincide forever once they meet.
PairSimulator synchronous_pair(const SamplerChain& chain, Point x, Point y);

// Independent coupling of two finite-chain paths started at states x and y
// (separate random streams); the product of the path laws.
PairSimulator independent_pair(const FiniteChain& chain, std::size_t x, std::size_t y);

// Log density of the law of `path` under `proposal` against `reference`:
// sum of log(q(x_k, x_{k+1}) / p(x_k, x_{k+1})).
double log_path_density(const FiniteChain& reference, const FiniteChain& proposal,
                        const std::vector<std::size_t>& path);

// Every path of length `horizon` from x, as a measure whose points are the
// state-index sequences. Throws ResourceError above `max_paths`.
DiscreteMeasure enumerate_paths(const FiniteChain& chain, std::size_t x, std::size_t horizon,
                                std::size_t max_paths = 1u << 20);

}  // namespace couplab
