#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "couplab/report.hpp"

namespace couplab {

// A path segment on [-1, 0] sampled at K + 1 nodes s_k = -1 + k/K.
class SegmentState {
 public:
  SegmentState(std::size_t K, std::vector<Eigen::VectorXd> values);

  // Constant segment f(s) = value.
  static SegmentState constant(std::size_t K, const Eigen::VectorXd& value);
  static SegmentState from_function(std::size_t K, std::size_t dim, const std::function<Eigen::VectorXd(double)>& f);

  std::size_t K() const noexcept { return K_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(values_.front().size()); }
  double step() const noexcept { return 1.0 / static_cast<double>(K_); }
  const std::vector<Eigen::VectorXd>& values() const noexcept { return values_; }

 private:
  std::size_t K_;
  std::vector<Eigen::VectorXd> values_;
};

// Read-only window X_t on [-1, 0]: front() = X(t - 1), back() = X(t).
class SegmentView {
 public:
  explicit SegmentView(std::span<const Eigen::VectorXd> nodes) : nodes_(nodes) {}
  const Eigen::VectorXd& current() const { return nodes_.back(); }
  const Eigen::VectorXd& delayed() const { return nodes_.front(); }
  const Eigen::VectorXd& at(std::size_t k) const { return nodes_[k]; }  // node s_k
  std::size_t K() const { return nodes_.size() - 1; }
  double sup_norm() const;

 private:
  std::span<const Eigen::VectorXd> nodes_;
};

// dX(t) = F(X_t) dt + G(X_t) dW(t) on R^m.
struct SfdeSpec {
  std::string name;
  std::size_t dim = 1;
  std::function<Eigen::VectorXd(const SegmentView&)> drift;
  std::function<Eigen::MatrixXd(const SegmentView&)> diffusion;
  double drift_lipschitz = 0.0;
  double diffusion_lipschitz = 0.0;
  // Declared sup over segments of |G^+(f)| (operator norm).
  double g_inv_bound = 1.0;
  // True when G does not depend on the segment; lets the integrator reuse G^+.
  bool constant_diffusion = false;
};

// Built-in models by name with numeric parameters (unknown keys rejected):
//   linear:         F = -a X(t),                G = sigma I   {a, sigma, dim}
//   delayed-sine:   F = -a X(t) + b sin(X(t-1)), G = sigma I   {a, b, sigma, dim}
//   logistic-delay: F = r X(t)(1 - X(t-1)),     G = sigma (1 + 0.5 sin X(t)) I  {r, sigma}
SfdeSpec sfde_model(std::string_view name, const std::map<std::string, double>& params = {});

// Moore-Penrose inverse by SVD; singular values below 1e-10 times the
// largest are treated as zero.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& g);

struct GirsanovTracker {
  double int_beta_sq = 0.0;   // int_0^t |beta_s|^2 ds
  double log_density = 0.0;   // -int beta dW - 1/2 int |beta|^2 ds
};

struct PairPath {
  std::vector<double> times;            // recorded times
  std::vector<Eigen::VectorXd> x, y;    // X(t), Y(t) at the recorded times
  std::vector<double> gap;              // |X(t) - Y(t)|
  std::vector<double> int_beta_sq;      // tracker value at the recorded times
  GirsanovTracker tracker;              // final values
};

struct IntegrationOptions {
  std::size_t record_every = 1;  // keep every k-th grid time (the endpoint is always kept)
};

// Euler-Maruyama for the pair
//   dX = F(X_t) dt + G(X_t) dW,
//   dY = F(Y_t) dt + lambda (X(t) - Y(t)) dt + G(Y_t) dW
// with shared increments, and beta_t = lambda G^+(Y_t) (X(t) - Y(t)).
// dt must divide 1 and T. Throws IntegrationError on a non-finite state and
// ModelError when |G^+| exceeds the declared bound.
PairPath integrate_pair(const SfdeSpec& spec, const SegmentState& f, const SegmentState& g, double lambda, double T,
                        double dt, std::uint64_t seed, const IntegrationOptions& options = {});

// Independent repetitions with streams (seed, rep), run on `threads` workers.
std::vector<PairPath> integrate_pairs(const SfdeSpec& spec, const SegmentState& f, const SegmentState& g,
                                      double lambda, double T, double dt, std::uint64_t seed, std::size_t reps,
                                      std::size_t threads, const IntegrationOptions& options = {});

struct ContractionOptions {
  double t_begin = 0.0;
  double t_end = -1.0;          // < 0: end of the path
  double rate_threshold = 0.1;  // supports when slope <= -rate_threshold
  double min_r_squared = 0.9;
  double quantile = 0.5;        // across reps
};

// Least-squares fit of log|v(t)| on the window; slope and R^2 reported.
// A gap that reaches exactly 0 truncates the window before that time.
ConvergenceReport contraction_report(const PairPath& path, const ContractionOptions& options = {});

// Same fit applied to the per-time quantile of |v| across reps.
ConvergenceReport contraction_report(const std::vector<PairPath>& paths, const ContractionOptions& options = {});

struct GirsanovOptions {
  double beta_cap = 1e6;          // int_beta_sq above this counts as divergent
  double divergent_fraction = 0.1;
  double half_widths = 3.0;
  double z = 1.96;
  std::size_t min_reps = 30;
};

// Distribution of int_beta_sq and the mean of exp(log_density) with a CLT
// half-width; the mean should be 1 by the martingale property.
ConvergenceReport girsanov_diagnostics(const std::vector<GirsanovTracker>& trackers,
                                       const GirsanovOptions& options = {});

// CSV with columns t, x_1..x_m, y_1..y_m, gap, int_beta_sq.
void write_path_csv(std::ostream& out, const PairPath& path);

}  // namespace couplab
