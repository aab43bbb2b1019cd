#include "couplab/sdde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "couplab/errors.hpp"
#include "couplab/parallel.hpp"
#include "couplab/random.hpp"

namespace couplab {

SegmentState::SegmentState(std::size_t K, std::vector<Eigen::VectorXd> values) : K_(K), values_(std::move(values)) {
  if (K_ == 0) throw InputError("segment: K must be positive");
  if (values_.size() != K_ + 1) throw InputError("segment: expected K + 1 nodes");
  const Eigen::Index m = values_.front().size();
  if (m == 0) throw InputError("segment: dimension must be positive");
  for (const Eigen::VectorXd& v : values_) {
    if (v.size() != m) throw InputError("segment: nodes differ in dimension");
    if (!v.allFinite()) throw InputError("segment: non-finite value");
  }
}

SegmentState SegmentState::constant(std::size_t K, const Eigen::VectorXd& value) {
  return SegmentState(K, std::vector<Eigen::VectorXd>(K + 1, value));
}

SegmentState SegmentState::from_function(std::size_t K, std::size_t dim,
                                         const std::function<Eigen::VectorXd(double)>& f) {
  std::vector<Eigen::VectorXd> values(K + 1);
  for (std::size_t k = 0; k <= K; ++k) {
    values[k] = f(-1.0 + static_cast<double>(k) / static_cast<double>(K));
    if (values[k].size() != static_cast<Eigen::Index>(dim)) throw InputError("segment: function returned wrong dimension");
  }
  return SegmentState(K, std::move(values));
}

double SegmentView::sup_norm() const {
  double best = 0.0;
  for (const Eigen::VectorXd& v : nodes_) best = std::max(best, v.lpNorm<Eigen::Infinity>());
  return best;
}

namespace {

double param(const std::map<std::string, double>& given, std::map<std::string, double> defaults, const std::string& key,
             std::string_view model) {
  for (const auto& [k, v] : given) {
    if (!defaults.count(k)) throw InputError("model " + std::string(model) + ": unknown parameter '" + k + "'");
    defaults[k] = v;
  }
  const double v = defaults.at(key);
  if (!std::isfinite(v)) throw InputError("model " + std::string(model) + ": parameter '" + key + "' is not finite");
  return v;
}

std::size_t dimension(double v, std::string_view model) {
  if (!(v >= 1.0 && v <= 64.0) || v != std::floor(v)) {
    throw InputError("model " + std::string(model) + ": dim must be an integer in [1, 64]");
  }
  return static_cast<std::size_t>(v);
}

double positive(double v, const char* key, std::string_view model) {
  if (!(v > 0.0)) throw InputError("model " + std::string(model) + ": " + key + " must be positive");
  return v;
}

}  // namespace

SfdeSpec sfde_model(std::string_view name, const std::map<std::string, double>& params) {
  SfdeSpec spec;
  spec.name = std::string(name);
  if (name == "linear") {
    const std::map<std::string, double> defaults{{"a", 0.0}, {"sigma", 1.0}, {"dim", 1.0}};
    const double a = param(params, defaults, "a", name);
    const double sigma = positive(param(params, defaults, "sigma", name), "sigma", name);
    spec.dim = dimension(param(params, defaults, "dim", name), name);
    const auto m = static_cast<Eigen::Index>(spec.dim);
    spec.drift = [a](const SegmentView& s) -> Eigen::VectorXd { return -a * s.current(); };
    spec.diffusion = [sigma, m](const SegmentView&) -> Eigen::MatrixXd { return sigma * Eigen::MatrixXd::Identity(m, m); };
    spec.drift_lipschitz = std::abs(a);
    spec.g_inv_bound = 1.0 / sigma;
    spec.constant_diffusion = true;
  } else if (name == "delayed-sine") {
    const std::map<std::string, double> defaults{{"a", 0.0}, {"b", 1.0}, {"sigma", 1.0}, {"dim", 1.0}};
    const double a = param(params, defaults, "a", name);
    const double b = param(params, defaults, "b", name);
    const double sigma = positive(param(params, defaults, "sigma", name), "sigma", name);
    spec.dim = dimension(param(params, defaults, "dim", name), name);
    const auto m = static_cast<Eigen::Index>(spec.dim);
    spec.drift = [a, b](const SegmentView& s) -> Eigen::VectorXd {
      return -a * s.current() + b * s.delayed().array().sin().matrix();
    };
    spec.diffusion = [sigma, m](const SegmentView&) -> Eigen::MatrixXd { return sigma * Eigen::MatrixXd::Identity(m, m); };
    spec.drift_lipschitz = std::abs(a) + std::abs(b);
    spec.g_inv_bound = 1.0 / sigma;
    spec.constant_diffusion = true;
  } else if (name == "logistic-delay") {
    const std::map<std::string, double> defaults{{"r", 1.0}, {"sigma", 0.5}};
    const double r = param(params, defaults, "r", name);
    const double sigma = positive(param(params, defaults, "sigma", name), "sigma", name);
    spec.dim = 1;
    spec.drift = [r](const SegmentView& s) -> Eigen::VectorXd {
      return Eigen::VectorXd::Constant(1, r * s.current()[0] * (1.0 - s.delayed()[0]));
    };
    spec.diffusion = [sigma](const SegmentView& s) -> Eigen::MatrixXd {
      return Eigen::MatrixXd::Constant(1, 1, sigma * (1.0 + 0.5 * std::sin(s.current()[0])));
    };
    spec.drift_lipschitz = std::numeric_limits<double>::infinity();  // locally Lipschitz only
    spec.diffusion_lipschitz = 0.5 * sigma;
    spec.g_inv_bound = 2.0 / sigma;
  } else {
    throw InputError("unknown delay model '" + std::string(name) + "'");
  }
  return spec;
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& g) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double cutoff = s.size() > 0 ? 1e-10 * s.maxCoeff() : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > cutoff) inv[i] = 1.0 / s[i];
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

namespace {

std::size_t grid_steps(double span, double dt, const char* what) {
  const double steps = std::round(span / dt);
  if (!(steps >= 1.0) || std::abs(steps * dt - span) > 1e-9 * std::max(1.0, span)) {
    throw InputError(std::string("integrate pair: dt must divide ") + what);
  }
  return static_cast<std::size_t>(steps);
}

PairPath integrate(const SfdeSpec& spec, const SegmentState& f, const SegmentState& g, double lambda, double T,
                   double dt, Rng& rng, const IntegrationOptions& options) {
  if (!(lambda >= 0.0)) throw InputError("integrate pair: lambda must be nonnegative");
  if (!(dt > 0.0) || !(T > 0.0)) throw InputError("integrate pair: dt and T must be positive");
  if (options.record_every == 0) throw InputError("integrate pair: record_every must be positive");
  const std::size_t K = grid_steps(1.0, dt, "the delay 1");
  const std::size_t steps = grid_steps(T, dt, "T");
  if (f.K() != K || g.K() != K) throw InputError("integrate pair: initial segments must have 1/dt intervals");
  if (f.dim() != spec.dim || g.dim() != spec.dim) throw InputError("integrate pair: initial segments have the wrong dimension");
  const auto m = static_cast<Eigen::Index>(spec.dim);

  std::vector<Eigen::VectorXd> hx(f.values()), hy(g.values());
  hx.reserve(K + 1 + steps);
  hy.reserve(K + 1 + steps);
  PairPath path;
  const auto record = [&](double t, std::size_t k) {
    path.times.push_back(t);
    path.x.push_back(hx[k]);
    path.y.push_back(hy[k]);
    path.gap.push_back((hx[k] - hy[k]).norm());
    path.int_beta_sq.push_back(path.tracker.int_beta_sq);
  };
  record(0.0, K);

  const double sqrt_dt = std::sqrt(dt);
  const double bound = spec.g_inv_bound * (1.0 + 1e-9);
  Eigen::MatrixXd g_plus;
  const auto checked_pinv = [&](const Eigen::MatrixXd& G, double t) {
    if (G.rows() != m || G.cols() != m) throw ModelError("diffusion has the wrong shape");
    if (!G.allFinite()) throw IntegrationError("non-finite diffusion", t);
    Eigen::MatrixXd inv = pseudo_inverse(G);
    const double norm = inv.rows() ? Eigen::JacobiSVD<Eigen::MatrixXd>(inv).singularValues()[0] : 0.0;
    if (norm > bound) {
      throw ModelError("|G^+| = " + std::to_string(norm) + " exceeds the declared bound " +
                       std::to_string(spec.g_inv_bound) + " at t = " + std::to_string(t));
    }
    return inv;
  };

  Eigen::VectorXd dW(m);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const SegmentView sx(std::span<const Eigen::VectorXd>(hx.data() + k, K + 1));
    const SegmentView sy(std::span<const Eigen::VectorXd>(hy.data() + k, K + 1));
    const Eigen::VectorXd fx = spec.drift(sx), fy = spec.drift(sy);
    const Eigen::MatrixXd gx = spec.diffusion(sx);
    const Eigen::MatrixXd gy = spec.constant_diffusion ? gx : spec.diffusion(sy);
    if (!spec.constant_diffusion || k == 0) g_plus = checked_pinv(gy, t);
    const Eigen::VectorXd v = sx.current() - sy.current();
    const Eigen::VectorXd beta = lambda * (g_plus * v);
    for (Eigen::Index i = 0; i < m; ++i) dW[i] = sqrt_dt * rng.normal();

    Eigen::VectorXd xn = sx.current() + fx * dt + gx * dW;
    Eigen::VectorXd yn = sy.current() + fy * dt + lambda * v * dt + gy * dW;
    if (!xn.allFinite() || !yn.allFinite()) throw IntegrationError("non-finite state", t + dt);
    const double beta_sq = beta.squaredNorm();
    path.tracker.int_beta_sq += beta_sq * dt;
    path.tracker.log_density += -beta.dot(dW) - 0.5 * beta_sq * dt;
    hx.push_back(std::move(xn));
    hy.push_back(std::move(yn));
    if ((k + 1) % options.record_every == 0 || k + 1 == steps) record(static_cast<double>(k + 1) * dt, K + k + 1);
  }
  return path;
}

}  // namespace

PairPath integrate_pair(const SfdeSpec& spec, const SegmentState& f, const SegmentState& g, double lambda, double T,
                        double dt, std::uint64_t seed, const IntegrationOptions& options) {
  Rng rng(seed);
  return integrate(spec, f, g, lambda, T, dt, rng, options);
}

std::vector<PairPath> integrate_pairs(const SfdeSpec& spec, const SegmentState& f, const SegmentState& g,
                                      double lambda, double T, double dt, std::uint64_t seed, std::size_t reps,
                                      std::size_t threads, const IntegrationOptions& options) {
  if (reps == 0) throw InputError("integrate pairs: reps must be positive");
  std::vector<PairPath> out(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    Rng rng = Rng::stream(seed, r);
    out[r] = integrate(spec, f, g, lambda, T, dt, rng, options);
  });
  return out;
}

namespace {

struct Fit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

Fit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  Fit fit;
  fit.points = x.size();
  if (x.size() < 2) return fit;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double residual = std::max(0.0, syy - fit.slope * sxy);
  fit.r_squared = syy > 0.0 ? 1.0 - residual / syy : 1.0;
  return fit;
}

ConvergenceReport fit_report(const std::vector<double>& times, const std::vector<double>& gaps,
                             const ContractionOptions& options, std::string quantity) {
  const double t_end = options.t_end < 0.0 ? std::numeric_limits<double>::infinity() : options.t_end;
  std::vector<double> x, y;
  bool hit_zero = false;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < options.t_begin || times[i] > t_end) continue;
    if (!(gaps[i] > 0.0)) {
      hit_zero = true;
      break;
    }
    x.push_back(times[i]);
    y.push_back(std::log(gaps[i]));
  }
  const Fit fit = least_squares(x, y);
  ConvergenceReport r;
  r.quantity = std::move(quantity);
  r.hypothesis = "|X(t) - Y(t)| -> 0 exponentially fast";
  r.tolerances = {{"rate_threshold", options.rate_threshold}, {"min_r_squared", options.min_r_squared}};
  r.columns = {"t", "gap"};
  Series s{"gap", "t", "gap", {}, {}};
  for (std::size_t i = 0; i < times.size(); ++i) {
    r.add_row({cell(times[i]), cell(gaps[i])});
    s.x.push_back(times[i]);
    s.y.push_back(gaps[i]);
  }
  r.series.push_back(std::move(s));
  r.statistics = {{"slope", fit.slope}, {"intercept", fit.intercept}, {"r_squared", fit.r_squared},
                  {"fit_points", static_cast<double>(fit.points)}};
  if (hit_zero) r.notes.push_back("gap reached 0; fit uses the window before that time");
  r.margin = -options.rate_threshold - fit.slope;
  if (fit.points < 2) {
    r.verdict = Verdict::inconclusive;
    r.notes.push_back("fewer than two usable points in the window");
  } else if (fit.slope <= -options.rate_threshold && fit.r_squared >= options.min_r_squared) {
    r.verdict = Verdict::supports;
  } else if (fit.slope > -options.rate_threshold) {
    r.verdict = Verdict::refutes;
  } else {
    r.verdict = Verdict::inconclusive;
    r.notes.push_back("decay rate passes but R^2 is below the threshold");
  }
  return r;
}

}  // namespace

ConvergenceReport contraction_report(const PairPath& path, const ContractionOptions& options) {
  return fit_report(path.times, path.gap, options, "log |X(t) - Y(t)| against t");
}

ConvergenceReport contraction_report(const std::vector<PairPath>& paths, const ContractionOptions& options) {
  if (paths.empty()) throw InputError("contraction report: no paths");
  if (!(options.quantile >= 0.0 && options.quantile <= 1.0)) throw InputError("contraction report: quantile outside [0,1]");
  const std::size_t n = paths.front().times.size();
  for (const PairPath& p : paths) {
    if (p.times != paths.front().times) throw InputError("contraction report: paths recorded on different grids");
  }
  std::vector<double> q(n), column(paths.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < paths.size(); ++r) column[r] = paths[r].gap[i];
    const auto k = static_cast<std::size_t>(std::llround(options.quantile * static_cast<double>(paths.size() - 1)));
    std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(k), column.end());
    q[i] = column[k];
  }
  ConvergenceReport r = fit_report(paths.front().times, q, options,
                                   "log of the " + format_number(options.quantile) + "-quantile of |X(t) - Y(t)| across reps");
  r.statistics.emplace_back("reps", static_cast<double>(paths.size()));
  return r;
}

ConvergenceReport girsanov_diagnostics(const std::vector<GirsanovTracker>& trackers, const GirsanovOptions& options) {
  ConvergenceReport r;
  r.quantity = "E exp(-int beta dW - 1/2 int |beta|^2 dt) and int |beta|^2 dt";
  r.hypothesis = "int |beta|^2 dt finite and the density has mean 1";
  r.tolerances = {{"beta_cap", options.beta_cap},
                  {"divergent_fraction", options.divergent_fraction},
                  {"half_widths", options.half_widths}};
  r.columns = {"rep", "int_beta_sq", "density"};
  const std::size_t n = trackers.size();
  std::vector<double> beta(n), density(n);
  std::size_t divergent = 0;
  for (std::size_t i = 0; i < n; ++i) {
    beta[i] = trackers[i].int_beta_sq;
    density[i] = std::exp(trackers[i].log_density);
    if (!std::isfinite(beta[i]) || beta[i] > options.beta_cap) ++divergent;
    r.add_row({cell(i), cell(beta[i]), cell(density[i])});
  }
  if (n == 0) {
    r.verdict = Verdict::inconclusive;
    r.notes.push_back("no repetitions");
    return r;
  }
  const double mean = std::accumulate(density.begin(), density.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double d : density) var += (d - mean) * (d - mean);
  var = n > 1 ? var / static_cast<double>(n - 1) : 0.0;
  const double hw = options.z * std::sqrt(var / static_cast<double>(n));
  std::vector<double> sorted = beta;
  std::sort(sorted.begin(), sorted.end());
  const auto quantile = [&](double p) { return sorted[static_cast<std::size_t>(std::llround(p * static_cast<double>(n - 1)))]; };
  const double fraction = static_cast<double>(divergent) / static_cast<double>(n);
  r.statistics = {{"density_mean", mean},
                  {"density_half_width", hw},
                  {"int_beta_sq_min", sorted.front()},
                  {"int_beta_sq_median", quantile(0.5)},
                  {"int_beta_sq_q90", quantile(0.9)},
                  {"int_beta_sq_max", sorted.back()},
                  {"divergent_fraction", fraction},
                  {"reps", static_cast<double>(n)}};
  r.margin = options.half_widths * hw - std::abs(mean - 1.0);
  if (n < options.min_reps) {
    r.verdict = Verdict::inconclusive;
    r.notes.push_back("fewer than " + std::to_string(options.min_reps) + " repetitions");
  } else if (fraction > options.divergent_fraction) {
    r.verdict = Verdict::refutes;
    r.notes.push_back(std::to_string(divergent) + " repetitions exceed the int_beta_sq cap");
  } else {
    r.verdict = std::abs(mean - 1.0) <= options.half_widths * hw ? Verdict::supports : Verdict::refutes;
  }
  return r;
}

void write_path_csv(std::ostream& out, const PairPath& path) {
  const std::size_t m = path.x.empty() ? 0 : static_cast<std::size_t>(path.x.front().size());
  out << 't';
  for (std::size_t i = 1; i <= m; ++i) out << ",x_" << i;
  for (std::size_t i = 1; i <= m; ++i) out << ",y_" << i;
  out << ",gap,int_beta_sq\n";
  for (std::size_t k = 0; k < path.times.size(); ++k) {
    out << format_number(path.times[k]);
    for (std::size_t i = 0; i < m; ++i) out << ',' << format_number(path.x[k][static_cast<Eigen::Index>(i)]);
    for (std::size_t i = 0; i < m; ++i) out << ',' << format_number(path.y[k][static_cast<Eigen::Index>(i)]);
    out << ',' << format_number(path.gap[k]) << ',' << format_number(path.int_beta_sq[k]) << '\n';
  }
}

}  // namespace couplab
