#include "couplab/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "couplab/errors.hpp"

namespace couplab {

namespace {

constexpr double kMassTolerance = 1e-9;

Eigen::VectorXd density(const Eigen::VectorXd& marginal, const Eigen::VectorXd& reference) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(marginal.size());
  for (Eigen::Index i = 0; i < marginal.size(); ++i) {
    if (reference[i] > 0.0) d[i] = marginal[i] / reference[i];
  }
  return d;
}

double lp_norm(const Eigen::VectorXd& dens, const Eigen::VectorXd& reference, double p) {
  if (!(p >= 1.0)) throw InputError("L^p norm: p must be at least 1");
  double s = 0.0;
  for (Eigen::Index i = 0; i < dens.size(); ++i) s += reference[i] * std::pow(dens[i], p);
  return std::pow(s, 1.0 / p);
}

Eigen::VectorXd outer_marginals_mass(const Eigen::MatrixXd& w, bool rows) {
  return rows ? Eigen::VectorXd(w.rowwise().sum()) : Eigen::VectorXd(w.colwise().sum().transpose());
}

}  // namespace

FiniteJointLaw::FiniteJointLaw(DiscreteMeasure p, DiscreteMeasure q, Eigen::MatrixXd weights)
    : p_(std::move(p)), q_(std::move(q)), weights_(std::move(weights)) {
  if (weights_.rows() != static_cast<Eigen::Index>(p_.size()) ||
      weights_.cols() != static_cast<Eigen::Index>(q_.size())) {
    throw InputError("joint law: weight matrix does not match the reference supports");
  }
  if (!weights_.allFinite() || (weights_.array() < 0.0).any()) throw InputError("joint law: negative weight");
  if (std::abs(weights_.sum() - 1.0) > kMassTolerance) {
    throw InputError("joint law: total mass " + std::to_string(weights_.sum()) + " is not 1");
  }
  const Eigen::VectorXd m1 = marginal1();
  const Eigen::VectorXd m2 = marginal2();
  for (std::size_t i = 0; i < p_.size(); ++i) {
    if (p_.weight(i) == 0.0 && m1[static_cast<Eigen::Index>(i)] > 0.0) {
      throw InputError("joint law: first marginal is not absolutely continuous w.r.t. its reference");
    }
  }
  for (std::size_t j = 0; j < q_.size(); ++j) {
    if (q_.weight(j) == 0.0 && m2[static_cast<Eigen::Index>(j)] > 0.0) {
      throw InputError("joint law: second marginal is not absolutely continuous w.r.t. its reference");
    }
  }
}

Eigen::VectorXd FiniteJointLaw::density1() const { return density(marginal1(), p_.weight_vector()); }
Eigen::VectorXd FiniteJointLaw::density2() const { return density(marginal2(), q_.weight_vector()); }
double FiniteJointLaw::lp_norm1(double p) const { return lp_norm(density1(), p_.weight_vector(), p); }
double FiniteJointLaw::lp_norm2(double p) const { return lp_norm(density2(), q_.weight_vector(), p); }

bool FiniteJointLaw::is_coupling(double tolerance) const {
  return (marginal1() - p_.weight_vector()).cwiseAbs().maxCoeff() <= tolerance &&
         (marginal2() - q_.weight_vector()).cwiseAbs().maxCoeff() <= tolerance;
}

double FiniteJointLaw::probability(const EventMask& event) const {
  if (event.rows() != weights_.rows() || event.cols() != weights_.cols()) throw InputError("joint law: event shape");
  return event.select(weights_.array(), 0.0).sum();
}

GeneralizedCouplingCert certify(const FiniteJointLaw& xi, double p, double R) {
  if (!(R >= 1.0)) throw InputError("certificate: R must be at least 1");
  GeneralizedCouplingCert cert;
  cert.p = p;
  cert.R = R;
  cert.lp_norm_1 = xi.lp_norm1(p);
  cert.lp_norm_2 = xi.lp_norm2(p);
  cert.member = cert.lp_norm_1 <= R * (1.0 + 1e-12) && cert.lp_norm_2 <= R * (1.0 + 1e-12);
  return cert;
}

FiniteJointLaw independent_coupling(const DiscreteMeasure& p, const DiscreteMeasure& q) {
  return FiniteJointLaw(p, q, p.weight_vector() * q.weight_vector().transpose());
}

namespace {

struct Restriction {
  std::vector<bool> in_b1, in_b2;
  Eigen::MatrixXd inside;  // xi restricted to C_gamma
  double leakage1 = 0.0, leakage2 = 0.0;
};

Restriction restrict_to_bounded_density(const FiniteJointLaw& xi, double gamma) {
  // Densities within rounding of 1/gamma count as bounded, so gamma = 1/d keeps d.
  const double level = (1.0 / gamma) * (1.0 + 1e-12);
  const Eigen::VectorXd d1 = xi.density1();
  const Eigen::VectorXd d2 = xi.density2();
  const Eigen::VectorXd m1 = xi.marginal1();
  const Eigen::VectorXd m2 = xi.marginal2();
  Restriction r;
  r.in_b1.resize(static_cast<std::size_t>(d1.size()));
  r.in_b2.resize(static_cast<std::size_t>(d2.size()));
  for (Eigen::Index i = 0; i < d1.size(); ++i) {
    r.in_b1[static_cast<std::size_t>(i)] = d1[i] <= level;
    if (!r.in_b1[static_cast<std::size_t>(i)]) r.leakage1 += m1[i];
  }
  for (Eigen::Index j = 0; j < d2.size(); ++j) {
    r.in_b2[static_cast<std::size_t>(j)] = d2[j] <= level;
    if (!r.in_b2[static_cast<std::size_t>(j)]) r.leakage2 += m2[j];
  }
  r.inside = xi.weights();
  for (Eigen::Index i = 0; i < r.inside.rows(); ++i) {
    for (Eigen::Index j = 0; j < r.inside.cols(); ++j) {
      if (!r.in_b1[static_cast<std::size_t>(i)] || !r.in_b2[static_cast<std::size_t>(j)]) r.inside(i, j) = 0.0;
    }
  }
  return r;
}

void require_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("split construction: gamma must lie in (0,1)");
}

}  // namespace

SplitResult split_construction_I(const FiniteJointLaw& xi, double gamma) {
  require_gamma(gamma);
  Restriction r = restrict_to_bounded_density(xi, gamma);
  const Eigen::MatrixXd eta = gamma * r.inside;
  SplitResult out;
  out.beta = eta.sum();
  out.leakage = std::max(0.0, 1.0 - r.inside.sum());
  out.leakage1 = r.leakage1;
  out.leakage2 = r.leakage2;
  // P - pi_1(eta) and Q - pi_2(eta) are nonnegative because eta's
  // marginal densities are at most gamma * (1/gamma) = 1.
  const Eigen::VectorXd rest1 =
      (xi.reference1().weight_vector() - outer_marginals_mass(eta, true)).cwiseMax(0.0);
  const Eigen::VectorXd rest2 =
      (xi.reference2().weight_vector() - outer_marginals_mass(eta, false)).cwiseMax(0.0);
  Eigen::MatrixXd zeta = eta + (rest1 * rest2.transpose()) / (1.0 - out.beta);
  out.zeta = CouplingPlan(xi.reference1().points(), xi.reference2().points(), std::move(zeta));
  out.in_b1 = std::move(r.in_b1);
  out.in_b2 = std::move(r.in_b2);
  return out;
}

double admissible_gamma_I(double p, double R, double alpha) {
  if (!(p > 1.0)) throw InputError("admissible gamma: p must exceed 1");
  if (!(R > 0.0) || !(alpha > 0.0)) throw InputError("admissible gamma: R and alpha must be positive");
  const double gamma = std::pow(alpha / (4.0 * std::pow(R, p)), 1.0 / (p - 1.0));
  return std::min(gamma, std::nextafter(1.0, 0.0));
}

SplitIIResult split_construction_II(const FiniteJointLaw& xi, double gamma, double alpha, double p) {
  require_gamma(gamma);
  if (!(alpha > 0.0)) throw InputError("split construction II: alpha must be positive");
  SplitIIResult out;
  out.alpha = alpha;

  // Leakage only changes where 1/gamma crosses a density value, so the
  // largest admissible gamma is found among those crossings.
  std::vector<double> candidates{std::nextafter(1.0, 0.0)};
  for (const Eigen::VectorXd& d : {xi.density1(), xi.density2()}) {
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if (d[i] > 1.0) candidates.push_back(1.0 / d[i]);
    }
  }
  std::sort(candidates.begin(), candidates.end(), std::greater<>());
  for (double g : candidates) {
    const Restriction r = restrict_to_bounded_density(xi, g);
    if (1.0 - r.inside.sum() <= alpha / 2.0) {
      out.max_admissible_gamma = g;
      break;
    }
  }

  Restriction r = restrict_to_bounded_density(xi, gamma);
  out.leakage = std::max(0.0, 1.0 - r.inside.sum());
  out.admissible = out.leakage <= alpha / 2.0;
  if (!out.admissible) return out;

  const Eigen::MatrixXd& eta = r.inside;
  const double beta = gamma * eta.sum();
  const double inv = 1.0 / gamma;
  const Eigen::VectorXd rest1 =
      (inv * xi.reference1().weight_vector() - outer_marginals_mass(eta, true)).cwiseMax(0.0);
  const Eigen::VectorXd rest2 =
      (inv * xi.reference2().weight_vector() - outer_marginals_mass(eta, false)).cwiseMax(0.0);
  const double scale = inv * (1.0 - beta);
  const double coefficient = std::max(0.0, 1.0 - inv * beta) / (scale * scale);
  Eigen::MatrixXd zeta = eta + coefficient * (rest1 * rest2.transpose());
  zeta /= zeta.sum();  // absorbs rounding only; the construction has unit mass
  out.zeta.emplace(xi.reference1(), xi.reference2(), std::move(zeta));
  out.cert = certify(*out.zeta, p, inv);
  return out;
}

MixtureResult conditional_mixture(const CouplingPlan& xi, const EventMask& event) {
  const Eigen::MatrixXd& w = xi.weights();
  if (event.rows() != w.rows() || event.cols() != w.cols()) throw InputError("conditional mixture: event shape");
  MixtureResult out;
  out.success = event.select(w.array(), 0.0).sum();
  const double failure = w.sum() - out.success;
  if (out.success <= 0.0 || failure <= 0.0) {
    out.plan = xi;
    out.degenerate = true;
    return out;
  }
  const Eigen::MatrixXd inside = event.select(w.array(), 0.0).matrix();
  const Eigen::MatrixXd outside = w - inside;
  const Eigen::VectorXd out1 = outside.rowwise().sum();
  const Eigen::VectorXd out2 = outside.colwise().sum().transpose();
  Eigen::MatrixXd mixed = inside + (out1 * out2.transpose()) / failure;
  out.plan = CouplingPlan(xi.row_support(), xi.col_support(), std::move(mixed));

  const Eigen::VectorXd m1 = xi.row_marginal();
  const Eigen::VectorXd m2 = xi.col_marginal();
  for (Eigen::Index i = 0; i < m1.size(); ++i) {
    if (m1[i] > 0.0) out.max_conditional_density = std::max(out.max_conditional_density, out1[i] / failure / m1[i]);
  }
  for (Eigen::Index j = 0; j < m2.size(); ++j) {
    if (m2[j] > 0.0) out.max_conditional_density = std::max(out.max_conditional_density, out2[j] / failure / m2[j]);
  }
  return out;
}

EventMask closeness_event(const CouplingPlan& plan, const Metric& d, double eps) {
  EventMask mask(static_cast<Eigen::Index>(plan.row_support().size()),
                 static_cast<Eigen::Index>(plan.col_support().size()));
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      mask(i, j) = d(plan.row_support()[static_cast<std::size_t>(i)], plan.col_support()[static_cast<std::size_t>(j)]) <= eps;
    }
  }
  return mask;
}

CouplingPlan product_coupling(const CouplingPlan& xi1, const CouplingPlan& xi2) {
  const auto concat = [](const std::vector<Point>& a, const std::vector<Point>& b) {
    std::vector<Point> out;
    out.reserve(a.size() * b.size());
    for (const Point& p : a) {
      for (const Point& q : b) {
        Point joined = p;
        joined.insert(joined.end(), q.begin(), q.end());
        out.push_back(std::move(joined));
      }
    }
    return out;
  };
  const Eigen::MatrixXd& w1 = xi1.weights();
  const Eigen::MatrixXd& w2 = xi2.weights();
  Eigen::MatrixXd w(w1.rows() * w2.rows(), w1.cols() * w2.cols());
  for (Eigen::Index i = 0; i < w1.rows(); ++i) {
    for (Eigen::Index j = 0; j < w1.cols(); ++j) {
      w.block(i * w2.rows(), j * w2.cols(), w2.rows(), w2.cols()) = w1(i, j) * w2;
    }
  }
  return CouplingPlan(concat(xi1.row_support(), xi2.row_support()), concat(xi1.col_support(), xi2.col_support()),
                      std::move(w));
}

Metric product_min_metric(const Metric& d, std::size_t first_dim) {
  auto fn = d.fn;
  return Metric{"min(" + d.name + ")",
                [fn, first_dim](const Point& a, const Point& b) {
                  if (a.size() < first_dim || b.size() < first_dim) throw InputError("product metric: short point");
                  const Point x(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(first_dim));
                  const Point u(a.begin() + static_cast<std::ptrdiff_t>(first_dim), a.end());
                  const Point y(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(first_dim));
                  const Point v(b.begin() + static_cast<std::ptrdiff_t>(first_dim), b.end());
                  return std::min(fn(x, y), fn(u, v));
                },
                d.bound};
}

PairSimulator synchronous_pair(const SamplerChain& chain, Point x, Point y) {
  return [chain, x = std::move(x), y = std::move(y)](std::size_t horizon, Rng& rng) {
    WeightedPairTrajectory out;
    out.x.states.reserve(horizon + 1);
    out.y.states.reserve(horizon + 1);
    out.x.states.push_back(x);
    out.y.states.push_back(y);
    for (std::size_t k = 0; k < horizon; ++k) {
      Rng shared = Rng::stream(rng.next(), k);
      Rng copy = shared;
      out.x.states.push_back(chain.step(out.x.states.back(), shared));
      out.y.states.push_back(chain.step(out.y.states.back(), copy));
    }
    return out;
  };
}

PairSimulator independent_pair(const FiniteChain& chain, std::size_t x, std::size_t y) {
  if (x >= chain.size() || y >= chain.size()) throw InputError("independent pair: unknown state");
  auto shared = std::make_shared<const FiniteChain>(chain);
  return [shared, x, y](std::size_t horizon, Rng& rng) {
    const FiniteChain& chain = *shared;
    WeightedPairTrajectory out;
    Rng rx = Rng::stream(rng.next(), 0);
    Rng ry = Rng::stream(rng.next(), 1);
    std::size_t a = x, b = y;
    out.x.states.reserve(horizon + 1);
    out.y.states.reserve(horizon + 1);
    out.x.states.push_back(chain.point(a));
    out.y.states.push_back(chain.point(b));
    for (std::size_t k = 0; k < horizon; ++k) {
      a = sample_row(chain, a, rx);
      b = sample_row(chain, b, ry);
      out.x.states.push_back(chain.point(a));
      out.y.states.push_back(chain.point(b));
    }
    return out;
  };
}

double log_path_density(const FiniteChain& reference, const FiniteChain& proposal,
                        const std::vector<std::size_t>& path) {
  if (reference.size() != proposal.size()) throw InputError("path density: chains differ in size");
  double log_density = 0.0;
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const auto from = static_cast<Eigen::Index>(path[k]);
    const auto to = static_cast<Eigen::Index>(path[k + 1]);
    const double q = proposal.matrix()(from, to);
    const double p = reference.matrix()(from, to);
    if (q == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 0.0) throw InputError("path density: proposal is not absolutely continuous w.r.t. the reference");
    log_density += std::log(q / p);
  }
  return log_density;
}

DiscreteMeasure enumerate_paths(const FiniteChain& chain, std::size_t x, std::size_t horizon, std::size_t max_paths) {
  if (x >= chain.size()) throw InputError("enumerate paths: unknown state");
  std::vector<Point> paths{Point{static_cast<double>(x)}};
  std::vector<double> probs{1.0};
  for (std::size_t step = 0; step < horizon; ++step) {
    std::vector<Point> next_paths;
    std::vector<double> next_probs;
    for (std::size_t k = 0; k < paths.size(); ++k) {
      const auto from = static_cast<Eigen::Index>(paths[k].back());
      for (Eigen::Index to = 0; to < chain.matrix().cols(); ++to) {
        const double p = chain.matrix()(from, to);
        if (p <= 0.0) continue;
        if (next_paths.size() == max_paths) throw ResourceError("enumerate paths: more than max_paths paths");
        Point extended = paths[k];
        extended.push_back(static_cast<double>(to));
        next_paths.push_back(std::move(extended));
        next_probs.push_back(probs[k] * p);
      }
    }
    paths = std::move(next_paths);
    probs = std::move(next_probs);
  }
  return DiscreteMeasure(std::move(paths), std::move(probs));
}

}  // namespace couplab
