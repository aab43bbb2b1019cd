#include <cmath>
#include <sstream>

#include "couplab/errors.hpp"
#include "couplab/sdde.hpp"
#include "doctest.h"

using namespace couplab;

namespace {

SegmentState flat(std::size_t K, double v, std::size_t dim = 1) {
  return SegmentState::constant(K, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), v));
}

PairPath linear_pair(double lambda, double T, double dt, std::uint64_t seed, double a = 0.0) {
  const auto K = static_cast<std::size_t>(std::llround(1.0 / dt));
  return integrate_pair(sfde_model("linear", {{"a", a}}), flat(K, 0.5), flat(K, 0.0), lambda, T, dt, seed);
}

}  // namespace

TEST_CASE("segments validate their shape") {
  CHECK_THROWS_AS(SegmentState(0, {}), InputError);
  CHECK_THROWS_AS(SegmentState(2, {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)}), InputError);
  CHECK_THROWS_AS(SegmentState(1, {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(2)}), InputError);
  const SegmentState s = SegmentState::from_function(4, 1, [](double t) { return Eigen::VectorXd::Constant(1, t); });
  CHECK(s.values().front()[0] == -1.0);
  CHECK(s.values().back()[0] == 0.0);
  CHECK(SegmentView(s.values()).sup_norm() == 1.0);
  CHECK(SegmentView(s.values()).delayed()[0] == -1.0);
}

TEST_CASE("pseudo-inverse inverts regular matrices and handles singular ones") {
  Eigen::MatrixXd g(2, 2);
  g << 2, 1, 1, 3;
  CHECK((pseudo_inverse(g) * g - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
  Eigen::MatrixXd s(2, 2);
  s << 1, 0, 0, 0;
  Eigen::MatrixXd expected(2, 2);
  expected << 1, 0, 0, 0;
  CHECK((pseudo_inverse(s) - expected).cwiseAbs().maxCoeff() <= 1e-15);
  Eigen::MatrixXd tiny(2, 2);
  tiny << 1, 0, 0, 1e-14;
  CHECK(pseudo_inverse(tiny)(1, 1) == 0.0);
}

TEST_CASE("built-in models reject unknown names and parameters") {
  CHECK_THROWS_AS(sfde_model("cubic"), InputError);
  CHECK_THROWS_AS(sfde_model("linear", {{"b", 1}}), InputError);
  CHECK_THROWS_AS(sfde_model("linear", {{"sigma", 0}}), InputError);
  CHECK(sfde_model("delayed-sine", {{"dim", 3}}).dim == 3);
}

TEST_CASE("zero control leaves the density at 1 and the gap unchanged") {
  const PairPath p = linear_pair(0.0, 3.0, 0.01, 4);
  CHECK(p.tracker.log_density == 0.0);
  CHECK(p.tracker.int_beta_sq == 0.0);
  for (double g : p.gap) CHECK(g == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(contraction_report(p).verdict == Verdict::refutes);
}

TEST_CASE("linear pair follows the discrete contraction closed form") {
  // With shared noise and G = I, v = X - Y obeys v_{k+1} = (1 - lambda dt) v_k.
  const double lambda = 3.0, dt = 0.01, T = 2.0;
  const PairPath p = linear_pair(lambda, T, dt, 5);
  REQUIRE(p.times.size() == 201);
  double v = 0.5, ibs = 0.0;
  for (std::size_t k = 0; k < p.times.size(); ++k) {
    CHECK(p.gap[k] == doctest::Approx(v).epsilon(1e-9));
    CHECK(p.int_beta_sq[k] == doctest::Approx(ibs).epsilon(1e-9));
    ibs += lambda * lambda * v * v * dt;
    v *= 1.0 - lambda * dt;
  }
}

TEST_CASE("integrated control energy approaches lambda |v0|^2 / 2") {
  for (double lambda : {1.0, 5.0, 10.0}) {
    const PairPath p = linear_pair(lambda, 20.0 / lambda, 1e-3, 1);
    CHECK(std::abs(p.tracker.int_beta_sq / (lambda * 0.25 / 2.0) - 1.0) <= 0.05);
  }
}

TEST_CASE("fitted contraction slope is -lambda") {
  for (double lambda : {1.0, 5.0, 10.0}) {
    const ConvergenceReport r = contraction_report(linear_pair(lambda, 20.0 / lambda, 1e-3, 2));
    CHECK(r.statistic("slope") == doctest::Approx(-lambda).epsilon(0.02));
    CHECK(r.statistic("r_squared") >= 0.999);
    CHECK(r.verdict == Verdict::supports);
  }
}

TEST_CASE("uncontrolled decay at rate a is fitted with slope -a") {
  const ConvergenceReport r = contraction_report(linear_pair(0.0, 10.0, 1e-3, 3, 1.0));
  CHECK(r.statistic("slope") == doctest::Approx(-1.0).epsilon(0.01));
}

TEST_CASE("slope error shrinks under dt refinement") {
  double last = 1.0;
  for (double dt : {0.05, 0.01, 0.002}) {
    const double err = std::abs(contraction_report(linear_pair(5.0, 4.0, dt, 6)).statistic("slope") + 5.0);
    CHECK(err < last);
    last = err;
  }
}

TEST_CASE("integration is reproducible per seed") {
  const SfdeSpec spec = sfde_model("delayed-sine", {{"b", 2.0}});
  const PairPath a = integrate_pair(spec, flat(100, 0.5), flat(100, 0.0), 2.0, 3.0, 0.01, 9);
  const PairPath b = integrate_pair(spec, flat(100, 0.5), flat(100, 0.0), 2.0, 3.0, 0.01, 9);
  const PairPath c = integrate_pair(spec, flat(100, 0.5), flat(100, 0.0), 2.0, 3.0, 0.01, 10);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(a.tracker.log_density == b.tracker.log_density);
  CHECK(a.x != c.x);
  const auto many = integrate_pairs(spec, flat(100, 0.5), flat(100, 0.0), 2.0, 3.0, 0.01, 9, 8, 1);
  const auto threaded = integrate_pairs(spec, flat(100, 0.5), flat(100, 0.0), 2.0, 3.0, 0.01, 9, 8, 4);
  for (std::size_t r = 0; r < 8; ++r) CHECK(many[r].x == threaded[r].x);
}

TEST_CASE("control energy is nondecreasing along the path") {
  const SfdeSpec spec = sfde_model("logistic-delay");
  const PairPath p = integrate_pair(spec, flat(100, 0.5), flat(100, 0.1), 1.5, 5.0, 0.01, 11);
  for (std::size_t k = 1; k < p.int_beta_sq.size(); ++k) CHECK(p.int_beta_sq[k] >= p.int_beta_sq[k - 1]);
}

TEST_CASE("record_every keeps every k-th time and the endpoint") {
  IntegrationOptions o;
  o.record_every = 7;
  const PairPath p = integrate_pair(sfde_model("linear"), flat(10, 1.0), flat(10, 0.0), 1.0, 2.0, 0.1, 1, o);
  CHECK(p.times.front() == 0.0);
  CHECK(p.times.back() == doctest::Approx(2.0));
  CHECK(p.times.size() == 4);  // steps 0, 7, 14 and 20
}

TEST_CASE("integration errors") {
  const SfdeSpec linear = sfde_model("linear");
  CHECK_THROWS_AS(integrate_pair(linear, flat(3, 1.0), flat(3, 0.0), 1.0, 1.0, 0.3, 1), InputError);
  CHECK_THROWS_AS(integrate_pair(linear, flat(10, 1.0), flat(20, 0.0), 1.0, 1.0, 0.1, 1), InputError);
  CHECK_THROWS_AS(integrate_pair(linear, flat(10, 1.0), flat(10, 0.0), -1.0, 1.0, 0.1, 1), InputError);

  SfdeSpec blowup = linear;
  blowup.drift = [](const SegmentView& s) { return Eigen::VectorXd(1e200 * s.current().cwiseAbs2()); };
  try {
    integrate_pair(blowup, flat(10, 1.0), flat(10, 0.0), 1.0, 5.0, 0.1, 1);
    FAIL("expected an integration error");
  } catch (const IntegrationError& e) {
    CHECK(e.time() > 0.0);
  }

  SfdeSpec understated = linear;
  understated.g_inv_bound = 0.5;
  CHECK_THROWS_AS(integrate_pair(understated, flat(10, 1.0), flat(10, 0.0), 1.0, 1.0, 0.1, 1), ModelError);
}

TEST_CASE("a gap that hits 0 truncates the fit window") {
  SfdeSpec snap = sfde_model("linear");
  const PairPath p = integrate_pair(snap, flat(10, 0.5), flat(10, 0.0), 10.0, 2.0, 0.1, 1);
  // lambda dt = 1 closes the gap exactly after one step.
  CHECK(p.gap[1] == 0.0);
  const ConvergenceReport r = contraction_report(p);
  CHECK(r.verdict == Verdict::inconclusive);
  CHECK_FALSE(r.notes.empty());
}

TEST_CASE("Girsanov density has mean 1 within its CLT half-width") {
  const auto paths = integrate_pairs(sfde_model("linear"), flat(1000, 0.5), flat(1000, 0.0), 2.0, 5.0, 1e-3, 3, 200, 4);
  std::vector<GirsanovTracker> trackers;
  for (const PairPath& p : paths) trackers.push_back(p.tracker);
  const ConvergenceReport r = girsanov_diagnostics(trackers);
  CHECK(r.verdict == Verdict::supports);
  CHECK(std::abs(r.statistic("density_mean") - 1.0) <= 3.0 * r.statistic("density_half_width"));
  CHECK(r.statistic("divergent_fraction") == 0.0);
}

TEST_CASE("Girsanov diagnostics need enough reps and flag divergence") {
  std::vector<GirsanovTracker> few(5);
  CHECK(girsanov_diagnostics(few).verdict == Verdict::inconclusive);
  std::vector<GirsanovTracker> wild(50);
  for (std::size_t k = 0; k < 20; ++k) wild[k].int_beta_sq = 1e9;
  CHECK(girsanov_diagnostics(wild).verdict == Verdict::refutes);
}

TEST_CASE("contraction across reps uses the per-time quantile") {
  const auto paths = integrate_pairs(sfde_model("linear"), flat(100, 0.5), flat(100, 0.0), 2.0, 5.0, 0.01, 3, 10, 1);
  const ConvergenceReport r = contraction_report(paths);
  CHECK(r.statistic("reps") == 10.0);
  CHECK(r.statistic("slope") == doctest::Approx(std::log(1.0 - 0.02) / 0.01).epsilon(1e-6));
}

TEST_CASE("path CSV has one row per recorded time") {
  const PairPath p = linear_pair(1.0, 1.0, 0.1, 1);
  std::ostringstream out;
  write_path_csv(out, p);
  const std::string text = out.str();
  CHECK(text.rfind("t,x_1,y_1,gap,int_beta_sq\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<std::ptrdiff_t>(p.times.size() + 1));
}
