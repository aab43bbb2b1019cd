#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>

#include "couplab/diagnostics.hpp"
#include "couplab/errors.hpp"
#include "couplab/testbed.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace couplab;

namespace {

FiniteChain chain_of(std::string_view id, const InstanceParams& params = {}) {
  ExampleInstance inst = build_instance(id, params);
  REQUIRE(inst.chain);
  return *inst.chain;
}

std::vector<std::size_t> range(std::size_t from, std::size_t to) {
  std::vector<std::size_t> out;
  for (std::size_t n = from; n <= to; ++n) out.push_back(n);
  return out;
}

double column(const ConvergenceReport& r, std::size_t row, std::string_view name) {
  for (std::size_t c = 0; c < r.columns.size(); ++c)
    if (r.columns[c] == name) return std::stod(r.rows.at(row).at(c));
  FAIL("missing column " << name);
  return 0.0;
}

}  // namespace

TEST_CASE("gamma on the diagonal is 1") {
  couplab::Rng rng(1);
  const FiniteChain chain = oracle::random_chain(rng, 6);
  const Metric d = metrics::euclidean_truncated();
  for (std::size_t x = 0; x < 6; ++x)
    for (double eps : {0.0, 0.01, 0.5}) CHECK(gamma(chain, d, x, x, 3, eps) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("flip chain: opposite states are never eps-close below 1") {
  const FiniteChain flip = chain_of("5.2");
  const Metric d = metrics::euclidean_truncated();
  for (std::size_t n = 0; n <= 9; ++n)
    for (double eps : {0.01, 0.5, 0.99}) CHECK(gamma(flip, d, 0, 1, n, eps) == 0.0);
}

TEST_CASE("gamma at eps = 0 is one minus half the total variation, by vertex enumeration") {
  couplab::Rng rng(2);
  const Metric d = metrics::euclidean_truncated();
  for (int t = 0; t < 40; ++t) {
    const FiniteChain chain = oracle::random_chain(rng, 3, 0.2);
    const Eigen::VectorXd a = chain.n_step_row(0, 2), b = chain.n_step_row(2, 2);
    Eigen::MatrixXd c = Eigen::MatrixXd::Ones(3, 3) - Eigen::MatrixXd::Identity(3, 3);
    const double g = gamma(chain, d, 0, 2, 2, 0.0);
    CHECK(std::abs(g - (1.0 - oracle::transport_by_vertices(a, b, c))) <= 1e-10);
    CHECK(std::abs(g - (1.0 - oracle::l1(a, b) / 2.0)) <= 1e-12);
  }
}

TEST_CASE("gamma tables are symmetric, in [0,1] and nondecreasing in eps") {
  couplab::Rng rng(3);
  const Metric d = metrics::euclidean_truncated();
  const std::vector<double> eps{0.05, 0.1, 0.2, 0.4};
  for (int t = 0; t < 10; ++t) {
    const FiniteChain chain = oracle::random_chain(rng, 2 + rng.index(6));
    const GammaTable table = gamma_table(chain, d, all_pairs(chain.size()), {1, 2, 5}, eps);
    CHECK(table.invariant_violation() == 0.0);
    for (std::size_t p = 0; p < table.pairs().size(); ++p) {
      const StatePair s = table.pairs()[p];
      const auto mirror = std::find(table.pairs().begin(), table.pairs().end(), StatePair{s.y, s.x});
      REQUIRE(mirror != table.pairs().end());
      const auto q = static_cast<std::size_t>(mirror - table.pairs().begin());
      for (std::size_t h = 0; h < 3; ++h)
        for (std::size_t e = 0; e < eps.size(); ++e) CHECK(table.value(p, h, e) == table.value(q, h, e));
    }
  }
}

TEST_CASE("gamma tables do not depend on the thread count") {
  couplab::Rng rng(4);
  const FiniteChain chain = oracle::random_chain(rng, 7);
  const Metric d = metrics::euclidean_truncated();
  DiagnosticOptions many;
  many.threads = 4;
  const GammaTable a = gamma_table(chain, d, all_pairs(7), {1, 3, 8}, {0.1, 0.3});
  const GammaTable b = gamma_table(chain, d, all_pairs(7), {1, 3, 8}, {0.1, 0.3}, many);
  for (std::size_t p = 0; p < a.pairs().size(); ++p)
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t e = 0; e < 2; ++e) CHECK(a.value(p, h, e) == b.value(p, h, e));
}

TEST_CASE("gamma obeys the Markov-type bound from the KR distance") {
  couplab::Rng rng(5);
  const Metric d = metrics::euclidean_truncated();
  for (int t = 0; t < 30; ++t) {
    const FiniteChain chain = oracle::random_chain(rng, 2 + rng.index(6));
    const std::size_t x = rng.index(chain.size()), y = rng.index(chain.size()), n = rng.index(5);
    const double kr = kr_distance(n_step_law(chain, x, n), n_step_law(chain, y, n), d);
    for (double eps : {0.1, 0.5, 1.0}) CHECK(gamma(chain, d, x, y, n, eps) >= 1.0 - kr / eps - 1e-12);
  }
}

TEST_CASE("Gamma is 1 when every row is identical") {
  Eigen::MatrixXd p(3, 3);
  p << 0.2, 0.3, 0.5, 0.2, 0.3, 0.5, 0.2, 0.3, 0.5;
  const FiniteChain chain({{0.0}, {0.5}, {1.0}}, p);
  const DiscreteMeasure mu = invariant_measure(chain).measure;
  for (std::size_t n : {1u, 2u, 7u})
    for (double eps : {0.0, 0.1}) CHECK(big_gamma(chain, metrics::euclidean_truncated(), mu, n, eps).value == doctest::Approx(1.0));
}

TEST_CASE("Gamma of the flip chain is exactly 1/2") {
  const FiniteChain flip = chain_of("5.2");
  const DiscreteMeasure mu = invariant_measure(flip).measure;
  for (std::size_t n = 0; n <= 12; ++n)
    for (double eps : {0.1, 0.5, 0.9}) CHECK(std::abs(big_gamma(flip, metrics::euclidean_truncated(), mu, n, eps).value - 0.5) <= 1e-9);
}

TEST_CASE("Gamma at n = 0 with small eps is the sum of squared weights") {
  couplab::Rng rng(6);
  const FiniteChain chain = oracle::random_chain(rng, 6, 0.0);
  const InvariantResult inv = invariant_measure(chain);
  const BigGammaResult r = big_gamma(chain, metrics::euclidean_truncated(), inv.measure, 0, 0.01);
  CHECK(r.value == doctest::Approx(inv.weights.squaredNorm()).epsilon(1e-12));
  CHECK(r.invariant);
  const BigGammaResult off = big_gamma(chain, metrics::euclidean_truncated(), DiscreteMeasure::dirac({0.0}), 1, 0.1);
  CHECK_FALSE(off.invariant);
}

TEST_CASE("Gamma is nondecreasing in n on random chains") {
  couplab::Rng rng(7);
  const Metric d = metrics::euclidean_truncated();
  for (int t = 0; t < 10; ++t) {
    const FiniteChain chain = oracle::random_chain(rng, 2 + rng.index(8));
    const DiscreteMeasure mu = invariant_measure(chain).measure;
    for (double eps : {0.05, 0.3}) {
      double last = 0.0;
      for (std::size_t n = 0; n <= 12; ++n) {
        const double g = big_gamma(chain, d, mu, n, eps).value;
        CHECK(g >= last - 1e-9);
        last = g;
      }
    }
  }
}

TEST_CASE("conv1 condition on an aperiodic 3-state chain supports with gamma near 1") {
  const FiniteChain chain = chain_of("aperiodic-3");
  const InvariantResult inv = invariant_measure(chain);
  const GammaTable table = gamma_table(chain, metrics::euclidean_truncated(), all_pairs(3), {1, 2, 4, 8, 16, 32}, {0.5, 0.1, 0.01});
  const ConvergenceReport r = check_conv1_condition(table, inv.weights);
  CHECK(r.verdict == Verdict::supports);
  for (std::size_t p = 0; p < table.pairs().size(); ++p) CHECK(table.gamma_limit(p) >= 0.99);
}

TEST_CASE("conv1 condition on the flip chain refutes with off-diagonal gamma 0") {
  const FiniteChain flip = chain_of("5.2");
  const GammaTable table = gamma_table(flip, metrics::euclidean_truncated(), all_pairs(2), range(1, 8), {0.5, 0.1});
  const ConvergenceReport r = check_conv1_condition(table, invariant_measure(flip).weights);
  CHECK(r.verdict == Verdict::refutes);
  for (std::size_t p = 0; p < table.pairs().size(); ++p) {
    const StatePair s = table.pairs()[p];
    CHECK(table.gamma_limit(p) == (s.x == s.y ? 1.0 : 0.0));
  }
}

TEST_CASE("conv1 condition on a single state supports; short grids are inconclusive") {
  const FiniteChain one = chain_of("single-state");
  const GammaTable table = gamma_table(one, metrics::euclidean_truncated(), all_pairs(1), {1, 2, 3, 4}, {0.1});
  const ConvergenceReport r = check_conv1_condition(table, Eigen::VectorXd::Ones(1));
  CHECK(r.verdict == Verdict::supports);
  CHECK(table.gamma_limit(0) == 1.0);
  const GammaTable shorter = gamma_table(one, metrics::euclidean_truncated(), all_pairs(1), {1, 2, 3}, {0.1});
  CHECK(check_conv1_condition(shorter, Eigen::VectorXd::Ones(1)).verdict == Verdict::inconclusive);
}

TEST_CASE("time-average occupation of a synchronous pair started together is 1") {
  const ExampleInstance inst = build_instance("5.1");
  MonteCarloOptions mc;
  mc.reps = 50;
  const ConvergenceReport r = check_unique_condition(synchronous_pair(*inst.sampler, {0.3}, {0.3}),
                                                     metrics::euclidean_truncated(), 0.01, 200, mc);
  CHECK(r.verdict == Verdict::supports);
  CHECK(r.statistic("limsup_time_average") == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("conv2 condition supports a deterministic contraction for every eps") {
  const PairSimulator halving = [](std::size_t horizon, couplab::Rng&) {
    WeightedPairTrajectory w;
    for (std::size_t n = 0; n <= horizon; ++n) {
      w.x.states.push_back({0.0});
      w.y.states.push_back({0.7 * std::ldexp(1.0, -static_cast<int>(n))});
    }
    return w;
  };
  MonteCarloOptions mc;
  mc.reps = 20;
  const ConvergenceReport r =
      check_conv2_condition(halving, metrics::euclidean_truncated(), {0.1, 0.01, 0.001}, range(1, 40), mc);
  CHECK(r.verdict == Verdict::supports);
}

TEST_CASE("conv2 condition supports the generalized coupling of the birth-death walk to 0") {
  const ExampleInstance inst = build_instance("5.5");
  REQUIRE(inst.pair);
  MonteCarloOptions mc;
  mc.reps = 200;
  const ConvergenceReport r =
      check_conv2_condition(*inst.pair, inst.metric.d, {0.5}, {10, 20, 40, 60, 80, 100}, mc);
  CHECK(r.verdict == Verdict::supports);
  // The chain itself keeps mass away from 0 from the same start.
  CHECK(n_step_law(*inst.chain, 5, 100).mass_of({0.0}) < 0.5);
}

TEST_CASE("weak convergence in probability on an aperiodic chain") {
  const FiniteChain chain = chain_of("aperiodic-3");
  const DiscreteMeasure mu = invariant_measure(chain).measure;
  const ConvergenceReport r = weak_in_prob_estimate(chain, metrics::euclidean_truncated(), mu, range(0, 30), 0.01);
  CHECK(r.verdict == Verdict::supports);
  CHECK(r.statistic("final_mass") == 0.0);
  for (std::size_t row = 0; row < r.rows.size(); ++row) CHECK(column(r, row, "mass") <= column(r, row, "markov_bound") + 1e-12);
}

TEST_CASE("flip chain keeps all of its mass away from mu at odd n") {
  const FiniteChain flip = chain_of("5.2");
  const DiscreteMeasure mu = invariant_measure(flip).measure;
  const ConvergenceReport r = weak_in_prob_estimate(flip, metrics::euclidean_truncated(), mu, {1, 3, 5, 7, 9, 11}, 0.49);
  for (std::size_t row = 0; row < r.rows.size(); ++row) {
    CHECK(std::abs(column(r, row, "mass") - 1.0) <= 1e-9);
    CHECK(std::abs(column(r, row, "mean_distance") - 0.5) <= 1e-9);
  }
  CHECK(r.verdict == Verdict::refutes);
}

TEST_CASE("weak-in-probability mass is 0 at n = 0 when eps exceeds the diameter") {
  couplab::Rng rng(8);
  const FiniteChain chain = oracle::random_chain(rng, 5, 0.0);
  const DiscreteMeasure mu = invariant_measure(chain).measure;
  CHECK(weak_in_prob_estimate(chain, metrics::euclidean_truncated(), mu, {0}, 1.5).statistic("final_mass") == 0.0);
}

TEST_CASE("covariance of a constant function is 0") {
  couplab::Rng rng(9);
  const FiniteChain chain = oracle::random_chain(rng, 5);
  const DiscreteMeasure mu = invariant_measure(chain).measure;
  const ConvergenceReport r =
      mixing_estimate(chain, mu, [](const Point&) { return 3.0; }, [](const Point& x) { return x[0]; }, range(0, 10));
  CHECK(r.statistic("max_abs_covariance") <= 1e-12);
}

TEST_CASE("flip chain covariance oscillates at +-1/4 without decay") {
  const FiniteChain flip = chain_of("5.2");
  const DiscreteMeasure mu = invariant_measure(flip).measure;
  const StateFunction at0 = [](const Point& x) { return x[0] == 0.0 ? 1.0 : 0.0; };
  const ConvergenceReport r = mixing_estimate(flip, mu, at0, at0, range(0, 40));
  for (std::size_t row = 0; row < r.rows.size(); ++row) {
    const double lag = column(r, row, "lag");
    CHECK(std::abs(column(r, row, "covariance") - (std::fmod(lag, 2.0) == 0.0 ? 0.25 : -0.25)) <= 1e-9);
  }
  CHECK(r.verdict == Verdict::refutes);
}

TEST_CASE("covariance decays at the second-eigenvalue rate") {
  couplab::Rng rng(10);
  for (int t = 0; t < 10; ++t) {
    const FiniteChain chain = oracle::random_chain(rng, 5, 0.0);
    const InvariantResult inv = invariant_measure(chain);
    const StateFunction f = [](const Point& x) { return x[0]; };
    const StateFunction g = [](const Point& x) { return x[0] * x[0]; };
    // Oracle: P^n = V D^n V^{-1}, so the covariance is sum_k c_k lambda_k^n
    // over the non-unit eigenvalues.
    Eigen::EigenSolver<Eigen::MatrixXd> es(chain.matrix());
    const Eigen::MatrixXcd V = es.eigenvectors();
    const Eigen::MatrixXcd Vinv = V.inverse();
    const Eigen::VectorXcd lambda = es.eigenvalues();
    Eigen::VectorXd fv(5), gv(5);
    for (Eigen::Index i = 0; i < 5; ++i) fv[i] = f(chain.point(static_cast<std::size_t>(i))), gv[i] = g(chain.point(static_cast<std::size_t>(i)));
    const Eigen::VectorXcd left = V.transpose() * inv.weights.cwiseProduct(fv).cast<std::complex<double>>();
    const Eigen::VectorXcd right = Vinv * gv.cast<std::complex<double>>();
    double C = 0.0, lambda2 = 0.0;
    for (Eigen::Index k = 0; k < 5; ++k) {
      if (std::abs(lambda[k] - 1.0) < 1e-9) continue;
      C += std::abs(left[k] * right[k]);
      lambda2 = std::max(lambda2, std::abs(lambda[k]));
    }
    const ConvergenceReport r = mixing_estimate(chain, inv.measure, f, g, range(1, 50));
    for (std::size_t row = 0; row < r.rows.size(); ++row) {
      const double n = column(r, row, "lag");
      CHECK(std::abs(column(r, row, "covariance")) <= C * std::pow(lambda2, n) + 1e-12);
    }
    CHECK(r.verdict == Verdict::supports);
  }
}

TEST_CASE("supermartingale inequality holds on random chains") {
  couplab::Rng rng(11);
  const Metric d = metrics::euclidean_truncated();
  for (int t = 0; t < 8; ++t) {
    const FiniteChain chain = oracle::random_chain(rng, 2 + rng.index(6));
    const ConvergenceReport r = supermartingale_check(chain, d, invariant_measure(chain).measure, range(0, 6), {0.05, 0.2, 0.5});
    CHECK(r.statistic("worst_margin") >= -1e-9);
    CHECK(r.verdict == Verdict::supports);
  }
}

TEST_CASE("supermartingale margins vanish when eps exceeds the diameter") {
  couplab::Rng rng(12);
  const FiniteChain chain = oracle::random_chain(rng, 4);
  const ConvergenceReport r =
      supermartingale_check(chain, metrics::euclidean_truncated(), invariant_measure(chain).measure, range(0, 4), {1.0});
  CHECK(std::abs(r.statistic("worst_margin")) <= 1e-12);
}

TEST_CASE("flip chain supermartingale margins are nonnegative with exact zeros") {
  const FiniteChain flip = chain_of("5.2");
  const ConvergenceReport r =
      supermartingale_check(flip, metrics::euclidean_truncated(), invariant_measure(flip).measure, range(0, 6), {0.5});
  CHECK(r.statistic("worst_margin") >= 0.0);
  CHECK(r.statistic("zero_margins") > 0.0);
}

TEST_CASE("e-chain probe: identity supports, staircase refutes, contraction supports") {
  const std::vector<double> radii{1.0, 0.5, 0.25, 0.125, 0.07};
  const FiniteChain id = chain_of("identity", {{"size", 16}});
  CHECK(e_chain_probe(id, metrics::euclidean_truncated(), 0, radii, range(0, 10)).verdict == Verdict::supports);

  const FiniteChain stairs = chain_of("5.4", {{"depth", 10}});
  std::vector<double> dyadic;
  for (int j = 0; j <= 10; ++j) dyadic.push_back(std::ldexp(1.0, -j));
  const ConvergenceReport refuted = e_chain_probe(stairs, metrics::euclidean_truncated(), 0, dyadic, range(0, 12));
  CHECK(refuted.verdict == Verdict::refutes);
  CHECK(refuted.statistic("sup_distance") >= 0.5 - 1e-9);

  const FiniteChain contraction = chain_of("contraction-16");
  CHECK(e_chain_probe(contraction, metrics::euclidean_truncated(), 0, radii, range(0, 20)).verdict == Verdict::supports);
}

TEST_CASE("staircase laws reach delta_0 in total variation on the truncation") {
  const FiniteChain stairs = chain_of("5.4", {{"depth", 10}});
  for (std::size_t x = 0; x < stairs.size(); ++x) CHECK(n_step_law(stairs, x, 11).mass_of({0.0}) == 1.0);
}

TEST_CASE("diagnostics reject bad inputs") {
  const FiniteChain flip = chain_of("5.2");
  CHECK_THROWS_AS(gamma(flip, metrics::euclidean_truncated(), 0, 5, 1, 0.1), InputError);
  CHECK_THROWS_AS(state_weights(flip, DiscreteMeasure::dirac({0.5})), InputError);
  CHECK_THROWS_AS(weak_in_prob_estimate(flip, metrics::euclidean_truncated(), DiscreteMeasure::dirac({0.0}), {}, 0.1),
                  InputError);
}
