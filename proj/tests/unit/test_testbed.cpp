#include <cmath>

#include "couplab/diagnostics.hpp"
#include "couplab/errors.hpp"
#include "couplab/testbed.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace couplab;

TEST_CASE("catalog lists the seven examples first") {
  const auto& catalog = instance_catalog();
  REQUIRE(catalog.size() >= 7);
  for (int k = 0; k < 7; ++k) {
    CHECK(catalog[static_cast<std::size_t>(k)].id == "5." + std::to_string(k + 1));
    CHECK(catalog[static_cast<std::size_t>(k)].anchor == catalog[static_cast<std::size_t>(k)].id);
  }
  for (std::size_t k = 7; k < catalog.size(); ++k) CHECK(catalog[k].anchor.empty());
}

TEST_CASE("every catalog instance builds and passes its own assertions") {
  for (const CatalogEntry& e : instance_catalog()) {
    CAPTURE(e.id);
    const ExampleInstance inst = build_instance(e.id);
    CHECK((inst.chain || inst.sampler));
    CHECK_FALSE(inst.expected.empty());
    for (const AssertionOutcome& a : inst.run_assertions()) {
      CAPTURE(a.description);
      CAPTURE(a.detail);
      CHECK(a.passed);
    }
  }
}

TEST_CASE("unknown ids and out-of-range parameters are input errors") {
  CHECK_THROWS_AS(build_instance("5.8"), InputError);
  CHECK_THROWS_AS(build_instance("5.2", {{"colour", 1}}), InputError);
  CHECK_THROWS_AS(build_instance("5.5", {{"size", 0}}), InputError);
  CHECK_THROWS_AS(build_example("aperiodic-3"), InputError);
  CHECK_THROWS_AS(switching_by_name("cubic"), InputError);
}

TEST_CASE("flip example: permutation chain with invariant (1/2, 1/2), averages converge") {
  const ExampleInstance inst = build_example("5.2");
  REQUIRE(inst.chain);
  Eigen::MatrixXd flip(2, 2);
  flip << 0, 1, 1, 0;
  CHECK(inst.chain->matrix() == flip);
  const InvariantResult inv = invariant_measure(*inst.chain);
  CHECK(inv.unique);
  CHECK(inv.weights[0] == doctest::Approx(0.5));
  Eigen::VectorXd average = Eigen::VectorXd::Zero(2);
  for (std::size_t n = 0; n < 1000; ++n) average += inst.chain->n_step_row(0, n);
  CHECK(oracle::l1(average / 1000.0, inv.weights) <= 1e-12);
  CHECK(inst.chain->n_step_row(0, 1000)[0] == 1.0);
}

TEST_CASE("birth-death example at truncation 50 has the unique invariant law delta_0") {
  const ExampleInstance inst = build_example("5.5", {{"size", 50}});
  REQUIRE(inst.chain);
  CHECK(inst.chain->size() == 51);
  CHECK(inst.chain->matrix()(0, 0) == 1.0);
  CHECK(inst.chain->matrix()(10, 9) == doctest::Approx(1.0 / 3.0));
  CHECK(inst.chain->matrix()(10, 11) == doctest::Approx(2.0 / 3.0));
  const InvariantResult inv = invariant_measure(*inst.chain);
  CHECK(inv.unique);
  CHECK(inv.measure.mass_of({0.0}) == doctest::Approx(1.0));
}

TEST_CASE("doubling example at depth 12 keeps the uniform law exactly invariant") {
  const ExampleInstance inst = build_example("5.1", {{"depth", 12}});
  REQUIRE(inst.chain);
  CHECK(inst.chain->size() == 4095);
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(4095, 1.0 / 4095.0);
  CHECK(invariance_residual(*inst.chain, uniform) == 0.0);
}

TEST_CASE("switching off desynchronization keeps the components identical") {
  const SwitchingFunction zero_at_gap_zero = quartic_switching();
  const RotationFlipCoupling c(zero_at_gap_zero, 4181, 2584);
  couplab::Rng rng(1);
  RotationFlipCoupling::State s{17, 17, 1, 1};
  for (int k = 0; k < 5000; ++k) {
    s = c.step(s, rng);
    CHECK(s.kx == s.ky);
    CHECK(s.ix == s.iy);
  }
}

TEST_CASE("rotation-flip transitions after a mismatch: gap z, z + 2r, z - 2r with 1/2, 1/4, 1/4") {
  const RotationFlipCoupling c(quadratic_switching(), 89, 55);
  for (std::uint32_t g : {3u, 10u, 40u}) {
    const RotationFlipCoupling::State mismatch{0, g, 1, -1};
    std::map<std::uint32_t, double> law;
    for (const auto& t1 : c.transitions(mismatch)) {
      CHECK_FALSE(c.mismatched(t1.next));
      law[(t1.next.ky + 89 - t1.next.kx) % 89] += t1.probability;
    }
    // Resynchronizing moves the gap by +r or -r.
    CHECK(law.size() == 2);
    CHECK(law[(g + 55) % 89] == 0.5);
    CHECK(law[(g + 89 - 55) % 89] == 0.5);
  }
  const RotationFlipCoupling::State s{0, 20, 1, 1};
  std::map<std::uint32_t, double> law;
  double desync = 0.0;
  for (const auto& t1 : c.transitions(s)) {
    if (!c.mismatched(t1.next)) continue;
    desync += t1.probability;
    for (const auto& t2 : c.transitions(t1.next)) law[(t2.next.ky + 89 - t2.next.kx) % 89] += t1.probability * t2.probability;
  }
  CHECK(law[20] / desync == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(law[(20 + 110) % 89] / desync == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(law[(20 + 2 * (89 - 55)) % 89] / desync == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("holding time at a gap with p = 0.1 has mean 10") {
  const SwitchingFunction tenth{"0.1 off zero", [](double z) { return z == 0.0 ? 0.0 : 0.1; }};
  const RotationFlipCoupling c(tenth, 101, 37);
  couplab::Rng rng(2);
  double total = 0.0;
  const int reps = 10000;
  for (int r = 0; r < reps; ++r) total += static_cast<double>(c.holding_time({0, 9, 1, 1}, rng, 100000));
  CHECK(std::abs(total / reps - 10.0) <= 0.5);
}

TEST_CASE("rotation-flip coupling validates its switching function") {
  const SwitchingFunction bad{"1", [](double) { return 1.0; }};
  CHECK_THROWS_AS(RotationFlipCoupling(bad, 10, 3), InputError);
  CHECK_THROWS_AS(RotationFlipCoupling(quadratic_switching(), 10, 0), InputError);
  const SwitchingFunction zero{"0", [](double) { return 0.0; }};
  CHECK_THROWS_AS(RotationFlipCoupling(zero, 10, 3), InputError);
}

TEST_CASE("rotation-flip gap lives on the torus") {
  const RotationFlipCoupling c(quadratic_switching(), 100, 31);
  CHECK(c.gap({0, 0, 1, 1}) == 0.0);
  CHECK(c.gap({0, 90, 1, 1}) == doctest::Approx(0.1));
  CHECK(c.gap({90, 0, 1, 1}) == doctest::Approx(0.1));
  CHECK(c.gap({0, 50, 1, 1}) == doctest::Approx(0.5));
}

TEST_CASE("birth-death generalized pair hits 0 and stays there") {
  const PairSimulator sim = birth_death_generalized_pair(30, 4);
  couplab::Rng rng(3);
  std::size_t absorbed = 0;
  for (int r = 0; r < 200; ++r) {
    const WeightedPairTrajectory w = sim(80, rng);
    CHECK(w.y[80] == Point{0.0});
    CHECK(std::isfinite(w.log_density_1));
    if (w.x[80] == Point{0.0}) ++absorbed;
  }
  CHECK(absorbed >= 190);
}
