#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "couplab/chain.hpp"
#include "couplab/coupling.hpp"
#include "couplab/metric.hpp"

namespace couplab {

// Instance parameters by key; unknown keys are rejected by build_instance.
using InstanceParams = std::map<std::string, double>;

struct AssertionOutcome {
  std::string description;
  bool passed = false;
  std::string detail;
};

struct Assertion {
  std::string description;
  // Returns pass/fail and fills `detail` with the measured quantity.
  std::function<bool(std::string& detail)> check;
};

struct ExampleInstance {
  std::string id;      // "5.1" .. "5.7" or a named chain such as "aperiodic-3"
  std::string anchor;  // catalog anchor, e.g. "5.4"; empty for named chains
  std::string title;
  std::string expected;  // expected behavior in prose
  InstanceParams params;  // effective parameters, defaults filled in
  std::optional<FiniteChain> chain;
  std::optional<SamplerChain> sampler;
  MetricPair metric;
  // Default starting pair and pair simulator for the Monte-Carlo checks.
  std::optional<PairSimulator> pair;
  std::vector<Assertion> assertions;

  std::vector<AssertionOutcome> run_assertions() const;
};

struct CatalogEntry {
  std::string id;
  std::string anchor;
  std::string description;
  std::map<std::string, double> defaults;
};

// Every buildable instance in a fixed order: the seven examples first.
const std::vector<CatalogEntry>& instance_catalog();

// Builds and self-validates an instance (row sums via FiniteChain, metric
// axioms on the state points). Throws InputError for an unknown id or
// parameters outside their documented ranges.
ExampleInstance build_instance(std::string_view id, const InstanceParams& params = {});

// Same as build_instance restricted to the seven example ids.
ExampleInstance build_example(std::string_view id, const InstanceParams& params = {});

// Switching function of the coupled rotation-flip chain: p(0) = 0 and
// p(z) > 0 for z != 0 on the gap grid.
struct SwitchingFunction {
  std::string name;
  std::function<double(double)> p;
};

SwitchingFunction switching_by_name(std::string_view name);
SwitchingFunction quartic_switching(double scale = 0.2);  // min(1, (z/scale)^4)
SwitchingFunction quadratic_switching();                  // min(1, z^2)

// The joint chain (X_n, Y_n) on the grid torus Z_q x {-1, 1} that realizes
// the coupling with p(z). States carry grid indices: X = (k_x, i_x).
class RotationFlipCoupling {
 public:
  struct State {
    std::uint32_t kx = 0, ky = 0;
    int ix = 1, iy = 1;
    friend bool operator==(const State&, const State&) = default;
  };

  struct Transition {
    State next;
    double probability = 0.0;
  };

  RotationFlipCoupling(SwitchingFunction p, std::uint32_t q, std::uint32_t a);

  std::uint32_t q() const noexcept { return q_; }
  std::uint32_t a() const noexcept { return a_; }
  double rotation() const noexcept { return static_cast<double>(a_) / static_cast<double>(q_); }

  // Torus distance of the first coordinates in [0, 1/2].
  double gap(const State& s) const;
  bool mismatched(const State& s) const { return s.ix != s.iy; }
  double switching(double z) const { return p_.p(z); }

  // Exact one-step law of the joint chain from s (at most four atoms).
  std::vector<Transition> transitions(const State& s) const;

  State step(const State& s, Rng& rng) const;
  State run(State s, std::size_t n, Rng& rng) const;

  // Steps until the second coordinates first disagree, from a matched state
  // (geometric with mean 1 / p(gap)); capped at `cap`.
  std::size_t holding_time(const State& s, Rng& rng, std::size_t cap) const;

  // Points (u, i) with u = k / q for the torus-product-flip metric.
  Point point_x(const State& s) const;
  Point point_y(const State& s) const;

  PairSimulator simulator(State start) const;

 private:
  SwitchingFunction p_;
  std::uint32_t q_;
  std::uint32_t a_;
};

// Drift-to-zero kernel used as the first marginal of the generalized
// coupling in the birth-death example: down with probability 2/3, up 1/3,
// absorbing at 0, reflecting at the truncation.
FiniteChain drift_to_zero_kernel(std::size_t size);

// Birth-death chain with absorbing 0: down 1/3, up 2/3, reflecting at the
// truncation `size` (states 0..size).
FiniteChain birth_death_chain(std::size_t size);

// Generalized coupling of the birth-death chain from x with the constant
// path at 0: X follows the drift-to-zero kernel, log_density_1 is the log
// Radon-Nikodym derivative of its path law against the chain's.
PairSimulator birth_death_generalized_pair(std::size_t size, std::size_t x);

}  // namespace couplab
