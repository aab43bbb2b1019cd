#include "couplab/runner.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "couplab/diagnostics.hpp"
#include "couplab/errors.hpp"
#include "couplab/metric.hpp"
#include "couplab/sdde.hpp"
#include "couplab/testbed.hpp"
#include "json.hpp"

#ifndef COUPLAB_VERSION
#define COUPLAB_VERSION "0.0.0"
#endif

namespace couplab {

std::string_view library_version() { return COUPLAB_VERSION; }

namespace {

// Reads named knobs with defaults and rejects any key left unread.
class Knobs {
 public:
  Knobs(const std::map<std::string, double>& values, std::string section) : values_(values), section_(std::move(section)) {}

  double get(const std::string& key, double fallback) {
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    const double v = get(key, static_cast<double>(fallback));
    if (!(v >= 0.0) || v != std::floor(v) || v > 1e12) {
      throw ConfigError(section_ + "." + key + ": expected a nonnegative integer");
    }
    return static_cast<std::size_t>(v);
  }

  void finish(const std::string& kind) const {
    for (const auto& [key, value] : values_) {
      if (!used_.count(key)) throw ConfigError(section_ + "." + key + ": not used by kind " + kind);
    }
  }

 private:
  const std::map<std::string, double>& values_;
  std::string section_;
  std::set<std::string> used_;
};

struct Subject {
  std::optional<ExampleInstance> instance;
  std::optional<FiniteChain> chain;
  MetricPair metric;
  std::string name;
};

Subject load_subject(const ExperimentConfig& c, const std::filesystem::path& base_dir) {
  Subject s;
  if (!c.chain_file.empty()) {
    std::filesystem::path path = c.chain_file;
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    ChainDefinition def = load_chain_definition(path);
    const std::size_t dim = def.chain.points().front().size();
    s.metric = make_metric_pair(metric_by_name(def.metric, dim));
    s.chain = std::move(def.chain);
    s.name = c.chain_file;
    return s;
  }
  s.instance = build_instance(c.instance, c.params);
  s.chain = s.instance->chain;
  s.metric = s.instance->metric;
  s.name = c.instance;
  return s;
}

const FiniteChain& need_chain(const Subject& s, const std::string& kind) {
  if (!s.chain) throw InputError("kind " + kind + " needs a finite chain; instance " + s.name + " has only a sampler");
  return *s.chain;
}

const PairSimulator& need_pair(const Subject& s, const std::string& kind) {
  if (!s.instance || !s.instance->pair) {
    throw InputError("kind " + kind + " needs a pair simulator; " + s.name + " does not provide one");
  }
  return *s.instance->pair;
}

Verdict combine(const std::vector<Verdict>& verdicts) {
  if (std::find(verdicts.begin(), verdicts.end(), Verdict::refutes) != verdicts.end()) return Verdict::refutes;
  if (std::find(verdicts.begin(), verdicts.end(), Verdict::inconclusive) != verdicts.end()) return Verdict::inconclusive;
  return verdicts.empty() ? Verdict::inconclusive : Verdict::supports;
}

std::string csv_text(const ConvergenceReport& r) {
  std::ostringstream os;
  r.write_csv(os);
  return os.str();
}

std::string tag(double v) {
  std::string s = format_number(v);
  for (char& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
  }
  return s;
}

// Stacks per-parameter reports under a leading key column; the verdict is
// the worst of the parts and the margin the smallest.
ConvergenceReport stack(std::vector<std::pair<double, ConvergenceReport>> parts, const std::string& key) {
  ConvergenceReport out = parts.front().second;
  out.rows.clear();
  out.series.clear();
  out.statistics.clear();
  out.notes.clear();
  out.columns.insert(out.columns.begin(), key);
  std::vector<Verdict> verdicts;
  for (auto& [value, r] : parts) {
    for (auto& row : r.rows) {
      row.insert(row.begin(), cell(value));
      out.rows.push_back(std::move(row));
    }
    for (Series& s : r.series) {
      s.name += "_" + key + "_" + tag(value);
      out.series.push_back(std::move(s));
    }
    for (const auto& [name, stat] : r.statistics) out.statistics.emplace_back(name + "@" + key + "=" + format_number(value), stat);
    for (const std::string& note : r.notes) out.notes.push_back(key + " = " + format_number(value) + ": " + note);
    verdicts.push_back(r.verdict);
    out.margin = std::min(out.margin, r.margin);
  }
  out.verdict = combine(verdicts);
  return out;
}

DiagnosticOptions diagnostic_options(const ExperimentConfig& c) {
  DiagnosticOptions o;
  o.threads = c.threads;
  return o;
}

MonteCarloOptions monte_carlo(const ExperimentConfig& c, Knobs& tol) {
  MonteCarloOptions mc;
  mc.reps = c.reps;
  mc.seed = c.seeds.front();
  mc.threads = c.threads;
  mc.min_ess = tol.get("min_ess", mc.min_ess);
  mc.z = tol.get("z", mc.z);
  return mc;
}

ExperimentOutcome run_gamma_table(const ExperimentConfig& c, const Subject& s, Knobs& tol, Knobs& opt) {
  const FiniteChain& chain = need_chain(s, c.kind);
  const bool every_pair = opt.get("all_pairs", chain.size() <= 32 ? 1.0 : 0.0) != 0.0;
  const double limit = tol.get("invariant_tolerance", 1e-9);
  const std::vector<StatePair> pairs =
      every_pair ? all_pairs(chain.size()) : support_pairs(invariant_measure(chain).weights);
  const GammaTable table = gamma_table(chain, s.metric.d, pairs, c.grid.horizons, c.grid.epsilons, diagnostic_options(c));
  ExperimentOutcome out{table.to_report(), {}};
  const double violation = table.invariant_violation();
  out.report.tolerances.emplace_back("invariant_tolerance", limit);
  out.report.statistics.emplace_back("invariant_violation", violation);
  out.report.margin = limit - violation;
  out.report.verdict = violation <= limit ? Verdict::supports : Verdict::refutes;
  return out;
}

ExperimentOutcome run_big_gamma(const ExperimentConfig& c, const Subject& s, Knobs& tol) {
  const FiniteChain& chain = need_chain(s, c.kind);
  const double tolerance = tol.get("gamma_tolerance", 0.05);
  const double increase = tol.get("increase_tolerance", 1e-9);
  const InvariantResult inv = invariant_measure(chain);
  std::vector<std::size_t> horizons = c.grid.horizons;
  std::sort(horizons.begin(), horizons.end());
  ConvergenceReport r;
  r.quantity = "Gamma^{n,eps} = sum mu(x) mu(y) gamma^{n,eps}(x, y)";
  r.hypothesis = "Gamma^{n,eps} -> 1 for every eps > 0";
  r.tolerances = {{"gamma_tolerance", tolerance}, {"increase_tolerance", increase}};
  r.columns = {"eps", "n", "Gamma", "invariance_residual"};
  std::vector<Verdict> verdicts;
  r.margin = std::numeric_limits<double>::infinity();
  for (double eps : c.grid.epsilons) {
    Series series{"Gamma_eps_" + tag(eps), "n", "Gamma", {}, {}};
    for (std::size_t n : horizons) {
      const BigGammaResult g = big_gamma(chain, s.metric.d, inv.measure, n, eps, diagnostic_options(c));
      r.add_row({cell(eps), cell(n), cell(g.value), cell(g.invariance_residual)});
      series.x.push_back(static_cast<double>(n));
      series.y.push_back(g.value);
    }
    const double last = series.y.back();
    const bool rising = series.y.size() >= 2 && last > series.y[series.y.size() - 2] + increase;
    r.statistics.emplace_back("Gamma_final@eps=" + format_number(eps), last);
    r.margin = std::min(r.margin, last - (1.0 - tolerance));
    verdicts.push_back(last >= 1.0 - tolerance ? Verdict::supports : rising ? Verdict::inconclusive : Verdict::refutes);
    r.series.push_back(std::move(series));
  }
  if (!inv.unique) r.notes.push_back("invariant law is not unique; mu is the law of the first closed class");
  r.verdict = combine(verdicts);
  return {std::move(r), {}};
}

ExperimentOutcome run_conv1(const ExperimentConfig& c, const Subject& s, Knobs& tol) {
  const FiniteChain& chain = need_chain(s, c.kind);
  Conv1Thresholds t;
  t.gamma_threshold = tol.get("gamma_threshold", t.gamma_threshold);
  t.mass_fraction = tol.get("mass_fraction", t.mass_fraction);
  t.zero_tolerance = tol.get("zero_tolerance", t.zero_tolerance);
  t.min_horizons = tol.count("min_horizons", t.min_horizons);
  const InvariantResult inv = invariant_measure(chain);
  const GammaTable table = gamma_table(chain, s.metric.d, support_pairs(inv.weights), c.grid.horizons,
                                       c.grid.epsilons, diagnostic_options(c));
  ExperimentOutcome out{check_conv1_condition(table, inv.weights, t), {}};
  if (!inv.unique) out.report.notes.push_back("invariant law is not unique; mu is the law of the first closed class");
  out.extra.push_back({"gamma_table.csv", csv_text(table.to_report())});
  return out;
}

ExperimentOutcome run_unique(const ExperimentConfig& c, const Subject& s, Knobs& tol, Knobs& opt) {
  const PairSimulator& pair = need_pair(s, c.kind);
  const MonteCarloOptions mc = monte_carlo(c, tol);
  UniqueOptions u;
  u.alpha_min = tol.get("alpha_min", u.alpha_min);
  u.tail_fraction = opt.get("tail_fraction", u.tail_fraction);
  u.checkpoints = opt.count("checkpoints", u.checkpoints);
  const std::size_t n_max = *std::max_element(c.grid.horizons.begin(), c.grid.horizons.end());
  std::vector<std::pair<double, ConvergenceReport>> parts;
  for (double eps : c.grid.epsilons) parts.emplace_back(eps, check_unique_condition(pair, s.metric.d, eps, n_max, mc, u));
  return {stack(std::move(parts), "eps"), {}};
}

ExperimentOutcome run_conv2(const ExperimentConfig& c, const Subject& s, Knobs& tol) {
  const PairSimulator& pair = need_pair(s, c.kind);
  const MonteCarloOptions mc = monte_carlo(c, tol);
  Conv2Options o;
  o.tolerance = tol.get("tolerance", o.tolerance);
  return {check_conv2_condition(pair, s.metric.d, c.grid.epsilons, c.grid.horizons, mc, o), {}};
}

ExperimentOutcome run_weak_in_prob(const ExperimentConfig& c, const Subject& s, Knobs& tol) {
  const FiniteChain& chain = need_chain(s, c.kind);
  WeakInProbOptions o;
  o.mass_tolerance = tol.get("mass_tolerance", o.mass_tolerance);
  o.diagnostics = diagnostic_options(c);
  const InvariantResult inv = invariant_measure(chain);
  std::vector<std::pair<double, ConvergenceReport>> parts;
  for (double eps : c.grid.epsilons) {
    parts.emplace_back(eps, weak_in_prob_estimate(chain, s.metric.rho, inv.measure, c.grid.horizons, eps, o));
  }
  return {stack(std::move(parts), "eps"), {}};
}

ExperimentOutcome run_mixing(const ExperimentConfig& c, const Subject& s, Knobs& tol, Knobs& opt) {
  const FiniteChain& chain = need_chain(s, c.kind);
  MixingOptions o;
  o.tolerance = tol.get("tolerance", o.tolerance);
  const std::size_t k = opt.count("coordinate", 0);
  if (k >= chain.points().front().size()) throw ConfigError("options.coordinate: outside the state dimension");
  const StateFunction f = [k](const Point& p) { return p[k]; };
  const InvariantResult inv = invariant_measure(chain);
  return {mixing_estimate(chain, inv.measure, f, f, c.grid.horizons, o), {}};
}

ExperimentOutcome run_e_chain(const ExperimentConfig& c, const Subject& s, Knobs& tol, Knobs& opt) {
  const FiniteChain& chain = need_chain(s, c.kind);
  EChainOptions o;
  o.threshold = tol.get("threshold", o.threshold);
  o.diagnostics = diagnostic_options(c);
  const std::size_t x0 = opt.count("x0", 0);
  if (x0 >= chain.size()) throw ConfigError("options.x0: not a state index");
  return {e_chain_probe(chain, s.metric.rho, x0, c.grid.radii, c.grid.horizons, o), {}};
}

ExperimentOutcome run_supermartingale(const ExperimentConfig& c, const Subject& s, Knobs& tol) {
  const FiniteChain& chain = need_chain(s, c.kind);
  SupermartingaleOptions o;
  o.tolerance = tol.get("tolerance", o.tolerance);
  o.diagnostics = diagnostic_options(c);
  const InvariantResult inv = invariant_measure(chain);
  return {supermartingale_check(chain, s.metric.d, inv.measure, c.grid.horizons, c.grid.epsilons, o), {}};
}

ExperimentOutcome run_sdde(const ExperimentConfig& c, Knobs& tol, Knobs& opt) {
  const SfdeSpec spec = sfde_model(c.model.name, c.model.params);
  ContractionOptions co;
  co.rate_threshold = tol.get("rate_threshold", co.rate_threshold);
  co.min_r_squared = tol.get("min_r_squared", co.min_r_squared);
  co.quantile = opt.get("quantile", co.quantile);
  co.t_begin = opt.get("t_begin", co.t_begin);
  GirsanovOptions go;
  go.beta_cap = tol.get("beta_cap", go.beta_cap);
  go.divergent_fraction = tol.get("divergent_fraction", go.divergent_fraction);
  go.half_widths = tol.get("half_widths", go.half_widths);
  go.z = tol.get("z", go.z);
  go.min_reps = tol.count("min_reps", go.min_reps);
  const double x0 = opt.get("x0", 0.5);
  const double y0 = opt.get("y0", 0.0);
  const double t_final = opt.get("t_final", 0.0);  // <= 0: 20 / lambda
  const std::size_t points = std::max<std::size_t>(2, opt.count("recorded_points", 1000));
  const std::size_t paths_written = opt.count("paths_written", 1);
  const auto m = static_cast<Eigen::Index>(spec.dim);

  ExperimentOutcome out;
  ConvergenceReport& r = out.report;
  r.quantity = "contraction slope of |X(t) - Y(t)| and the Girsanov density mean";
  r.hypothesis = "gap decays exponentially and the control keeps the law absolutely continuous";
  r.tolerances = {{"rate_threshold", co.rate_threshold}, {"min_r_squared", co.min_r_squared},
                  {"beta_cap", go.beta_cap},             {"half_widths", go.half_widths}};
  r.columns = {"lambda", "dt", "T", "slope", "r_squared", "int_beta_sq_median", "density_mean",
               "density_half_width", "contraction", "girsanov"};
  r.margin = std::numeric_limits<double>::infinity();
  std::vector<Verdict> verdicts;
  for (std::size_t li = 0; li < c.grid.lambdas.size(); ++li) {
    const double lambda = c.grid.lambdas[li];
    const double T = t_final > 0.0 ? t_final : (lambda > 0.0 ? 20.0 / lambda : 20.0);
    for (std::size_t di = 0; di < c.grid.dts.size(); ++di) {
      const double dt = c.grid.dts[di];
      const auto K = static_cast<std::size_t>(std::llround(1.0 / dt));
      const SegmentState f = SegmentState::constant(K, Eigen::VectorXd::Constant(m, x0));
      const SegmentState g = SegmentState::constant(K, Eigen::VectorXd::Constant(m, y0));
      IntegrationOptions io;
      io.record_every = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(T / dt)) / points);
      const std::vector<PairPath> paths = integrate_pairs(spec, f, g, lambda, T, dt, c.seeds.front(), c.reps, c.threads, io);
      ConvergenceReport contraction = contraction_report(paths, co);
      std::vector<GirsanovTracker> trackers;
      for (const PairPath& p : paths) trackers.push_back(p.tracker);
      const ConvergenceReport girsanov = girsanov_diagnostics(trackers, go);
      const std::string key = "lambda=" + format_number(lambda) + ",dt=" + format_number(dt);
      r.add_row({cell(lambda), cell(dt), cell(T), cell(contraction.statistic("slope")),
                 cell(contraction.statistic("r_squared")), cell(girsanov.statistic("int_beta_sq_median")),
                 cell(girsanov.statistic("density_mean")), cell(girsanov.statistic("density_half_width")),
                 cell(std::string(to_string(contraction.verdict))), cell(std::string(to_string(girsanov.verdict)))});
      r.statistics.emplace_back("slope@" + key, contraction.statistic("slope"));
      r.statistics.emplace_back("density_mean@" + key, girsanov.statistic("density_mean"));
      for (const std::string& note : contraction.notes) r.notes.push_back(key + ": " + note);
      for (const std::string& note : girsanov.notes) r.notes.push_back(key + ": " + note);
      for (Series& s : contraction.series) {
        s.name = "gap_lambda_" + tag(lambda) + "_dt_" + tag(dt);
        r.series.push_back(std::move(s));
      }
      for (std::size_t p = 0; p < std::min(paths_written, paths.size()); ++p) {
        std::ostringstream os;
        write_path_csv(os, paths[p]);
        out.extra.push_back({"path_lambda_" + tag(lambda) + "_dt_" + tag(dt) + "_rep_" + std::to_string(p) + ".csv",
                             os.str()});
      }
      r.margin = std::min({r.margin, contraction.margin, girsanov.margin});
      verdicts.push_back(contraction.verdict);
      verdicts.push_back(girsanov.verdict);
    }
  }
  r.verdict = combine(verdicts);
  return out;
}

ExperimentOutcome run_example(const Subject& s) {
  const ExampleInstance& inst = *s.instance;
  ConvergenceReport r;
  r.quantity = "self-checking assertions of instance " + inst.id;
  r.hypothesis = inst.expected;
  r.columns = {"assertion", "passed", "detail"};
  std::size_t failed = 0;
  const std::vector<AssertionOutcome> outcomes = inst.run_assertions();
  for (const AssertionOutcome& a : outcomes) {
    r.add_row({a.description, a.passed ? "true" : "false", a.detail});
    failed += a.passed ? 0 : 1;
  }
  r.statistics = {{"assertions", static_cast<double>(outcomes.size())}, {"failed", static_cast<double>(failed)}};
  r.margin = -static_cast<double>(failed);
  r.verdict = failed == 0 ? Verdict::supports : Verdict::refutes;
  return {std::move(r), {}};
}

std::string series_file(const std::string& name) {
  std::string s = name;
  for (char& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '.') ch = '_';
  }
  return s + ".dat";
}

}  // namespace

ExperimentConfig apply_overrides(ExperimentConfig config, const RunOverrides& overrides) {
  if (overrides.seed) config.seeds = {*overrides.seed};
  if (overrides.threads) config.threads = *overrides.threads;
  if (overrides.output_dir) config.output_dir = *overrides.output_dir;
  return config;
}

ExperimentOutcome evaluate_experiment(const ExperimentConfig& c, const std::filesystem::path& base_dir) {
  validate_config(c);
  Knobs tol(c.tolerances, "tolerances");
  Knobs opt(c.options, "options");
  const std::string& k = c.kind;
  ExperimentOutcome out;
  if (k == "sdde") {
    if (!c.instance.empty() || !c.chain_file.empty()) throw ConfigError("instance: not used by kind sdde");
    out = run_sdde(c, tol, opt);
  } else {
    const Subject s = load_subject(c, base_dir);
    if (k == "gamma-table") out = run_gamma_table(c, s, tol, opt);
    else if (k == "big-gamma") out = run_big_gamma(c, s, tol);
    else if (k == "conv1") out = run_conv1(c, s, tol);
    else if (k == "unique") out = run_unique(c, s, tol, opt);
    else if (k == "conv2") out = run_conv2(c, s, tol);
    else if (k == "weak-in-prob") out = run_weak_in_prob(c, s, tol);
    else if (k == "mixing") out = run_mixing(c, s, tol, opt);
    else if (k == "e-chain") out = run_e_chain(c, s, tol, opt);
    else if (k == "supermartingale") out = run_supermartingale(c, s, tol);
    else if (k == "example") out = run_example(s);
  }
  tol.finish(k);
  opt.finish(k);
  return out;
}

RunResult run_experiment(const ExperimentConfig& input, const RunOverrides& overrides) {
  const ExperimentConfig config = apply_overrides(input, overrides);
  validate_config(config);
  ExperimentOutcome outcome = evaluate_experiment(config, overrides.base_dir);

  RunResult result;
  result.output_dir = config.output_dir;
  const auto emit = [&](const std::string& name, const std::string& text) {
    write_text_file(result.output_dir / name, text);
    result.files.push_back(name);
  };
  emit(config.kind + ".csv", csv_text(outcome.report));
  for (const Artifact& a : outcome.extra) emit(a.name, a.content);
  for (const Series& s : outcome.report.series) {
    std::ostringstream os;
    write_series(os, s);
    emit(series_file(s.name), os.str());
  }
  emit("summary.txt", outcome.report.summary());
  emit("config.json", serialize_config(config));

  nlohmann::ordered_json manifest;
  manifest["code_version"] = std::string(library_version());
  manifest["config_hash"] = config_hash(config);
  manifest["kind"] = config.kind;
  manifest["instance"] = config.instance.empty() ? config.chain_file : config.instance;
  manifest["seeds"] = config.seeds;
  manifest["threads"] = config.threads;
  manifest["verdict"] = std::string(to_string(outcome.report.verdict));
  manifest["exit_code"] = exit_code(outcome.report.verdict);
  manifest["files"] = result.files;
  write_text_file(result.output_dir / "manifest.json", manifest.dump(2) + "\n");
  result.files.push_back("manifest.json");

  result.report = std::move(outcome.report);
  return result;
}

std::string list_experiments() {
  std::ostringstream os;
  os << "instances:\n";
  for (const CatalogEntry& e : instance_catalog()) {
    os << "  " << e.id << "  [" << (e.anchor.empty() ? "-" : e.anchor) << "]  " << e.description;
    if (!e.defaults.empty()) {
      os << "  {";
      bool first = true;
      for (const auto& [key, value] : e.defaults) {
        os << (first ? "" : ", ") << key << ": " << format_number(value);
        first = false;
      }
      os << '}';
    }
    os << '\n';
  }
  os << "kinds:\n";
  for (const std::string& kind : experiment_kinds()) {
    os << "  " << kind << "  [" << (kind == "sdde" ? "sdde" : "-") << "]  " << kind_description(kind) << '\n';
  }
  return os.str();
}

ExperimentConfig example_config(std::string_view id, std::string output_dir, std::uint64_t seed) {
  ExperimentConfig c;
  c.kind = "example";
  c.instance = std::string(id);
  c.seeds = {seed};
  c.output_dir = std::move(output_dir);
  return c;
}

}  // namespace couplab
