#include "couplab/config.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "couplab/errors.hpp"
#include "couplab/metric.hpp"
#include "couplab/testbed.hpp"
#include "json.hpp"

namespace couplab {

namespace {

using nlohmann::json;

struct KindInfo {
  const char* name;
  const char* description;
  bool horizons, epsilons, lambdas, dts, radii;
};

constexpr std::array<KindInfo, 11> kinds{{
    {"gamma-table", "gamma^{n,eps}(x, y) over state pairs, horizons and eps", true, true, false, false, false},
    {"big-gamma", "Gamma^{n,eps}: the mu (x) mu average of gamma", true, true, false, false, false},
    {"conv1", "liminf-gamma positivity on a set of full mu (x) mu mass", true, true, false, false, false},
    {"unique", "limsup time average of the closeness indicator along a coupling", true, true, false, false, false},
    {"conv2", "closeness probability along a coupling tends to 1", true, true, false, false, false},
    {"weak-in-prob", "mu-mass of states whose n-step law stays eps-far from mu", true, true, false, false, false},
    {"mixing", "lag-n covariance of the coordinate functional under mu", true, false, false, false, false},
    {"e-chain", "equicontinuity probe of x -> P_n(x, .) in the KR metric", true, false, false, false, true},
    {"supermartingale", "one-step margin of gamma and monotonicity of Gamma", true, true, false, false, false},
    {"sdde", "delay equation pair with Girsanov control: contraction and density", false, false, true, true, false},
    {"example", "self-checking assertions of a catalog instance", false, false, false, false, false},
}};

const KindInfo* find_kind(std::string_view name) {
  for (const KindInfo& k : kinds) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where.empty() ? what : where + ": " + what);
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(where, "expected an object");
  const std::set<std::string> names(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (!names.count(item.key())) fail(where.empty() ? item.key() : where + "." + item.key(), "unknown key");
  }
}

std::string join(const std::string& where, const std::string& key) { return where.empty() ? key : where + "." + key; }

std::string get_string(const json& v, const std::string& where) {
  if (!v.is_string()) fail(where, "expected a string");
  return v.get<std::string>();
}

double get_double(const json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(where, "expected a finite number");
  return x;
}

std::uint64_t get_unsigned(const json& v, const std::string& where) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  fail(where, "expected a nonnegative integer");
}

std::map<std::string, double> get_number_map(const json& v, const std::string& where) {
  if (!v.is_object()) fail(where, "expected an object of numbers");
  std::map<std::string, double> out;
  for (const auto& item : v.items()) out[item.key()] = get_double(item.value(), join(where, item.key()));
  return out;
}

template <class T, class F>
std::vector<T> get_array(const json& v, const std::string& where, F element) {
  if (!v.is_array()) fail(where, "expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(element(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    std::size_t line = 1, column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::string msg = e.what();
    if (const auto pos = msg.find("syntax error"); pos != std::string::npos) msg = msg.substr(pos);
    throw ConfigError(std::string(what) + ": line " + std::to_string(line) + ", column " + std::to_string(column) +
                      ": " + msg);
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const KindInfo& k : kinds) out.emplace_back(k.name);
    return out;
  }();
  return names;
}

std::string_view kind_description(std::string_view kind) {
  const KindInfo* k = find_kind(kind);
  if (!k) throw InputError("unknown experiment kind '" + std::string(kind) + "'");
  return k->description;
}

ExperimentConfig parse_config(std::string_view text) {
  const json doc = parse_json(text, "config");
  check_keys(doc, "", {"version", "kind", "instance", "params", "chain_file", "grid", "reps", "seeds", "output_dir",
                       "threads", "tolerances", "options", "model"});
  for (const char* key : {"version", "kind", "seeds", "output_dir"}) {
    if (!doc.contains(key)) fail(key, "missing required key");
  }
  ExperimentConfig c;
  const std::uint64_t version = get_unsigned(doc["version"], "version");
  if (version != config_version) fail("version", "unsupported version " + std::to_string(version));
  c.version = static_cast<int>(version);
  c.kind = get_string(doc["kind"], "kind");
  if (doc.contains("instance")) c.instance = get_string(doc["instance"], "instance");
  if (doc.contains("params")) c.params = get_number_map(doc["params"], "params");
  if (doc.contains("chain_file")) c.chain_file = get_string(doc["chain_file"], "chain_file");
  if (doc.contains("grid")) {
    const json& g = doc["grid"];
    check_keys(g, "grid", {"horizons", "epsilons", "lambdas", "dts", "radii"});
    const auto reals = [&](const char* key) {
      return g.contains(key) ? get_array<double>(g[key], join("grid", key), get_double) : std::vector<double>{};
    };
    if (g.contains("horizons")) {
      c.grid.horizons = get_array<std::size_t>(g["horizons"], "grid.horizons", [](const json& v, const std::string& w) {
        return static_cast<std::size_t>(get_unsigned(v, w));
      });
    }
    c.grid.epsilons = reals("epsilons");
    c.grid.lambdas = reals("lambdas");
    c.grid.dts = reals("dts");
    c.grid.radii = reals("radii");
  }
  if (doc.contains("reps")) c.reps = static_cast<std::size_t>(get_unsigned(doc["reps"], "reps"));
  c.seeds = get_array<std::uint64_t>(doc["seeds"], "seeds", get_unsigned);
  c.output_dir = get_string(doc["output_dir"], "output_dir");
  if (doc.contains("threads")) c.threads = static_cast<std::size_t>(get_unsigned(doc["threads"], "threads"));
  if (doc.contains("tolerances")) c.tolerances = get_number_map(doc["tolerances"], "tolerances");
  if (doc.contains("options")) c.options = get_number_map(doc["options"], "options");
  if (doc.contains("model")) {
    const json& m = doc["model"];
    check_keys(m, "model", {"name", "params"});
    if (!m.contains("name")) fail("model.name", "missing required key");
    c.model.name = get_string(m["name"], "model.name");
    if (m.contains("params")) c.model.params = get_number_map(m["params"], "model.params");
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  try {
    return parse_config(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_config(const ExperimentConfig& c) {
  json doc;
  doc["version"] = c.version;
  doc["kind"] = c.kind;
  if (!c.instance.empty()) doc["instance"] = c.instance;
  doc["params"] = c.params;
  if (!c.chain_file.empty()) doc["chain_file"] = c.chain_file;
  doc["grid"] = {{"horizons", c.grid.horizons}, {"epsilons", c.grid.epsilons}, {"lambdas", c.grid.lambdas},
                 {"dts", c.grid.dts}, {"radii", c.grid.radii}};
  doc["reps"] = c.reps;
  doc["seeds"] = c.seeds;
  doc["output_dir"] = c.output_dir;
  doc["threads"] = c.threads;
  doc["tolerances"] = c.tolerances;
  doc["options"] = c.options;
  if (!c.model.name.empty()) doc["model"] = {{"name", c.model.name}, {"params", c.model.params}};
  return doc.dump(2) + "\n";
}

void validate_config(const ExperimentConfig& c) {
  if (c.version != config_version) fail("version", "unsupported version");
  const KindInfo* kind = find_kind(c.kind);
  if (!kind) fail("kind", "unknown experiment kind '" + c.kind + "'");
  const std::string k = c.kind;
  if (k == "sdde") {
    if (c.model.name.empty()) fail("model.name", "required for sdde");
  } else if (!c.model.name.empty()) {
    fail("model", "only used by sdde");
  }
  if (k != "sdde") {
    if (c.instance.empty() && c.chain_file.empty()) fail("instance", "an instance or a chain_file is required");
    if (!c.instance.empty() && !c.chain_file.empty()) fail("chain_file", "give either instance or chain_file");
    if (!c.instance.empty()) {
      bool known = false;
      for (const CatalogEntry& e : instance_catalog()) known = known || e.id == c.instance;
      if (!known) fail("instance", "unknown instance '" + c.instance + "'");
    }
    if (!c.chain_file.empty() && !c.params.empty()) fail("params", "not used with a chain_file");
    if (k == "example" && c.instance.empty()) fail("instance", "example needs a catalog instance");
  }
  if (c.seeds.empty()) fail("seeds", "at least one explicit seed is required");
  if (c.output_dir.empty()) fail("output_dir", "must be nonempty");
  if (c.reps == 0 || c.reps > 10'000'000) fail("reps", "must lie in [1, 1e7]");
  if (c.threads > 256) fail("threads", "must lie in [0, 256]");

  const auto require = [&](bool needed, bool empty, const char* key) {
    if (needed && empty) fail(std::string("grid.") + key, "must be nonempty for " + k);
  };
  require(kind->horizons, c.grid.horizons.empty(), "horizons");
  require(kind->epsilons, c.grid.epsilons.empty(), "epsilons");
  require(kind->lambdas, c.grid.lambdas.empty(), "lambdas");
  require(kind->dts, c.grid.dts.empty(), "dts");
  require(kind->radii, c.grid.radii.empty(), "radii");
  for (std::size_t n : c.grid.horizons) {
    if (n > 1'000'000'000) fail("grid.horizons", "horizon above the cap 1e9");
  }
  for (double e : c.grid.epsilons) {
    if (!(e >= 0.0)) fail("grid.epsilons", "eps must be nonnegative");
  }
  for (double l : c.grid.lambdas) {
    if (!(l >= 0.0)) fail("grid.lambdas", "lambda must be nonnegative");
  }
  for (double dt : c.grid.dts) {
    if (!(dt > 0.0 && dt <= 1.0)) fail("grid.dts", "dt must lie in (0, 1]");
  }
  for (double r : c.grid.radii) {
    if (!(r > 0.0)) fail("grid.radii", "radius must be positive");
  }
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ChainDefinition parse_chain_definition(std::string_view text) {
  const json doc = parse_json(text, "chain file");
  check_keys(doc, "", {"format", "version", "points", "matrix", "labels", "metric"});
  for (const char* key : {"format", "version", "points", "matrix"}) {
    if (!doc.contains(key)) fail(key, "missing required key");
  }
  if (get_string(doc["format"], "format") != "couplab-chain") fail("format", "expected \"couplab-chain\"");
  if (get_unsigned(doc["version"], "version") != 1) fail("version", "unsupported version");
  const auto row = [](const json& v, const std::string& w) { return get_array<double>(v, w, get_double); };
  std::vector<Point> points = get_array<Point>(doc["points"], "points", row);
  const std::vector<std::vector<double>> rows = get_array<std::vector<double>>(doc["matrix"], "matrix", row);
  std::vector<std::string> labels;
  if (doc.contains("labels")) labels = get_array<std::string>(doc["labels"], "labels", get_string);
  std::string metric = "euclidean";
  if (doc.contains("metric")) metric = get_string(doc["metric"], "metric");
  const std::size_t n = rows.size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != n) fail("matrix[" + std::to_string(i) + "]", "row length differs from the state count");
    for (std::size_t j = 0; j < n; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  try {
    const std::size_t dim = points.empty() ? 1 : points.front().size();
    (void)metric_by_name(metric, dim);
    return ChainDefinition{FiniteChain(std::move(points), std::move(m), std::move(labels)), metric};
  } catch (const InputError& e) {
    throw ConfigError(std::string("chain file: ") + e.what());
  }
}

ChainDefinition load_chain_definition(const std::filesystem::path& path) {
  try {
    return parse_chain_definition(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_chain_definition(const ChainDefinition& def) {
  json doc;
  doc["format"] = "couplab-chain";
  doc["version"] = 1;
  doc["points"] = def.chain.points();
  json matrix = json::array();
  const Eigen::MatrixXd& p = def.chain.matrix();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(p.cols()));
    for (Eigen::Index j = 0; j < p.cols(); ++j) r[static_cast<std::size_t>(j)] = p(i, j);
    matrix.push_back(r);
  }
  doc["matrix"] = matrix;
  if (!def.chain.labels().empty()) doc["labels"] = def.chain.labels();
  doc["metric"] = def.metric;
  return doc.dump(2) + "\n";
}

}  // namespace couplab
