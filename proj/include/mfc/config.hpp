#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "certify.hpp"
#include "core.hpp"
#include "costs.hpp"
#include "dynamics.hpp"
#include "measures.hpp"
#include "sobolev.hpp"
#include "value.hpp"

namespace mfc {

// Run configuration: a flat `key = value` file with `#` comments.
//
// Every key lives in one registry with its type, default and description;
// docs/config.md mirrors that table. Values are type-checked when they are
// read and checked semantically by RunConfig::validate before a recipe runs.

enum class KeyType { real, integer, flag, text, reals, integers };

inline const char* key_type_name(KeyType t) {
  switch (t) {
    case KeyType::real:
      return "real";
    case KeyType::integer:
      return "integer";
    case KeyType::flag:
      return "flag";
    case KeyType::text:
      return "text";
    case KeyType::reals:
      return "real list";
    case KeyType::integers:
      return "integer list";
  }
  return "";
}

struct KeySpec {
  std::string name;
  KeyType type;
  std::string fallback;  ///< "auto" marks a dimension-dependent default
  std::string doc;
};

inline const std::vector<KeySpec>& key_registry() {
  static const std::vector<KeySpec> keys = {
      {"seed", KeyType::integer, "1", "seed of every random stream in a run; --seed overrides it"},
      {"grid.dim", KeyType::integer, "1", "spatial dimension, 1 or 2"},
      {"grid.horizon", KeyType::real, "1", "terminal time T"},
      {"grid.dt", KeyType::real, "auto", "time step; must divide T (auto: 0.005 in d=1, 0.01 in d=2)"},
      {"grid.lo", KeyType::real, "auto", "lower box face on every axis (auto: -20 in d=1, -10 in d=2)"},
      {"grid.hi", KeyType::real, "auto", "upper box face on every axis (auto: 20 in d=1, 10 in d=2)"},
      {"grid.nx", KeyType::integer, "auto", "nodes per axis (auto: 2401 in d=1, 101 in d=2)"},
      {"sobolev.tolerance", KeyType::real, "1e-5", "target truncation error of rho"},
      {"sobolev.panels", KeyType::integer, "0", "Gauss-Legendre panels per half axis (0: 32 in d=1, 16 in d=2)"},
      {"sobolev.nodes_per_panel", KeyType::integer, "16", "nodes per frequency panel"},
      {"cost.running", KeyType::text, "",
       "running cost terms 'outer scale inner [center [width]]' separated by ';' (empty: no running cost)"},
      {"cost.terminal", KeyType::text, "linear 1 inv_quadratic", "terminal cost terms, same syntax"},
      {"cost.beta", KeyType::real, "0", "running cost time factor (1 + beta t)"},
      {"cost.mollify", KeyType::integer, "0", "mollification level n of the cost (0: exact cost)"},
      {"fp.lambda", KeyType::real, "0.5", "damping of the fixed point, in (0, 1]"},
      {"fp.max_iter", KeyType::integer, "60", "fixed point iteration cap"},
      {"fp.tol", KeyType::real, "1e-8", "fixed point stop tolerance on sup |Gamma(alpha) - alpha|"},
      {"fp.fictitious_play", KeyType::flag, "false", "use weights 1/(k+1) instead of fp.lambda"},
      {"value.t0", KeyType::real, "0", "initial time of value_solve"},
      {"value.mean", KeyType::real, "0.5", "mean (first coordinate) of the Gaussian initial law"},
      {"value.sigma", KeyType::real, "1", "standard deviation of the Gaussian initial law"},
      {"particles.n", KeyType::integer, "100000", "particles for the cross-solver check in value_solve (0: skip)"},
      {"metric.pairs", KeyType::integer, "200", "random empirical pairs for the kernel equivalence check"},
      {"metric.atoms", KeyType::integer, "50", "atoms per random empirical measure"},
      {"metric.mixture_pairs", KeyType::integer, "100", "random mixture pairs per dimension for the kappa norm check"},
      {"family.means", KeyType::reals, "-1,-0.33333333333333331,0.33333333333333331,1",
       "means of the Gaussian family used by lipschitz and doubling"},
      {"family.sigmas", KeyType::reals, "0.5,1,2", "standard deviations of that family"},
      {"lipschitz.t", KeyType::real, "0", "time of the Lipschitz scan"},
      {"lipschitz.band", KeyType::real, "0.15", "allowed relative change of max_ratio under refinement"},
      {"viscosity.means", KeyType::reals, "-1,-0.6,-0.2,0.2,0.6,1", "means of the viscosity family"},
      {"viscosity.sigmas", KeyType::reals, "0.5,1,2", "standard deviations of the viscosity family"},
      {"viscosity.times", KeyType::reals, "0,0.1,0.2,0.3,0.4,0.5,0.6", "surface times of the viscosity check"},
      {"viscosity.weight", KeyType::real, "1", "penalty weight that isolates each touching point"},
      {"doubling.eps", KeyType::reals, "0.001,0.003,0.01,0.03,0.1", "eps grid"},
      {"doubling.delta", KeyType::reals, "0.01,0.03,0.1", "delta grid (cells need eps <= delta)"},
      {"doubling.delta_star", KeyType::real, "0.1", "largest admissible delta"},
      {"doubling.gamma0", KeyType::real, "0.05", "u_bar = u - 2 gamma0 (T - t + 1)"},
      {"doubling.gap", KeyType::real, "2", "synthetic gap c of u = v_n + c (0: u = v_n)"},
      {"doubling.n", KeyType::integer, "8", "mollification level of v_n"},
      {"doubling.times", KeyType::reals, "0,0.2,0.4,0.6,0.8", "surface times"},
      {"doubling.restarts", KeyType::integer, "3", "random restarts of the coordinate ascent"},
      {"convergence.ladder", KeyType::integers, "4,8,16", "mollification levels, at least three"},
      {"convergence.times", KeyType::reals, "0,0.5", "sample times"},
      {"convergence.means", KeyType::reals, "0.5,-1", "sample Gaussian means, paired with convergence.sigmas"},
      {"convergence.sigmas", KeyType::reals, "0.8,1.5", "sample Gaussian standard deviations"},
  };
  return keys;
}

/// Parse failure or invalid value; the message names the key and, when known, the line.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

inline bool parse_integer(const std::string& s, long long& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtoll(s.c_str(), &end, 10);
  return end == s.c_str() + s.size();
}

inline bool parse_flag(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return out = true, true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return out = false, true;
  return false;
}

inline std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline const KeySpec* find_key(const std::string& name) {
  for (const auto& k : key_registry()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

/// Empty string when `value` fits `type`, otherwise what was expected.
inline std::string type_mismatch(KeyType type, const std::string& value) {
  double r = 0.0;
  long long i = 0;
  bool b = false;
  switch (type) {
    case KeyType::real:
      return parse_real(value, r) ? "" : "a real number";
    case KeyType::integer:
      return parse_integer(value, i) ? "" : "an integer";
    case KeyType::flag:
      return parse_flag(value, b) ? "" : "true or false";
    case KeyType::text:
      return "";
    case KeyType::reals:
      for (const auto& v : split_list(value, ',')) {
        if (!parse_real(v, r)) return "a comma separated list of real numbers";
      }
      return "";
    case KeyType::integers:
      for (const auto& v : split_list(value, ',')) {
        if (!parse_integer(v, i)) return "a comma separated list of integers";
      }
      return "";
  }
  return "";
}

}  // namespace detail

/// One parsed cost term: outer function, its scale, inner function, center and width.
struct TermSpec {
  OuterKind outer = OuterKind::linear;
  double scale = 1.0;
  std::string inner;
  double center = 0.0;
  double width = 1.0;
};

inline std::vector<TermSpec> parse_terms(const std::string& key, const std::string& text) {
  std::vector<TermSpec> out;
  for (const auto& item : detail::split_list(text, ';')) {
    std::istringstream ss(item);
    std::vector<std::string> words;
    for (std::string w; ss >> w;) words.push_back(w);
    if (words.size() < 3 || words.size() > 5) {
      throw ConfigError(key + ": term '" + item + "' must read 'outer scale inner [center [width]]'");
    }
    TermSpec t;
    try {
      t.outer = parse_outer(words[0]);
    } catch (const InvalidArgument& e) {
      throw ConfigError(key + ": " + e.what());
    }
    if (!detail::parse_real(words[1], t.scale)) throw ConfigError(key + ": scale '" + words[1] + "' is not a number");
    t.inner = words[2];
    if (words.size() > 3 && !detail::parse_real(words[3], t.center)) {
      throw ConfigError(key + ": center '" + words[3] + "' is not a number");
    }
    if (words.size() > 4 && !detail::parse_real(words[4], t.width)) {
      throw ConfigError(key + ": width '" + words[4] + "' is not a number");
    }
    out.push_back(t);
  }
  return out;
}

class RunConfig {
 public:
  std::string experiment;
  std::filesystem::path out;

  RunConfig() {
    for (const auto& k : key_registry()) values_[k.name] = k.fallback;
  }

  static RunConfig parse(std::istream& in, const std::string& source = "config") {
    RunConfig c;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const std::string where = source + ":" + std::to_string(n);
      if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
      const std::string key = detail::trim(line.substr(0, eq));
      if (c.lines_.count(key)) {
        throw ConfigError(where + ": key '" + key + "' already set on line " + std::to_string(c.lines_.at(key)));
      }
      c.set(key, detail::trim(line.substr(eq + 1)), where);
      c.lines_[key] = n;
    }
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    RunConfig c = parse(in, path.filename().string());
    c.source_ = path.string();
    return c;
  }

  /// Sets one key after checking that it exists and that the value has its type.
  void set(const std::string& key, const std::string& value, const std::string& where = "override") {
    const KeySpec* spec = detail::find_key(key);
    if (!spec) throw ConfigError(where + ": unknown key '" + key + "'");
    const bool automatic = spec->fallback == "auto" && value == "auto";
    const std::string expected = automatic ? "" : detail::type_mismatch(spec->type, value);
    if (!expected.empty()) {
      throw ConfigError(where + ": key '" + key + "' expects " + expected + ", got '" + value + "'");
    }
    values_[key] = value;
  }

  const std::string& raw(const std::string& key) const {
    const auto it = values_.find(key);
    require(it != values_.end(), "config: no key '" + key + "'");
    return it->second;
  }
  bool is_auto(const std::string& key) const { return raw(key) == "auto"; }

  double real(const std::string& key) const {
    double v = 0.0;
    detail::parse_real(raw(key), v);
    return v;
  }
  long long integer(const std::string& key) const {
    long long v = 0;
    detail::parse_integer(raw(key), v);
    return v;
  }
  bool flag(const std::string& key) const {
    bool v = false;
    detail::parse_flag(raw(key), v);
    return v;
  }
  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : detail::split_list(raw(key), ',')) {
      double v = 0.0;
      detail::parse_real(s, v);
      out.push_back(v);
    }
    return out;
  }
  std::vector<int> integers(const std::string& key) const {
    std::vector<int> out;
    for (const auto& s : detail::split_list(raw(key), ',')) {
      long long v = 0;
      detail::parse_integer(s, v);
      out.push_back(static_cast<int>(v));
    }
    return out;
  }

  int dim() const { return static_cast<int>(integer("grid.dim")); }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }
  const std::string& source() const { return source_; }

  /// Line of `key` in the loaded file, 0 when it kept its default.
  std::size_t line_of(const std::string& key) const {
    const auto it = lines_.find(key);
    return it == lines_.end() ? 0 : it->second;
  }

  /// Appends "(config line N)" for the first key the message mentions that came from the file.
  std::string annotate(const std::string& message) const {
    for (const auto& k : key_registry()) {
      const std::size_t line = line_of(k.name);
      if (line > 0 && message.find(k.name) != std::string::npos) {
        return message + " (" + (source_.empty() ? std::string("config") : source_) + " line " +
               std::to_string(line) + ")";
      }
    }
    return message;
  }

  template <int D>
  SpaceTimeGrid<D> grid() const {
    SpaceTimeGrid<D> g = default_grid<D>();
    g.horizon = real("grid.horizon");
    if (!is_auto("grid.dt")) g.dt = real("grid.dt");
    if (!is_auto("grid.lo")) g.lo = real("grid.lo");
    if (!is_auto("grid.hi")) g.hi = real("grid.hi");
    if (!is_auto("grid.nx")) {
      const long long nx = integer("grid.nx");
      require(nx >= 5, "grid.nx must be at least five");
      g.nx = static_cast<std::size_t>(nx);
    }
    return g;
  }

  QuadratureOptions quadrature(double order) const {
    QuadratureOptions q;
    q.order = order;
    q.tolerance = real("sobolev.tolerance");
    require(q.tolerance > 0.0, "sobolev.tolerance must be positive");
    require(integer("sobolev.panels") >= 0, "sobolev.panels must not be negative");
    require(integer("sobolev.nodes_per_panel") >= 2, "sobolev.nodes_per_panel must be at least two");
    q.panels = static_cast<std::size_t>(integer("sobolev.panels"));
    q.nodes_per_panel = static_cast<std::size_t>(integer("sobolev.nodes_per_panel"));
    return q;
  }

  template <int D>
  FrequencyQuadrature<D> metric_quadrature() const {
    return FrequencyQuadrature<D>::build(quadrature(static_cast<double>(SobolevIndex<D>::order)));
  }

  template <int D>
  CylindricalCost<D> cylindrical() const {
    CylindricalCost<D> cyl;
    cyl.horizon = real("grid.horizon");
    cyl.beta = real("cost.beta");
    const auto add = [&](const std::string& key, std::vector<CostTerm<D>>& terms) {
      for (const auto& t : parse_terms(key, raw(key))) {
        Point<D> c{};
        c[0] = t.center;
        try {
          terms.push_back({Outer{t.outer, t.scale}, make_inner<D>(t.inner, c, t.width)});
        } catch (const InvalidArgument& e) {
          throw ConfigError(key + ": " + e.what());
        }
      }
    };
    add("cost.running", cyl.running);
    add("cost.terminal", cyl.terminal);
    if (cyl.running.size() > 3 || cyl.terminal.size() > 3) throw ConfigError("cost.running and cost.terminal take at most three terms each");
    return cyl;
  }

  /// The configured cost, mollified at level cost.mollify when that is positive.
  template <int D>
  CostModel<D> cost_model() const {
    const auto cyl = cylindrical<D>();
    const long long n = integer("cost.mollify");
    require(n >= 0, "cost.mollify must not be negative");
    if (cyl.running.empty() && cyl.terminal.empty()) return CostModel<D>::zero(cyl.horizon);
    return n == 0 ? CostModel<D>::exact(cyl) : mollify<D>(cyl, static_cast<int>(n));
  }

  FixedPointConfig fixed_point() const {
    FixedPointConfig fp;
    fp.lambda = real("fp.lambda");
    require(integer("fp.max_iter") >= 1, "fp.max_iter must be at least one");
    fp.max_iter = static_cast<std::size_t>(integer("fp.max_iter"));
    fp.tol = real("fp.tol");
    fp.fictitious_play = flag("fp.fictitious_play");
    fp.validate();
    return fp;
  }

  DoublingConfig doubling() const {
    DoublingConfig d;
    d.eps = reals("doubling.eps");
    d.delta = reals("doubling.delta");
    d.delta_star = real("doubling.delta_star");
    d.gamma0 = real("doubling.gamma0");
    d.n = static_cast<int>(integer("doubling.n"));
    require(integer("doubling.restarts") >= 0, "doubling.restarts must not be negative");
    d.restarts = static_cast<std::size_t>(integer("doubling.restarts"));
    d.seed = seed();
    d.validate();
    return d;
  }

  template <int D>
  MeasureFamily<D> family(const std::string& prefix) const {
    const auto means = reals(prefix + ".means");
    const auto sigmas = reals(prefix + ".sigmas");
    require(!means.empty(), prefix + ".means must not be empty");
    require(!sigmas.empty(), prefix + ".sigmas must not be empty");
    for (double s : sigmas) require(s > 0.0, prefix + ".sigmas must be positive");
    return MeasureFamily<D>::gaussians(means, sigmas);
  }

  /// Checks every value that does not depend on the recipe; throws InvalidArgument naming the key.
  void validate() const {
    require(dim() == 1 || dim() == 2, "grid.dim must be 1 or 2");
    if (dim() == 1) {
      validate_for<1>();
    } else {
      validate_for<2>();
    }
  }

  /// Effective configuration, one `key = value` line per registered key, defaults resolved.
  void write(std::ostream& out) const {
    for (const auto& k : key_registry()) {
      std::string v = raw(k.name);
      if (v == "auto") v = resolved_auto(k.name);
      out << k.name << " = " << v << '\n';
    }
  }

 private:
  template <int D>
  void validate_for() const {
    grid<D>().validate();
    (void)quadrature(static_cast<double>(SobolevIndex<D>::order));
    (void)cylindrical<D>();
    require(integer("cost.mollify") >= 0, "cost.mollify must not be negative");
    (void)fixed_point();
    require(real("value.sigma") > 0.0, "value.sigma must be positive");
    require(real("value.t0") >= 0.0 && real("value.t0") < real("grid.horizon"), "value.t0 must lie in [0, grid.horizon)");
    require(integer("particles.n") >= 0, "particles.n must not be negative");
    require(integer("metric.pairs") >= 1, "metric.pairs must be at least one");
    require(integer("metric.atoms") >= 1, "metric.atoms must be at least one");
    require(integer("metric.mixture_pairs") >= 1, "metric.mixture_pairs must be at least one");
    (void)family<D>("family");
    (void)family<D>("viscosity");
    require(real("lipschitz.band") > 0.0, "lipschitz.band must be positive");
    require(real("viscosity.weight") > 0.0, "viscosity.weight must be positive");
    (void)doubling();
    require(real("doubling.gap") >= 0.0, "doubling.gap must not be negative");
    const auto in_horizon = [&](const std::string& key) {
      const auto ts = reals(key);
      require(!ts.empty(), key + " must not be empty");
      for (double t : ts) require(t >= 0.0 && t < real("grid.horizon"), key + " entries must lie in [0, grid.horizon)");
      require(std::is_sorted(ts.begin(), ts.end()), key + " must be increasing");
    };
    in_horizon("lipschitz.t");
    in_horizon("viscosity.times");
    in_horizon("doubling.times");
    in_horizon("convergence.times");
    require(integers("convergence.ladder").size() >= 3, "convergence.ladder needs at least three levels");
    for (int n : integers("convergence.ladder")) require(n >= 1, "convergence.ladder levels must be positive");
    require(reals("convergence.means").size() == reals("convergence.sigmas").size(),
            "convergence.means and convergence.sigmas must have the same length");
    for (double s : reals("convergence.sigmas")) require(s > 0.0, "convergence.sigmas must be positive");
  }

  std::string resolved_auto(const std::string& key) const {
    const auto pick = [&](auto g) {
      if (key == "grid.dt") return detail::format_double(g.dt);
      if (key == "grid.lo") return detail::format_double(g.lo);
      if (key == "grid.hi") return detail::format_double(g.hi);
      return std::to_string(g.nx);
    };
    return dim() == 2 ? pick(default_grid<2>()) : pick(default_grid<1>());
  }

  std::map<std::string, std::string> values_;
  std::map<std::string, std::size_t> lines_;
  std::string source_;
};

}  // namespace mfc
