#pragma once

#include "rtmm/core.hpp"
#include "rtmm/problems.hpp"
#include "rtmm/simulation.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace rtmm {

struct OutputSettings {
  std::string dir = "run";
  int checkpoint_every = 20;  // plus the final step; 0: final only
  std::vector<int> directions{0};  // directions written to snapshots besides the angular mean
  bool write_vtk = true;
  bool dump_metric = false;
  bool trace_energy = false;
};

struct Ladder {
  std::vector<int> degrees{1, 2};
  std::vector<int> sizes;
  std::vector<MeshMode> modes{MeshMode::fixed};
};

struct Config {
  boost::property_tree::ptree tree;  // resolved: file values plus overrides
  std::vector<std::string> overrides;
  RunSettings run;
  OutputSettings output;
  Ladder ladder;
};

namespace detail {

inline const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"problem", {"name"}},
      {"discretization",
       {"degree", "dt", "t_end", "si_tolerance", "si_max_iterations", "sweep_ordering", "parallel_directions", "threads",
        "extrapolate_guess", "velocity_corrected_inflow"}},
      {"angular", {"order_1d", "n_polar", "n_azimuthal"}},
      {"mesh", {"n", "mode", "init_adapt"}},
      {"mmpde", {"tau", "smoothing_passes", "metric_ceiling", "initial_substeps", "max_substeps", "area_floor"}},
      {"output",
       {"dir", "checkpoint_every", "directions", "write_vtk", "dump_metric", "trace_energy", "norm_subdivisions", "seed"}},
      {"custom",
       {"dimension", "lo", "hi", "c", "sigma_t", "sigma_s", "source", "smooth", "initial_csv", "boundary_csv"}},
      {"ladder", {"degrees", "sizes", "modes"}},
  };
  return keys;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& s) {
  std::vector<T> out;
  for (const auto& item : split(s)) {
    std::istringstream is(item);
    T v;
    if (!(is >> v) || !is.eof()) throw Error("cannot parse list entry '" + item + "'");
    out.push_back(v);
  }
  return out;
}

inline bool parse_bool(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), ::tolower);
  if (l == "1" || l == "true" || l == "yes" || l == "on") return true;
  if (l == "0" || l == "false" || l == "no" || l == "off") return false;
  throw Error("cannot parse boolean '" + s + "'");
}

inline MeshMode parse_mode(const std::string& s) {
  if (s == "fixed") return MeshMode::fixed;
  if (s == "moving") return MeshMode::moving;
  throw Error("mesh mode must be 'fixed' or 'moving', got '" + s + "'");
}

}  // namespace detail

/// Two-column (1D: x,value) or three-column (2D: x,y,value) CSV; a non-numeric
/// first line is treated as a header.
inline TabulatedData load_table(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open data table '" + path + "'");
  TabulatedData t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> cols;
    try {
      cols = detail::parse_list<double>(line);
    } catch (const Error&) {
      if (first) {
        first = false;
        continue;
      }
      throw Error("bad row in '" + path + "': " + line);
    }
    first = false;
    if (static_cast<int>(cols.size()) != dim + 1)
      throw Error("rows of '" + path + "' need " + std::to_string(dim + 1) + " columns");
    t.points.emplace_back(cols.begin(), cols.end() - 1);
    t.values.push_back(cols.back());
  }
  if (t.values.empty()) throw Error("data table '" + path + "' has no rows");
  if (dim == 1)
    for (size_t i = 1; i < t.points.size(); ++i)
      if (t.points[i][0] < t.points[i - 1][0]) throw Error("1D table '" + path + "' must be sorted by x");
  return t;
}

/// Applies `section.key=value` to the tree.
inline void apply_override(boost::property_tree::ptree& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error("override '" + assignment + "' is not of the form section.key=value");
  const std::string key = detail::trim(assignment.substr(0, eq));
  if (key.find('.') == std::string::npos) throw Error("override key '" + key + "' needs a section");
  tree.put(key, detail::trim(assignment.substr(eq + 1)));
}

/// Builds typed settings from a resolved tree. `base_dir` resolves relative data paths.
inline Config config_from_tree(const boost::property_tree::ptree& tree, const std::string& base_dir = ".") {
  for (const auto& [section, sub] : tree) {
    const auto& keys = detail::known_keys();
    const auto it = keys.find(section);
    if (it == keys.end()) throw Error("unknown config section [" + section + "]");
    for (const auto& [key, value] : sub)
      if (!it->second.count(key)) throw Error("unknown config key " + section + "." + key);
  }
  Config c;
  c.tree = tree;
  auto& r = c.run;
  auto get = [&](const std::string& k) { return tree.get_optional<std::string>(k); };
  auto num = [&](const std::string& k, auto& target) {
    if (auto v = get(k)) {
      std::istringstream is(*v);
      std::remove_reference_t<decltype(target)> x;
      if (!(is >> x) || !(is >> std::ws).eof()) throw Error("cannot parse " + k + " = '" + *v + "'");
      target = x;
    }
  };
  auto flag = [&](const std::string& k, bool& target) {
    if (auto v = get(k)) target = detail::parse_bool(*v);
  };

  if (auto v = get("problem.name")) r.problem = *v;
  num("discretization.degree", r.degree);
  num("discretization.dt", r.dt);
  num("discretization.t_end", r.t_end);
  num("discretization.si_tolerance", r.transport.tolerance);
  num("discretization.si_max_iterations", r.transport.max_iterations);
  num("discretization.threads", r.transport.threads);
  flag("discretization.parallel_directions", r.transport.parallel_directions);
  flag("discretization.extrapolate_guess", r.transport.extrapolate_guess);
  flag("discretization.velocity_corrected_inflow", r.transport.velocity_corrected_inflow);
  if (auto v = get("discretization.sweep_ordering")) {
    if (*v == "topological") r.transport.ordering = SweepOrdering::topological;
    else if (*v == "centroid") r.transport.ordering = SweepOrdering::centroid;
    else throw Error("sweep_ordering must be 'topological' or 'centroid'");
  }
  num("angular.order_1d", r.order_1d);
  num("angular.n_polar", r.n_polar);
  num("angular.n_azimuthal", r.n_azimuthal);
  num("mesh.n", r.n);
  if (auto v = get("mesh.mode")) r.mode = detail::parse_mode(*v);
  num("mesh.init_adapt", r.init_adapt);
  if (auto v = get("mmpde.tau")) {
    double tau = 0.0;
    num("mmpde.tau", tau);
    r.tau = tau;
  }
  num("mmpde.smoothing_passes", r.smoothing_passes);
  num("mmpde.metric_ceiling", r.metric_ceiling);
  num("mmpde.initial_substeps", r.mmpde.initial_substeps);
  num("mmpde.max_substeps", r.mmpde.max_substeps);
  num("mmpde.area_floor", r.mmpde.area_floor);
  num("output.norm_subdivisions", r.norm_subdivisions);
  num("output.seed", r.seed);

  auto& o = c.output;
  if (auto v = get("output.dir")) o.dir = *v;
  num("output.checkpoint_every", o.checkpoint_every);
  if (auto v = get("output.directions")) o.directions = detail::parse_list<int>(*v);
  flag("output.write_vtk", o.write_vtk);
  flag("output.dump_metric", o.dump_metric);
  flag("output.trace_energy", o.trace_energy);

  if (r.problem == "custom") {
    CustomProblemSpec cs;
    num("custom.dimension", cs.dimension);
    if (cs.dimension != 1 && cs.dimension != 2) throw Error("custom.dimension must be 1 or 2");
    cs.lo.assign(cs.dimension, 0.0);
    cs.hi.assign(cs.dimension, 1.0);
    if (auto v = get("custom.lo")) cs.lo = detail::parse_list<double>(*v);
    if (auto v = get("custom.hi")) cs.hi = detail::parse_list<double>(*v);
    num("custom.c", cs.c);
    num("custom.sigma_t", cs.sigma_t);
    num("custom.sigma_s", cs.sigma_s);
    num("custom.source", cs.source);
    flag("custom.smooth", cs.smooth);
    auto path = [&](const std::string& k) {
      const auto v = get(k);
      if (!v) throw Error("custom problem needs " + k);
      std::filesystem::path p(*v);
      if (!p.is_absolute()) p = std::filesystem::absolute(std::filesystem::path(base_dir) / p).lexically_normal();
      c.tree.put(k, p.string());  // saved configs stay usable from any directory
      return p.string();
    };
    cs.initial = load_table(path("custom.initial_csv"), cs.dimension);
    cs.boundary = load_table(path("custom.boundary_csv"), cs.dimension);
    r.custom = std::move(cs);
  }

  if (auto v = get("ladder.degrees")) c.ladder.degrees = detail::parse_list<int>(*v);
  if (auto v = get("ladder.sizes")) c.ladder.sizes = detail::parse_list<int>(*v);
  if (auto v = get("ladder.modes")) {
    c.ladder.modes.clear();
    for (const auto& m : detail::split(*v)) c.ladder.modes.push_back(detail::parse_mode(m));
  }

  if (r.degree < 1 || r.degree > 2) throw Error("discretization.degree must be 1 or 2");
  if (r.n < 1) throw Error("mesh.n must be positive");
  if (r.init_adapt < 0) throw Error("mesh.init_adapt must be non-negative");
  if (o.checkpoint_every < 0) throw Error("output.checkpoint_every must be non-negative");
  (void)r.dimension();  // rejects unknown problem names early
  return c;
}

inline Config load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error("cannot read config: " + std::string(e.what()));
  }
  for (const auto& o : overrides) apply_override(tree, o);
  const auto dir = std::filesystem::path(path).parent_path().string();
  auto c = config_from_tree(tree, dir.empty() ? "." : dir);
  c.overrides = overrides;
  return c;
}

/// Every setting with its effective value, defaults included. Reading the
/// result back gives the same Config.
inline boost::property_tree::ptree effective_tree(const Config& c) {
  boost::property_tree::ptree t;
  const auto& r = c.run;
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  auto list = [&](const auto& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
    return s;
  };
  t.put("problem.name", r.problem);
  t.put("discretization.degree", r.degree);
  t.put("discretization.dt", num(r.dt));
  t.put("discretization.t_end", num(r.t_end));
  t.put("discretization.si_tolerance", num(r.transport.tolerance));
  t.put("discretization.si_max_iterations", r.transport.max_iterations);
  t.put("discretization.sweep_ordering",
        r.transport.ordering == SweepOrdering::topological ? "topological" : "centroid");
  t.put("discretization.parallel_directions", r.transport.parallel_directions);
  t.put("discretization.threads", r.transport.threads);
  t.put("discretization.extrapolate_guess", r.transport.extrapolate_guess);
  t.put("discretization.velocity_corrected_inflow", r.transport.velocity_corrected_inflow);
  t.put("angular.order_1d", r.order_1d);
  t.put("angular.n_polar", r.n_polar);
  t.put("angular.n_azimuthal", r.n_azimuthal);
  t.put("mesh.n", r.n);
  t.put("mesh.mode", to_string(r.mode));
  t.put("mesh.init_adapt", r.init_adapt);
  if (r.tau) t.put("mmpde.tau", num(*r.tau));
  t.put("mmpde.smoothing_passes", r.smoothing_passes);
  t.put("mmpde.metric_ceiling", num(r.metric_ceiling));
  t.put("mmpde.initial_substeps", r.mmpde.initial_substeps);
  t.put("mmpde.max_substeps", r.mmpde.max_substeps);
  t.put("mmpde.area_floor", num(r.mmpde.area_floor));
  t.put("output.dir", c.output.dir);
  t.put("output.checkpoint_every", c.output.checkpoint_every);
  t.put("output.directions", list(c.output.directions));
  t.put("output.write_vtk", c.output.write_vtk);
  t.put("output.dump_metric", c.output.dump_metric);
  t.put("output.trace_energy", c.output.trace_energy);
  t.put("output.norm_subdivisions", r.norm_subdivisions);
  t.put("output.seed", r.seed);
  if (r.custom) {
    for (const char* k : {"initial_csv", "boundary_csv"}) t.put(std::string("custom.") + k, c.tree.get<std::string>(std::string("custom.") + k));
    t.put("custom.dimension", r.custom->dimension);
    t.put("custom.lo", list(r.custom->lo));
    t.put("custom.hi", list(r.custom->hi));
    t.put("custom.c", num(r.custom->c));
    t.put("custom.sigma_t", num(r.custom->sigma_t));
    t.put("custom.sigma_s", num(r.custom->sigma_s));
    t.put("custom.source", num(r.custom->source));
    t.put("custom.smooth", r.custom->smooth);
  }
  return t;
}

inline std::string to_ini(const boost::property_tree::ptree& tree) {
  std::ostringstream os;
  boost::property_tree::ini_parser::write_ini(os, tree);
  return os.str();
}

}  // namespace rtmm
