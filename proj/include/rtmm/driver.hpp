#pragma once

#include "rtmm/config.hpp"
#include "rtmm/io.hpp"
#include "rtmm/norms.hpp"
#include "rtmm/simulation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#ifndef RTMM_VERSION
#define RTMM_VERSION "0.0.0"
#endif

namespace rtmm {

using Json = nlohmann::ordered_json;

struct RunResult {
  std::string problem;
  int degree = 0;
  MeshMode mode = MeshMode::fixed;
  int elements = 0;
  bool ok = false;
  std::string error;
  std::optional<NormTriple> global;  // time-integrated error, when an exact solution exists
  double cpu_seconds = 0.0;
  int max_si_iterations = 0;
  fs::path dir;
};

namespace detail {

inline std::string step_name(int step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06d", step);
  return buf;
}

inline Json tree_to_json(const boost::property_tree::ptree& tree) {
  Json j = Json::object();
  for (const auto& [section, sub] : tree) {
    Json s = Json::object();
    for (const auto& [key, value] : sub) s[key] = value.data();
    j[section] = s;
  }
  return j;
}

inline Json norms_json(const NormTriple& n) { return Json{{"L1", n.l1}, {"L2", n.l2}, {"Linf", n.linf}}; }

inline Json mmpde_json(const MmpdeReport& r) {
  Json j{{"substeps", r.substeps},
         {"rejections", r.rejections},
         {"stopped_early", r.stopped_early},
         {"covered", r.covered},
         {"relaxation", r.relaxation}};
  if (!r.energies.empty()) {
    j["energy_start"] = r.energies.front();
    j["energy_end"] = r.energies.back();
  }
  return j;
}

/// Hashes every regular file below `dir` except the manifest. Files listed in
/// `timing` carry wall-clock data and are left out of the content digest.
inline Json inventory(const fs::path& dir, const std::vector<std::string>& timing, std::string& digest) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json" && e.path().extension() != ".tmp")
      files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  Json out = Json::array();
  std::string acc;
  for (const auto& f : files) {
    const auto rel = f.generic_string();
    const auto hash = sha256_file(dir / f);
    const bool timed = std::find(timing.begin(), timing.end(), rel) != timing.end();
    out.push_back(Json{{"path", rel}, {"bytes", fs::file_size(dir / f)}, {"sha256", hash}, {"timing", timed}});
    if (!timed) acc += rel + ' ' + hash + '\n';
  }
  digest = sha256_hex(acc.data(), acc.size());
  return out;
}

inline void write_manifest(const fs::path& dir, Json manifest, const std::vector<std::string>& timing) {
  std::string digest;
  manifest["outputs"] = inventory(dir, timing, digest);
  manifest["content_digest"] = digest;
  write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline std::string norms_header() { return "problem,degree,mesh_mode,N,L1,L2,Linf,order_L1,order_L2,cpu_seconds\n"; }

inline std::string opt_order(const std::optional<double>& v) { return v ? fmt(*v) : std::string("n/a"); }

template <int Dim>
Problem<Dim> problem_for(const RunSettings& s) {
  return s.custom ? make_custom<Dim>(*s.custom) : catalog<Dim>(s.problem);
}

template <int Dim>
RunResult run_dim(const Config& cfg, std::ostream* log) {
  const auto& out = cfg.output;
  const fs::path dir = out.dir;
  fs::create_directories(dir);
  // stale outputs of an earlier run would otherwise end up in the inventory
  for (const char* sub : {"checkpoints", "snapshots", "metric", "meshdump"}) fs::remove_all(dir / sub);
  for (const char* f : {"energy.csv", "norms.csv", "trajectory.csv", "manifest.json"}) fs::remove(dir / f);
  const auto effective = effective_tree(cfg);
  write_atomic(dir / "config.ini", to_ini(effective));

  RunResult res;
  res.problem = cfg.run.problem;
  res.degree = cfg.run.degree;
  res.mode = cfg.run.mode;
  res.elements = cfg.run.elements(Dim);
  res.dir = dir;

  Json manifest;
  manifest["tool"] = "solve";
  manifest["version"] = RTMM_VERSION;
  manifest["command"] = "run";
  manifest["config"] = tree_to_json(cfg.tree);
  manifest["overrides"] = cfg.overrides;
  manifest["effective_config"] = tree_to_json(effective);

  std::vector<std::string> timing;
  Json steps = Json::array();
  int current = 0;
  try {
    Simulation<Dim> sim(cfg.run);
    const auto& mesh0 = sim.mesh();
    manifest["mesh"] = Json{{"dimension", Dim},
                            {"elements", mesh0.num_elements()},
                            {"vertices", mesh0.num_vertices()},
                            {"domain_lo", std::vector<double>(mesh0.topo->domain.lo.data(), mesh0.topo->domain.lo.data() + Dim)},
                            {"domain_hi", std::vector<double>(mesh0.topo->domain.hi.data(), mesh0.topo->domain.hi.data() + Dim)}};
    manifest["resolved"] = Json{{"tau", sim.tau()},
                                {"steps", sim.total_steps()},
                                {"directions", sim.quadrature().count()},
                                {"mmpde_initial_substeps", cfg.run.mmpde.initial_substeps},
                                {"mmpde_max_substeps", cfg.run.mmpde.max_substeps},
                                {"mmpde_area_floor", cfg.run.mmpde.area_floor},
                                {"init_adapt", cfg.run.mode == MeshMode::moving ? cfg.run.init_adapt : 0}};

    auto step_csv = open_out(dir / "steps.csv");
    step_csv << "step,t,si_iterations,sweep_violations,min_volume,mmpde_substeps,mmpde_rejections,mmpde_covered,"
                "relaxation,L1,L2,Linf\n";
    auto mesh_csv = open_out(dir / "mesh_vertices.csv");
    write_vertex_header(mesh_csv);
    std::ofstream traj, energy;
    if constexpr (Dim == 1) {
      traj = open_out(dir / "trajectory.csv");
      traj << 't';
      for (int j = 1; j <= sim.mesh().num_vertices(); ++j) traj << ",x_" << j;
      traj << '\n';
      write_trajectory_row(traj, 0.0, sim.mesh());
    }
    if (out.trace_energy) {
      energy = open_out(dir / "energy.csv");
      energy << "step,substep,energy\n";
      int sub = 0;  // initial adaptation passes share step 0 and number their substeps consecutively
      for (const auto& r : sim.initial_adaptation())
        for (double e : r.energies) energy << 0 << ',' << sub++ << ',' << fmt(e) << '\n';
    }

    auto checkpoint = [&](int step) {
      write_vertex_rows(mesh_csv, step, sim.mesh());
      const auto name = step_name(step);
      write_checkpoint(dir / "checkpoints" / (name + ".bin"), step, sim.mesh(), sim.field(), sim.quadrature());
      if (out.write_vtk)
        write_solution_vtk(dir / "snapshots" / (name + ".vtk"), sim.mesh(), sim.field(), sim.solver().ops(),
                           sim.quadrature(), out.directions, sim.problem().name + " t=" + fmt(sim.time()));
    };
    for (int m : out.directions)
      if (m < 0 || m >= sim.quadrature().count())
        throw Error("output.directions entry " + std::to_string(m) + " exceeds the " +
                    std::to_string(sim.quadrature().count()) + " available directions");
    checkpoint(0);

    Json init = Json::array();
    for (const auto& r : sim.initial_adaptation()) init.push_back(mmpde_json(r));
    manifest["initial_adaptation"] = init;

    while (!sim.finished()) {
      current = sim.current_step() + 1;
      const auto& r = sim.step();
      step_csv << r.step << ',' << fmt(r.t) << ',' << r.si_iterations << ',' << r.sweep_violations << ','
               << fmt(r.min_volume) << ',' << r.mmpde.substeps << ',' << r.mmpde.rejections << ','
               << fmt(r.mmpde.covered) << ',' << fmt(r.mmpde.relaxation);
      if (r.norms)
        step_csv << ',' << fmt(r.norms->l1) << ',' << fmt(r.norms->l2) << ',' << fmt(r.norms->linf) << '\n';
      else
        step_csv << ",,,\n";
      if constexpr (Dim == 1) write_trajectory_row(traj, r.t, sim.mesh());
      if (out.trace_energy)
        for (size_t i = 0; i < r.mmpde.energies.size(); ++i)
          energy << r.step << ',' << i << ',' << fmt(r.mmpde.energies[i]) << '\n';
      if (out.dump_metric && sim.last_metric())
        write_metric_csv<Dim>(dir / "metric" / (step_name(r.step) + ".csv"), sim.last_metric()->tensor);
      Json sj{{"step", r.step}, {"t", r.t}, {"si_iterations", r.si_iterations}, {"min_volume", r.min_volume}};
      if (cfg.run.mode == MeshMode::moving) sj["mmpde"] = mmpde_json(r.mmpde);
      steps.push_back(sj);
      const bool last = sim.finished();
      if (last || (out.checkpoint_every > 0 && r.step % out.checkpoint_every == 0)) {
        checkpoint(r.step);
        if (log) *log << "  step " << r.step << '/' << sim.total_steps() << " t=" << r.t << '\n';
      }
    }
    step_csv.close();
    mesh_csv.close();
    if (traj.is_open()) traj.close();
    if (energy.is_open()) energy.close();

    res.ok = true;
    res.cpu_seconds = sim.cpu_seconds();
    res.max_si_iterations = sim.max_si_iterations();
    manifest["status"] = "ok";
    manifest["steps"] = steps;
    manifest["max_si_iterations"] = res.max_si_iterations;
    manifest["cpu_seconds"] = res.cpu_seconds;
    if (sim.problem().exact) {
      res.global = sim.global_norms().value();
      manifest["global_norms"] = norms_json(*res.global);
      auto nc = open_out(dir / "norms.csv");
      nc << norms_header() << sim.problem().name << ',' << res.degree << ',' << to_string(res.mode) << ','
         << res.elements << ',' << fmt(res.global->l1) << ',' << fmt(res.global->l2) << ','
         << fmt(res.global->linf) << ",n/a,n/a," << fmt(res.cpu_seconds) << '\n';
      nc.close();
      timing.push_back("norms.csv");
    }
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = current > 0 ? "step " + std::to_string(current) + ": " + e.what() : std::string(e.what());
    if (const auto* me = dynamic_cast<const MeshError*>(&e)) manifest["failed_element"] = me->element();
    manifest["status"] = "failed";
    manifest["error"] = res.error;
    manifest["failed_step"] = current;
    manifest["steps"] = steps;
    write_manifest(dir, manifest, timing);
    return res;
  }
  write_manifest(dir, manifest, timing);
  return res;
}

template <int Dim>
int latest_checkpoint(const fs::path& run) {
  const std::regex pat("step_(\\d+)\\.bin");
  int best = -1;
  if (!fs::is_directory(run / "checkpoints")) throw Error("no checkpoints in '" + run.string() + "'");
  for (const auto& e : fs::directory_iterator(run / "checkpoints")) {
    std::smatch m;
    const auto name = e.path().filename().string();
    if (std::regex_match(name, m, pat)) best = std::max(best, std::stoi(m[1]));
  }
  if (best < 0) throw Error("no checkpoints in '" + run.string() + "'");
  return best;
}

template <int Dim>
Checkpoint<Dim> load_step(const fs::path& run, std::optional<int> step) {
  const int s = step ? *step : latest_checkpoint<Dim>(run);
  const auto p = run / "checkpoints" / (step_name(s) + ".bin");
  if (!fs::exists(p)) throw Error("no checkpoint for step " + std::to_string(s) + " in '" + run.string() + "'");
  return read_checkpoint<Dim>(p);
}

}  // namespace detail

/// Executes one configured run into `cfg.output.dir`. Module errors are caught,
/// recorded in the manifest with the failing step, and reported in the result.
inline RunResult run(const Config& cfg, std::ostream* log = nullptr) {
  return cfg.run.dimension() == 1 ? detail::run_dim<1>(cfg, log) : detail::run_dim<2>(cfg, log);
}

struct LadderRow {
  RunResult result;
  std::optional<double> order_l1, order_l2;  // against the previous successful size of the same group
};

struct LadderSlope {
  int degree = 0;
  MeshMode mode = MeshMode::fixed;
  int points = 0;
  std::optional<double> l1, l2;  // least-squares slopes over the group
};

struct LadderOutcome {
  std::vector<LadderRow> rows;
  std::vector<LadderSlope> slopes;
};

/// Runs every degree x mode x size combination of the ladder, one run directory
/// each, then writes convergence.csv (per run) and slopes.csv (per group).
inline LadderOutcome converge(const Config& cfg, std::ostream* log = nullptr) {
  const auto& lad = cfg.ladder;
  if (lad.sizes.empty() || lad.degrees.empty() || lad.modes.empty()) throw Error("ladder needs degrees, sizes and modes");
  const fs::path dir = cfg.output.dir;
  fs::create_directories(dir);
  write_atomic(dir / "config.ini", to_ini(cfg.tree));
  const int dim = cfg.run.dimension();
  LadderOutcome outcome;
  Json runs = Json::array();
  for (int k : lad.degrees)
    for (MeshMode mode : lad.modes) {
      std::vector<std::pair<int, double>> l1, l2;
      for (int n : lad.sizes) {
        auto tree = cfg.tree;
        tree.erase("ladder");
        tree.put("discretization.degree", k);
        tree.put("mesh.mode", to_string(mode));
        tree.put("mesh.n", n);
        const std::string name = cfg.run.problem + "_p" + std::to_string(k) + "_" + to_string(mode) + "_n" + std::to_string(n);
        tree.put("output.dir", (dir / name).string());
        LadderRow row;
        try {
          auto sub = config_from_tree(tree);
          sub.overrides = cfg.overrides;
          if (log) *log << "run " << name << '\n';
          row.result = run(sub, log);
        } catch (const std::exception& e) {
          row.result.ok = false;
          row.result.error = e.what();
        }
        row.result.problem = cfg.run.problem;
        row.result.degree = k;
        row.result.mode = mode;
        row.result.elements = cfg.run.dimension() == 1 ? n : 2 * n * n;
        auto& r = row.result;
        if (r.ok && r.global && r.global->l1 > 0.0 && r.global->l2 > 0.0) {
          if (!l1.empty()) {
            row.order_l1 = convergence_order({l1.back(), {r.elements, r.global->l1}}, dim);
            row.order_l2 = convergence_order({l2.back(), {r.elements, r.global->l2}}, dim);
          }
          l1.emplace_back(r.elements, r.global->l1);
          l2.emplace_back(r.elements, r.global->l2);
        }
        if (log && !r.ok) *log << "  failed: " << r.error << '\n';
        runs.push_back(Json{{"name", name}, {"ok", r.ok}, {"error", r.error}});
        outcome.rows.push_back(row);
      }
      LadderSlope s;
      s.degree = k;
      s.mode = mode;
      s.points = static_cast<int>(l1.size());
      if (l1.size() >= 2) {
        s.l1 = convergence_order(l1, dim);
        s.l2 = convergence_order(l2, dim);
      }
      outcome.slopes.push_back(s);
    }

  {
    auto csv = open_out(dir / "convergence.csv");
    csv << detail::norms_header();
    for (const auto& row : outcome.rows) {
      const auto& r = row.result;
      csv << r.problem << ',' << r.degree << ',' << to_string(r.mode) << ',' << r.elements << ',';
      if (r.ok && r.global)
        csv << fmt(r.global->l1) << ',' << fmt(r.global->l2) << ',' << fmt(r.global->linf) << ',';
      else
        csv << (r.ok ? "n/a,n/a,n/a," : "failed,failed,failed,");
      csv << detail::opt_order(row.order_l1) << ',' << detail::opt_order(row.order_l2) << ','
          << (r.ok ? fmt(r.cpu_seconds) : std::string("n/a")) << '\n';
    }
  }
  {
    auto csv = open_out(dir / "slopes.csv");
    csv << "problem,degree,mesh_mode,points,order_L1,order_L2\n";
    for (const auto& s : outcome.slopes)
      csv << cfg.run.problem << ',' << s.degree << ',' << to_string(s.mode) << ',' << s.points << ','
          << detail::opt_order(s.l1) << ',' << detail::opt_order(s.l2) << '\n';
  }
  Json manifest;
  manifest["tool"] = "solve";
  manifest["version"] = RTMM_VERSION;
  manifest["command"] = "converge";
  manifest["config"] = detail::tree_to_json(cfg.tree);
  manifest["overrides"] = cfg.overrides;
  manifest["runs"] = runs;
  std::vector<std::string> timing{"convergence.csv"};
  for (const auto& row : outcome.rows) {
    const auto rel = fs::relative(row.result.dir.empty() ? dir : row.result.dir, dir).generic_string();
    if (!row.result.dir.empty()) timing.push_back(rel + "/norms.csv");
    if (!row.result.dir.empty()) timing.push_back(rel + "/manifest.json");
  }
  detail::write_manifest(dir, manifest, timing);
  return outcome;
}

struct CutRequest {
  fs::path run;
  std::string axis = "y";  // the coordinate held fixed: "y" samples along x, "x" along y
  double value = 0.0;
  double slope = 0.0;  // axis "y" only: the line y = value + slope * x
  int direction = 0;
  std::optional<int> step;  // latest checkpoint when unset
  int samples = 1000;
};

namespace detail {

template <int Dim>
void cut_dim(const CutRequest& req, std::ostream& os) {
  const auto cfg = load_config((req.run / "config.ini").string());
  const auto cp = load_step<Dim>(req.run, req.step);
  if (req.direction < 0 || req.direction >= cp.quad.count())
    throw Error("direction " + std::to_string(req.direction) + " out of range (run has " +
                std::to_string(cp.quad.count()) + ")");
  const auto problem = problem_for<Dim>(cfg.run);
  const ReferenceOperators<Dim> ops(cp.field.degree);
  const auto& dom = cp.mesh.topo->domain;
  const Vec<Dim> dir = cp.quad.directions[req.direction];

  std::string param = "x";
  double a = dom.lo[0], b = dom.hi[0];
  auto point = [&](double s) {
    Vec<Dim> p;
    p[0] = s;
    if constexpr (Dim == 2) {
      if (req.axis == "y") {
        p[1] = req.value + req.slope * s;
      } else {
        p[0] = req.value;
        p[1] = s;
      }
    }
    return p;
  };
  if constexpr (Dim == 2) {
    if (req.axis == "y") {
      // clip the line to the part inside the domain
      if (req.slope != 0.0) {
        double s0 = (dom.lo[1] - req.value) / req.slope, s1 = (dom.hi[1] - req.value) / req.slope;
        if (s0 > s1) std::swap(s0, s1);
        a = std::max(a, s0);
        b = std::min(b, s1);
      } else if (req.value < dom.lo[1] || req.value > dom.hi[1]) {
        a = 1.0, b = 0.0;
      }
    } else if (req.axis == "x") {
      if (req.slope != 0.0) throw Error("--slope applies to cuts with --axis y");
      param = "y";
      a = dom.lo[1];
      b = dom.hi[1];
      if (req.value < dom.lo[0] || req.value > dom.hi[0]) a = 1.0, b = 0.0;
    } else {
      throw Error("axis must be 'x' or 'y'");
    }
    if (!(b > a)) throw Error("cut line does not cross the domain");
  } else if (req.axis != "x" && req.axis != "y") {
    throw Error("axis must be 'x' or 'y'");
  }

  PointLocator<Dim> locator(cp.mesh);
  os << param << ",I_m" << (problem.exact ? ",exact" : "") << '\n';
  for (int i = 0; i < req.samples; ++i) {
    const double s = req.samples == 1 ? 0.5 * (a + b) : a + (b - a) * i / (req.samples - 1);
    const Vec<Dim> p = point(s);
    const int k = locator.locate(p);
    if (k < 0) throw Error("sample point outside the mesh");
    auto l = barycentric(cp.mesh, k, p);
    Vec<Dim> ref;
    for (int d = 0; d < Dim; ++d) ref[d] = std::clamp(l[d + 1], 0.0, 1.0);
    const double v = ops.basis.values(ref).dot(cp.field.block(req.direction, k));
    os << fmt(s) << ',' << fmt(v);
    if (problem.exact) os << ',' << fmt((*problem.exact)(p, dir, cp.field.time));
    os << '\n';
  }
}

}  // namespace detail

/// Samples direction `direction` of a stored solution along a line.
inline void cut(const CutRequest& req, std::ostream& os) {
  const auto cfg = load_config((req.run / "config.ini").string());
  if (cfg.run.dimension() == 1)
    detail::cut_dim<1>(req, os);
  else
    detail::cut_dim<2>(req, os);
}

/// Writes the mesh stored at `step` as `<prefix>.vtk` and `<prefix>.csv`.
inline std::vector<fs::path> meshdump(const fs::path& run, int step, fs::path prefix = {}) {
  const auto cfg = load_config((run / "config.ini").string());
  if (prefix.empty()) prefix = run / "meshdump" / detail::step_name(step);
  std::vector<fs::path> written{prefix.string() + ".vtk", prefix.string() + ".csv"};
  auto dump = [&](const auto& cp) {
    write_mesh_vtk(written[0], cp.mesh, "mesh at step " + std::to_string(step));
    auto csv = open_out(written[1]);
    write_vertex_header(csv);
    write_vertex_rows(csv, step, cp.mesh);
  };
  if (cfg.run.dimension() == 1)
    dump(detail::load_step<1>(run, step));
  else
    dump(detail::load_step<2>(run, step));
  return written;
}

}  // namespace rtmm
