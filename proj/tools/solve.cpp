#include "rtmm/driver.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct RunFlags {
  std::string config;
  std::vector<std::string> overrides;
  bool dump_metric = false;
  bool trace_energy = false;
  std::optional<int> init_adapt;
  bool quiet = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "INI configuration file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--override", f.overrides, "section.key=value, applied after the file (repeatable)");
  cmd->add_flag("--dump-metric", f.dump_metric, "write metric/step_*.csv per adaptation step");
  cmd->add_flag("--trace-energy", f.trace_energy, "write energy.csv with the MMPDE energy per substep");
  cmd->add_option("--init-adapt", f.init_adapt, "metric/MMPDE passes on the initial condition (moving mode)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_flag("-q,--quiet", f.quiet, "no progress output");
}

rtmm::Config resolve(const RunFlags& f) {
  auto overrides = f.overrides;
  if (f.dump_metric) overrides.push_back("output.dump_metric=true");
  if (f.trace_energy) overrides.push_back("output.trace_energy=true");
  if (f.init_adapt) overrides.push_back("mesh.init_adapt=" + std::to_string(*f.init_adapt));
  return rtmm::load_config(f.config, overrides);
}

std::string norm_line(const rtmm::RunResult& r) {
  if (!r.global) return "no exact solution; errors not computed";
  return "L1=" + rtmm::fmt(r.global->l1) + " L2=" + rtmm::fmt(r.global->l2) + " Linf=" + rtmm::fmt(r.global->linf);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moving-mesh DG solver for the unsteady radiative transfer equation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", RTMM_VERSION);

  RunFlags run_flags, ladder_flags;
  auto* run_cmd = app.add_subcommand("run", "run one configuration");
  add_run_flags(run_cmd, run_flags);
  auto* conv_cmd = app.add_subcommand("converge", "run the [ladder] grid and fit convergence orders");
  add_run_flags(conv_cmd, ladder_flags);

  rtmm::CutRequest cut_req;
  std::string cut_run, cut_out;
  std::optional<double> cut_value;
  std::optional<int> cut_step;
  auto* cut_cmd = app.add_subcommand("cut", "sample a stored solution along a line (CSV)");
  cut_cmd->add_option("--run", cut_run, "run directory")->required()->check(CLI::ExistingDirectory);
  cut_cmd->add_option("--axis", cut_req.axis, "coordinate held fixed: y (sample along x) or x")
      ->check(CLI::IsMember({"x", "y"}));
  cut_cmd->add_option("--value", cut_value, "value of the fixed coordinate (2D)");
  cut_cmd->add_option("--slope", cut_req.slope, "with --axis y, sample y = value + slope*x");
  cut_cmd->add_option("--direction", cut_req.direction, "discrete direction index");
  cut_cmd->add_option("--step", cut_step, "checkpoint step (default: last)");
  cut_cmd->add_option("--samples", cut_req.samples, "number of sample points")->check(CLI::PositiveNumber);
  cut_cmd->add_option("--out", cut_out, "output CSV (default: stdout)");

  std::string dump_run, dump_prefix;
  int dump_step = 0;
  auto* dump_cmd = app.add_subcommand("meshdump", "write the mesh of a stored step as VTK and CSV");
  dump_cmd->add_option("--run", dump_run, "run directory")->required()->check(CLI::ExistingDirectory);
  dump_cmd->add_option("--step", dump_step, "checkpoint step")->required();
  dump_cmd->add_option("--out", dump_prefix, "output path prefix (default: <run>/meshdump/step_NNNNNN)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      const auto cfg = resolve(run_flags);
      std::ostream* log = run_flags.quiet ? nullptr : &std::cerr;
      const auto r = rtmm::run(cfg, log);
      if (!r.ok) {
        std::cerr << "run failed: " << r.error << "\n(see " << (r.dir / "manifest.json").string() << ")\n";
        return 1;
      }
      std::cout << r.problem << " P" << r.degree << ' ' << rtmm::to_string(r.mode) << " N=" << r.elements << ": "
                << norm_line(r) << " cpu=" << r.cpu_seconds << "s max_si=" << r.max_si_iterations << '\n';
      return 0;
    }
    if (*conv_cmd) {
      const auto cfg = resolve(ladder_flags);
      const auto out = rtmm::converge(cfg, ladder_flags.quiet ? nullptr : &std::cerr);
      int failed = 0;
      for (const auto& row : out.rows) failed += row.result.ok ? 0 : 1;
      for (const auto& s : out.slopes)
        std::cout << cfg.run.problem << " P" << s.degree << ' ' << rtmm::to_string(s.mode)
                  << ": order_L1=" << (s.l1 ? rtmm::fmt(*s.l1) : "n/a")
                  << " order_L2=" << (s.l2 ? rtmm::fmt(*s.l2) : "n/a") << " (" << s.points << " points)\n";
      if (failed) std::cerr << failed << " ladder run(s) failed; see convergence.csv\n";
      return failed ? 1 : 0;
    }
    if (*cut_cmd) {
      cut_req.run = cut_run;
      cut_req.step = cut_step;
      if (cut_value) cut_req.value = *cut_value;
      if (!cut_value && rtmm::load_config(cut_run + "/config.ini").run.dimension() == 2)
        throw rtmm::Error("--value is required for 2D runs");
      if (cut_out.empty()) {
        rtmm::cut(cut_req, std::cout);
      } else {
        std::ostringstream os;
        rtmm::cut(cut_req, os);
        rtmm::write_atomic(cut_out, os.str());
      }
      return 0;
    }
    if (*dump_cmd) {
      for (const auto& p : rtmm::meshdump(dump_run, dump_step, dump_prefix)) std::cout << p.string() << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
