// qgflow command line: validate | spectrum | flow | anholonomy | web.
//
// Exit codes: 0 ok, 1 usage, 2 validation failure, 3 numerical ambiguity.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "qgflow/cycle_conditions.hpp"
#include "qgflow/flow_tracker.hpp"
#include "qgflow/report.hpp"
#include "qgflow/spectral_core.hpp"
#include "qgflow/web_approx.hpp"

using namespace qgflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitAmbiguity = 3;

struct RunConfig {
  std::string cycle = "long";
  double t = 0.1;
  double s = 1.0;
  std::string ratio = "golden";
  double length = 1.0;
  int theta_steps = 720;
  double k_max = 0.0;  // 0: 12 pi / length
  int levels = 0;      // 0: levels below k_max at theta = 0, minus 2
  bool include_zero_mode = true;
  bool emit_plot = false;
  std::string out;
  std::string plot;
  std::string web_geometry;
  std::vector<double> epsilons{1e-2, 1e-3, 1e-4};
  double theta = -1.0;  // negative: command default
  std::string sector = "II";
  int threads = 1;
  double frozen_theta = -1.0;
  bool uncorrected_bp = false;
  double tol = 1e-12;
  int web_levels = 5;

  CycleParams params() const { return {parse_cycle(cycle), t, s}; }
  Geometry geometry() const { return Geometry::from_ratio(parse_ratio(ratio), length); }
  double kmax() const { return k_max > 0.0 ? k_max : 12.0 * kPi / length; }
};

// Writes to --out, or stdout when it is empty.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw InvalidParameter("cannot open output file '" + path + "'");
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::string plot_path(const RunConfig& c) {
  if (!c.plot.empty()) return c.plot;
  if (c.out.empty()) return "flow.svg";
  const auto dot = c.out.find_last_of('.');
  const auto slash = c.out.find_last_of('/');
  const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
  return (has_ext ? c.out.substr(0, dot) : c.out) + ".svg";
}

void report_warnings(const FlowTable& ft) {
  if (ft.warnings.empty()) return;
  std::cerr << "note: " << ft.warnings.size() << " pairs of levels closer than 3 grid steps (resolved by pair detection)\n";
}

int cmd_validate(const RunConfig& c) {
  const CycleParams p = c.params();
  p.validate();
  int violations = 0;
  double worst = 0.0;
  for (int i = 0; i < c.theta_steps; ++i) {
    const double th = kTwoPi * i / c.theta_steps;
    RampVector r = eval_ramps(p.kind, th);
    if (c.uncorrected_bp && p.kind == CycleKind::Long) r.bp = uncorrected_long_bp(th);
    try {
      validate_ramps(r);
    } catch (const InvalidParameter& e) {
      if (violations < 20)
        std::cout << "theta " << fmt12(th) << " ramp violation: " << e.what() << " (b'=" << fmt12(r.bp) << ")\n";
      ++violations;
      continue;
    }
    const auto rep = check_self_adjoint(build_condition(r, p, th), c.tol);
    worst = std::max(worst, rep.asymmetry);
    if (!rep.pass) {
      if (violations < 20)
        std::cout << "theta " << fmt12(th) << " asymmetry " << fmt12(rep.asymmetry) << " rank " << rep.rank << "\n";
      ++violations;
    }
  }
  std::cout << "validate cycle=" << c.cycle << " t=" << fmt12(c.t) << " s=" << fmt12(c.s)
            << " angles=" << c.theta_steps << " max_asymmetry=" << fmt12(worst) << " violations=" << violations
            << "\n";
  return violations ? kExitValidation : kExitOk;
}

int cmd_spectrum(const RunConfig& c) {
  const CycleParams p = c.params();
  const Geometry g = c.geometry();
  const double th = c.theta < 0.0 ? 0.0 : c.theta;
  const VertexCondition vc = condition_at(p, th);
  SpectrumOptions so;
  so.include_zero_mode = c.include_zero_mode;
  const Spectrum sp = find_spectrum(vc, g, c.kmax(), so);
  Output out(c.out);
  write_spectrum_csv(out.stream(), sp, p.kind, vc);
  if (!sp.warnings.empty()) std::cerr << "note: " << sp.warnings.size() << " close level pairs\n";
  return kExitOk;
}

struct FlowRun {
  FlowTable ft;
  BranchSet bs;
};

FlowRun run_flow(const RunConfig& c) {
  const CycleParams p = c.params();
  p.validate();
  const Geometry g = c.geometry();
  SweepOptions so;
  so.spectrum.include_zero_mode = c.include_zero_mode;
  so.threads = c.threads;
  FlowRun r;
  if (c.frozen_theta >= 0.0) {
    const VertexCondition vc = condition_at(p, c.frozen_theta);
    r.ft = sweep_family([vc](double) { return vc; }, p.kind, g, c.theta_steps, c.kmax(), so);
  } else {
    r.ft = sweep(p, g, c.theta_steps, c.kmax(), so);
  }
  report_warnings(r.ft);
  r.bs = track_branches(r.ft);
  return r;
}

std::string flow_title(const RunConfig& c) {
  std::ostringstream os;
  os << c.cycle << " cycle, t=" << fmt12(c.t) << ", s=" << fmt12(c.s) << ", L1/L2=" << c.ratio;
  if (c.frozen_theta >= 0.0) os << ", frozen at θ=" << fmt12(c.frozen_theta);
  return os.str();
}

int cmd_flow(const RunConfig& c) {
  const FlowRun r = run_flow(c);
  {
    Output out(c.out);
    write_flow_csv(out.stream(), r.ft, &r.bs);
  }
  if (c.emit_plot) {
    std::ofstream svg(plot_path(c), std::ios::binary);
    if (!svg) throw InvalidParameter("cannot open plot file '" + plot_path(c) + "'");
    render_flow_svg(svg, r.ft, &r.bs, flow_title(c));
  }
  return kExitOk;
}

int cmd_anholonomy(const RunConfig& c) {
  const FlowRun r = run_flow(c);
  const int n = c.levels > 0 ? c.levels : default_level_count(r.ft, r.bs);
  if (n <= 0) throw IncompleteBranch("no levels to report; raise --k-max");
  const AnholonomyReport rep = anholonomy_permutation(r.bs, n);
  AnholonomyHeader h{c.cycle, c.t, c.s, c.ratio, c.geometry(), c.theta_steps, c.kmax()};
  std::ostringstream text;
  write_anholonomy_report(text, h, r.ft, r.bs, rep);
  if (!c.out.empty()) {
    Output out(c.out);
    out.stream() << text.str();
  }
  std::cout << text.str();
  if (c.emit_plot) {
    std::ofstream svg(plot_path(c), std::ios::binary);
    render_flow_svg(svg, r.ft, &r.bs, flow_title(c));
  }
  return kExitOk;
}

int cmd_web(const RunConfig& c) {
  const CycleParams p = c.params();
  if (p.kind != CycleKind::Long) throw InvalidParameter("webs are defined for the sectors of the long cycle");
  const int sector = parse_sector(c.sector);
  const double th = c.theta >= 0.0 ? c.theta : (sector - 0.5) * kPi / 3.0;
  if (region_of(CycleKind::Long, th).index != sector)
    throw InvalidParameter("theta does not lie in sector " + sector_name(sector));
  ConvergenceOptions opt;
  opt.threads = c.threads;
  if (!c.web_geometry.empty()) opt.geometry_path = &c.web_geometry;
  const ConvergenceStudy st =
      convergence_study(sector, eval_ramps(CycleKind::Long, th), p, c.geometry(), c.epsilons, c.web_levels, opt);
  Output out(c.out);
  write_convergence_csv(out.stream(), st);
  std::cerr << "sector " << sector_name(sector) << " theta=" << fmt12(th) << " min_order=" << fmt12(st.min_order)
            << (st.converged ? " converged" : " NON-CONVERGENT") << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral flow and anholonomy on a two-loop quantum graph with a singular vertex"};
  app.set_config("--config", "", "key = value configuration file; flags override it");
  app.require_subcommand(0, 1);
  app.fallthrough();

  RunConfig c;
  bool print_config = false;
  app.add_flag("--print-config", print_config, "Print the effective configuration and exit");
  app.add_option("--cycle", c.cycle, "long | short")->check(CLI::IsMember({"long", "short"}))->capture_default_str();
  app.add_option("--t", c.t, "Coupling scale t > 0")->capture_default_str();
  app.add_option("--s", c.s, "Coupling scale s > 0")->capture_default_str();
  app.add_option("--ratio", c.ratio, "L1/L2: golden | silver | bronze | <positive real>")->capture_default_str();
  app.add_option("--length", c.length, "Total length L1 + L2")->capture_default_str();
  app.add_option("--theta-steps", c.theta_steps, "Theta grid intervals over [0, 2pi]")
      ->check(CLI::Range(2, 1 << 22))
      ->capture_default_str();
  app.add_option("--k-max", c.k_max, "Largest wavenumber (0: 12 pi / length)")->capture_default_str();
  app.add_option("--levels", c.levels, "Levels in the permutation (0: count at theta=0 minus 2)")->capture_default_str();
  app.add_option("--include-zero-mode", c.include_zero_mode, "Count k = 0 as a level")->capture_default_str();
  app.add_flag("--emit-plot", c.emit_plot, "Write an SVG plot next to the table");
  app.add_option("--out", c.out, "Output file (default: stdout)");
  app.add_option("--plot", c.plot, "SVG path (default: --out with .svg)");
  app.add_option("--web-geometry", c.web_geometry, "Web description file overriding the default web");
  app.add_option("--epsilons", c.epsilons, "Decreasing list of web scales")->delimiter(',')->capture_default_str();
  app.add_option("--theta", c.theta, "Angle for spectrum / web (default 0 / sector midpoint)");
  app.add_option("--sector", c.sector, "Web sector I..VI")->capture_default_str();
  app.add_option("--web-levels", c.web_levels, "Levels compared in a web study")->capture_default_str();
  app.add_option("--threads", c.threads, "Worker threads for the theta sweep")->capture_default_str();
  app.add_option("--frozen-theta", c.frozen_theta, "Freeze the condition at this angle (flow, anholonomy)");
  app.add_flag("--uncorrected-bp", c.uncorrected_bp, "validate: use the printed b' formula");
  app.add_option("--tol", c.tol, "validate: self-adjointness tolerance")->capture_default_str();

  auto* validate = app.add_subcommand("validate", "Self-adjointness and ramp constraints over the theta grid");
  auto* spectrum = app.add_subcommand("spectrum", "Spectrum at one angle");
  auto* flow = app.add_subcommand("flow", "Spectral flow table over the cycle");
  auto* anholonomy = app.add_subcommand("anholonomy", "Level permutation after one cycle");
  auto* web = app.add_subcommand("web", "Delta-web convergence study");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  if (print_config) {
    std::istringstream cfg(app.config_to_str(true, false));
    for (std::string line; std::getline(cfg, line);)
      if (line.rfind("print-config", 0) != 0) std::cout << line << '\n';
    return kExitOk;
  }
  try {
    if (validate->parsed()) return cmd_validate(c);
    if (spectrum->parsed()) return cmd_spectrum(c);
    if (flow->parsed()) return cmd_flow(c);
    if (anholonomy->parsed()) return cmd_anholonomy(c);
    if (web->parsed()) return cmd_web(c);
    std::cerr << app.help();
    return kExitUsage;
  } catch (const TrackingAmbiguity& e) {
    std::cerr << "error: " << e.what() << " in theta [" << fmt12(e.theta_lo()) << ", " << fmt12(e.theta_hi()) << "]\n";
    return kExitAmbiguity;
  } catch (const IncompleteBranch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAmbiguity;
  } catch (const InvalidParameter& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAmbiguity;
  }
}
