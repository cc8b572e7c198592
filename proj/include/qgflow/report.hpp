#pragma once

// Tables, reports and plots. Every writer produces identical bytes for
// identical inputs: fixed formatting, fixed ordering, no timestamps.

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qgflow/cycle_conditions.hpp"
#include "qgflow/flow_tracker.hpp"
#include "qgflow/spectral_core.hpp"
#include "qgflow/web_approx.hpp"

namespace qgflow {

/// 12 significant digits, "%.12g".
inline std::string fmt12(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) x = 0.0;  // no "-0"
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

inline std::string fmt_fixed(double x, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  std::string s = buf;
  if (s == "-0" || s.rfind("-0.", 0) == 0) {
    bool zero = s.find_first_not_of("-0.") == std::string::npos;
    if (zero) s.erase(0, 1);
  }
  return s;
}

/// Ratio presets or an explicit positive number.
inline double parse_ratio(const std::string& s) {
  if (s == "golden") return metal_mean::golden;
  if (s == "silver") return metal_mean::silver;
  if (s == "bronze") return metal_mean::bronze;
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InvalidParameter("ratio must be golden, silver, bronze or a positive number");
  }
  if (used != s.size() || !(v > 0.0) || !std::isfinite(v))
    throw InvalidParameter("ratio must be golden, silver, bronze or a positive number");
  return v;
}

inline CycleKind parse_cycle(const std::string& s) {
  if (s == "long") return CycleKind::Long;
  if (s == "short") return CycleKind::Short;
  throw InvalidParameter("cycle must be long or short");
}

// ---------------------------------------------------------------------------
// Tables

inline void write_spectrum_csv(std::ostream& os, const Spectrum& sp, CycleKind kind, const VertexCondition& vc) {
  const std::string region = region_of(kind, vc.theta).name();
  const std::string topo = classify_topology(vc).name;
  os << "theta,region,topology,level_index,k,multiplicity,weight1\n";
  int idx = 0;
  for (const auto& l : sp.levels) {
    os << fmt12(vc.theta) << ',' << region << ',' << topo << ',' << idx << ',' << fmt12(l.k) << ','
       << l.multiplicity << ',' << fmt12(l.weight1) << '\n';
    idx += l.multiplicity;
  }
}

/// One row per grid angle and level; branch_id is -1 for levels above the
/// tracked window.
inline void write_flow_csv(std::ostream& os, const FlowTable& ft, const BranchSet* bs) {
  os << "theta,region,topology,level_index,k,multiplicity,weight1,branch_id\n";
  for (size_t i = 0; i < ft.size(); ++i) {
    const std::string region = ft.region[i].name();
    const std::string& topo = ft.topology[i].name;
    for (size_t j = 0; j < ft.levels[i].size(); ++j) {
      const auto& l = ft.levels[i][j];
      int branch = -1;
      if (bs && i < bs->branch_at.size() && j < bs->branch_at[i].size()) branch = bs->branch_at[i][j];
      os << fmt12(ft.theta[i]) << ',' << region << ',' << topo << ',' << j << ',' << fmt12(l.k) << ','
         << l.multiplicity << ',' << fmt12(l.weight1) << ',' << branch << '\n';
    }
  }
}

struct AnholonomyHeader {
  std::string cycle;
  double t = 0.0;
  double s = 0.0;
  std::string ratio;
  Geometry geom;
  int theta_steps = 0;
  double k_max = 0.0;
};

inline void write_anholonomy_report(std::ostream& os, const AnholonomyHeader& h, const FlowTable& ft,
                                    const BranchSet& bs, const AnholonomyReport& rep) {
  os << "cycle " << h.cycle << "\n";
  os << "t " << fmt12(h.t) << "\n";
  os << "s " << fmt12(h.s) << "\n";
  os << "ratio " << h.ratio << "\n";
  os << "L1 " << fmt12(h.geom.L1) << "\n";
  os << "L2 " << fmt12(h.geom.L2) << "\n";
  os << "theta_steps " << h.theta_steps << "\n";
  os << "k_max " << fmt12(h.k_max) << "\n";
  os << "levels " << rep.size() << "\n";
  os << "periodicity_defect " << fmt12(periodicity_defect(ft)) << "\n";
  os << "resolution_warnings " << ft.warnings.size() << "\n";
  os << "theta_refinements " << bs.refinements << "\n";
  for (int i = 0; i < rep.size(); ++i) os << i << " -> " << rep.permutation[static_cast<size_t>(i)] << "\n";
  os << "one_line";
  for (int p : rep.permutation) os << ' ' << p;
  os << "\n";
  os << "cycles " << cycle_notation(rep) << "\n";
  os << "exited";
  if (rep.exited.empty()) os << " none";
  for (const auto& [a, b] : rep.exited) os << ' ' << a << "->" << b;
  os << "\n";
  os << "status " << (rep.nontrivial ? "nontrivial" : "trivial") << "\n";
}

inline void write_convergence_csv(std::ostream& os, const ConvergenceStudy& st) {
  os << "sector,epsilon,level,k_web,k_singular,error,order,converged,within_wavelength,web_scale_states\n";
  const std::string sec = sector_name(st.sector);
  for (const auto& row : st.rows) {
    for (size_t j = 0; j < row.error.size(); ++j) {
      os << sec << ',' << fmt12(row.epsilon) << ',' << j << ',' << fmt12(row.k_web[j]) << ','
         << fmt12(row.k_singular[j]) << ',' << fmt12(row.error[j]) << ',' << fmt12(st.order[j]) << ','
         << (st.converged ? 1 : 0) << ',' << (row.within_wavelength ? 1 : 0) << ',' << row.web_scale_states
         << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Plot

namespace detail {

inline const char* branch_color(int id) {
  static constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                            "#e377c2", "#17becf", "#bcbd22", "#7f7f7f", "#393b79", "#ad494a"};
  return palette[static_cast<size_t>(id) % (sizeof palette / sizeof palette[0])];
}

inline std::string theta_label(int num, int den) {
  if (num == 0) return "0";
  // Reduce num/den (times pi).
  int a = num, b = den;
  while (b) {
    const int t = a % b;
    a = b;
    b = t;
  }
  num /= a;
  den /= a;
  std::string s = num == 1 ? "" : std::to_string(num);
  s += "π";
  if (den != 1) s += "/" + std::to_string(den);
  return s;
}

}  // namespace detail

/// k against theta, one polyline per tracked branch, grey dots for levels
/// outside the tracked window, region boundaries as dashed rules.
inline void render_flow_svg(std::ostream& os, const FlowTable& ft, const BranchSet* bs, const std::string& title) {
  const double W = 900, H = 600, left = 70, right = 20, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;
  const double kmax = ft.k_max;
  auto X = [&](double th) { return left + pw * th / kTwoPi; };
  auto Y = [&](double k) { return top + ph * (1.0 - std::min(k, kmax) / kmax); };
  auto f2 = [](double v) { return fmt_fixed(v, 2); };

  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << f2(W / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";

  // Region rules and labels.
  const auto bounds = region_boundaries(ft.kind);
  for (size_t i = 0; i < bounds.size(); ++i) {
    const double x = X(bounds[i]);
    os << "<line x1=\"" << f2(x) << "\" y1=\"" << f2(top) << "\" x2=\"" << f2(x) << "\" y2=\"" << f2(top + ph)
       << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    const int den = ft.kind == CycleKind::Long ? 3 : 2;
    os << "<text x=\"" << f2(x) << "\" y=\"" << f2(top + ph + 18) << "\" text-anchor=\"middle\">"
       << detail::theta_label(static_cast<int>(i), den) << "</text>\n";
    if (i + 1 < bounds.size()) {
      const Region r = region_of(ft.kind, 0.5 * (bounds[i] + bounds[i + 1]));
      os << "<text x=\"" << f2(0.5 * (X(bounds[i]) + X(bounds[i + 1]))) << "\" y=\"" << f2(top + 14)
         << "\" text-anchor=\"middle\" fill=\"#666\">" << r.name() << "</text>\n";
    }
  }

  // k axis ticks.
  const double raw = kmax / 8.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  for (double k = 0.0; k <= kmax + 1e-9; k += step) {
    os << "<line x1=\"" << f2(left - 5) << "\" y1=\"" << f2(Y(k)) << "\" x2=\"" << f2(left) << "\" y2=\"" << f2(Y(k))
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << f2(left - 8) << "\" y=\"" << f2(Y(k) + 4) << "\" text-anchor=\"end\">" << fmt12(k)
       << "</text>\n";
  }
  os << "<rect x=\"" << f2(left) << "\" y=\"" << f2(top) << "\" width=\"" << f2(pw) << "\" height=\"" << f2(ph)
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << f2(left + pw / 2) << "\" y=\"" << f2(H - 14) << "\" text-anchor=\"middle\">θ</text>\n";
  os << "<text x=\"18\" y=\"" << f2(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << f2(top + ph / 2) << ")\">k</text>\n";

  // Untracked levels.
  os << "<g fill=\"#bbb\">\n";
  for (size_t i = 0; i < ft.size(); ++i) {
    for (size_t j = 0; j < ft.levels[i].size(); ++j) {
      const bool tracked = bs && i < bs->branch_at.size() && j < bs->branch_at[i].size() && bs->branch_at[i][j] >= 0;
      if (tracked || ft.levels[i][j].k > kmax) continue;
      os << "<circle cx=\"" << f2(X(ft.theta[i])) << "\" cy=\"" << f2(Y(ft.levels[i][j].k)) << "\" r=\"0.8\"/>\n";
    }
  }
  os << "</g>\n";

  if (bs) {
    for (const auto& br : bs->branches) {
      os << "<polyline fill=\"none\" stroke-width=\"1.4\" stroke=\"" << detail::branch_color(br.id) << "\" points=\"";
      for (size_t p = 0; p < br.points.size(); ++p) {
        if (p) os << ' ';
        os << f2(X(br.points[p].theta)) << ',' << f2(Y(br.points[p].k));
      }
      os << "\"/>\n";
    }
  }
  os << "</svg>\n";
}

}  // namespace qgflow
