#pragma once

// Finite webs of delta couplings that approximate the singular vertex, and the
// general multi-vertex graph machinery needed to compute their spectra.
//
// Coupling rule used by the default webs: a condition of the form
//   psi_l = T psi_j,  psi_j' + T psi_l' = 0
// between a primary end j and a secondary end l is produced by joining the
// two with a sub-edge of length eps/T, with strengths
//   v_l = (1 - sum_j T_jl) / eps,   v_j = sum_l (T_jl^2 - T_jl) / eps.
// These are the strengths printed for the sectors; the eps/T length is what
// makes the limit come out right when T != 1.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qgflow/cycle_conditions.hpp"
#include "qgflow/expression.hpp"
#include "qgflow/roots.hpp"
#include "qgflow/spectral_core.hpp"

namespace qgflow {

// ---------------------------------------------------------------------------
// General graphs

struct EndRef {
  int edge = 0;
  bool far = false;  ///< false: x = 0, true: x = length
};

struct GraphEdge {
  double length = 1.0;
  int group = 0;  ///< 1 and 2 mark the two main edges, 0 web edges
};

enum class VertexKind { Delta, Singular };

struct GraphVertex {
  VertexKind kind = VertexKind::Delta;
  double strength = 0.0;
  std::vector<EndRef> ends;
  Eigen::MatrixXd A, B;  ///< Singular only
};

struct GeneralGraph {
  std::vector<GraphEdge> edges;
  std::vector<GraphVertex> vertices;

  int add_edge(double length, int group = 0) {
    edges.push_back({length, group});
    return static_cast<int>(edges.size()) - 1;
  }
  int add_delta(std::vector<EndRef> ends, double strength) {
    vertices.push_back({VertexKind::Delta, strength, std::move(ends), {}, {}});
    return static_cast<int>(vertices.size()) - 1;
  }
  int add_singular(std::vector<EndRef> ends, Eigen::MatrixXd A, Eigen::MatrixXd B) {
    vertices.push_back({VertexKind::Singular, 0.0, std::move(ends), std::move(A), std::move(B)});
    return static_cast<int>(vertices.size()) - 1;
  }

  int unknowns() const { return 2 * static_cast<int>(edges.size()); }

  /// Shortest edge with the given group, or of any group when group < 0.
  double shortest(int group = -1) const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& e : edges) {
      if (group < 0 || e.group == group) m = std::min(m, e.length);
    }
    return m;
  }

  double shortest_main() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& e : edges) {
      if (e.group != 0) m = std::min(m, e.length);
    }
    return std::isfinite(m) ? m : shortest();
  }

  void validate() const {
    if (edges.empty()) throw InvalidParameter("graph has no edges");
    for (const auto& e : edges) {
      if (!(e.length > 0.0) || !std::isfinite(e.length)) throw InvalidParameter("edge length must be positive");
    }
    std::vector<int> used(2 * edges.size(), 0);
    for (const auto& v : vertices) {
      if (v.ends.empty()) throw InvalidParameter("vertex without edge ends");
      if (v.kind == VertexKind::Delta && !std::isfinite(v.strength))
        throw InvalidParameter("delta strength must be finite");
      const auto d = static_cast<Eigen::Index>(v.ends.size());
      if (v.kind == VertexKind::Singular && (v.A.rows() != d || v.A.cols() != d || v.B.rows() != d || v.B.cols() != d))
        throw InvalidParameter("singular vertex matrices do not match its degree");
      for (const auto& e : v.ends) {
        if (e.edge < 0 || e.edge >= static_cast<int>(edges.size())) throw InvalidParameter("bad edge reference");
        ++used[static_cast<size_t>(2 * e.edge + (e.far ? 1 : 0))];
      }
    }
    for (int u : used) {
      if (u != 1) throw InvalidParameter("every edge end must sit at exactly one vertex");
    }
  }
};

/// (A, B) of a delta vertex of degree d: continuity, and the sum of outgoing
/// derivatives equal to v times the common value.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> delta_condition(int degree, double strength) {
  const Eigen::Index d = degree;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d), B = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i + 1 < d; ++i) {
    A(i, i) = 1.0;
    A(i, i + 1) = -1.0;
  }
  A(d - 1, 0) = -strength;
  B.row(d - 1).setOnes();
  return {A, B};
}

inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> vertex_condition(const GraphVertex& v) {
  if (v.kind == VertexKind::Singular) return {v.A, v.B};
  return delta_condition(static_cast<int>(v.ends.size()), v.strength);
}

/// Self-adjointness report for square (A, B) of any size.
inline SelfAdjointReport check_self_adjoint(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol) {
  if (!(tol > 0.0)) throw InvalidParameter("tolerance must be positive");
  SelfAdjointReport rep;
  const Eigen::MatrixXd prod = A * B.transpose();
  rep.asymmetry = (prod - prod.transpose()).cwiseAbs().maxCoeff();
  Eigen::MatrixXd ab(A.rows(), A.cols() + B.cols());
  ab << A, B;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(ab);
  const auto& sv = svd.singularValues();
  const double cutoff = tol * std::max(sv(0), 1.0);
  rep.rank = static_cast<int>((sv.array() > cutoff).count());
  rep.pass = rep.asymmetry <= tol && rep.rank == A.rows();
  return rep;
}

enum class EdgeBasis {
  Trig,    ///< alpha sin(kx)/k + beta cos kx; tends to alpha x + beta as k -> 0
  Linear,  ///< alpha x + beta, the k = 0 ansatz
  Decay,   ///< k = i kappa: sinh/cosh on short edges, decaying exponentials on long ones
};

namespace detail {

// Value and outgoing derivative of the two basis functions at one end.
struct EndRow {
  double va, vb, da, db;
};

inline EndRow end_row(EdgeBasis basis, double k, double L, bool far) {
  switch (basis) {
    case EdgeBasis::Trig: {
      if (!far) return {0.0, 1.0, 1.0, 0.0};
      const double s = std::sin(k * L), c = std::cos(k * L);
      return {s / k, c, -c, k * s};
    }
    case EdgeBasis::Linear:
      if (!far) return {0.0, 1.0, 1.0, 0.0};
      return {L, 1.0, -1.0, 0.0};
    case EdgeBasis::Decay:
      if (k * L < 1.0) {
        if (!far) return {0.0, 1.0, 1.0, 0.0};
        const double s = std::sinh(k * L), c = std::cosh(k * L);
        return {s / k, c, -c, -k * s};
      } else {
        // (-e^{-kx}, e^{-k(L-x)}): related to the sinh/cosh pair by a
        // transformation of positive determinant, so switching keeps the sign.
        const double x = std::exp(-k * L);
        if (!far) return {-1.0, x, k, k * x};
        return {-x, 1.0, -k * x, -k};
      }
  }
  return {};
}

}  // namespace detail

/// Boundary system of the graph: one row per edge end, columns (alpha_e, beta_e).
/// Rows are scaled to unit norm.
inline Eigen::MatrixXd boundary_matrix(const GeneralGraph& g, double k, EdgeBasis basis) {
  const int n = g.unknowns();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  Eigen::Index row = 0;
  for (const auto& v : g.vertices) {
    const auto d = static_cast<Eigen::Index>(v.ends.size());
    Eigen::MatrixXd val = Eigen::MatrixXd::Zero(d, n), der = Eigen::MatrixXd::Zero(d, n);
    for (Eigen::Index i = 0; i < d; ++i) {
      const EndRef& e = v.ends[static_cast<size_t>(i)];
      const Eigen::Index ca = 2 * e.edge, cb = ca + 1;
      const auto r = detail::end_row(basis, k, g.edges[static_cast<size_t>(e.edge)].length, e.far);
      val(i, ca) = r.va;
      val(i, cb) = r.vb;
      der(i, ca) = r.da;
      der(i, cb) = r.db;
    }
    const auto [A, B] = vertex_condition(v);
    M.middleRows(row, d) = A * val + B * der;
    row += d;
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    const double nr = M.row(r).norm();
    if (!(nr > 1e-300)) throw DegenerateRow("boundary system has a vanishing row");
    M.row(r) /= nr;
  }
  return M;
}

/// Boundary system with rows and columns alternately scaled to unit norm.
/// On eps-length edges the unscaled slope column is O(eps), which leaves a
/// spurious O(eps^2) singular value. The positive scalings leave zero set and
/// sign untouched; `col_scale` (if given) receives the column factors, so a
/// null vector y of the result maps back to coefficients col_scale .* y.
inline Eigen::MatrixXd balanced_boundary_matrix(const GeneralGraph& g, double k, EdgeBasis basis,
                                                Eigen::VectorXd* col_scale = nullptr) {
  Eigen::MatrixXd M = boundary_matrix(g, k, basis);
  Eigen::VectorXd cs = Eigen::VectorXd::Ones(M.cols());
  for (int pass = 0; pass < 3; ++pass) {
    for (Eigen::Index c = 0; c < M.cols(); ++c) {
      const double nc = M.col(c).norm();
      if (nc > 1e-300) {
        M.col(c) /= nc;
        cs(c) /= nc;
      }
    }
    for (Eigen::Index r = 0; r < M.rows(); ++r) M.row(r) /= M.row(r).norm();
  }
  if (col_scale) *col_scale = cs;
  return M;
}

/// Two main edges meeting at one singular vertex: the model graph itself.
inline GeneralGraph singular_graph(const VertexCondition& vc, const Geometry& geom) {
  GeneralGraph g;
  g.add_edge(geom.L1, 1);
  g.add_edge(geom.L2, 2);
  g.add_singular({{0, false}, {0, true}, {1, false}, {1, true}}, vc.A, vc.B);
  return g;
}

struct GraphSpectrum {
  std::vector<EigenvalueRecord> levels;  ///< k >= 0, weight1 = share on group-1 edges
  std::vector<double> bound_kappas;       ///< negative eigenvalues -kappa^2, kappa descending
  std::vector<ResolutionWarning> warnings;

  std::vector<EigenvalueRecord> expanded() const {
    std::vector<EigenvalueRecord> out;
    for (const auto& l : levels) {
      for (int i = 0; i < l.multiplicity; ++i) out.push_back(l);
    }
    return out;
  }
};

struct GraphSpectrumOptions {
  double grid_step = 0.0;  ///< 0 selects (shortest main edge) / 50
  double bisect_rel_tol = 1e-12;
  double double_root_threshold = 1e-8;
  bool include_zero_mode = true;
  double kappa_max = 0.0;  ///< > 0 also scans for negative eigenvalues up to this kappa
};

namespace detail {

inline double graph_weight1(const GeneralGraph& g, double k, int nullity, bool linear) {
  Eigen::VectorXd cs;
  const Eigen::MatrixXd M = balanced_boundary_matrix(g, k, linear ? EdgeBasis::Linear : EdgeBasis::Trig, &cs);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullV);
  const Eigen::MatrixXd basis = cs.asDiagonal() * svd.matrixV().rightCols(nullity);
  const Eigen::Index m = basis.cols();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, m), G1 = G;
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const double L = g.edges[e].length;
    TrigGram w = linear ? linear_gram(L) : trig_gram(k, L);
    if (!linear) {
      w.ss /= k * k;
      w.sc /= k;
    }
    const auto ca = static_cast<Eigen::Index>(2 * e), cb = ca + 1;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        const double v = basis(ca, i) * basis(ca, j) * w.ss + basis(cb, i) * basis(cb, j) * w.cc +
                         (basis(ca, i) * basis(cb, j) + basis(cb, i) * basis(ca, j)) * w.sc;
        G(i, j) += v;
        if (g.edges[e].group == 1) G1(i, j) += v;
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(1e-300);
  const Eigen::MatrixXd T = es.eigenvectors() * ev.cwiseInverse().cwiseSqrt().asDiagonal();
  return std::clamp((T.transpose() * G1 * T).trace() / static_cast<double>(m), 0.0, 1.0);
}

}  // namespace detail

inline GraphSpectrum graph_spectrum(const GeneralGraph& g, double k_max, const GraphSpectrumOptions& opts = {}) {
  g.validate();
  if (!(k_max > 0.0)) throw InvalidParameter("k_max must be positive");
  GraphSpectrum sp;

  // In the sin(kx)/k basis the determinant tends to the k = 0 one, so with a
  // zero mode it only grows like k^2 and rounding fakes roots just above 0.
  const Eigen::MatrixXd M0 = balanced_boundary_matrix(g, 0.0, EdgeBasis::Linear);
  const int m0 = nullity_of(singular_values(M0), kRankRelTol);
  if (opts.include_zero_mode && m0 > 0) sp.levels.push_back({0.0, m0, detail::graph_weight1(g, 0.0, m0, true)});
  const double k_lo = m0 > 0 ? 1e-5 / g.shortest_main() : 0.0;

  ScanOptions so;
  so.step = opts.grid_step > 0.0 ? opts.grid_step : g.shortest_main() / 50.0;
  so.bisect_rel_tol = opts.bisect_rel_tol;
  so.double_root_threshold = opts.double_root_threshold;
  so.rank_rel_tol = kRankRelTol;
  auto scan = scan_roots([&](double k) { return balanced_boundary_matrix(g, k, EdgeBasis::Trig); }, k_lo, k_max, so);
  for (const auto& r : scan.roots) {
    sp.levels.push_back({r.k, r.multiplicity, detail::graph_weight1(g, r.k, r.multiplicity, false)});
  }
  sp.warnings = std::move(scan.warnings);

  if (opts.kappa_max > 0.0) {
    // Deep bound states live on the web scale; the grid widens geometrically
    // past the main-edge scale.
    auto det_at = [&](double kappa) { return balanced_boundary_matrix(g, kappa, EdgeBasis::Decay).determinant(); };
    std::vector<double> grid;
    const double h = so.step;
    for (double x = h; x < std::min(opts.kappa_max, 50.0 / g.shortest_main()); x += h) grid.push_back(x);
    double x = grid.empty() ? h : grid.back() + h;
    while (x < opts.kappa_max) {
      grid.push_back(x);
      x *= 1.002;
    }
    grid.push_back(opts.kappa_max);
    double prev = det_at(grid.front());
    for (size_t i = 1; i < grid.size(); ++i) {
      const double cur = det_at(grid[i]);
      if ((prev < 0.0) != (cur < 0.0))
        sp.bound_kappas.push_back(bisect_root(det_at, grid[i - 1], grid[i], prev, opts.bisect_rel_tol));
      prev = cur;
    }
    std::sort(sp.bound_kappas.rbegin(), sp.bound_kappas.rend());
  }
  return sp;
}

// ---------------------------------------------------------------------------
// Webs

struct WebEdge {
  int u = 0;
  int v = 0;
  double length = 0.0;
};

struct WebSpec {
  int sector = 0;  ///< 1..6, 0 when loaded without a sector
  double epsilon = 0.0;
  std::array<int, 4> attach{1, 2, 3, 4};  ///< web vertex of each main-edge end
  std::vector<WebEdge> subedges;
  std::map<int, double> strengths;  ///< vertex -> delta strength, default 0

  bool has_subedges() const { return !subedges.empty(); }
};

inline std::string sector_name(int sector) {
  static constexpr std::array<const char*, 6> roman{"I", "II", "III", "IV", "V", "VI"};
  if (sector < 1 || sector > 6) throw InvalidParameter("sector must be in I..VI");
  return roman[static_cast<size_t>(sector - 1)];
}

inline int parse_sector(const std::string& s) {
  for (int i = 1; i <= 6; ++i) {
    if (s == sector_name(i) || s == std::to_string(i)) return i;
  }
  throw InvalidParameter("unknown sector '" + s + "'");
}

inline VariableMap web_variables(const RampVector& r, const CycleParams& p, double eps) {
  return {{"t", p.t}, {"s", p.s}, {"a", r.a}, {"b", r.b}, {"bp", r.bp}, {"c", r.c}, {"d", r.d}, {"eps", eps}};
}

namespace detail {

inline void require_positive(double x, const char* what) {
  if (!(x > 0.0)) throw InvalidParameter(std::string(what) + " vanishes; ramps do not belong to this sector");
}

inline void require_open_unit(double c) {
  if (!(c > 0.0 && c < 1.0)) throw InvalidParameter("c must lie in (0, 1): the strengths c/(1-c) and (1-c)/c are singular");
}

}  // namespace detail

/// Default web of a sector: the printed strengths with the conjectured geometry.
inline WebSpec build_web(int sector, const RampVector& r, const CycleParams& p, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidParameter("epsilon must be positive");
  validate_ramps(r);
  p.validate();
  const double ta = p.t * r.a, tb = p.t * r.b, tbp = p.t * r.bp, sd = p.s * r.d;

  WebSpec w;
  w.sector = sector;
  w.epsilon = eps;
  auto link = [&](int j, int l, double T) { w.subedges.push_back({j, l, eps / T}); };
  switch (sector) {
    case 1:
      detail::require_positive(ta, "t a");
      link(1, 3, ta);
      link(2, 4, ta);
      w.strengths = {{1, (ta * ta - ta) / eps}, {2, (ta * ta - ta) / eps}, {3, (1 - ta) / eps}, {4, (1 - ta) / eps}};
      break;
    case 2:
      detail::require_open_unit(r.c);
      w.strengths = {{1, 0.0}, {2, r.c / (1 - r.c)}, {3, (1 - r.c) / r.c}, {4, 1 / eps}};
      break;
    case 3:
      detail::require_positive(tb, "t b");
      detail::require_positive(tbp, "t b'");
      link(1, 2, tb);
      link(3, 4, tbp);
      w.strengths = {{1, (tb * tb - tb) / eps}, {2, (1 - tb) / eps}, {3, (tbp * tbp - tbp) / eps}, {4, (1 - tbp) / eps}};
      break;
    case 4:
      detail::require_positive(tb, "t b");
      detail::require_positive(sd, "s d");
      link(1, 2, tb);
      link(1, 4, sd);
      w.strengths = {{1, (tb * tb + sd * sd - tb - sd) / eps}, {2, (1 - tb) / eps}, {3, 1 / eps}, {4, (1 - sd) / eps}};
      break;
    case 5:
      detail::require_open_unit(r.c);
      detail::require_positive(sd, "s d");
      link(1, 4, sd);
      w.strengths = {{1, (sd * sd - sd) / eps}, {2, r.c / (1 - r.c)}, {3, (1 - r.c) / r.c}, {4, (1 - sd) / eps}};
      break;
    case 6: {
      detail::require_positive(ta, "t a");
      detail::require_positive(sd, "s d");
      const double cross = 3.0 * ta * sd;
      w.subedges = {{1, 2, eps}, {1, 3, eps}, {1, 4, eps}};
      w.strengths = {{1, (ta * ta + sd * sd - ta - sd - cross) / eps},
                     {2, (ta * ta - ta - cross) / eps},
                     {3, (1 - ta) / eps},
                     {4, (1 - ta - sd) / eps}};
      break;
    }
    default:
      throw InvalidParameter("sector must be in I..VI");
  }
  return w;
}

/// Parse a web description. Lines:
///   edge U V FACTOR     sub-edge between vertices U and V, length FACTOR * eps
///   delta U STRENGTH    delta strength at vertex U
///   attach E U          main-edge end E (1..4) sits at vertex U
/// '#' starts a comment. FACTOR and STRENGTH are expressions in
/// t, s, a, b, bp, c, d, eps.
inline WebSpec parse_web(std::istream& in, const RampVector& r, const CycleParams& p, double eps,
                         int sector = 0) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidParameter("epsilon must be positive");
  const VariableMap vars = web_variables(r, p, eps);
  WebSpec w;
  w.sector = sector;
  w.epsilon = eps;
  std::string line;
  int lineno = 0;
  auto where = [&] { return "line " + std::to_string(lineno) + ": "; };
  auto read_id = [&](std::istringstream& ls) {
    int id = 0;
    if (!(ls >> id) || id <= 0) throw ParseError(where() + "expected a positive vertex id");
    return id;
  };
  auto rest_expr = [&](std::istringstream& ls) {
    std::string e;
    std::getline(ls, e);
    if (e.find_first_not_of(" \t") == std::string::npos) throw ParseError(where() + "missing expression");
    try {
      const double v = evaluate_expression(e, vars);
      if (!std::isfinite(v)) throw ParseError(where() + "expression is not finite");
      return v;
    } catch (const ParseError& err) {
      throw ParseError(where() + err.what());
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    if (kw == "edge") {
      const int u = read_id(ls), v = read_id(ls);
      if (u == v) throw ParseError(where() + "edge endpoints must differ");
      const double f = rest_expr(ls);
      if (!(f > 0.0)) throw ParseError(where() + "length factor must be positive");
      w.subedges.push_back({u, v, f * eps});
    } else if (kw == "delta") {
      const int u = read_id(ls);
      w.strengths[u] = rest_expr(ls);
    } else if (kw == "attach") {
      const int e = read_id(ls), u = read_id(ls);
      if (e > 4) throw ParseError(where() + "main-edge end must be 1..4");
      w.attach[static_cast<size_t>(e - 1)] = u;
    } else {
      throw ParseError(where() + "unknown keyword '" + kw + "'");
    }
  }
  return w;
}

inline WebSpec load_web(const std::string& path, const RampVector& r, const CycleParams& p, double eps,
                        int sector = 0) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open web description '" + path + "'");
  return parse_web(in, r, p, eps, sector);
}

/// The web attached to the two main edges, as a general graph.
inline GeneralGraph web_graph(const WebSpec& w, const Geometry& geom) {
  geom.validate();
  if (!(w.epsilon > 0.0)) throw InvalidParameter("epsilon must be positive");
  GeneralGraph g;
  g.add_edge(geom.L1, 1);
  g.add_edge(geom.L2, 2);
  std::map<int, std::vector<EndRef>> ends;
  const std::array<EndRef, 4> main{{{0, false}, {0, true}, {1, false}, {1, true}}};
  for (size_t i = 0; i < 4; ++i) ends[w.attach[i]].push_back(main[i]);
  for (const auto& e : w.subedges) {
    if (!(e.length > 0.0) || !std::isfinite(e.length)) throw InvalidParameter("sub-edge length must be positive");
    const int id = g.add_edge(e.length, 0);
    ends[e.u].push_back({id, false});
    ends[e.v].push_back({id, true});
  }
  for (const auto& [v, s] : w.strengths) {
    if (!ends.count(v)) throw InvalidParameter("strength given for vertex " + std::to_string(v) + " with no edges");
    if (!std::isfinite(s)) throw InvalidParameter("delta strength must be finite");
  }
  for (auto& [v, list] : ends) {
    const auto it = w.strengths.find(v);
    g.add_delta(std::move(list), it == w.strengths.end() ? 0.0 : it->second);
  }
  return g;
}

/// k_max is capped at 0.1/eps for webs with sub-edges so that every reported
/// level has a wavelength long against the web.
inline double web_k_cap(const WebSpec& w, double k_max) {
  return w.has_subedges() ? std::min(k_max, 0.1 / w.epsilon) : k_max;
}

inline GraphSpectrum web_spectrum(const WebSpec& w, const Geometry& geom, double k_max,
                                  const GraphSpectrumOptions& opts = {}) {
  return graph_spectrum(web_graph(w, geom), web_k_cap(w, k_max), opts);
}

// ---------------------------------------------------------------------------
// Convergence

struct ConvergenceRow {
  double epsilon = 0.0;
  std::vector<double> k_web;       ///< signed: -kappa for negative eigenvalues
  std::vector<double> k_singular;
  std::vector<double> error;
  int web_scale_states = 0;  ///< bound states with kappa * eps > 0.1, left out of the matching
  bool within_wavelength = true;  ///< every compared level has k * eps <= 0.1
};

struct ConvergenceStudy {
  int sector = 0;
  double theta = 0.0;
  std::vector<ConvergenceRow> rows;
  std::vector<double> order;  ///< per level; NaN when the level is exact at every eps
  double min_order = 0.0;     ///< over levels with a finite order
  bool converged = false;
};

struct ConvergenceOptions {
  double order_threshold = 0.5;  ///< below this the study is flagged non-convergent
  int threads = 1;
  const std::string* geometry_path = nullptr;  ///< web description overriding the default geometry
};

/// Least-squares slope of log(err) against log(eps) over the errors above
/// `exact_tol`; NaN when fewer than two remain (the level is exact).
inline double fitted_order(const std::vector<double>& eps, const std::vector<double>& err,
                           double exact_tol = 1e-9) {
  std::vector<double> x, y;
  for (size_t i = 0; i < eps.size(); ++i) {
    if (err[i] > exact_tol) {
      x.push_back(std::log(eps[i]));
      y.push_back(std::log(err[i]));
    }
  }
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace detail {

inline std::vector<double> signed_levels(const GraphSpectrum& sp, double eps, int* web_scale) {
  std::vector<double> out;
  int skipped = 0;
  for (double kappa : sp.bound_kappas) {
    if (kappa * eps > 0.1) {
      ++skipped;
    } else {
      out.push_back(-kappa);
    }
  }
  for (const auto& l : sp.expanded()) out.push_back(l.k);
  if (web_scale) *web_scale = skipped;
  return out;
}

}  // namespace detail

inline ConvergenceStudy convergence_study(int sector, const RampVector& r, const CycleParams& p, const Geometry& geom,
                                          const std::vector<double>& epsilons, int n_levels,
                                          const ConvergenceOptions& opt = {}) {
  if (epsilons.size() < 3) throw InvalidParameter("convergence study needs at least three epsilons");
  for (size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0)) throw InvalidParameter("epsilon must be positive");
    if (i && !(epsilons[i] < epsilons[i - 1])) throw InvalidParameter("epsilons must be decreasing");
  }
  if (n_levels < 1) throw InvalidParameter("level count must be positive");

  const VertexCondition vc = build_condition(r, p);
  const GeneralGraph sg = singular_graph(vc, geom);
  double k_max = kPi * (n_levels + 2) / geom.total();
  GraphSpectrumOptions gopt;
  gopt.kappa_max = k_max;
  std::vector<double> singular;
  for (int tries = 0; tries < 20; ++tries) {
    gopt.kappa_max = k_max;
    singular = detail::signed_levels(graph_spectrum(sg, k_max, gopt), 0.0, nullptr);
    if (static_cast<int>(singular.size()) > n_levels) break;
    k_max *= 2.0;
  }
  if (static_cast<int>(singular.size()) < n_levels) throw InvalidParameter("too few singular levels");
  singular.resize(static_cast<size_t>(n_levels));
  // Room for levels that sit slightly higher on the web.
  const double k_web = k_max + 2.0 * kPi / geom.shortest();

  ConvergenceStudy st;
  st.sector = sector;
  st.rows.resize(epsilons.size());
  std::vector<std::exception_ptr> errors(epsilons.size());
  auto work = [&](size_t begin, size_t stride) {
    for (size_t i = begin; i < epsilons.size(); i += stride) {
      try {
        const double eps = epsilons[i];
        const WebSpec w = opt.geometry_path ? load_web(*opt.geometry_path, r, p, eps, sector)
                                            : build_web(sector, r, p, eps);
        GraphSpectrumOptions wopt;
        wopt.kappa_max = std::max(k_web, 1.0 / eps);
        const auto sp = graph_spectrum(web_graph(w, geom), k_web, wopt);
        ConvergenceRow row;
        row.epsilon = eps;
        row.k_singular = singular;
        auto lv = detail::signed_levels(sp, eps, &row.web_scale_states);
        if (static_cast<int>(lv.size()) < n_levels) lv.resize(static_cast<size_t>(n_levels), std::numeric_limits<double>::quiet_NaN());
        lv.resize(static_cast<size_t>(n_levels));
        row.k_web = lv;
        for (int j = 0; j < n_levels; ++j) {
          const double e = std::abs(lv[static_cast<size_t>(j)] - singular[static_cast<size_t>(j)]);
          row.error.push_back(std::isfinite(e) ? e : std::numeric_limits<double>::infinity());
          if (std::abs(lv[static_cast<size_t>(j)]) * eps > 0.1) row.within_wavelength = false;
        }
        st.rows[i] = std::move(row);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(opt.threads, static_cast<int>(epsilons.size())));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, static_cast<size_t>(t), static_cast<size_t>(threads));
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  st.min_order = std::numeric_limits<double>::infinity();
  bool any = false, bad = false;
  for (int j = 0; j < n_levels; ++j) {
    std::vector<double> err;
    for (const auto& row : st.rows) err.push_back(row.error[static_cast<size_t>(j)]);
    double q = fitted_order(epsilons, err);
    for (double e : err) {
      if (!std::isfinite(e)) q = -std::numeric_limits<double>::infinity();
    }
    st.order.push_back(q);
    if (std::isnan(q)) continue;
    any = true;
    st.min_order = std::min(st.min_order, q);
    if (!(q >= opt.order_threshold)) bad = true;
  }
  if (!any) st.min_order = std::numeric_limits<double>::quiet_NaN();
  st.converged = !bad;
  return st;
}

/// Long-cycle angle at which c takes the given value in (0, 1), on the
/// Region II side.
inline double long_theta_for_c(double c) {
  if (!(c > 0.0 && c < 1.0)) throw InvalidParameter("c must lie in (0, 1)");
  const double root_q = 0.5 * (1.0 + c * (kSqrt3 - 1.0));
  return std::acos(1.0 - 2.0 * root_q * root_q);
}

}  // namespace qgflow
