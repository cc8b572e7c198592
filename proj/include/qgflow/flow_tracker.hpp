#pragma once

// Spectral flow over a closed cycle of vertex conditions, branch continuation
// through crossings, and the resulting level permutation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "qgflow/assignment.hpp"
#include "qgflow/cycle_conditions.hpp"
#include "qgflow/spectral_core.hpp"

namespace qgflow {

using ConditionFamily = std::function<VertexCondition(double)>;

struct SweepOptions {
  SpectrumOptions spectrum;
  int threads = 1;
};

struct FlowTable {
  CycleKind kind = CycleKind::Long;
  Geometry geom;
  double k_max = 0.0;
  SweepOptions options;
  ConditionFamily family;  ///< kept so tracking can sample between grid angles

  std::vector<double> theta;                          ///< 0 .. 2pi inclusive
  std::vector<std::vector<EigenvalueRecord>> levels;  ///< expanded, sorted by k
  std::vector<Region> region;
  std::vector<TopologyLabel> topology;
  std::vector<ResolutionWarning> warnings;  ///< theta-annotated

  size_t size() const { return theta.size(); }

  /// Largest level count available at every angle.
  int common_level_count() const {
    size_t n = std::numeric_limits<size_t>::max();
    for (const auto& l : levels) n = std::min(n, l.size());
    return levels.empty() ? 0 : static_cast<int>(n);
  }
};

namespace detail {

struct FlowSample {
  std::vector<EigenvalueRecord> levels;
  TopologyLabel topology;
  std::vector<ResolutionWarning> warnings;
};

inline FlowSample sample_flow(const ConditionFamily& family, const Geometry& g, double k_max,
                              const SpectrumOptions& opts, double theta) {
  const VertexCondition vc = family(theta);
  Spectrum sp = find_spectrum(vc, g, k_max, opts);
  FlowSample s;
  s.levels = sp.expanded();
  s.topology = classify_topology(vc);
  s.warnings = std::move(sp.warnings);
  for (auto& w : s.warnings) w.theta = theta;
  return s;
}

}  // namespace detail

/// Spectra on a uniform grid of `steps` intervals over [0, 2pi] for an
/// arbitrary family. Region labels follow `kind`.
inline FlowTable sweep_family(ConditionFamily family, CycleKind kind, const Geometry& g, int steps,
                              double k_max, const SweepOptions& opts = {}) {
  g.validate();
  if (steps < 2) throw InvalidParameter("theta grid needs at least 2 steps");
  if (!(k_max > 0.0)) throw InvalidParameter("k_max must be positive");

  FlowTable ft;
  ft.kind = kind;
  ft.geom = g;
  ft.k_max = k_max;
  ft.options = opts;
  ft.family = std::move(family);
  const size_t n = static_cast<size_t>(steps) + 1;
  ft.theta.resize(n);
  for (size_t i = 0; i < n; ++i) ft.theta[i] = kTwoPi * static_cast<double>(i) / steps;
  ft.theta.back() = kTwoPi;

  std::vector<detail::FlowSample> samples(n);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](size_t begin, size_t stride) {
    for (size_t i = begin; i < n; i += stride) {
      try {
        samples[i] = detail::sample_flow(ft.family, g, k_max, opts.spectrum, ft.theta[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, opts.threads);
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

  ft.levels.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    ft.levels.push_back(std::move(samples[i].levels));
    ft.region.push_back(region_of(kind, ft.theta[i]));
    ft.topology.push_back(samples[i].topology);
    for (const auto& w : samples[i].warnings) ft.warnings.push_back(w);
  }
  // The closing angle is 2pi, which reduce_angle maps to 0; keep the label of
  // the last region instead.
  ft.region.back() = Region{kind, kind == CycleKind::Long ? 6 : 4};
  return ft;
}

inline FlowTable sweep(const CycleParams& p, const Geometry& g, int steps, double k_max,
                       const SweepOptions& opts = {}) {
  p.validate();
  return sweep_family([p](double th) { return condition_at(p, th); }, p.kind, g, steps, k_max, opts);
}

/// Max deviation between the sorted spectra at 0 and 2pi, or infinity if the
/// level counts differ.
inline double periodicity_defect(const FlowTable& ft) {
  const auto& a = ft.levels.front();
  const auto& b = ft.levels.back();
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i].k - b[i].k));
  return d;
}

struct BranchPoint {
  double theta = 0.0;
  double k = 0.0;
  double weight1 = 0.0;
  int level = 0;  ///< position in the sorted spectrum at this angle
};

struct Branch {
  int id = 0;
  std::vector<BranchPoint> points;  ///< grid angles plus any refinement angles
  bool complete = false;

  int start_index() const { return points.front().level; }
  int end_index() const { return points.back().level; }
};

struct BranchSet {
  std::vector<Branch> branches;
  /// branch_at[i][level] = branch id occupying that level at grid angle i, or -1.
  std::vector<std::vector<int>> branch_at;
  int refinements = 0;  ///< number of bisected theta intervals
};

struct TrackOptions {
  double min_step = kTwoPi / 1048576.0;  ///< 2pi / 2^20
  double ambiguity_ratio = 0.1;
  double lambda_disconnected = 1.0;
  double lambda_connected = 0.1;
  int tracked = 0;  ///< 0 tracks every level present at theta = 0
};

namespace detail {

struct TrackState {
  double theta = 0.0;
  std::vector<EigenvalueRecord> levels;
  bool disconnected = false;
};

// Current position of every branch: level index into the levels at the last
// accepted angle, plus the previous (theta, k) for extrapolation. A branch
// that rises past k_max is no longer alive.
struct BranchCursor {
  int level = 0;
  double k_prev = 0.0;
  double theta_prev = 0.0;
  bool has_prev = false;
  bool alive = true;
};

inline constexpr int kExited = -1;

class Tracker {
 public:
  Tracker(const FlowTable& ft, const TrackOptions& opt) : ft_(ft), opt_(opt), spacing_(kPi / ft.geom.total()) {}

  // Match branches from `a` to `b`, bisecting the interval while the
  // assignment is ambiguous. Appends points for every accepted angle.
  void step(const TrackState& a, const TrackState& b, std::vector<BranchCursor>& cur,
            std::vector<Branch>& out, int depth = 0) {
    std::vector<int> assign;
    if (try_match(a, b, cur, assign)) {
      commit(a, b, cur, assign, out);
      return;
    }
    const double width = b.theta - a.theta;
    if (width * 0.5 < opt_.min_step) {
      throw TrackingAmbiguity("branch assignment stays ambiguous at the minimum theta step", a.theta,
                              b.theta);
    }
    if (depth == 0) ++refinements;
    const double mid = 0.5 * (a.theta + b.theta);
    auto s = sample_flow(ft_.family, ft_.geom, ft_.k_max, ft_.options.spectrum, mid);
    TrackState m{mid, std::move(s.levels), s.topology.disconnected()};
    step(a, m, cur, out, depth + 1);
    step(m, b, cur, out, depth + 1);
  }

  int refinements = 0;

 private:
  // assign[i] is the level at b for cursor i, kExited when it leaves through
  // k_max, and untouched cursors that are already dead keep kExited.
  bool try_match(const TrackState& a, const TrackState& b, const std::vector<BranchCursor>& cur,
                 std::vector<int>& assign) const {
    const bool disc = a.disconnected && b.disconnected;
    const double lambda = disc ? opt_.lambda_disconnected : opt_.lambda_connected;
    std::vector<int> live;
    for (size_t i = 0; i < cur.size(); ++i) {
      if (cur[i].alive) live.push_back(static_cast<int>(i));
    }
    const int m = static_cast<int>(live.size());
    const int cols = static_cast<int>(b.levels.size());
    // Columns: levels at b, then one exit slot per live branch. Rows beyond m
    // are zero-cost padding so untracked levels may take any column.
    const int size = cols + m;
    Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(size, size);
    for (int r = 0; r < m; ++r) {
      const auto& c = cur[static_cast<size_t>(live[static_cast<size_t>(r)])];
      const auto& from = a.levels[static_cast<size_t>(c.level)];
      double k_ref = from.k;
      if (disc && c.has_prev && a.theta > c.theta_prev) {
        k_ref += (from.k - c.k_prev) * (b.theta - a.theta) / (a.theta - c.theta_prev);
        k_ref = std::max(k_ref, 0.0);
      }
      for (int j = 0; j < cols; ++j) {
        const auto& to = b.levels[static_cast<size_t>(j)];
        cost(r, j) = std::abs(to.k - k_ref) / spacing_ + lambda * std::abs(to.weight1 - from.weight1);
      }
      const double exit_cost = std::max(ft_.k_max - k_ref, 0.0) / spacing_;
      for (int j = cols; j < size; ++j) cost(r, j) = exit_cost;
    }
    const std::vector<int> full = solve_assignment(cost);

    assign.assign(cur.size(), kExited);
    for (int r = 0; r < m; ++r) {
      const int col = full[static_cast<size_t>(r)];
      assign[static_cast<size_t>(live[static_cast<size_t>(r)])] = col < cols ? col : kExited;
    }

    auto same = [](const EigenvalueRecord& x, const EigenvalueRecord& y) {
      return std::abs(x.k - y.k) <= 1e-9 * (1.0 + x.k) && std::abs(x.weight1 - y.weight1) <= 1e-9;
    };
    for (int r = 0; r < m; ++r) {
      for (int q = r + 1; q < m; ++q) {
        const int cr = full[static_cast<size_t>(r)], cq = full[static_cast<size_t>(q)];
        if (cr >= cols && cq >= cols) continue;
        // Swapping between indistinguishable targets or sources changes nothing.
        if (cr < cols && cq < cols && same(b.levels[static_cast<size_t>(cr)], b.levels[static_cast<size_t>(cq)]))
          continue;
        const auto& fr = a.levels[static_cast<size_t>(cur[static_cast<size_t>(live[static_cast<size_t>(r)])].level)];
        const auto& fq = a.levels[static_cast<size_t>(cur[static_cast<size_t>(live[static_cast<size_t>(q)])].level)];
        if (same(fr, fq)) continue;
        const double direct = cost(r, cr) + cost(q, cq);
        const double swapped = cost(r, cq) + cost(q, cr);
        if (swapped - direct <= opt_.ambiguity_ratio * direct) return false;
      }
    }
    return true;
  }

  void commit(const TrackState& a, const TrackState& b, std::vector<BranchCursor>& cur,
              const std::vector<int>& assign, std::vector<Branch>& out) const {
    for (size_t i = 0; i < cur.size(); ++i) {
      auto& c = cur[i];
      if (!c.alive) continue;
      if (assign[i] == kExited) {
        c.alive = false;
        continue;
      }
      c.k_prev = a.levels[static_cast<size_t>(c.level)].k;
      c.theta_prev = a.theta;
      c.has_prev = a.disconnected;
      c.level = assign[i];
      const auto& rec = b.levels[static_cast<size_t>(c.level)];
      out[i].points.push_back({b.theta, rec.k, rec.weight1, c.level});
    }
  }

  const FlowTable& ft_;
  TrackOptions opt_;
  double spacing_;  ///< mean level spacing pi / (L1 + L2)
};

}  // namespace detail

/// Continue the levels at theta = 0 along the whole grid. Branches that rise
/// past k_max stop there and are marked incomplete.
inline BranchSet track_branches(const FlowTable& ft, const TrackOptions& opt = {}) {
  if (ft.size() < 2) throw InvalidParameter("flow table has fewer than two angles");
  const int available = static_cast<int>(ft.levels.front().size());
  const int n = opt.tracked > 0 ? std::min(opt.tracked, available) : available;
  if (n <= 0) throw IncompleteBranch("no levels below k_max at theta = 0");

  BranchSet bs;
  bs.branches.resize(static_cast<size_t>(n));
  std::vector<detail::BranchCursor> cur(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    auto& br = bs.branches[static_cast<size_t>(r)];
    br.id = r;
    const auto& rec = ft.levels[0][static_cast<size_t>(r)];
    br.points.push_back({ft.theta[0], rec.k, rec.weight1, r});
    cur[static_cast<size_t>(r)].level = r;
  }

  auto mark = [&](size_t i) {
    std::vector<int> row(ft.levels[i].size(), -1);
    for (int r = 0; r < n; ++r) {
      const auto& c = cur[static_cast<size_t>(r)];
      if (c.alive) row[static_cast<size_t>(c.level)] = r;
    }
    bs.branch_at.push_back(std::move(row));
  };
  mark(0);

  detail::Tracker tracker(ft, opt);
  for (size_t i = 0; i + 1 < ft.size(); ++i) {
    detail::TrackState a{ft.theta[i], ft.levels[i], ft.topology[i].disconnected()};
    detail::TrackState b{ft.theta[i + 1], ft.levels[i + 1], ft.topology[i + 1].disconnected()};
    tracker.step(a, b, cur, bs.branches);
    mark(i + 1);
  }
  for (auto& br : bs.branches) br.complete = std::abs(br.points.back().theta - kTwoPi) < 1e-12;
  bs.refinements = tracker.refinements;
  return bs;
}

/// Default window: the levels below k_max at theta = 0 minus two, and no more
/// than were tracked.
inline int default_level_count(const FlowTable& ft, const BranchSet& bs) {
  const int n = static_cast<int>(ft.levels.front().size()) - 2;
  return std::min(n, static_cast<int>(bs.branches.size()));
}

struct AnholonomyReport {
  std::vector<int> permutation;  ///< permutation[i] = level at 2pi of the branch starting at level i
  std::vector<std::vector<int>> cycles;  ///< closed cycles, fixed points included
  std::vector<std::vector<int>> chains;  ///< orbits that leave the window, ending at the exit index
  std::vector<std::pair<int, int>> exited;  ///< (start, end) with end >= N
  bool nontrivial = false;

  int size() const { return static_cast<int>(permutation.size()); }
  bool bijective() const { return exited.empty(); }
};

inline AnholonomyReport anholonomy_permutation(const BranchSet& bs, int n_levels) {
  if (n_levels <= 0) throw InvalidParameter("level count must be positive");
  if (n_levels > static_cast<int>(bs.branches.size()))
    throw IncompleteBranch("fewer tracked branches than requested levels");
  for (const auto& br : bs.branches) {
    if (br.start_index() < n_levels && !br.complete)
      throw IncompleteBranch("branch " + std::to_string(br.id) + " leaves the window below 2pi; raise k_max");
  }

  AnholonomyReport rep;
  std::map<int, int> by_start;
  for (const auto& br : bs.branches) by_start[br.start_index()] = br.end_index();
  for (int i = 0; i < n_levels; ++i) {
    const int e = by_start.at(i);
    rep.permutation.push_back(e);
    if (e >= n_levels) rep.exited.emplace_back(i, e);
    if (e != i) rep.nontrivial = true;
  }

  // Walk orbits. Starting points with no preimage inside the window begin
  // open chains; everything else lies on a closed cycle.
  std::vector<char> has_pre(static_cast<size_t>(n_levels), 0), seen(static_cast<size_t>(n_levels), 0);
  for (int e : rep.permutation) {
    if (e < n_levels) has_pre[static_cast<size_t>(e)] = 1;
  }
  for (int i = 0; i < n_levels; ++i) {
    if (has_pre[static_cast<size_t>(i)]) continue;
    std::vector<int> chain;
    int x = i;
    while (x < n_levels && !seen[static_cast<size_t>(x)]) {
      seen[static_cast<size_t>(x)] = 1;
      chain.push_back(x);
      x = rep.permutation[static_cast<size_t>(x)];
    }
    chain.push_back(x);
    rep.chains.push_back(std::move(chain));
  }
  for (int i = 0; i < n_levels; ++i) {
    if (seen[static_cast<size_t>(i)]) continue;
    std::vector<int> cyc;
    for (int x = i; !seen[static_cast<size_t>(x)]; x = rep.permutation[static_cast<size_t>(x)]) {
      seen[static_cast<size_t>(x)] = 1;
      cyc.push_back(x);
    }
    rep.cycles.push_back(std::move(cyc));
  }
  return rep;
}

/// "(0 3 2)(1)(4 5)" style cycle notation; open chains as "[6 -> 9]".
inline std::string cycle_notation(const AnholonomyReport& rep) {
  std::string s;
  for (const auto& c : rep.cycles) {
    s += '(';
    for (size_t i = 0; i < c.size(); ++i) s += (i ? " " : "") + std::to_string(c[i]);
    s += ')';
  }
  for (const auto& c : rep.chains) {
    s += '[';
    for (size_t i = 0; i < c.size(); ++i) s += (i ? " -> " : "") + std::to_string(c[i]);
    s += ']';
  }
  return s;
}

enum class CrossingKind { Crossing, Avoided };

inline std::string_view to_string(CrossingKind k) { return k == CrossingKind::Crossing ? "crossing" : "avoided"; }

struct CrossingRecord {
  double theta = 0.0;  ///< refined angle of the gap minimum
  double k = 0.0;      ///< mean of the two levels there
  double min_gap = 0.0;
  int lower_level = 0;  ///< the pair is (lower_level, lower_level + 1)
  double weight_separation = 0.0;
  bool disconnected = false;
  CrossingKind kind = CrossingKind::Avoided;
};

struct CrossingOptions {
  double theta_tol = 1e-11;
  double separation_threshold = 0.99;
  double theta_lo = 0.0;  ///< only grid minima inside [theta_lo, theta_hi] are examined
  double theta_hi = kTwoPi;
};

/// Local minima of adjacent-level gaps, refined in theta and classified.
inline std::vector<CrossingRecord> detect_crossings(const FlowTable& ft, double gap_tol,
                                                    const CrossingOptions& opt = {}) {
  if (!(gap_tol > 0.0)) throw InvalidParameter("gap tolerance must be positive");
  std::vector<CrossingRecord> out;
  const int n = ft.common_level_count();
  auto gap = [&](size_t i, int j) {
    return ft.levels[i][static_cast<size_t>(j) + 1].k - ft.levels[i][static_cast<size_t>(j)].k;
  };
  const auto& o = ft.options.spectrum;

  for (int j = 0; j + 1 < n; ++j) {
    for (size_t i = 1; i + 1 < ft.size(); ++i) {
      if (ft.theta[i] < opt.theta_lo || ft.theta[i] > opt.theta_hi) continue;
      const double gl = gap(i - 1, j), gc = gap(i, j), gr = gap(i + 1, j);
      if (!(gc <= gl && gc <= gr)) continue;
      if (!(gc < gl || gc < gr || gc < gap_tol)) continue;

      CrossingRecord rec;
      rec.lower_level = j;
      // Level count can drop at an interior angle; a missing pair counts as
      // an infinite gap.
      auto gap_at = [&](double th) {
        const VertexCondition vc = ft.family(th);
        const double top = ft.levels[i][static_cast<size_t>(j) + 1].k;
        const double kcap = std::min(ft.k_max, top + 2.0 * kPi / ft.geom.shortest());
        const auto lv = find_spectrum(vc, ft.geom, kcap, o).expanded();
        if (lv.size() < static_cast<size_t>(j) + 2) return std::numeric_limits<double>::infinity();
        return lv[static_cast<size_t>(j) + 1].k - lv[static_cast<size_t>(j)].k;
      };
      if (gc < gap_tol) {
        rec.theta = ft.theta[i];
        rec.min_gap = gc;
      } else {
        rec.theta = golden_section_min(gap_at, ft.theta[i - 1], ft.theta[i + 1], opt.theta_tol);
        rec.min_gap = std::min(gap_at(rec.theta), gc);
      }
      const auto& li = ft.levels[i];
      rec.k = 0.5 * (li[static_cast<size_t>(j)].k + li[static_cast<size_t>(j) + 1].k);
      auto sep = [&](size_t q) {
        return std::abs(ft.levels[q][static_cast<size_t>(j)].weight1 -
                        ft.levels[q][static_cast<size_t>(j) + 1].weight1);
      };
      rec.weight_separation = std::min(sep(i - 1), sep(i + 1));
      rec.disconnected = ft.topology[i].disconnected();
      const bool closes = rec.min_gap < gap_tol;
      rec.kind = closes && (rec.disconnected || rec.weight_separation > opt.separation_threshold)
                     ? CrossingKind::Crossing
                     : CrossingKind::Avoided;
      out.push_back(rec);
    }
  }
  std::sort(out.begin(), out.end(), [](const CrossingRecord& a, const CrossingRecord& b) {
    return a.theta != b.theta ? a.theta < b.theta : a.lower_level < b.lower_level;
  });
  return out;
}

}  // namespace qgflow
