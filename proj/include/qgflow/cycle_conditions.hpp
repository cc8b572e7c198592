#pragma once

// Parametric singular-vertex conditions for the two-loop graph.
//
// The vertex joins four edge ends: 1 and 2 are the ends x1 = 0 and x1 = L1 of
// edge 1, 3 and 4 are the ends x2 = 0 and x2 = L2 of edge 2. A condition is a
// pair (A, B) acting on boundary values and outgoing derivatives,
//   A * Psi + B * Psi' = 0.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "qgflow/errors.hpp"

namespace qgflow {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kSqrt3 = std::numbers::sqrt3;

using Mat4 = Eigen::Matrix4d;

enum class CycleKind { Long, Short };

inline std::string_view to_string(CycleKind kind) {
  return kind == CycleKind::Long ? "long" : "short";
}

/// Values of the five coupling functions at one angle. All lie in [0, 1].
struct RampVector {
  double a = 0.0;
  double b = 0.0;
  double bp = 0.0;
  double c = 0.0;
  double d = 0.0;
};

struct CycleParams {
  CycleKind kind = CycleKind::Long;
  double t = 0.1;
  double s = 1.0;

  void validate() const {
    if (!(t > 0.0) || !std::isfinite(t) || !(s > 0.0) || !std::isfinite(s))
      throw InvalidParameter("coupling scales t and s must be positive and finite");
  }
};

struct VertexCondition {
  Mat4 A = Mat4::Zero();
  Mat4 B = Mat4::Zero();
  double theta = 0.0;
};

/// Reduce an angle into [0, 2*pi).
inline double reduce_angle(double theta) {
  double r = std::fmod(theta, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

namespace detail {

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

// The long-cycle formulas are evaluated in max/min form so that the zero sets
// are exact and consistent with each other: every ramp is gated on cos(theta)
// against +-1/2, and c uses sin^2(theta/2) = (1 - cos(theta))/2 computed from
// the same cosine.
inline RampVector long_ramps(double theta) {
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  RampVector r;
  r.a = clamp01(2.0 * std::max(cs - 0.5, 0.0));
  r.b = clamp01(2.0 * std::max(-cs - 0.5, 0.0));

  // b' uses (g + |g|) rather than (g - |g|): support (2pi/3, pi), peak 1 at 5pi/6.
  const double g = sn - kSqrt3 * cs - kSqrt3;
  if (cs <= -0.5 && sn > 0.0) r.bp = clamp01(2.0 * std::max(g, 0.0) / (4.0 - 2.0 * kSqrt3));

  const double half_sin_sq = 0.5 * (1.0 - cs);
  if (half_sin_sq <= 0.25) {
    r.c = 0.0;
  } else if (half_sin_sq >= 0.75) {
    r.c = 1.0;
  } else {
    r.c = clamp01((2.0 * std::sqrt(half_sin_sq) - 1.0) / (kSqrt3 - 1.0));
  }

  const double u = 2.0 * std::max(-sn, 0.0);
  r.d = clamp01(std::min(u, kSqrt3) / kSqrt3);
  return r;
}

inline RampVector short_ramps(double theta) {
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  RampVector r;
  r.a = clamp01(std::max(cs, 0.0));
  r.c = clamp01(std::max(-cs, 0.0));
  r.d = clamp01(std::max(-sn, 0.0));
  return r;
}

}  // namespace detail

/// The printed b'(theta) of the long cycle, kept only to demonstrate why the
/// sign-corrected form is used: it is nonpositive everywhere.
inline double uncorrected_long_bp(double theta) {
  const double g = std::sin(theta) - kSqrt3 * std::cos(theta) - kSqrt3;
  return (g - std::abs(g)) / (4.0 - 2.0 * kSqrt3);
}

inline RampVector eval_ramps(CycleKind kind, double theta) {
  const double th = reduce_angle(theta);
  return kind == CycleKind::Long ? detail::long_ramps(th) : detail::short_ramps(th);
}

/// Throws InvalidParameter unless every field is in [0, 1] and the two
/// implications (a > 0 => c = 0, b or b' > 0 => c = 1) hold exactly.
inline void validate_ramps(const RampVector& r) {
  for (double v : {r.a, r.b, r.bp, r.c, r.d}) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidParameter("ramp value outside [0, 1]");
  }
  if (r.a > 0.0 && r.c != 0.0) throw InvalidParameter("a > 0 requires c = 0");
  if ((r.b > 0.0 || r.bp > 0.0) && r.c != 1.0)
    throw InvalidParameter("b > 0 or b' > 0 requires c = 1");
}

/// Assemble (A, B) from P * Psi' = Q * Psi with B = P and A = -Q.
inline VertexCondition build_condition(const RampVector& r, const CycleParams& p,
                                       double theta = 0.0) {
  validate_ramps(r);
  p.validate();
  const double ta = p.t * r.a;
  const double tb = p.t * r.b;
  const double tbp = p.t * r.bp;
  const double sd = p.s * r.d;

  VertexCondition vc;
  vc.theta = reduce_angle(theta);
  Mat4& P = vc.B;
  P << 1.0, tb, ta, sd,
       0.0, 1.0 - r.c, 0.0, ta,
       0.0, 0.0, r.c, tbp,
       0.0, 0.0, 0.0, 0.0;
  Mat4 Q;
  Q << 0.0, 0.0, 0.0, 0.0,
       -tb, r.c, 0.0, 0.0,
       -ta, 0.0, 1.0 - r.c, 0.0,
       -sd, -ta, -tbp, 1.0;
  vc.A = -Q;
  return vc;
}

inline VertexCondition condition_at(const CycleParams& p, double theta) {
  return build_condition(eval_ramps(p.kind, theta), p, theta);
}

struct SelfAdjointReport {
  double asymmetry = 0.0;  ///< max |(A B^T - B A^T)_ij|
  int rank = 0;            ///< numerical rank of (A|B)
  bool pass = false;
};

inline SelfAdjointReport check_self_adjoint(const VertexCondition& vc, double tol) {
  if (!(tol > 0.0)) throw InvalidParameter("tolerance must be positive");
  SelfAdjointReport rep;
  const Mat4 prod = vc.A * vc.B.transpose();
  rep.asymmetry = (prod - prod.transpose()).cwiseAbs().maxCoeff();

  Eigen::Matrix<double, 4, 8> ab;
  ab << vc.A, vc.B;
  Eigen::JacobiSVD<Eigen::Matrix<double, 4, 8>> svd(ab);
  const auto& sv = svd.singularValues();
  const double cutoff = tol * std::max(sv(0), 1.0);
  rep.rank = static_cast<int>((sv.array() > cutoff).count());
  rep.pass = rep.asymmetry <= tol && rep.rank == 4;
  return rep;
}

/// Region label. Long cycle: I..VI on sixths of the circle. Short cycle:
/// S1..S4 on quarters. Boundary angles belong to the lower-numbered region.
struct Region {
  CycleKind kind = CycleKind::Long;
  int index = 1;  ///< 1-based

  std::string name() const {
    static constexpr std::array<const char*, 6> roman{"I", "II", "III", "IV", "V", "VI"};
    if (kind == CycleKind::Long) return roman[static_cast<size_t>(index - 1)];
    return "S" + std::to_string(index);
  }
  friend bool operator==(const Region&, const Region&) = default;
};

inline Region region_of(CycleKind kind, double theta) {
  const double th = reduce_angle(theta);
  const int count = kind == CycleKind::Long ? 6 : 4;
  const double width = kTwoPi / count;
  // Snap to a boundary when within rounding of it.
  const double x = th / width;
  const double nearest = std::round(x);
  double idx = std::abs(x - nearest) < 1e-12 ? nearest : std::ceil(x);
  if (idx < 1.0) idx = 1.0;
  if (idx > count) idx = count;
  return Region{kind, static_cast<int>(idx)};
}

/// Region boundaries of a cycle in [0, 2*pi], including both ends.
inline std::vector<double> region_boundaries(CycleKind kind) {
  const int count = kind == CycleKind::Long ? 6 : 4;
  std::vector<double> out;
  for (int i = 0; i <= count; ++i) out.push_back(kTwoPi * i / count);
  return out;
}

struct TopologyLabel {
  int components = 0;
  int loops = 0;
  std::string name = "other";

  bool disconnected() const { return components >= 2; }
  friend bool operator==(const TopologyLabel&, const TopologyLabel&) = default;
};

inline constexpr double kCouplingTol = 1e-10;

/// Endpoint partition induced by the rows of (A|B), as a class id per endpoint.
inline std::array<int, 4> endpoint_classes(const VertexCondition& vc, double tol = kCouplingTol) {
  std::array<int, 4> parent{0, 1, 2, 3};
  auto find = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (int row = 0; row < 4; ++row) {
    int first = -1;
    for (int col = 0; col < 4; ++col) {
      if (std::abs(vc.A(row, col)) > tol || std::abs(vc.B(row, col)) > tol) {
        if (first < 0) {
          first = col;
        } else {
          parent[find(col)] = find(first);
        }
      }
    }
  }
  std::array<int, 4> cls{};
  for (int i = 0; i < 4; ++i) cls[i] = find(i);
  return cls;
}

inline TopologyLabel classify_topology(const VertexCondition& vc, double tol = kCouplingTol) {
  const auto cls = endpoint_classes(vc, tol);

  // Quotient multigraph: nodes are endpoint classes, edge 1 joins cls[0]-cls[1],
  // edge 2 joins cls[2]-cls[3].
  std::array<int, 4> nodes = cls;
  std::sort(nodes.begin(), nodes.end());
  const int n_nodes = static_cast<int>(std::unique(nodes.begin(), nodes.end()) - nodes.begin());

  std::array<int, 4> parent{0, 1, 2, 3};
  auto find = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  parent[find(cls[1])] = find(cls[0]);
  parent[find(cls[3])] = find(cls[2]);
  std::array<int, 4> roots{};
  for (int i = 0; i < 4; ++i) roots[i] = find(cls[i]);
  std::sort(roots.begin(), roots.end());
  const int n_comp = static_cast<int>(std::unique(roots.begin(), roots.end()) - roots.begin());

  std::array<int, 4> degree{};
  for (int i = 0; i < 4; ++i) ++degree[cls[i]];
  bool has_free_end = false;
  for (int i = 0; i < 4; ++i) has_free_end = has_free_end || degree[cls[i]] == 1;

  TopologyLabel lab;
  lab.components = n_comp;
  lab.loops = 2 - n_nodes + n_comp;
  const int c = lab.components;
  const int l = lab.loops;
  if (c == 1 && l == 1) {
    lab.name = has_free_end ? "ring-plus-line-joined" : "single-ring";
  } else if (c == 2 && l == 0) {
    lab.name = "two-lines";
  } else if (c == 2 && l == 2) {
    lab.name = "two-rings";
  } else if (c == 1 && l == 0) {
    lab.name = "single-line";
  } else if (c == 1 && l == 2) {
    lab.name = "figure-eight";
  } else if (c == 2 && l == 1) {
    lab.name = "line-and-ring-disjoint";
  }
  return lab;
}

}  // namespace qgflow
