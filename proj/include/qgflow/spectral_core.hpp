#pragma once

// Spectrum of the two-loop graph for a fixed vertex condition.
//
// On edge e the eigenfunction is psi_e(x) = alpha_e sin(kx) + beta_e cos(kx).
// With coefficients c = (alpha1, beta1, alpha2, beta2), Psi = U c and
// Psi' = k V c, so eigenvalues are the zeros of det(A U + k B V).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "qgflow/cycle_conditions.hpp"
#include "qgflow/errors.hpp"
#include "qgflow/roots.hpp"

namespace qgflow {

struct Geometry {
  double L1 = 0.5;
  double L2 = 0.5;

  double total() const { return L1 + L2; }
  double shortest() const { return std::min(L1, L2); }

  void validate() const {
    if (!(L1 > 0.0) || !(L2 > 0.0) || !std::isfinite(L1) || !std::isfinite(L2))
      throw InvalidParameter("edge lengths must be positive");
  }

  /// L1 / L2 = ratio with L1 + L2 = total.
  static Geometry from_ratio(double ratio, double total = 1.0) {
    if (!(ratio > 0.0) || !(total > 0.0)) throw InvalidParameter("ratio and total length must be positive");
    const double l1 = total * ratio / (1.0 + ratio);
    return Geometry{l1, total - l1};
  }
};

namespace metal_mean {
inline const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
inline const double silver = 1.0 + std::sqrt(2.0);
inline const double bronze = (3.0 + std::sqrt(13.0)) / 2.0;
}  // namespace metal_mean

struct EdgeCoefficients {
  double alpha1 = 0.0;
  double beta1 = 0.0;
  double alpha2 = 0.0;
  double beta2 = 0.0;
};

struct EigenvalueRecord {
  double k = 0.0;
  int multiplicity = 1;
  double weight1 = 0.0;  ///< share of the squared norm on edge 1

  double weight2() const { return 1.0 - weight1; }
};

struct TrigMatrices {
  Mat4 U;
  Mat4 V;
};

inline TrigMatrices trig_matrices(const Geometry& g, double k) {
  if (!(k > 0.0)) throw InvalidParameter("trig_matrices requires k > 0");
  const double s1 = std::sin(k * g.L1), c1 = std::cos(k * g.L1);
  const double s2 = std::sin(k * g.L2), c2 = std::cos(k * g.L2);
  TrigMatrices m;
  m.U << 0.0, 1.0, 0.0, 0.0,
         s1, c1, 0.0, 0.0,
         0.0, 0.0, 0.0, 1.0,
         0.0, 0.0, s2, c2;
  m.V << 1.0, 0.0, 0.0, 0.0,
         -c1, s1, 0.0, 0.0,
         0.0, 0.0, 1.0, 0.0,
         0.0, 0.0, -c2, s2;
  return m;
}

/// A U + k B V, without normalisation.
inline Mat4 secular_matrix(const VertexCondition& vc, const Geometry& g, double k) {
  const TrigMatrices tm = trig_matrices(g, k);
  return vc.A * tm.U + k * (vc.B * tm.V);
}

/// Secular matrix with every row scaled to unit norm. Throws DegenerateRow if
/// a row vanishes.
inline Mat4 normalized_secular_matrix(const VertexCondition& vc, const Geometry& g, double k) {
  Mat4 m = secular_matrix(vc, g, k);
  for (int r = 0; r < 4; ++r) {
    const double scale = vc.A.row(r).norm() + k * vc.B.row(r).norm();
    const double n = m.row(r).norm();
    if (!(n > 1e-14 * std::max(scale, 1e-300)))
      throw DegenerateRow("secular matrix row " + std::to_string(r + 1) + " vanishes");
    m.row(r) /= n;
  }
  return m;
}

inline double secular_value(const VertexCondition& vc, const Geometry& g, double k) {
  return normalized_secular_matrix(vc, g, k).determinant();
}

/// Boundary system for the linear ansatz psi_e = alpha_e x + beta_e (k = 0).
inline Mat4 zero_mode_matrix(const VertexCondition& vc, const Geometry& g) {
  Mat4 U0, V0;
  U0 << 0.0, 1.0, 0.0, 0.0,
        g.L1, 1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, g.L2, 1.0;
  V0 << 1.0, 0.0, 0.0, 0.0,
        -1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, -1.0, 0.0;
  Mat4 m = vc.A * U0 + vc.B * V0;
  for (int r = 0; r < 4; ++r) {
    const double n = m.row(r).norm();
    if (n > 0.0) m.row(r) /= n;
  }
  return m;
}

inline constexpr double kRankRelTol = 1e-8;

/// Multiplicity of k = 0 as an eigenvalue (0 if absent).
inline int zero_mode_multiplicity(const VertexCondition& vc, const Geometry& g) {
  return nullity_of(singular_values(zero_mode_matrix(vc, g)), kRankRelTol);
}

inline bool zero_mode_present(const VertexCondition& vc, const Geometry& g) {
  return zero_mode_multiplicity(vc, g) > 0;
}

struct SpectrumOptions {
  double grid_step = 0.0;  ///< 0 selects min(L1, L2) / 50
  double bisect_rel_tol = 1e-12;
  double double_root_threshold = 1e-8;
  bool include_zero_mode = true;

  double step_for(const Geometry& g) const { return grid_step > 0.0 ? grid_step : g.shortest() / 50.0; }
};

struct Spectrum {
  std::vector<EigenvalueRecord> levels;
  std::vector<ResolutionWarning> warnings;

  /// Levels with multiplicity expanded into repeated entries.
  std::vector<EigenvalueRecord> expanded() const {
    std::vector<EigenvalueRecord> out;
    for (const auto& l : levels) {
      for (int i = 0; i < l.multiplicity; ++i) out.push_back(l);
    }
    return out;
  }
};

namespace detail {

// Integrals over [0, L] of sin^2, cos^2 and sin*cos of kx.
struct TrigGram {
  double ss, cc, sc;
};

inline TrigGram trig_gram(double k, double L) {
  const double s2 = std::sin(2.0 * k * L) / (4.0 * k);
  const double sk = std::sin(k * L);
  return {0.5 * L - s2, 0.5 * L + s2, sk * sk / (2.0 * k)};
}

// Integrals over [0, L] of x^2, x, 1.
inline TrigGram linear_gram(double L) { return {L * L * L / 3.0, L, 0.5 * L * L}; }

// Graph inner products of coefficient vectors restricted to each edge.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> edge_grams(const Eigen::MatrixXd& basis,
                                                              const TrigGram& g1,
                                                              const TrigGram& g2) {
  const Eigen::Index m = basis.cols();
  Eigen::MatrixXd G1(m, m), G2(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto& u = basis.col(i);
      const auto& v = basis.col(j);
      G1(i, j) = u(0) * v(0) * g1.ss + u(1) * v(1) * g1.cc + (u(0) * v(1) + u(1) * v(0)) * g1.sc;
      G2(i, j) = u(2) * v(2) * g2.ss + u(3) * v(3) * g2.cc + (u(2) * v(3) + u(3) * v(2)) * g2.sc;
    }
  }
  return {G1, G2};
}

struct ModeBasis {
  std::vector<EdgeCoefficients> modes;
  double weight1 = 0.0;
};

// Orthonormalise a nullspace basis in the graph L2 product and return the
// mean edge-1 weight (trace of the edge-1 block over the dimension).
inline ModeBasis orthonormal_modes(const Eigen::MatrixXd& basis, const TrigGram& g1,
                                   const TrigGram& g2) {
  auto [G1, G2] = edge_grams(basis, g1, g2);
  const Eigen::MatrixXd G = G1 + G2;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(1e-300);
  const Eigen::MatrixXd T = es.eigenvectors() * ev.cwiseInverse().cwiseSqrt().asDiagonal();
  const Eigen::MatrixXd ortho = basis * T;
  const Eigen::MatrixXd W1 = T.transpose() * G1 * T;

  ModeBasis out;
  for (Eigen::Index j = 0; j < ortho.cols(); ++j) {
    out.modes.push_back({ortho(0, j), ortho(1, j), ortho(2, j), ortho(3, j)});
  }
  out.weight1 = std::clamp(W1.trace() / static_cast<double>(ortho.cols()), 0.0, 1.0);
  return out;
}

inline Eigen::MatrixXd null_basis(const Mat4& m, int nullity) {
  Eigen::JacobiSVD<Mat4> svd(m, Eigen::ComputeFullV);
  return svd.matrixV().rightCols(nullity);
}

}  // namespace detail

struct EigenvectorResult {
  std::vector<EdgeCoefficients> modes;  ///< L2-orthonormal basis of the eigenspace
  double weight1 = 0.0;
};

namespace detail {

inline EigenvectorResult modes_at(const VertexCondition& vc, const Geometry& g, double k, int nul) {
  const Mat4 m = normalized_secular_matrix(vc, g, k);
  const auto mb = orthonormal_modes(null_basis(m, nul), trig_gram(k, g.L1), trig_gram(k, g.L2));
  return {mb.modes, mb.weight1};
}

}  // namespace detail

/// Eigenfunctions at an accepted root k > 0.
inline EigenvectorResult eigenvector(const VertexCondition& vc, const Geometry& g, double k) {
  const Mat4 m = normalized_secular_matrix(vc, g, k);
  const int nul = nullity_of(singular_values(m), kRankRelTol);
  if (nul == 0) throw NotARoot("k is not an eigenvalue (nullity 0)");
  const auto mb = detail::orthonormal_modes(detail::null_basis(m, nul), detail::trig_gram(k, g.L1),
                                            detail::trig_gram(k, g.L2));
  return {mb.modes, mb.weight1};
}

/// Eigenfunctions of the k = 0 eigenvalue, coefficients read as (slope, offset).
inline EigenvectorResult zero_mode_vector(const VertexCondition& vc, const Geometry& g) {
  const Mat4 m = zero_mode_matrix(vc, g);
  const int nul = nullity_of(singular_values(m), kRankRelTol);
  if (nul == 0) throw NotARoot("k = 0 is not an eigenvalue");
  const auto mb = detail::orthonormal_modes(detail::null_basis(m, nul), detail::linear_gram(g.L1),
                                            detail::linear_gram(g.L2));
  return {mb.modes, mb.weight1};
}

/// All eigenvalues in [0, k_max], sorted, with multiplicities and edge weights.
inline Spectrum find_spectrum(const VertexCondition& vc, const Geometry& g, double k_max,
                              const SpectrumOptions& opts = {}) {
  g.validate();
  if (!(k_max > 0.0)) throw InvalidParameter("k_max must be positive");

  Spectrum sp;
  if (opts.include_zero_mode) {
    const int m0 = zero_mode_multiplicity(vc, g);
    if (m0 > 0) sp.levels.push_back({0.0, m0, zero_mode_vector(vc, g).weight1});
  }

  ScanOptions so;
  so.step = opts.step_for(g);
  so.bisect_rel_tol = opts.bisect_rel_tol;
  so.double_root_threshold = opts.double_root_threshold;
  so.rank_rel_tol = kRankRelTol;
  auto scan = scan_roots([&](double k) { return normalized_secular_matrix(vc, g, k); }, 0.0, k_max, so);

  for (const auto& r : scan.roots) {
    const double w = detail::modes_at(vc, g, r.k, r.multiplicity).weight1;
    sp.levels.push_back({r.k, r.multiplicity, w});
  }
  sp.warnings = std::move(scan.warnings);
  return sp;
}

/// Sign-change brackets of the secular determinant continued to k = i kappa.
/// An empty result supports the absence of negative eigenvalues below
/// -kappa_max^2.
inline std::vector<std::pair<double, double>> hyperbolic_diagnostic(const VertexCondition& vc,
                                                                    const Geometry& g,
                                                                    double kappa_max,
                                                                    double step = 0.0) {
  if (!(kappa_max > 0.0)) throw InvalidParameter("kappa_max must be positive");
  if (!(step > 0.0)) step = g.shortest() / 50.0;
  auto f = [&](double kappa) {
    const double s1 = std::sinh(kappa * g.L1), c1 = std::cosh(kappa * g.L1);
    const double s2 = std::sinh(kappa * g.L2), c2 = std::cosh(kappa * g.L2);
    Mat4 U, V;
    U << 0.0, 1.0, 0.0, 0.0,
         s1, c1, 0.0, 0.0,
         0.0, 0.0, 0.0, 1.0,
         0.0, 0.0, s2, c2;
    V << 1.0, 0.0, 0.0, 0.0,
         -c1, -s1, 0.0, 0.0,
         0.0, 0.0, 1.0, 0.0,
         0.0, 0.0, -c2, -s2;
    Mat4 m = vc.A * U + kappa * (vc.B * V);
    for (int r = 0; r < 4; ++r) {
      const double n = m.row(r).norm();
      if (n > 0.0) m.row(r) /= n;
    }
    return m.determinant();
  };
  return sign_change_brackets(f, step, kappa_max, step);
}

}  // namespace qgflow
