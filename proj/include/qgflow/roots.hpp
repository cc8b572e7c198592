#pragma once

// Root location for secular determinants f(k) = det(Mn(k)), where Mn is a
// square matrix with unit-norm rows. Simple roots are bracketed by sign
// changes on a uniform grid and refined by bisection. Roots of even
// multiplicity (and pairs of roots closer than one grid cell) show up as
// local minima of |f| without a sign change and are resolved by a
// golden-section search on the cell pair.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "qgflow/errors.hpp"

namespace qgflow {

struct ScanOptions {
  double step = 0.0;                  ///< grid step in k; must be set by the caller
  double bisect_rel_tol = 1e-12;      ///< bisection stops at this * (1 + k)
  double double_root_threshold = 1e-8;
  double rank_rel_tol = 1e-8;         ///< singular values below this * sigma_max count as zero
  int near_zero_points = 24;          ///< extra geometric grid points in (0, step)
  double cluster_rel_tol = 1e-7;      ///< roots closer than this * (1 + k) are checked for merging
};

struct RootRecord {
  double k = 0.0;
  int multiplicity = 1;
};

struct ResolutionWarning {
  double k_lo = 0.0;
  double k_hi = 0.0;
  double theta = std::numeric_limits<double>::quiet_NaN();  ///< annotated by callers
};

struct RootScan {
  std::vector<RootRecord> roots;
  std::vector<ResolutionWarning> warnings;
};

/// Golden-section minimisation of a unimodal function on [lo, hi].
template <class F>
double golden_section_min(F&& f, double lo, double hi, double abs_tol, int max_iter = 200) {
  constexpr double inv_phi = 0.6180339887498949;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  for (int it = 0; it < max_iter && hi - lo > abs_tol; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  return f1 <= f2 ? x1 : x2;
}

/// Bisection on a bracket with f(lo) and f(hi) of opposite sign.
template <class F>
double bisect_root(F&& f, double lo, double hi, double flo, double rel_tol) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= rel_tol * (1.0 + std::abs(mid))) return mid;
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Divide each row by its Euclidean norm. Returns false if a row is zero
/// relative to `scale`.
template <class Derived>
bool normalize_rows(Eigen::MatrixBase<Derived>& m, double scale = 1.0) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (!(n > 1e-14 * scale)) return false;
    m.row(r) /= n;
  }
  return true;
}

/// Singular values (descending) of a row-normalised matrix.
template <class Matrix>
Eigen::VectorXd singular_values(const Matrix& m) {
  using Plain = typename Matrix::PlainObject;
  const Plain dense = m;
  Eigen::JacobiSVD<Plain> svd(dense);
  return Eigen::VectorXd(svd.singularValues());
}

inline int nullity_of(const Eigen::VectorXd& sv, double rel_tol) {
  if (sv.size() == 0) return 0;
  const double cutoff = rel_tol * std::max(sv(0), std::numeric_limits<double>::min());
  return static_cast<int>((sv.array() < cutoff).count());
}

/// Locate all roots of det(matrix_at(k)) in [k_lo, k_hi].
///
/// `matrix_at(k)` must return a row-normalised square matrix (fixed or
/// dynamic Eigen type). `k_lo` may be 0: the grid then starts with a short
/// geometric run of points in (0, step) so that roots emerging from k = 0 are
/// not lost.
template <class MatrixFn>
RootScan scan_roots(MatrixFn&& matrix_at, double k_lo, double k_hi, const ScanOptions& opt) {
  if (!(opt.step > 0.0)) throw InvalidParameter("scan step must be positive");
  if (!(k_hi > k_lo)) throw InvalidParameter("empty scan interval");

  auto det_at = [&](double k) { return static_cast<double>(matrix_at(k).determinant()); };

  std::vector<double> ks;
  if (k_lo <= 0.0) {
    const double first = opt.step * 1e-6;
    const int n = std::max(opt.near_zero_points, 2);
    for (int i = 0; i < n; ++i) ks.push_back(first * std::pow(1e6, static_cast<double>(i) / n));
    k_lo = opt.step;
  }
  const auto cells = static_cast<long>(std::ceil((k_hi - k_lo) / opt.step));
  const double h = (k_hi - k_lo) / static_cast<double>(std::max(cells, 1L));
  for (long i = 0; i <= cells; ++i) ks.push_back(i == cells ? k_hi : k_lo + h * static_cast<double>(i));

  std::vector<double> fs(ks.size());
  for (size_t i = 0; i < ks.size(); ++i) fs[i] = det_at(ks[i]);

  auto nullity_at = [&](double k) { return nullity_of(singular_values(matrix_at(k)), opt.rank_rel_tol); };

  RootScan out;
  auto push_simple = [&](double k) {
    out.roots.push_back({k, std::max(1, nullity_at(k))});
  };

  for (size_t i = 0; i + 1 < ks.size(); ++i) {
    if (fs[i] == 0.0) {
      push_simple(ks[i]);
    } else if ((fs[i] < 0.0) != (fs[i + 1] < 0.0) && fs[i + 1] != 0.0) {
      push_simple(bisect_root(det_at, ks[i], ks[i + 1], fs[i], opt.bisect_rel_tol));
    }
  }
  if (fs.back() == 0.0) push_simple(ks.back());

  // The second-smallest singular value vanishes linearly at a double root,
  // where f itself only vanishes quadratically.
  auto polish_double_root = [&](double lo, double hi) {
    auto second_smallest = [&](double k) {
      const Eigen::VectorXd sv = singular_values(matrix_at(k));
      return sv.size() >= 2 ? sv(sv.size() - 2) : sv(0);
    };
    return golden_section_min(second_smallest, lo, hi, 1e-15 * (1.0 + hi));
  };

  // Local minima of |f| with no sign change over the two adjacent cells.
  for (size_t i = 1; i + 1 < ks.size(); ++i) {
    const double fl = fs[i - 1], fc = fs[i], fr = fs[i + 1];
    if (fc == 0.0 || fl == 0.0 || fr == 0.0) continue;
    if ((fl < 0.0) != (fc < 0.0) || (fc < 0.0) != (fr < 0.0)) continue;
    if (!(std::abs(fc) <= std::abs(fl) && std::abs(fc) < std::abs(fr))) continue;

    const double sgn = fc > 0.0 ? 1.0 : -1.0;
    const double lo = ks[i - 1], hi = ks[i + 1];
    auto signed_f = [&](double k) { return sgn * det_at(k); };
    const double kmin = golden_section_min(signed_f, lo, hi, 1e-14 * (1.0 + hi));
    const double fmin = signed_f(kmin);
    if (fmin < 0.0) {
      // Two simple roots inside one cell pair.
      push_simple(bisect_root(det_at, lo, kmin, fl, opt.bisect_rel_tol));
      push_simple(bisect_root(det_at, kmin, hi, sgn * fmin, opt.bisect_rel_tol));
      continue;
    }
    if (fmin > opt.double_root_threshold) continue;

    const double kpol = polish_double_root(ks[i - 1], ks[i + 1]);
    const int m = nullity_at(kpol);
    if (m >= 2) out.roots.push_back({kpol, m});
  }

  // Rounding makes f cross zero twice at an exact double root; such pairs (and
  // tighter clusters) are merged when the polished point has enough nullity.
  std::sort(out.roots.begin(), out.roots.end(),
            [](const RootRecord& x, const RootRecord& y) { return x.k < y.k; });
  std::vector<RootRecord> merged;
  for (size_t i = 0; i < out.roots.size();) {
    size_t j = i + 1;
    while (j < out.roots.size() &&
           out.roots[j].k - out.roots[j - 1].k <= opt.cluster_rel_tol * (1.0 + out.roots[j].k))
      ++j;
    if (j - i == 1) {
      merged.push_back(out.roots[i]);
    } else {
      const double lo = out.roots[i].k, hi = out.roots[j - 1].k;
      const double pad = std::max(hi - lo, 1e-12 * (1.0 + hi));
      const double kpol = polish_double_root(lo - pad, hi + pad);
      const int m = nullity_at(kpol);
      if (m >= 2) {
        merged.push_back({kpol, m});
      } else {
        for (size_t q = i; q < j; ++q) {
          if (q > i && out.roots[q].k - merged.back().k <= 1e-10 * (1.0 + out.roots[q].k)) continue;
          merged.push_back(out.roots[q]);
        }
      }
    }
    i = j;
  }
  out.roots = std::move(merged);

  for (size_t i = 0; i + 1 < out.roots.size(); ++i) {
    if (out.roots[i + 1].k - out.roots[i].k < 3.0 * opt.step)
      out.warnings.push_back({out.roots[i].k, out.roots[i + 1].k});
  }
  return out;
}

/// Sign-change brackets only, no refinement.
template <class ValueFn>
std::vector<std::pair<double, double>> sign_change_brackets(ValueFn&& f, double lo, double hi,
                                                            double step) {
  std::vector<std::pair<double, double>> out;
  const auto cells = static_cast<long>(std::ceil((hi - lo) / step));
  const double h = (hi - lo) / static_cast<double>(std::max(cells, 1L));
  double prev_k = lo;
  double prev = f(lo);
  for (long i = 1; i <= cells; ++i) {
    const double k = i == cells ? hi : lo + h * static_cast<double>(i);
    const double v = f(k);
    if ((prev < 0.0) != (v < 0.0)) out.emplace_back(prev_k, k);
    prev_k = k;
    prev = v;
  }
  return out;
}

}  // namespace qgflow
