#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <functional>

#include "qgflow/spectral_core.hpp"

using namespace qgflow;

namespace {

const Geometry kGolden = Geometry::from_ratio(metal_mean::golden, 1.0);

std::vector<double> ks_of(const Spectrum& sp) {
  std::vector<double> out;
  for (const auto& l : sp.expanded()) out.push_back(l.k);
  return out;
}

// Closed-form line families: k = (n + shift) pi / L for n >= n0, below k_max.
void add_family(std::vector<double>& out, double L, double shift, int n0, double k_max) {
  for (int n = n0;; ++n) {
    const double k = (n + shift) * kPi / L;
    if (k >= k_max) break;
    out.push_back(k);
  }
}

// Sign changes of f on a fine grid, each polished by TOMS748.
std::vector<double> scalar_roots(const std::function<double(double)>& f, double lo, double hi, int n) {
  std::vector<double> out;
  double x0 = lo, f0 = f(lo);
  for (int i = 1; i <= n; ++i) {
    const double x1 = lo + (hi - lo) * i / n, f1 = f(x1);
    if (f0 == 0.0) out.push_back(x0);
    if (f0 * f1 < 0.0) {
      boost::uintmax_t iters = 200;
      const auto r = boost::math::tools::toms748_solve(f, x0, x1, f0, f1,
                                                       boost::math::tools::eps_tolerance<double>(52), iters);
      out.push_back(0.5 * (r.first + r.second));
    }
    x0 = x1;
    f0 = f1;
  }
  return out;
}

void expect_same_levels(std::vector<double> got, std::vector<double> want, double tol) {
  std::sort(want.begin(), want.end());
  ASSERT_EQ(got.size(), want.size());
  for (size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "level " << i;
}

VertexCondition ring_condition() { return condition_at({CycleKind::Long, 1.0, 1.0}, 0.0); }

}  // namespace

TEST(Trig, RowTwoAtFullPeriod) {
  const auto m = trig_matrices({0.5, 0.5}, 2 * kPi);
  EXPECT_NEAR(m.U(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(m.U(1, 1), -1.0, 1e-15);
  const auto g = trig_matrices({0.618034, 0.381966}, kPi / 0.618034);
  EXPECT_NEAR(g.U(1, 0), 0.0, 1e-14);
}

TEST(Trig, RejectsNonpositiveK) { EXPECT_THROW(trig_matrices(kGolden, 0.0), InvalidParameter); }

TEST(Secular, RingAndLineZeros) {
  const Geometry unit{0.5, 0.5};
  EXPECT_NEAR(secular_value(ring_condition(), unit, 2 * kPi), 0.0, 1e-12);
  EXPECT_GT(std::abs(secular_value(ring_condition(), unit, kPi)), 1e-3);
  const VertexCondition dd = condition_at({}, kPi / 3);  // c = 0 boundary
  EXPECT_NEAR(secular_value(dd, kGolden, kPi / kGolden.L2), 0.0, 1e-12);
}

TEST(ZeroMode, Presence) {
  EXPECT_TRUE(zero_mode_present(condition_at({CycleKind::Long, 0.3, 1.0}, 0.4), kGolden));
  EXPECT_TRUE(zero_mode_present(condition_at({}, kPi / 3), kGolden));
  EXPECT_FALSE(zero_mode_present(condition_at({}, 2 * kPi / 3), kGolden));
}

TEST(Spectrum, PlainRing) {
  const Spectrum sp = find_spectrum(ring_condition(), kGolden, 20.0);
  ASSERT_EQ(sp.levels.size(), 4u);
  EXPECT_NEAR(sp.levels[0].k, 0.0, 0.0);
  EXPECT_EQ(sp.levels[0].multiplicity, 1);
  for (int n = 1; n <= 3; ++n) {
    EXPECT_NEAR(sp.levels[n].k, 2 * kPi * n, 1e-9);
    EXPECT_EQ(sp.levels[n].multiplicity, 2);
    // Trace of the projector onto edge 1, averaged over the doublet.
    EXPECT_NEAR(sp.levels[n].weight1, kGolden.L1, 1e-9);
  }
}

TEST(Spectrum, NeumannNeumannAndDirichletDirichletLines) {
  const double k_max = 40.0;
  std::vector<double> want{0.0};
  add_family(want, kGolden.L1, 0.0, 1, k_max);
  add_family(want, kGolden.L2, 0.0, 1, k_max);
  const Spectrum sp = find_spectrum(condition_at({}, kPi / 3), kGolden, k_max);
  expect_same_levels(ks_of(sp), want, 1e-9);
}

TEST(Spectrum, NeumannDirichletLines) {
  const double k_max = 40.0;
  std::vector<double> want;
  add_family(want, kGolden.L1, 0.5, 0, k_max);
  add_family(want, kGolden.L2, 0.5, 0, k_max);
  const Spectrum sp = find_spectrum(condition_at({}, 2 * kPi / 3), kGolden, k_max);
  expect_same_levels(ks_of(sp), want, 1e-9);
  EXPECT_NEAR(want[0], 2.54160184, 1e-8);
}

TEST(Spectrum, NeumannDirichletLowLevels) {
  const Spectrum sp = find_spectrum(condition_at({}, 2 * kPi / 3), kGolden, 9.0);
  const auto ks = ks_of(sp);
  ASSERT_EQ(ks.size(), 3u);
  EXPECT_NEAR(ks[0], 0.5 * kPi / kGolden.L1, 1e-9);
  EXPECT_NEAR(ks[1], 0.5 * kPi / kGolden.L2, 1e-9);
  EXPECT_NEAR(ks[2], 1.5 * kPi / kGolden.L1, 1e-9);
}

TEST(Spectrum, RobinAtQuarterTurn) {
  const double c = (std::sqrt(2.0) - 1.0) / (kSqrt3 - 1.0);
  const double L1 = kGolden.L1, L2 = kGolden.L2, k_max = 40.0;
  // Edge 1: Neumann end and Robin end; edge 2: Robin end and Dirichlet end.
  auto f1 = [&](double k) { return (1 - c) * k * std::sin(k * L1) - c * std::cos(k * L1); };
  auto f2 = [&](double k) { return c * k * std::cos(k * L2) + (1 - c) * std::sin(k * L2); };
  std::vector<double> want = scalar_roots(f1, 1e-9, k_max, 40000);
  const auto more = scalar_roots(f2, 1e-9, k_max, 40000);
  want.insert(want.end(), more.begin(), more.end());

  const VertexCondition vc = condition_at({}, kPi / 2);
  EXPECT_NEAR(eval_ramps(CycleKind::Long, kPi / 2).c, c, 1e-15);
  const Spectrum sp = find_spectrum(vc, kGolden, k_max);
  expect_same_levels(ks_of(sp), want, 1e-9);
}

TEST(Weights, LineModes) {
  const VertexCondition vc = condition_at({}, kPi / 3);
  EXPECT_NEAR(eigenvector(vc, kGolden, kPi / kGolden.L2).weight1, 0.0, 1e-12);
  EXPECT_NEAR(eigenvector(vc, kGolden, kPi / kGolden.L1).weight1, 1.0, 1e-12);
}

// In Regions II and III the secular matrix is block diagonal. The blocks are
// written out by hand for Region II; for Region III they come from the 2x2
// corners of (A, B).
TEST(Factorization, RegionsTwoAndThree) {
  const Geometry g = Geometry::from_ratio(metal_mean::bronze, 1.0);
  auto norm_det2 = [](Eigen::Matrix2d m) {
    for (int r = 0; r < 2; ++r) m.row(r) /= m.row(r).norm();
    return m.determinant();
  };
  int checked = 0;
  for (int i = 0; i < 20; ++i) {
    const bool two = i < 10;
    const double th = two ? kPi / 3 + (i + 0.5) * (kPi / 3) / 10 : 2 * kPi / 3 + (i - 10 + 0.5) * (kPi / 3) / 10;
    const CycleParams p{CycleKind::Long, 0.5, 0.5};
    const RampVector r = eval_ramps(p.kind, th);
    const VertexCondition vc = condition_at(p, th);
    for (int j = 0; j < 100; ++j) {
      const double k = 0.05 + 39.9 * j / 99.0;
      const double s1 = std::sin(k * g.L1), c1 = std::cos(k * g.L1);
      const double s2 = std::sin(k * g.L2), c2 = std::cos(k * g.L2);
      Eigen::Matrix2d b1, b2;
      if (two) {
        const double c = r.c;
        b1 << k, 0, -c * s1 - k * (1 - c) * c1, -c * c1 + k * (1 - c) * s1;
        b2 << k * c, -(1 - c), -s2, -c2;
      } else {
        Eigen::Matrix2d U1, V1, U2, V2;
        U1 << 0, 1, s1, c1;
        V1 << 1, 0, -c1, s1;
        U2 << 0, 1, s2, c2;
        V2 << 1, 0, -c2, s2;
        b1 = vc.A.block<2, 2>(0, 0) * U1 + k * vc.B.block<2, 2>(0, 0) * V1;
        b2 = vc.A.block<2, 2>(2, 2) * U2 + k * vc.B.block<2, 2>(2, 2) * V2;
      }
      const Mat4 m = secular_matrix(vc, g, k);
      ASSERT_EQ((m.block<2, 2>(0, 2).cwiseAbs().maxCoeff()), 0.0);
      ASSERT_EQ((m.block<2, 2>(2, 0).cwiseAbs().maxCoeff()), 0.0);
      EXPECT_LE(std::abs(secular_value(vc, g, k) - norm_det2(b1) * norm_det2(b2)), 1e-10);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 2000);
}

TEST(Hyperbolic, NoNegativeSpectrum) {
  for (double c : {0.0, 0.3, 0.7, 1.0}) {
    const double th = c == 0.0 ? kPi / 3 : (c == 1.0 ? 2 * kPi / 3 : 0.0);
    VertexCondition vc;
    if (th > 0.0) {
      vc = condition_at({}, th);
    } else {
      RampVector r;
      r.c = c;
      vc = build_condition(r, {});
    }
    EXPECT_TRUE(hyperbolic_diagnostic(vc, kGolden, 10.0).empty()) << "c=" << c;
  }
  EXPECT_TRUE(hyperbolic_diagnostic(ring_condition(), kGolden, 10.0).empty());
  for (int i = 0; i < 36; ++i) {
    const VertexCondition vc = condition_at({CycleKind::Long, 0.5, 0.5}, kTwoPi * (i + 0.25) / 36);
    EXPECT_TRUE(hyperbolic_diagnostic(vc, kGolden, 10.0).empty()) << i;
  }
}

TEST(Spectrum, ZeroModeFlag) {
  SpectrumOptions o;
  o.include_zero_mode = false;
  const Spectrum sp = find_spectrum(ring_condition(), kGolden, 10.0, o);
  ASSERT_FALSE(sp.levels.empty());
  EXPECT_GT(sp.levels[0].k, 1.0);
}

TEST(Geometry, RatioPresets) {
  const Geometry g = Geometry::from_ratio(metal_mean::silver, 2.0);
  EXPECT_NEAR(g.L1 / g.L2, 1 + std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(g.total(), 2.0, 1e-14);
  EXPECT_THROW(Geometry::from_ratio(-1.0, 1.0), InvalidParameter);
}
