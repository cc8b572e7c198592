#include <gtest/gtest.h>

#include "qgflow/cycle_conditions.hpp"

using namespace qgflow;

namespace {

void expect_ramps(const RampVector& r, double a, double b, double bp, double c, double d) {
  EXPECT_NEAR(r.a, a, 1e-14);
  EXPECT_NEAR(r.b, b, 1e-14);
  EXPECT_NEAR(r.bp, bp, 1e-14);
  EXPECT_NEAR(r.c, c, 1e-14);
  EXPECT_NEAR(r.d, d, 1e-14);
}

}  // namespace

TEST(Ramps, LongAtZero) { expect_ramps(eval_ramps(CycleKind::Long, 0.0), 1, 0, 0, 0, 0); }

TEST(Ramps, LongAtFivePiOverSix) {
  expect_ramps(eval_ramps(CycleKind::Long, 5 * kPi / 6), 0, kSqrt3 - 1, 1, 1, 0);
}

TEST(Ramps, ShortAtThreePiOverTwo) { expect_ramps(eval_ramps(CycleKind::Short, 1.5 * kPi), 0, 0, 0, 0, 1); }

TEST(Ramps, PeriodicInTheta) {
  for (double th : {0.3, 1.7, 4.0}) {
    const RampVector a = eval_ramps(CycleKind::Long, th);
    const RampVector b = eval_ramps(CycleKind::Long, th + kTwoPi);
    EXPECT_NEAR(a.c, b.c, 1e-12);
    EXPECT_NEAR(a.d, b.d, 1e-12);
  }
}

// The printed b' is never positive; with the ramp in [0,1] required it would
// vanish identically, so the sign is flipped.
TEST(Ramps, PrintedBPrimeIsNonpositive) {
  int negative = 0;
  for (int i = 0; i < 2000; ++i) {
    const double th = kTwoPi * i / 2000;
    const double v = uncorrected_long_bp(th);
    EXPECT_LE(v, 0.0);
    if (v < -1e-6) ++negative;
    const double fixed = eval_ramps(CycleKind::Long, th).bp;
    EXPECT_GE(fixed, 0.0);
    EXPECT_LE(fixed, 1.0);
  }
  EXPECT_GT(negative, 100);
}

TEST(Ramps, ImplicationsHoldOnDenseGrid) {
  for (auto kind : {CycleKind::Long, CycleKind::Short}) {
    for (int i = 0; i <= 20000; ++i) EXPECT_NO_THROW(validate_ramps(eval_ramps(kind, kTwoPi * i / 20000)));
  }
}

TEST(Condition, RegionOneMatrices) {
  RampVector r;
  r.a = 1;
  const double t = 0.3;
  const VertexCondition vc = build_condition(r, {CycleKind::Long, t, 2.0});
  Mat4 B, A;
  B << 1, 0, t, 0, 0, 1, 0, t, 0, 0, 0, 0, 0, 0, 0, 0;
  A << 0, 0, 0, 0, 0, 0, 0, 0, t, 0, -1, 0, 0, t, 0, -1;
  EXPECT_LT((vc.B - B).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((vc.A - A).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Condition, CEqualsOneIsNeumannDirichlet) {
  RampVector r;
  r.c = 1;
  const VertexCondition vc = build_condition(r, {});
  // Rows must span {psi'_1, psi_2, psi'_3, psi_4}.
  Eigen::Matrix<double, 4, 8> ab, ref = Eigen::Matrix<double, 4, 8>::Zero();
  ab << vc.A, vc.B;
  ref(0, 4) = 1;
  ref(1, 1) = 1;
  ref(2, 6) = 1;
  ref(3, 3) = 1;
  Eigen::Matrix<double, 8, 8> both;
  both << ab, ref;
  Eigen::JacobiSVD<Eigen::Matrix<double, 8, 8>> svd(both);
  EXPECT_LT(svd.singularValues()(4), 1e-12);
  EXPECT_GT(svd.singularValues()(3), 1e-3);
}

TEST(Condition, RejectsConflictingRamps) {
  RampVector r;
  r.a = 0.5;
  r.c = 0.5;
  EXPECT_THROW(build_condition(r, {}), InvalidParameter);
  EXPECT_THROW(build_condition(RampVector{}, {CycleKind::Long, -1.0, 1.0}), InvalidParameter);
}

TEST(SelfAdjoint, TrivialCases) {
  VertexCondition id;
  id.A = Mat4::Identity();
  id.B = Mat4::Identity();
  EXPECT_TRUE(check_self_adjoint(id, 1e-12).pass);

  VertexCondition low;
  low.B(0, 2) = 1.0;
  const auto rep = check_self_adjoint(low, 1e-12);
  EXPECT_FALSE(rep.pass);
  EXPECT_EQ(rep.rank, 1);
}

TEST(SelfAdjoint, SweepBothCycles) {
  for (auto kind : {CycleKind::Long, CycleKind::Short}) {
    for (auto ts : {std::pair{0.1, 1.0}, std::pair{0.5, 0.5}}) {
      const CycleParams p{kind, ts.first, ts.second};
      for (int i = 0; i < 2000; ++i) {
        const auto rep = check_self_adjoint(condition_at(p, kTwoPi * i / 2000), 1e-12);
        ASSERT_TRUE(rep.pass) << "theta index " << i;
      }
    }
  }
}

TEST(Condition, ContinuousAcrossRegionBoundaries) {
  const CycleParams p{CycleKind::Long, 0.5, 0.5};
  for (double b : region_boundaries(CycleKind::Long)) {
    double prev = 1.0;
    for (double h : {1e-3, 1e-5, 1e-7}) {
      const VertexCondition lo = condition_at(p, b - h), hi = condition_at(p, b + h);
      const double jump = std::max((lo.A - hi.A).cwiseAbs().maxCoeff(), (lo.B - hi.B).cwiseAbs().maxCoeff());
      EXPECT_LT(jump, prev + 1e-15);
      prev = jump;
    }
    EXPECT_LT(prev, 1e-4);
  }
}

TEST(Regions, Examples) {
  EXPECT_EQ(region_of(CycleKind::Long, kPi / 4).name(), "I");
  EXPECT_EQ(region_of(CycleKind::Long, kPi).name(), "III");
  EXPECT_EQ(region_of(CycleKind::Long, kPi / 3).name(), "I");
  EXPECT_EQ(region_of(CycleKind::Long, 5.5).name(), "VI");
  EXPECT_EQ(region_of(CycleKind::Short, 1.75 * kPi).name(), "S4");
  EXPECT_EQ(region_of(CycleKind::Short, kPi / 2).name(), "S1");
}

TEST(Topology, RegionExamples) {
  const CycleParams p{CycleKind::Long, 0.5, 0.5};
  auto at = [&](double th) { return classify_topology(condition_at(p, th)); };
  EXPECT_EQ(at(kPi / 6).name, "single-ring");
  const TopologyLabel two = at(kPi / 2);
  EXPECT_EQ(two.name, "two-lines");
  EXPECT_EQ(two.components, 2);
  EXPECT_TRUE(two.disconnected());
  const TopologyLabel eight = at(11 * kPi / 6);
  EXPECT_EQ(eight.name, "figure-eight");
  EXPECT_EQ(eight.loops, 2);
}
