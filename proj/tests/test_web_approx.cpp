#include <gtest/gtest.h>

#include <boost/math/tools/roots.hpp>
#include <sstream>

#include "qgflow/expression.hpp"
#include "qgflow/web_approx.hpp"

using namespace qgflow;

namespace {

const Geometry kGolden = Geometry::from_ratio(metal_mean::golden, 1.0);

double toms748(const std::function<double(double)>& f, double lo, double hi) {
  boost::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
  return 0.5 * (r.first + r.second);
}

// Neumann interval of length L with a delta of strength v at its midpoint.
GeneralGraph midpoint_delta(double L, double v) {
  GeneralGraph g;
  const int left = g.add_edge(0.5 * L, 1), right = g.add_edge(0.5 * L, 2);
  g.add_delta({{left, false}}, 0.0);
  g.add_delta({{left, true}, {right, false}}, v);
  g.add_delta({{right, true}}, 0.0);
  return g;
}

WebSpec parse_string(const std::string& text, double eps = 0.01) {
  std::istringstream in(text);
  return parse_web(in, eval_ramps(CycleKind::Long, 0.0), {}, eps);
}

}  // namespace

TEST(Expression, Arithmetic) {
  const VariableMap v{{"t", 0.5}, {"eps", 0.01}};
  EXPECT_DOUBLE_EQ(evaluate_expression("1 + 2 * 3", v), 7.0);
  EXPECT_DOUBLE_EQ(evaluate_expression("(1 + 2) * 3", v), 9.0);
  EXPECT_DOUBLE_EQ(evaluate_expression("-2^2", v), -4.0);
  EXPECT_DOUBLE_EQ(evaluate_expression("2^3^2", v), 512.0);
  EXPECT_DOUBLE_EQ(evaluate_expression("(t^2 - t)/eps", v), -25.0);
  EXPECT_DOUBLE_EQ(evaluate_expression("sqrt(abs(-16))", v), 4.0);
  EXPECT_DOUBLE_EQ(evaluate_expression("1.5e-1 * 2", v), 0.3);
}

TEST(Expression, Errors) {
  const VariableMap v{{"t", 0.5}};
  EXPECT_THROW(evaluate_expression("1 +", v), ParseError);
  EXPECT_THROW(evaluate_expression("(1", v), ParseError);
  EXPECT_THROW(evaluate_expression("q * 2", v), ParseError);
  EXPECT_THROW(evaluate_expression("sin(1)", v), ParseError);
  EXPECT_THROW(evaluate_expression("2 3", v), ParseError);
}

TEST(GeneralGraph, DeltaConditionIsSelfAdjoint) {
  for (int d : {1, 2, 3, 5}) {
    const auto [A, B] = delta_condition(d, -3.7);
    const auto rep = check_self_adjoint(A, B, 1e-12);
    EXPECT_TRUE(rep.pass) << d;
    EXPECT_EQ(rep.rank, d);
  }
}

TEST(GeneralGraph, ValidateRejectsDanglingEnds) {
  GeneralGraph g;
  g.add_edge(1.0);
  g.add_delta({{0, false}}, 0.0);
  EXPECT_THROW(g.validate(), InvalidParameter);
  g.add_delta({{0, true}}, 0.0);
  EXPECT_NO_THROW(g.validate());
  g.add_edge(-1.0);
  EXPECT_THROW(g.validate(), InvalidParameter);
}

// Even modes: 2k tan(kL/2) = v. Odd modes vanish at the delta: k = (2m+1) pi / L.
TEST(GraphSpectrum, MidpointDeltaOracle) {
  const double L = 1.0, v = 3.0, k_max = 30.0;
  std::vector<double> want;
  for (int m = 0; (2 * m + 1) * kPi / L < k_max; ++m) want.push_back((2 * m + 1) * kPi / L);
  auto even = [&](double k) { return 2 * k * std::sin(0.5 * k * L) - v * std::cos(0.5 * k * L); };
  // One even root in each (2m pi/L, (2m+1) pi/L).
  for (int m = 0; 2 * m * kPi / L < k_max; ++m) {
    const double lo = std::max(2 * m * kPi / L, 1e-9), hi = (2 * m + 1) * kPi / L;
    const double r = toms748(even, lo, hi - 1e-12);
    if (r < k_max) want.push_back(r);
  }
  std::sort(want.begin(), want.end());

  const GraphSpectrum sp = graph_spectrum(midpoint_delta(L, v), k_max);
  const auto got = sp.expanded();
  ASSERT_EQ(got.size(), want.size());
  for (size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i].k, want[i], 1e-9) << i;
  // Odd modes sit symmetrically on both halves.
  EXPECT_NEAR(got[1].weight1, 0.5, 1e-9);
}

TEST(GraphSpectrum, AttractiveDeltaBoundState) {
  const double L = 1.0, v = -4.0;
  GraphSpectrumOptions o;
  o.kappa_max = 20.0;
  const GraphSpectrum sp = graph_spectrum(midpoint_delta(L, v), 10.0, o);
  ASSERT_EQ(sp.bound_kappas.size(), 1u);
  const double want = toms748([&](double q) { return 2 * q * std::tanh(0.5 * q * L) + v; }, 1e-6, 20.0);
  EXPECT_NEAR(sp.bound_kappas[0], want, 1e-9);
}

TEST(GraphSpectrum, SingularGraphMatchesSecularSolver) {
  const VertexCondition vc = condition_at({CycleKind::Long, 0.5, 0.5}, 5.8);
  const Spectrum a = find_spectrum(vc, kGolden, 30.0);
  const GraphSpectrum b = graph_spectrum(singular_graph(vc, kGolden), 30.0);
  const auto ea = a.expanded();
  const auto eb = b.expanded();
  ASSERT_EQ(ea.size(), eb.size());
  for (size_t i = 0; i < ea.size(); ++i) {
    EXPECT_NEAR(ea[i].k, eb[i].k, 1e-9);
    EXPECT_NEAR(ea[i].weight1, eb[i].weight1, 1e-6);
  }
}

TEST(Web, ParserReadsAllDirectives) {
  const WebSpec w = parse_string(
      "# comment\n"
      "edge 1 5 2*t   # trailing comment\n"
      "delta 5 -1/eps\n"
      "attach 2 5\n");
  ASSERT_EQ(w.subedges.size(), 1u);
  EXPECT_DOUBLE_EQ(w.subedges[0].length, 2 * 0.1 * 0.01);
  EXPECT_DOUBLE_EQ(w.strengths.at(5), -100.0);
  EXPECT_EQ(w.attach[1], 5);
}

TEST(Web, ParserErrors) {
  EXPECT_THROW(parse_string("edge 1 1 1\n"), ParseError);
  EXPECT_THROW(parse_string("edge 1 2 -1\n"), ParseError);
  EXPECT_THROW(parse_string("delta 1\n"), ParseError);
  EXPECT_THROW(parse_string("attach 7 1\n"), ParseError);
  EXPECT_THROW(parse_string("bridge 1 2\n"), ParseError);
  EXPECT_THROW(parse_string("delta x 1\n"), ParseError);
  EXPECT_THROW(parse_string("delta 1 1/zz\n"), ParseError);
}

TEST(Web, BundledFilesParse) {
  const std::string dir = QG_DATA_DIR "/webs/";
  const RampVector r4 = eval_ramps(CycleKind::Long, 3.6);
  EXPECT_NO_THROW(load_web(dir + "sector4_neumann.web", r4, {}, 1e-3, 4));
  EXPECT_NO_THROW(load_web(dir + "sector4_caption.web", r4, {}, 1e-3, 4));
  EXPECT_THROW(load_web(dir + "missing.web", r4, {}, 1e-3, 4), ParseError);
}

TEST(Web, SectorDefaultsRequireMatchingRamps) {
  EXPECT_THROW(build_web(3, eval_ramps(CycleKind::Long, 0.2), {}, 0.01), InvalidParameter);
  EXPECT_THROW(build_web(2, eval_ramps(CycleKind::Long, kPi / 3), {}, 0.01), InvalidParameter);
  EXPECT_THROW(build_web(7, eval_ramps(CycleKind::Long, 0.2), {}, 0.01), InvalidParameter);
}

// ta = 1: the web is the plain ring lengthened by two sub-edges of length eps.
TEST(Web, SectorOneRingShiftIsExact) {
  const CycleParams p{CycleKind::Long, 1.0, 1.0};
  const RampVector r = eval_ramps(p.kind, 0.0);
  // Below 0.1/eps, so eps = 1e-2 would leave only the lowest doublet.
  for (double eps : {1e-3, 1e-4}) {
    const GraphSpectrum sp = web_spectrum(build_web(1, r, p, eps), kGolden, 20.0);
    ASSERT_EQ(sp.levels.size(), 4u);
    EXPECT_NEAR(sp.levels[0].k, 0.0, 1e-12);
    for (int n = 1; n <= 3; ++n) {
      EXPECT_NEAR(sp.levels[n].k, 2 * kPi * n / (1 + 2 * eps), 1e-9);
      EXPECT_EQ(sp.levels[n].multiplicity, 2);
    }
  }
  const ConvergenceStudy st = convergence_study(1, r, p, kGolden, {1e-2, 1e-3, 1e-4}, 5);
  EXPECT_TRUE(st.converged);
  for (double q : st.order) {
    if (!std::isnan(q)) {
      EXPECT_NEAR(q, 1.0, 0.01);
    }
  }
}

TEST(Web, SectorTwoConverges) {
  const double th = long_theta_for_c(0.5);
  const RampVector r = eval_ramps(CycleKind::Long, th);
  ASSERT_NEAR(r.c, 0.5, 1e-12);
  const ConvergenceStudy st = convergence_study(2, r, {}, kGolden, {1e-2, 1e-3, 1e-4}, 5);
  EXPECT_TRUE(st.converged);
  EXPECT_GE(st.min_order, 0.9);
}

TEST(Web, NonConvergenceIsFlaggedNotThrown) {
  const double th = 3.6;  // sector IV
  const RampVector r = eval_ramps(CycleKind::Long, th);
  const CycleParams p{CycleKind::Long, 0.5, 0.5};
  const ConvergenceStudy st = convergence_study(4, r, p, kGolden, {1e-2, 1e-3, 1e-4}, 5);
  EXPECT_EQ(st.rows.size(), 3u);
  EXPECT_EQ(st.converged, st.min_order >= 0.5);
}

TEST(Web, FittedOrder) {
  EXPECT_NEAR(fitted_order({1e-2, 1e-3, 1e-4}, {2e-2, 2e-3, 2e-4}), 1.0, 1e-12);
  EXPECT_NEAR(fitted_order({1e-2, 1e-3, 1e-4}, {1e-4, 1e-6, 1e-8}), 2.0, 1e-12);
  EXPECT_TRUE(std::isnan(fitted_order({1e-2, 1e-3, 1e-4}, {1e-12, 1e-13, 0.0})));
}

TEST(Web, StudyInputChecks) {
  const RampVector r = eval_ramps(CycleKind::Long, long_theta_for_c(0.5));
  EXPECT_THROW(convergence_study(2, r, {}, kGolden, {1e-2, 1e-3}, 5), InvalidParameter);
  EXPECT_THROW(convergence_study(2, r, {}, kGolden, {1e-3, 1e-2, 1e-4}, 5), InvalidParameter);
}
