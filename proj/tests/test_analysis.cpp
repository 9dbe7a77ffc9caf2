#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "permsens/analysis.hpp"
#include "permsens/rng.hpp"

using namespace permsens;

namespace {

// Exactly matched pairs with a constant treatment effect.
struct PairStudy {
  StudyData data;
  MatchedDesign design;
};

PairStudy exact_pairs(std::size_t pairs, double effect, std::uint64_t seed) {
  CounterRng rng(SeedSpec{seed, 5});
  std::vector<Unit> units;
  PairStudy s;
  for (std::size_t i = 0; i < pairs; ++i) {
    const double x = rng.uniform();
    const double treated_y0 = x + 0.2 * rng.normal();
    const double control_y0 = x + 0.2 * rng.normal();
    units.push_back({{x}, treated_y0 + effect, true});
    units.push_back({{x}, control_y0, false});
    s.design.sets.push_back({{2 * i, 2 * i + 1}, 1, false});
  }
  s.data = StudyData(units);
  return s;
}

StudyData external_sample(std::size_t n, std::uint64_t seed) {
  CounterRng rng(SeedSpec{seed, 6});
  std::vector<Unit> units;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform();
    units.push_back({{x}, x + 0.2 * rng.normal(), false});
  }
  return StudyData(units);
}

}  // namespace

TEST(RunAnalysis, UniformMatchesDirectPipeline) {
  const auto s = exact_pairs(60, 0.0, 1);
  AnalysisConfig cfg;
  cfg.spec.gamma = 1.5;
  const auto r = run_analysis(s.data, s.design, cfg);
  const auto table = m_scores(s.design, impute_controls(s.data, SharpNull{}), PsiSpec{});
  SensitivitySpec spec;
  spec.gamma = 1.5;
  EXPECT_EQ(r.p_value, uniform_pvalue(table, spec).p_value);
}

TEST(RunAnalysis, AdaptiveNeedsDensitySource) {
  const auto s = exact_pairs(20, 0.0, 2);
  AnalysisConfig cfg;
  cfg.spec.mode = SensitivityMode::adaptive;
  EXPECT_THROW(run_analysis(s.data, s.design, cfg), InputError);
  cfg.density = DensitySource::parametric;
  EXPECT_THROW(run_analysis(s.data, s.design, cfg), InputError);
  cfg.external = external_sample(200, 3);
  EXPECT_NO_THROW(run_analysis(s.data, s.design, cfg));
}

TEST(RunAnalysis, ExactMatchingMakesAdaptiveEqualUniform) {
  // Identical covariates within every pair give matching quality one for any density.
  const auto s = exact_pairs(50, 0.0, 4);
  AnalysisConfig uni;
  uni.spec.gamma = 2.0;
  AnalysisConfig ada = uni;
  ada.spec.mode = SensitivityMode::adaptive;
  ada.density = DensitySource::kernel;
  ada.external = external_sample(300, 5);
  const auto a = run_analysis(s.data, s.design, ada);
  const auto u = run_analysis(s.data, s.design, uni);
  EXPECT_NEAR(a.p_value, u.p_value, 1e-12);
}

TEST(RunAnalysis, ZeroSlopeAdjustmentIsIdentity) {
  // External outcomes with sum 0 and zero covariance with x: OLS gives beta = 0.
  std::vector<Unit> ext;
  for (int i = 0; i < 40; ++i) {
    const double x = (i % 2 == 0) ? -1.0 : 1.0;
    const double y = ((i / 2) % 2 == 0) ? 0.3 : -0.3;
    ext.push_back({{x}, y * (1.0 + 0.1 * (i / 4)), false});
  }
  const StudyData external(ext);
  const Adjustment f = fit_adjustment(external, SharpNull{});
  EXPECT_NEAR(f.intercept, 0.0, 1e-14);
  EXPECT_NEAR(f.slope[0], 0.0, 1e-14);

  const auto s = exact_pairs(40, 0.0, 6);
  const Adjustment zero{0.0, {0.0}};
  const auto y0 = impute_controls(s.data, SharpNull{});
  EXPECT_EQ(zero.apply(s.data, y0).y0, y0.y0);

  AnalysisConfig plain;
  plain.spec.mode = SensitivityMode::adaptive;
  plain.spec.gamma = 1.3;
  plain.density = DensitySource::parametric;
  plain.external = external;
  AnalysisConfig adjusted = plain;
  adjusted.adjust = true;
  const auto a = run_analysis(s.data, s.design, plain);
  const auto b = run_analysis(s.data, s.design, adjusted);
  EXPECT_NEAR(a.T, b.T, 1e-12);
  EXPECT_NEAR(a.p_value, b.p_value, 1e-12);
}

TEST(RunAnalysis, AdjustmentNeedsExternal) {
  const auto s = exact_pairs(10, 0.0, 7);
  AnalysisConfig cfg;
  cfg.adjust = true;
  EXPECT_THROW(run_analysis(s.data, s.design, cfg), InputError);
}

TEST(Invert, CoversConstantEffect) {
  const auto s = exact_pairs(200, 1.0, 8);
  AnalysisConfig cfg;
  const auto ci = invert_tests(s.data, s.design, cfg, 0.05, make_grid(0.0, 2.0, 0.02));
  ASSERT_FALSE(ci.empty);
  EXPECT_LE(ci.lower, 1.0);
  EXPECT_GE(ci.upper, 1.0);
  EXPECT_FALSE(ci.open_lower);
  EXPECT_FALSE(ci.open_upper);
  EXPECT_FALSE(ci.gaps);
  EXPECT_DOUBLE_EQ(ci.level, 0.95);
  for (std::size_t g = 0; g < ci.grid.size(); ++g) {
    const bool inside = ci.grid[g] >= ci.lower && ci.grid[g] <= ci.upper;
    const double p = std::min(1.0, 2.0 * std::min(ci.p_upper[g], ci.p_lower[g]));
    if (inside) {
      EXPECT_GT(p, 0.05);
    }
    EXPECT_EQ(static_cast<bool>(ci.rejected[g]), p <= 0.05);
  }
}

TEST(Invert, AlphaOneRejectsEverything) {
  const auto s = exact_pairs(30, 1.0, 9);
  const auto ci = invert_tests(s.data, s.design, AnalysisConfig{}, 1.0, make_grid(0.0, 2.0, 0.5));
  EXPECT_TRUE(ci.empty);
  EXPECT_TRUE(interval_to_json(ci)["lower"].is_null());
}

TEST(Invert, SinglePointGrid) {
  const auto s = exact_pairs(30, 1.0, 10);
  const auto ci = invert_tests(s.data, s.design, AnalysisConfig{}, 0.05, {1.0});
  ASSERT_FALSE(ci.empty);
  EXPECT_EQ(ci.lower, 1.0);
  EXPECT_EQ(ci.upper, 1.0);
  EXPECT_TRUE(ci.open_lower);
  EXPECT_TRUE(ci.open_upper);
}

TEST(Invert, GridInsideIntervalIsOpen) {
  const auto s = exact_pairs(100, 1.0, 11);
  const auto wide = invert_tests(s.data, s.design, AnalysisConfig{}, 0.05, make_grid(0.0, 2.0, 0.01));
  ASSERT_FALSE(wide.empty);
  ASSERT_GT(wide.upper - wide.lower, 0.04);
  // Every point of the narrow grid lies strictly inside the wide interval.
  const auto ci = invert_tests(s.data, s.design, AnalysisConfig{}, 0.05,
                               make_grid(wide.lower + 0.01, wide.upper - 0.01, 0.01));
  ASSERT_FALSE(ci.empty);
  EXPECT_TRUE(ci.open_lower);
  EXPECT_TRUE(ci.open_upper);
}

TEST(Invert, RejectsBadArguments) {
  const auto s = exact_pairs(10, 1.0, 12);
  EXPECT_THROW(invert_tests(s.data, s.design, AnalysisConfig{}, 0.0, {1.0}), InputError);
  EXPECT_THROW(invert_tests(s.data, s.design, AnalysisConfig{}, 0.05, {}), InputError);
  EXPECT_THROW(invert_tests(s.data, s.design, AnalysisConfig{}, 0.05, {2.0, 1.0}), InputError);
}

TEST(Grid, InclusiveEndpoints) {
  const auto g = make_grid(0.0, 1.0, 0.1);
  ASSERT_EQ(g.size(), 11u);
  EXPECT_NEAR(g.back(), 1.0, 1e-12);
  EXPECT_EQ(make_grid(2.0, 2.0, 0.5), (std::vector<double>{2.0}));
  EXPECT_THROW(make_grid(1.0, 0.0, 0.1), InputError);
  EXPECT_THROW(make_grid(0.0, 1.0, 0.0), InputError);
}
