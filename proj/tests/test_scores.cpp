#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "permsens/scores.hpp"

using namespace permsens;

namespace {

// Units alternate treated/control; each set of size n takes the next n units.
struct Fixture {
  StudyData data;
  MatchedDesign design;
  ImputedControls y0;
};

Fixture sets_from(const std::vector<std::vector<double>>& outcomes, const std::vector<std::vector<bool>>& treated) {
  Fixture f;
  std::vector<Unit> units;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    MatchedSet s;
    for (std::size_t j = 0; j < outcomes[i].size(); ++j) {
      s.members.push_back(units.size());
      units.push_back({{0.0}, outcomes[i][j], treated[i][j]});
    }
    f.design.sets.push_back(s);
  }
  f.data = StudyData(units);
  f.y0 = impute_controls(f.data, SharpNull{});
  return f;
}

// Independent evaluation of the m-statistic scores on sorted ranks.
std::vector<double> reference_q(std::vector<double> y, double s, double inner, double trim) {
  std::sort(y.begin(), y.end());
  auto psi = [&](double v) {
    const double m = std::min(1.0, std::max(0.0, (std::abs(v) - inner) / (trim - inner)));
    return v > 0 ? m : (v < 0 ? -m : 0.0);
  };
  std::vector<double> q(y.size(), 0.0);
  for (std::size_t j = 0; j < y.size(); ++j) {
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (j != k) q[j] += psi((y[j] - y[k]) / s);
    }
    q[j] /= static_cast<double>(y.size());
  }
  return q;
}

}  // namespace

TEST(Psi, ShapeAndValidation) {
  const PsiSpec psi{0.0, 3.0};
  EXPECT_DOUBLE_EQ(psi(2.0), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(psi(-2.0), -2.0 / 3.0);
  EXPECT_DOUBLE_EQ(psi(10.0), 1.0);
  EXPECT_DOUBLE_EQ(psi(0.0), 0.0);
  const PsiSpec inner{1.0, 3.0};
  EXPECT_DOUBLE_EQ(inner(0.5), 0.0);
  EXPECT_DOUBLE_EQ(inner(2.0), 0.5);
  EXPECT_THROW((PsiSpec{2.0, 1.0}.validate()), InputError);
  EXPECT_THROW((PsiSpec{-1.0, 1.0}.validate()), InputError);
}

TEST(Scale, PooledMedianOfPairDifferences) {
  auto f = sets_from({{0, 1}, {5, 2}}, {{true, false}, {true, false}});
  EXPECT_DOUBLE_EQ(compute_scale(f.design, f.y0), 2.0);
  auto g = sets_from({{0, 4}}, {{true, false}});
  EXPECT_DOUBLE_EQ(compute_scale(g.design, g.y0), 4.0);
}

TEST(Scale, ZeroMedianFallsBackAndAllEqualFails) {
  auto f = sets_from({{1, 1}, {2, 2}, {0, 0.5}}, {{true, false}, {true, false}, {true, false}});
  EXPECT_DOUBLE_EQ(compute_scale(f.design, f.y0), 0.5);
  auto g = sets_from({{1, 1}, {2, 2}}, {{true, false}, {true, false}});
  EXPECT_THROW(compute_scale(g.design, g.y0), InputError);
}

TEST(MScores, PairExample) {
  auto g = sets_from({{2, 0}}, {{true, false}});
  const auto t = m_scores(g.design, g.y0, PsiSpec{}, ScaleMode::pooled);
  EXPECT_DOUBLE_EQ(t.scale, 2.0);
  // s = 2 gives psi(+-1) = +-1/3, so q = (-1/6, 1/6).
  EXPECT_NEAR(t.sets[0].q[0], -1.0 / 6.0, 1e-15);
  EXPECT_NEAR(t.sets[0].q[1], 1.0 / 6.0, 1e-15);
  EXPECT_EQ(t.sets[0].observed_rank, 1u);

  // Scale 1 reproduces q = (-1/3, 1/3) for sorted outcomes (0, 2).
  auto h = sets_from({{2, 0}, {0, 1}, {3, 4}}, {{true, false}, {true, false}, {true, false}});
  const auto u = m_scores(h.design, h.y0, PsiSpec{});
  ASSERT_DOUBLE_EQ(u.scale, 1.0);
  EXPECT_NEAR(u.sets[0].q[0], -1.0 / 3.0, 1e-15);
  EXPECT_NEAR(u.sets[0].q[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(observed_contribution(u.sets[0]), 1.0 / 3.0, 1e-15);
}

TEST(MScores, ConstantSetScoresZero) {
  auto f = sets_from({{1, 1, 1}, {0, 2}}, {{true, false, false}, {true, false}});
  const auto t = m_scores(f.design, f.y0, PsiSpec{});
  for (double q : t.sets[0].q) EXPECT_EQ(q, 0.0);
}

TEST(MScores, TripleExample) {
  // Sorted (0, 3, 6) with s = 3: rank 1 gets (psi(-1) + psi(-2)) / 3 = (-1/3 - 2/3) / 3.
  auto f = sets_from({{3, 0, 6}}, {{true, false, false}});
  const auto t = m_scores(f.design, f.y0, PsiSpec{});
  ASSERT_DOUBLE_EQ(t.scale, 3.0);
  EXPECT_NEAR(t.sets[0].q[0], -1.0 / 3.0, 1e-15);
  EXPECT_NEAR(t.sets[0].q[1], 0.0, 1e-15);
  EXPECT_NEAR(t.sets[0].q[2], 1.0 / 3.0, 1e-15);
  EXPECT_EQ(t.sets[0].observed_rank, 1u);
}

TEST(MScores, MatchesReferenceAndIsMonotone) {
  auto f = sets_from({{0.3, -1.2, 4.0, 2.2}, {1.0, 0.0}, {5.0, 5.5, -3.0}},
                     {{true, false, false, false}, {true, false}, {true, false, false}});
  const PsiSpec psi{0.5, 2.5};
  const auto t = m_scores(f.design, f.y0, psi);
  for (std::size_t i = 0; i < t.sets.size(); ++i) {
    std::vector<double> y;
    for (auto m : f.design.sets[i].members) y.push_back(f.y0.y0[m]);
    const auto ref = reference_q(y, t.scale, 0.5, 2.5);
    for (std::size_t j = 0; j < ref.size(); ++j) EXPECT_NEAR(t.sets[i].q[j], ref[j], 1e-14);
    for (std::size_t j = 1; j < ref.size(); ++j) EXPECT_LE(t.sets[i].q[j - 1], t.sets[i].q[j]);
  }
}

TEST(MScores, TiesPickLowestRank) {
  auto f = sets_from({{2, 2, 0}}, {{true, false, false}});
  const auto t = m_scores(f.design, f.y0, PsiSpec{});
  EXPECT_EQ(t.sets[0].observed_rank, 1u);
}

TEST(MScores, WithinSetPermutationOnlyMovesObservedRank) {
  auto a = sets_from({{1, 4, 2}, {0, 3}}, {{true, false, false}, {true, false}});
  auto b = sets_from({{4, 2, 1}, {3, 0}}, {{true, false, false}, {true, false}});
  const auto ta = m_scores(a.design, a.y0, PsiSpec{});
  const auto tb = m_scores(b.design, b.y0, PsiSpec{});
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(ta.sets[i].q, tb.sets[i].q);
  EXPECT_EQ(ta.sets[0].observed_rank, 0u);
  EXPECT_EQ(tb.sets[0].observed_rank, 2u);
}

TEST(MScores, AffineEquivariance) {
  auto a = sets_from({{1, 4, 2}, {0, 3}, {7, 1}}, {{true, false, false}, {true, false}, {true, false}});
  auto b = sets_from({{3, 12, 6}, {0, 9}, {21, 3}}, {{true, false, false}, {true, false}, {true, false}});
  for (auto& y : b.y0.y0) y -= 5.0;
  const auto ta = m_scores(a.design, a.y0, PsiSpec{});
  const auto tb = m_scores(b.design, b.y0, PsiSpec{});
  EXPECT_DOUBLE_EQ(tb.scale, 3.0 * ta.scale);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < ta.sets[i].q.size(); ++j) EXPECT_NEAR(ta.sets[i].q[j], tb.sets[i].q[j], 1e-14);
  }
}

TEST(MScores, PerSetScale) {
  auto f = sets_from({{0, 1}, {0, 10}}, {{true, false}, {true, false}});
  const auto t = m_scores(f.design, f.y0, PsiSpec{}, ScaleMode::per_set);
  EXPECT_DOUBLE_EQ(t.sets[0].scale, 1.0);
  EXPECT_DOUBLE_EQ(t.sets[1].scale, 10.0);
  EXPECT_NEAR(t.sets[0].q[1], t.sets[1].q[1], 1e-15);
}

TEST(LabelSwitch, Transform) {
  ScoreTable table;
  SetScores s;
  s.q = {1, 2, 4};
  s.sorted_y0 = {0, 1, 2};
  s.label_switched = true;
  s.observed_rank = 0;
  table.sets.push_back(s);
  SetScores plain;
  plain.q = {-0.5, 0.5};
  plain.sorted_y0 = {0, 1};
  table.sets.push_back(plain);

  const double before = observed_statistic(table);
  const auto out = apply_label_switch(table);
  EXPECT_EQ(out.sets[0].q, (std::vector<double>{6, 5, 3}));
  EXPECT_EQ(out.sets[1].q, plain.q);
  EXPECT_DOUBLE_EQ(observed_statistic(out), before);
  EXPECT_EQ(apply_label_switch(out).sets[0].q, out.sets[0].q);
}

TEST(LabelSwitch, PairSwapAndInvariantContribution) {
  auto f = sets_from({{3, 1, 0}, {0.5, 2}}, {{false, true, true}, {false, true}});
  for (auto& s : f.design.sets) s.label_switched = true;
  const auto t = m_scores(f.design, f.y0, PsiSpec{});
  const auto sw = apply_label_switch(t);
  EXPECT_DOUBLE_EQ(sw.sets[1].q[0], t.sets[1].q[1]);
  EXPECT_DOUBLE_EQ(sw.sets[1].q[1], t.sets[1].q[0]);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(observed_contribution(sw.sets[i]), observed_contribution(t.sets[i]), 1e-15);
  }
}

TEST(ObservedStatistic, SumsObservedRanks) {
  ScoreTable table;
  for (int i = 0; i < 2; ++i) {
    SetScores s;
    s.q = {-0.5, 0.5};
    s.observed_rank = 0;
    table.sets.push_back(s);
  }
  EXPECT_DOUBLE_EQ(observed_statistic(table), -1.0);
  EXPECT_EQ(scores_to_json(table)["sets"].size(), 2u);
}
