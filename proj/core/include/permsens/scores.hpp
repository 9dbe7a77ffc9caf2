#pragma once

#include <cstddef>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "permsens/core.hpp"
#include "permsens/matcher.hpp"

namespace permsens {

/// Bounded odd score function
///   psi(y) = sign(y) * clamp((|y| - inner) / (trim - inner), 0, 1).
struct PsiSpec {
  double inner = 0.0;
  double trim = 3.0;

  double operator()(double y) const;
  void validate() const;
};

enum class ScaleMode { pooled, per_set };

/// Scores of one matched set, indexed by the rank of the sorted control
/// potential outcomes.
struct SetScores {
  std::vector<double> sorted_y0;
  std::vector<double> q;
  /// Rank held by members[0] of the normalized set (the treated unit, or
  /// the single control when the set is label switched).
  std::size_t observed_rank = 0;
  /// Set has a single control; the observed contribution is the sum over
  /// all treated units until apply_label_switch rewrites q.
  bool label_switched = false;
  bool switch_applied = false;
  double scale = 1.0;
};

struct ScoreTable {
  std::vector<SetScores> sets;
  /// Pooled scale; per-set scales live on each SetScores.
  double scale = 1.0;
  ScaleMode scale_mode = ScaleMode::pooled;
};

/// Median over all within-set unordered pairs of |y0_j - y0_k| (even counts
/// use the midpoint). A zero median falls back to the smallest positive
/// difference.
double compute_scale(const MatchedDesign& design, const ImputedControls& y0);

/// m-statistic scores q_ij = (1/n_i) sum_{k != j} psi((y_(j) - y_(k)) / s).
ScoreTable m_scores(const MatchedDesign& design, const ImputedControls& y0, const PsiSpec& psi,
                    ScaleMode mode = ScaleMode::pooled);

/// For flagged sets rewrites q to sum_k q_k - q_j; unflagged sets untouched.
ScoreTable apply_label_switch(ScoreTable table);

/// Observed contribution of a single set.
double observed_contribution(const SetScores& set);

double observed_statistic(const ScoreTable& table);

nlohmann::json scores_to_json(const ScoreTable& table);

}  // namespace permsens
