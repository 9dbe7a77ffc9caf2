#include "permsens/scores.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

namespace permsens {

double PsiSpec::operator()(double y) const {
  const double mag = std::clamp((std::abs(y) - inner) / (trim - inner), 0.0, 1.0);
  return y < 0.0 ? -mag : (y > 0.0 ? mag : 0.0);
}

void PsiSpec::validate() const {
  if (!(inner >= 0.0) || !(trim > inner) || !std::isfinite(trim)) {
    throw InputError("psi needs 0 <= inner < trim");
  }
}

namespace {

double median_with_fallback(std::vector<double> diffs) {
  if (diffs.empty()) throw InputError("degenerate scale: no within-set pairs");
  std::sort(diffs.begin(), diffs.end());
  const std::size_t n = diffs.size();
  const double med = n % 2 == 1 ? diffs[n / 2] : 0.5 * (diffs[n / 2 - 1] + diffs[n / 2]);
  if (med > 0.0) return med;
  auto pos = std::upper_bound(diffs.begin(), diffs.end(), 0.0);
  if (pos == diffs.end()) throw InputError("degenerate scale: all within-set outcomes are identical");
  return *pos;
}

void append_pair_diffs(const MatchedSet& set, const ImputedControls& y0, std::vector<double>& out) {
  for (std::size_t j = 0; j < set.size(); ++j) {
    for (std::size_t k = j + 1; k < set.size(); ++k) {
      out.push_back(std::abs(y0.y0[set.members[j]] - y0.y0[set.members[k]]));
    }
  }
}

}  // namespace

double compute_scale(const MatchedDesign& design, const ImputedControls& y0) {
  std::vector<double> diffs;
  for (const auto& s : design.sets) append_pair_diffs(s, y0, diffs);
  return median_with_fallback(std::move(diffs));
}

ScoreTable m_scores(const MatchedDesign& design, const ImputedControls& y0, const PsiSpec& psi, ScaleMode mode) {
  psi.validate();
  if (design.sets.empty()) throw InputError("design has no matched sets");
  ScoreTable table;
  table.scale_mode = mode;
  table.scale = compute_scale(design, y0);
  table.sets.reserve(design.sets.size());
  for (const auto& set : design.sets) {
    SetScores s;
    s.label_switched = set.label_switched;
    if (mode == ScaleMode::pooled) {
      s.scale = table.scale;
    } else {
      std::vector<double> diffs;
      append_pair_diffs(set, y0, diffs);
      const bool any_positive = std::any_of(diffs.begin(), diffs.end(), [](double d) { return d > 0.0; });
      // A constant set scores zero whatever the scale; borrow the pooled one.
      s.scale = any_positive ? median_with_fallback(std::move(diffs)) : table.scale;
    }
    const auto order = stable_rank_order(set.members, y0.y0);
    const std::size_t n = set.size();
    s.sorted_y0.resize(n);
    for (std::size_t r = 0; r < n; ++r) s.sorted_y0[r] = y0.y0[set.members[order[r]]];
    s.q.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (k != j) acc += psi((s.sorted_y0[j] - s.sorted_y0[k]) / s.scale);
      }
      s.q[j] = acc / static_cast<double>(n);
    }
    // Lowest rank whose value equals the pseudo-treated unit's outcome.
    const double target = y0.y0[set.members[0]];
    s.observed_rank = static_cast<std::size_t>(
        std::find(s.sorted_y0.begin(), s.sorted_y0.end(), target) - s.sorted_y0.begin());
    table.sets.push_back(std::move(s));
  }
  return table;
}

ScoreTable apply_label_switch(ScoreTable table) {
  for (auto& s : table.sets) {
    if (!s.label_switched || s.switch_applied) continue;
    const double total = std::accumulate(s.q.begin(), s.q.end(), 0.0);
    for (auto& q : s.q) q = total - q;
    s.switch_applied = true;
  }
  return table;
}

double observed_contribution(const SetScores& set) {
  if (set.label_switched && !set.switch_applied) {
    // Sum over the treated units, i.e. everything but the single control.
    return std::accumulate(set.q.begin(), set.q.end(), 0.0) - set.q[set.observed_rank];
  }
  return set.q[set.observed_rank];
}

double observed_statistic(const ScoreTable& table) {
  double t = 0.0;
  for (const auto& s : table.sets) t += observed_contribution(s);
  return t;
}

nlohmann::json scores_to_json(const ScoreTable& table) {
  nlohmann::json sets = nlohmann::json::array();
  for (const auto& s : table.sets) {
    sets.push_back({{"sorted_y0", s.sorted_y0},
                    {"q", s.q},
                    {"observed_rank", s.observed_rank},
                    {"label_switched", s.label_switched},
                    {"scale", s.scale}});
  }
  return {{"scale", table.scale},
          {"scale_mode", table.scale_mode == ScaleMode::pooled ? "pooled" : "per_set"},
          {"sets", std::move(sets)}};
}

}  // namespace permsens
