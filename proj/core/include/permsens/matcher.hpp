#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "permsens/core.hpp"

namespace permsens {

/// One matched set. After normalization, `members[0]` is the unique treated
/// unit, or the unique control unit when `label_switched` is set.
struct MatchedSet {
  std::vector<std::size_t> members;
  std::size_t treated_count = 0;
  bool label_switched = false;

  std::size_t size() const { return members.size(); }
};

struct MatchedDesign {
  std::vector<MatchedSet> sets;
  std::uint64_t source_fingerprint = 0;

  bool is_pair_design() const;
  std::size_t size() const { return sets.size(); }
};

/// Treated-by-control distances; row t refers to `treated[t]`, column c to
/// `control[c]` (both indices into StudyData).
struct DistanceMatrix {
  std::vector<std::size_t> treated;
  std::vector<std::size_t> control;
  Eigen::MatrixXd distance;
};

struct CaliperRule {
  double width_multiplier = 0.25;
  /// true: every coordinate must satisfy |dx_k| <= w * sd_k.
  /// false: Mahalanobis distance <= w.
  bool per_coordinate = true;
};

/// Mahalanobis distances under the pooled sample covariance of all units.
DistanceMatrix mahalanobis(const StudyData& data);

/// Minimum-cost pairing of every treated unit with a distinct control.
/// Among optimal assignments the lexicographically smallest one (by treated
/// index, then control index) is returned.
MatchedDesign optimal_pair_match(const StudyData& data, const DistanceMatrix& distances);

/// Total distance of a pair design under `distances`, summed in set order.
double matching_cost(const MatchedDesign& design, const DistanceMatrix& distances);

/// Each treated unit in turn takes its nearest unused control.
MatchedDesign greedy_pair_match(const StudyData& data, const DistanceMatrix& distances);

MatchedDesign apply_caliper(const MatchedDesign& design, const StudyData& data, const CaliperRule& rule);

/// Checks disjointness and the one-treated / one-control rule, reorders
/// members and sets `label_switched` where the set has a single control.
MatchedDesign validate_design(const MatchedDesign& design, const StudyData& data);

/// Sample standard deviation of each covariate over all units.
std::vector<double> pooled_sd(const StudyData& data);

nlohmann::json design_to_json(const MatchedDesign& design);
MatchedDesign design_from_json(const nlohmann::json& j);

namespace detail {

/// Min-cost assignment of every row to a distinct column (rows <= cols),
/// returning the column of each row. Exposed for tests and benchmarks.
std::vector<std::size_t> solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace detail

}  // namespace permsens
