#include "permsens/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace permsens {

bool MatchedDesign::is_pair_design() const {
  return !sets.empty() &&
         std::all_of(sets.begin(), sets.end(), [](const MatchedSet& s) { return s.size() == 2; });
}

namespace {

Eigen::MatrixXd covariate_matrix(const StudyData& data) {
  Eigen::MatrixXd x(data.size(), data.dimension());
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t k = 0; k < data.dimension(); ++k) x(i, k) = data[i].covariates[k];
  }
  return x;
}

Eigen::MatrixXd pooled_covariance(const StudyData& data) {
  if (data.size() < 2) throw InputError("covariance needs at least two units");
  Eigen::MatrixXd x = covariate_matrix(data);
  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<double>(data.size() - 1);
}

}  // namespace

std::vector<double> pooled_sd(const StudyData& data) {
  Eigen::MatrixXd s = pooled_covariance(data);
  std::vector<double> sd(data.dimension());
  for (std::size_t k = 0; k < sd.size(); ++k) sd[k] = std::sqrt(s(k, k));
  return sd;
}

DistanceMatrix mahalanobis(const StudyData& data) {
  if (data.dimension() == 0) throw InputError("mahalanobis distance needs at least one covariate");
  Eigen::MatrixXd s = pooled_covariance(data);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
  const double scale = std::max(1.0, s.diagonal().cwiseAbs().maxCoeff());
  const auto d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || d.minCoeff() <= 1e-12 * scale) {
    throw InputError(
        "pooled covariance matrix is singular; drop collinear covariates or add a ridge term");
  }
  DistanceMatrix out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (data[i].treated ? out.treated : out.control).push_back(i);
  }
  // Whitening with the Cholesky factor turns the quadratic form into a
  // Euclidean norm: S = L L^T, w = L^{-1} x.
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  Eigen::MatrixXd x = covariate_matrix(data);
  Eigen::MatrixXd w = llt.matrixL().solve(x.transpose());  // d x N
  out.distance.resize(static_cast<Eigen::Index>(out.treated.size()),
                      static_cast<Eigen::Index>(out.control.size()));
  for (std::size_t t = 0; t < out.treated.size(); ++t) {
    for (std::size_t c = 0; c < out.control.size(); ++c) {
      out.distance(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) =
          (w.col(static_cast<Eigen::Index>(out.treated[t])) - w.col(static_cast<Eigen::Index>(out.control[c])))
              .norm();
    }
  }
  return out;
}

namespace detail {

namespace {

struct HungarianResult {
  std::vector<std::size_t> col_of_row;
  std::vector<double> u, v;
};

// Shortest augmenting path Hungarian method on a square matrix, O(n^3).
HungarianResult hungarian(const Eigen::MatrixXd& a) {
  const std::size_t n = static_cast<std::size_t>(a.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  HungarianResult r;
  r.col_of_row.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) r.col_of_row[p[j] - 1] = j - 1;
  r.u.assign(u.begin() + 1, u.end());
  r.v.assign(v.begin() + 1, v.end());
  return r;
}

using TightEdges = std::vector<std::vector<std::size_t>>;

TightEdges tight_edges(const Eigen::MatrixXd& a, const HungarianResult& h) {
  const std::size_t n = h.col_of_row.size();
  const double tol = 1e-10 * std::max(1.0, a.cwiseAbs().maxCoeff());
  TightEdges tight(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double reduced = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - h.u[i] - h.v[j];
      if (std::abs(reduced) <= tol) tight[i].push_back(j);
    }
  }
  return tight;
}

// Among perfect matchings on the tight (zero reduced cost) edges, which are
// exactly the optimal assignments, pick the lexicographically smallest over
// the first `real_rows` rows.
std::vector<std::size_t> lexicographic_optimum(const HungarianResult& h, const TightEdges& tight,
                                               std::size_t real_rows) {
  const std::size_t n = h.col_of_row.size();
  std::vector<std::size_t> col_of = h.col_of_row;
  std::vector<std::size_t> row_of(n);
  for (std::size_t i = 0; i < n; ++i) row_of[col_of[i]] = i;
  std::vector<char> fixed(n, 0);

  std::vector<char> seen(n);
  std::vector<std::size_t> path_rows, path_cols;
  // Depth-first search for an alternating path from `row` to `target` that
  // avoids fixed rows and the blocked column.
  auto search = [&](auto&& self, std::size_t row, std::size_t target, std::size_t blocked) -> bool {
    seen[row] = 1;
    for (std::size_t c : tight[row]) {
      if (c == blocked) continue;
      if (c == target) {
        path_rows.push_back(row);
        path_cols.push_back(c);
        return true;
      }
      const std::size_t next = row_of[c];
      if (fixed[next] || seen[next]) continue;
      if (self(self, next, target, blocked)) {
        path_rows.push_back(row);
        path_cols.push_back(c);
        return true;
      }
    }
    return false;
  };

  for (std::size_t i = 0; i < real_rows; ++i) {
    for (std::size_t j : tight[i]) {
      if (j == col_of[i]) break;
      if (fixed[row_of[j]]) continue;
      const std::size_t freed = col_of[i];
      const std::size_t displaced = row_of[j];
      std::fill(seen.begin(), seen.end(), 0);
      seen[i] = 1;
      path_rows.clear();
      path_cols.clear();
      if (!search(search, displaced, freed, j)) continue;
      for (std::size_t k = 0; k < path_rows.size(); ++k) {
        col_of[path_rows[k]] = path_cols[k];
        row_of[path_cols[k]] = path_rows[k];
      }
      col_of[i] = j;
      row_of[j] = i;
      break;
    }
    fixed[i] = 1;
  }
  return col_of;
}

double assignment_cost(const Eigen::MatrixXd& a, const std::vector<std::size_t>& col_of, std::size_t rows) {
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    total += a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col_of[i]));
  }
  return total;
}

// Optimal assignments that tie in real arithmetic (crossing vs. nested pairs on
// a line, say) can differ in the last bits of the summed cost. When few columns
// take part in ties, a DP over the tight edges finds the smallest computed
// total; floating-point addition is monotone, so keeping the smallest prefix
// per state is exact. Returns false when the tie structure is too large.
bool exact_rounding_ties(const Eigen::MatrixXd& a, const TightEdges& tight, std::vector<std::size_t>& col_of,
                         std::size_t rows) {
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> bit(static_cast<std::size_t>(a.cols()), kNone);
  std::size_t k = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (tight[i].size() < 2) continue;
    for (std::size_t j : tight[i]) {
      if (bit[j] == kNone) bit[j] = k++;
    }
  }
  if (k == 0) return true;
  if (k > 20 || (rows << k) > (std::size_t{1} << 24)) return false;

  const std::size_t states = std::size_t{1} << k;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> cur(states, inf), next(states);
  std::vector<std::uint32_t> choice(rows * states);
  cur[0] = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    std::fill(next.begin(), next.end(), inf);
    const std::vector<std::size_t> fixed = {col_of[i]};
    const auto& options = tight[i].size() < 2 ? fixed : tight[i];
    for (std::size_t mask = 0; mask < states; ++mask) {
      if (cur[mask] == inf) continue;
      for (std::size_t j : options) {
        std::size_t to = mask;
        if (bit[j] != kNone) {
          if (mask & (std::size_t{1} << bit[j])) continue;
          to |= std::size_t{1} << bit[j];
        }
        const double v = cur[mask] + a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (v < next[to]) {
          next[to] = v;
          choice[i * states + to] = static_cast<std::uint32_t>(j);
        }
      }
    }
    cur.swap(next);
  }
  const auto best = static_cast<std::size_t>(std::min_element(cur.begin(), cur.end()) - cur.begin());
  if (!(cur[best] < assignment_cost(a, col_of, rows))) return true;
  std::size_t mask = best;
  for (std::size_t i = rows; i-- > 0;) {
    const std::size_t j = choice[i * states + mask];
    col_of[i] = j;
    if (bit[j] != kNone) mask &= ~(std::size_t{1} << bit[j]);
  }
  return true;
}

// Fallback for large tie structures: pairwise swaps and moves to free columns
// that keep the real cost, accepted when the computed total strictly drops.
void settle_rounding_ties(const Eigen::MatrixXd& a, std::vector<std::size_t>& col_of, std::size_t rows) {
  const std::size_t cols = static_cast<std::size_t>(a.cols());
  auto at = [&](std::size_t i, std::size_t j) { return a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); };
  double total = assignment_cost(a, col_of, rows);
  const double tol = 1e-12 * std::max(1.0, std::abs(total));
  auto try_move = [&](std::vector<std::size_t>& trial) {
    const double t = assignment_cost(a, trial, rows);
    if (t < total) {
      col_of.swap(trial);
      total = t;
      return true;
    }
    return false;
  };
  for (std::size_t pass = 0; pass < rows + 1; ++pass) {
    bool moved = false;
    std::vector<char> used(cols, 0);
    for (std::size_t i = 0; i < rows; ++i) used[col_of[i]] = 1;
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t k = i + 1; k < rows; ++k) {
        const double delta = at(i, col_of[k]) + at(k, col_of[i]) - at(i, col_of[i]) - at(k, col_of[k]);
        if (std::abs(delta) > tol) continue;
        std::vector<std::size_t> trial = col_of;
        std::swap(trial[i], trial[k]);
        moved = try_move(trial) || moved;
      }
      for (std::size_t c = 0; c < cols; ++c) {
        if (used[c]) continue;
        const double delta = at(i, c) - at(i, col_of[i]);
        if (std::abs(delta) > tol) continue;
        std::vector<std::size_t> trial = col_of;
        trial[i] = c;
        if (try_move(trial)) {
          moved = true;
          std::fill(used.begin(), used.end(), 0);
          for (std::size_t r = 0; r < rows; ++r) used[col_of[r]] = 1;
        }
      }
    }
    if (!moved) break;
  }
}

}  // namespace

std::vector<std::size_t> solve_assignment(const Eigen::MatrixXd& cost) {
  const std::size_t rows = static_cast<std::size_t>(cost.rows());
  const std::size_t cols = static_cast<std::size_t>(cost.cols());
  if (rows > cols) throw InputError("assignment needs at least as many columns as rows");
  if (rows == 0) return {};
  // Pad with zero-cost dummy rows so the problem is square.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cols), static_cast<Eigen::Index>(cols));
  a.topRows(static_cast<Eigen::Index>(rows)) = cost;
  const HungarianResult h = hungarian(a);
  const TightEdges tight = tight_edges(a, h);
  std::vector<std::size_t> lex = lexicographic_optimum(h, tight, rows);
  std::vector<std::size_t> chosen = h.col_of_row;
  if (assignment_cost(a, lex, rows) <= assignment_cost(a, chosen, rows)) chosen = std::move(lex);
  chosen.resize(rows);
  if (!exact_rounding_ties(cost, tight, chosen, rows)) settle_rounding_ties(cost, chosen, rows);
  return chosen;
}

}  // namespace detail

MatchedDesign optimal_pair_match(const StudyData& data, const DistanceMatrix& distances) {
  if (distances.control.size() < distances.treated.size()) {
    throw InputError("optimal pair matching needs at least as many controls (" +
                     std::to_string(distances.control.size()) + ") as treated units (" +
                     std::to_string(distances.treated.size()) + ")");
  }
  MatchedDesign design;
  design.source_fingerprint = design_fingerprint(data);
  const auto assignment = detail::solve_assignment(distances.distance);
  for (std::size_t t = 0; t < assignment.size(); ++t) {
    design.sets.push_back({{distances.treated[t], distances.control[assignment[t]]}, 1, false});
  }
  return design;
}

double matching_cost(const MatchedDesign& design, const DistanceMatrix& distances) {
  std::size_t max_index = 0;
  for (auto c : distances.control) max_index = std::max(max_index, c);
  for (auto t : distances.treated) max_index = std::max(max_index, t);
  std::vector<std::ptrdiff_t> row(max_index + 1, -1), col(max_index + 1, -1);
  for (std::size_t t = 0; t < distances.treated.size(); ++t) row[distances.treated[t]] = static_cast<std::ptrdiff_t>(t);
  for (std::size_t c = 0; c < distances.control.size(); ++c) col[distances.control[c]] = static_cast<std::ptrdiff_t>(c);
  double total = 0.0;
  for (const auto& s : design.sets) {
    if (s.size() != 2) throw InputError("matching_cost expects a pair design");
    total += distances.distance(row[s.members[0]], col[s.members[1]]);
  }
  return total;
}

MatchedDesign greedy_pair_match(const StudyData& data, const DistanceMatrix& distances) {
  if (distances.control.size() < distances.treated.size()) {
    throw InputError("greedy matching needs at least as many controls as treated units");
  }
  MatchedDesign design;
  design.source_fingerprint = design_fingerprint(data);
  std::vector<char> used(distances.control.size(), 0);
  for (std::size_t t = 0; t < distances.treated.size(); ++t) {
    std::size_t best = distances.control.size();
    for (std::size_t c = 0; c < distances.control.size(); ++c) {
      if (used[c]) continue;
      if (best == distances.control.size() ||
          distances.distance(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) <
              distances.distance(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(best))) {
        best = c;
      }
    }
    used[best] = 1;
    design.sets.push_back({{distances.treated[t], distances.control[best]}, 1, false});
  }
  return design;
}

MatchedDesign apply_caliper(const MatchedDesign& design, const StudyData& data, const CaliperRule& rule) {
  if (!(rule.width_multiplier > 0.0)) throw InputError("caliper width multiplier must be positive");
  if (!design.sets.empty() && !design.is_pair_design()) throw InputError("caliper applies to pair designs only");
  MatchedDesign out;
  out.source_fingerprint = design.source_fingerprint;
  if (rule.per_coordinate) {
    const auto sd = pooled_sd(data);
    for (const auto& s : design.sets) {
      const auto& a = data[s.members[0]].covariates;
      const auto& b = data[s.members[1]].covariates;
      bool keep = true;
      for (std::size_t k = 0; k < sd.size() && keep; ++k) {
        keep = std::abs(a[k] - b[k]) <= rule.width_multiplier * sd[k];
      }
      if (keep) out.sets.push_back(s);
    }
    return out;
  }
  Eigen::MatrixXd s = pooled_covariance(data);
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) {
    throw InputError("pooled covariance matrix is singular; drop collinear covariates or add a ridge term");
  }
  for (const auto& set : design.sets) {
    Eigen::VectorXd diff(static_cast<Eigen::Index>(data.dimension()));
    for (std::size_t k = 0; k < data.dimension(); ++k) {
      diff(static_cast<Eigen::Index>(k)) = data[set.members[0]].covariates[k] - data[set.members[1]].covariates[k];
    }
    const double dist = llt.matrixL().solve(diff).norm();
    if (dist <= rule.width_multiplier) out.sets.push_back(set);
  }
  return out;
}

MatchedDesign validate_design(const MatchedDesign& design, const StudyData& data) {
  if (design.source_fingerprint != 0 && design.source_fingerprint != design_fingerprint(data)) {
    throw InputError("design was built from different covariates or treatment labels than the data given");
  }
  MatchedDesign out;
  out.source_fingerprint = design.source_fingerprint;
  std::vector<std::ptrdiff_t> owner(data.size(), -1);
  for (std::size_t i = 0; i < design.sets.size(); ++i) {
    const auto& s = design.sets[i];
    const std::string label = "matched set " + std::to_string(i);
    if (s.size() < 2) throw InputError(label + " has fewer than two units");
    std::size_t treated = 0;
    for (auto m : s.members) {
      if (m >= data.size()) throw InputError(label + " refers to unit " + std::to_string(m) + " outside the data");
      if (owner[m] >= 0) {
        throw InputError("unit " + std::to_string(m) + " appears in matched sets " + std::to_string(owner[m]) +
                         " and " + std::to_string(i));
      }
      owner[m] = static_cast<std::ptrdiff_t>(i);
      treated += data[m].treated ? 1 : 0;
    }
    const std::size_t n = s.size();
    if (treated == 0 || treated == n) {
      throw InputError(label + " has " + std::to_string(treated) + " treated units out of " + std::to_string(n));
    }
    MatchedSet norm;
    norm.treated_count = treated;
    norm.members = s.members;
    if (treated == 1) {
      auto it = std::find_if(norm.members.begin(), norm.members.end(), [&](std::size_t m) { return data[m].treated; });
      std::rotate(norm.members.begin(), it, it + 1);
    } else if (treated == n - 1) {
      auto it = std::find_if(norm.members.begin(), norm.members.end(), [&](std::size_t m) { return !data[m].treated; });
      std::rotate(norm.members.begin(), it, it + 1);
      norm.label_switched = true;
    } else {
      throw InputError(label + " has neither a single treated nor a single control unit");
    }
    out.sets.push_back(std::move(norm));
  }
  return out;
}

nlohmann::json design_to_json(const MatchedDesign& design) {
  nlohmann::json sets = nlohmann::json::array();
  for (const auto& s : design.sets) {
    nlohmann::json js = {{"members", s.members}};
    if (s.label_switched) js["label_switched"] = true;
    sets.push_back(std::move(js));
  }
  std::ostringstream fp;
  fp << std::hex << design.source_fingerprint;
  return {{"source_fingerprint", fp.str()}, {"sets", std::move(sets)}};
}

MatchedDesign design_from_json(const nlohmann::json& j) {
  MatchedDesign design;
  try {
    if (j.contains("source_fingerprint")) {
      design.source_fingerprint = std::stoull(j.at("source_fingerprint").get<std::string>(), nullptr, 16);
    }
    for (const auto& js : j.at("sets")) {
      MatchedSet s;
      // Accept either {"members": [...]} objects or bare index lists.
      s.members = js.is_array() ? js.get<std::vector<std::size_t>>() : js.at("members").get<std::vector<std::size_t>>();
      if (js.is_object() && js.contains("label_switched")) s.label_switched = js.at("label_switched").get<bool>();
      design.sets.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed design JSON: ") + e.what());
  }
  return design;
}

}  // namespace permsens
