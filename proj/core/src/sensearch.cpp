#include "permsens/sensearch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace permsens {

namespace {

constexpr double kMaxExactWork = 16777216.0;
constexpr double kMaxMonteCarloCombos = 4096.0;

/// A discrete law over ascending support values.
struct Law {
  std::vector<double> values;
  std::vector<double> probs;
};

struct SetLaws {
  double mu = 0.0;
  double nu = 0.0;
  std::size_t split = 0;
  std::vector<double> mu_by_split;
  /// Laws an adversary may pick for tail maximization (threshold splits).
  std::vector<Law> candidates;
};

void moments(const Law& law, double& mu, double& nu) {
  double m = 0.0;
  for (std::size_t j = 0; j < law.values.size(); ++j) m += law.probs[j] * law.values[j];
  double s = 0.0;
  for (std::size_t j = 0; j < law.values.size(); ++j) {
    const double d = law.values[j] - m;
    s += law.probs[j] * d * d;
  }
  mu = m;
  nu = std::max(s, 0.0);
}

Law point_mass(double v) { return {{v}, {1.0}}; }

/// Split l (1-based): ranks 1..l keep weight w, ranks l+1..n get lambda * w.
Law split_law(std::span<const double> q, std::span<const double> w, double lambda, std::size_t l) {
  double base = 0.0;
  double boosted = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) (j < l ? base : boosted) += w[j];
  const double denom = base + lambda * boosted;
  Law law;
  law.values.assign(q.begin(), q.end());
  law.probs.resize(q.size());
  for (std::size_t j = 0; j < q.size(); ++j) law.probs[j] = j < l ? w[j] / denom : lambda * w[j] / denom;
  return law;
}

bool is_constant(std::span<const double> q) {
  return std::all_of(q.begin(), q.end(), [&](double v) { return v == q.front(); });
}

SetLaws bound_sorted(std::span<const double> q, std::span<const double> w, double lambda) {
  const std::size_t n = q.size();
  SetLaws out;
  if (n == 0) throw InputError("empty matched set");
  if (is_constant(q)) {
    out.mu = q.front();
    out.nu = 0.0;
    out.split = n;
    out.mu_by_split.assign(n, q.front());
    out.candidates.push_back(point_mass(q.front()));
    return out;
  }
  std::vector<Law> laws;
  std::vector<double> nus(n);
  out.mu_by_split.resize(n);
  for (std::size_t l = 1; l <= n; ++l) {
    laws.push_back(split_law(q, w, lambda, l));
    moments(laws.back(), out.mu_by_split[l - 1], nus[l - 1]);
  }
  const double best = *std::max_element(out.mu_by_split.begin(), out.mu_by_split.end());
  const double tol = 1e-12 * std::max(1.0, std::abs(best));
  std::size_t pick = n;
  for (std::size_t l = 0; l < n; ++l) {
    if (best - out.mu_by_split[l] <= tol && (pick == n || nus[l] > nus[pick])) pick = l;
  }
  out.mu = out.mu_by_split[pick];
  out.nu = nus[pick];
  out.split = pick + 1;
  if (lambda == 1.0) {
    out.candidates.push_back(std::move(laws[pick]));
  } else {
    // Boosting nothing (l = n) is stochastically dominated by l = n - 1.
    for (std::size_t l = 0; l + 1 < n; ++l) out.candidates.push_back(std::move(laws[l]));
  }
  return out;
}

/// Sorts (q, w) by q, stable on rank, and rescales w so that its maximum is 1.
void sort_with_weights(std::span<const double> q, std::span<const double> w, std::vector<double>& qs,
                       std::vector<double>& ws) {
  std::vector<std::size_t> order(q.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return q[a] < q[b]; });
  const double top = *std::max_element(w.begin(), w.end());
  if (!(top > 0.0) || !std::isfinite(top)) throw InputError("set weights must be positive and finite");
  qs.resize(q.size());
  ws.resize(q.size());
  for (std::size_t j = 0; j < q.size(); ++j) {
    qs[j] = q[order[j]];
    ws[j] = w[order[j]] / top;
    if (!(ws[j] > 0.0)) throw InputError("set weights must be positive");
  }
}

/// Score table in the orientation of the test: switched labels applied and,
/// for the lower alternative, every score negated.
struct Oriented {
  std::vector<std::vector<double>> q;  // per set, indexed by control-outcome rank
  double T = 0.0;
  std::vector<std::size_t> label_switched;
};

Oriented orient(const ScoreTable& table, bool negate) {
  if (table.sets.empty()) throw InputError("design has no matched sets");
  const ScoreTable switched = apply_label_switch(table);
  Oriented out;
  const double sign = negate ? -1.0 : 1.0;
  for (std::size_t i = 0; i < switched.sets.size(); ++i) {
    const auto& s = switched.sets[i];
    std::vector<double> q(s.q.size());
    for (std::size_t j = 0; j < q.size(); ++j) q[j] = sign * s.q[j];
    out.q.push_back(std::move(q));
    if (s.label_switched) out.label_switched.push_back(i);
  }
  out.T = sign * observed_statistic(switched);
  return out;
}

double tail_tolerance(const std::vector<SetLaws>& sets) {
  double scale = 0.0;
  for (const auto& s : sets) {
    double m = 0.0;
    for (const auto& law : s.candidates) {
      for (double v : law.values) m = std::max(m, std::abs(v));
    }
    scale += m;
  }
  return 1e-10 * std::max(1.0, scale);
}

/// P(sum >= threshold) for independent laws, by depth-first enumeration with
/// bound pruning.
double enumerate_tail(const std::vector<const Law*>& laws, double threshold) {
  const std::size_t I = laws.size();
  std::vector<double> suffix_max(I + 1, 0.0);
  std::vector<double> suffix_min(I + 1, 0.0);
  for (std::size_t i = I; i-- > 0;) {
    suffix_max[i] = suffix_max[i + 1] + laws[i]->values.back();
    suffix_min[i] = suffix_min[i + 1] + laws[i]->values.front();
  }
  double total = 0.0;
  auto recurse = [&](auto&& self, std::size_t i, double partial, double prob) -> void {
    if (partial + suffix_min[i] >= threshold) {
      total += prob;
      return;
    }
    if (partial + suffix_max[i] < threshold) return;
    const Law& law = *laws[i];
    for (std::size_t j = law.values.size(); j-- > 0;) {
      if (law.probs[j] > 0.0) self(self, i + 1, partial + law.values[j], prob * law.probs[j]);
    }
  };
  recurse(recurse, 0, 0.0, 1.0);
  return std::min(1.0, total);
}

double combo_count(const std::vector<SetLaws>& sets) {
  double c = 1.0;
  for (const auto& s : sets) c *= static_cast<double>(s.candidates.size());
  return c;
}

/// Calls f with one candidate law per set, over every combination.
template <class F>
void for_each_combo(const std::vector<SetLaws>& sets, F&& f) {
  const std::size_t I = sets.size();
  std::vector<std::size_t> idx(I, 0);
  std::vector<const Law*> laws(I);
  while (true) {
    for (std::size_t i = 0; i < I; ++i) laws[i] = &sets[i].candidates[idx[i]];
    f(laws);
    std::size_t i = 0;
    while (i < I && ++idx[i] == sets[i].candidates.size()) idx[i++] = 0;
    if (i == I) break;
  }
}

double exact_pvalue(const std::vector<SetLaws>& sets, double T) {
  double outcomes = 1.0;
  for (const auto& s : sets) outcomes *= static_cast<double>(s.candidates.front().values.size());
  const double combos = combo_count(sets);
  if (outcomes > kMaxExactOutcomes || outcomes * combos > kMaxExactWork) {
    throw InputError("exact enumeration is too large for this design; use the gaussian or mc method");
  }
  const double threshold = T - tail_tolerance(sets);
  double best = 0.0;
  for_each_combo(sets, [&](const std::vector<const Law*>& laws) { best = std::max(best, enumerate_tail(laws, threshold)); });
  return best;
}

double monte_carlo_pvalue(const std::vector<SetLaws>& sets, double T, const MonteCarloSpec& mc) {
  const double combos = combo_count(sets);
  if (combos > kMaxMonteCarloCombos) {
    throw InputError("too many worst-case split combinations for the mc method; use gaussian");
  }
  std::vector<std::vector<const Law*>> all;
  for_each_combo(sets, [&](const std::vector<const Law*>& laws) { all.push_back(laws); });
  const double threshold = T - tail_tolerance(sets);
  std::vector<std::size_t> hits(all.size(), 0);
  std::vector<double> u(sets.size());
  CounterRng rng(mc.seed);
  for (std::size_t d = 0; d < mc.draws; ++d) {
    for (auto& v : u) v = rng.uniform();
    for (std::size_t c = 0; c < all.size(); ++c) {
      double sum = 0.0;
      for (std::size_t i = 0; i < sets.size(); ++i) {
        const Law& law = *all[c][i];
        double acc = 0.0;
        std::size_t j = 0;
        for (; j + 1 < law.values.size(); ++j) {
          acc += law.probs[j];
          if (u[i] < acc) break;
        }
        sum += law.values[j];
      }
      if (sum >= threshold) ++hits[c];
    }
  }
  const std::size_t best = *std::max_element(hits.begin(), hits.end());
  return static_cast<double>(best) / static_cast<double>(mc.draws);
}

WorstCaseReport assemble(const std::vector<SetLaws>& sets, const Oriented& o, const SensitivitySpec& spec) {
  WorstCaseReport r;
  r.mode = spec.mode;
  r.method = spec.method;
  r.gamma = spec.gamma;
  r.T = o.T;
  r.label_switched = o.label_switched;
  for (const auto& s : sets) {
    r.mu.push_back(s.mu);
    r.nu.push_back(s.nu);
    r.split.push_back(s.split);
    r.M += s.mu;
    r.V += s.nu;
  }
  switch (spec.method) {
    case Method::gaussian:
      r.p_value = gaussian_tail(r.T, r.M, r.V);
      break;
    case Method::exact:
      r.p_value = exact_pvalue(sets, r.T);
      break;
    case Method::monte_carlo:
      r.p_value = monte_carlo_pvalue(sets, r.T, spec.monte_carlo);
      break;
  }
  return r;
}

std::vector<SetLaws> set_engine(const Oriented& o, const SetWeights* weights, double lambda) {
  std::vector<SetLaws> sets;
  sets.reserve(o.q.size());
  std::vector<double> qs;
  std::vector<double> ws;
  for (std::size_t i = 0; i < o.q.size(); ++i) {
    const auto& q = o.q[i];
    std::vector<double> ones;
    std::span<const double> w;
    if (weights != nullptr) {
      w = weights->p_m[i];
      if (w.size() != q.size()) throw InputError("weights for set " + std::to_string(i) + " do not match its size");
    } else {
      ones.assign(q.size(), 1.0);
      w = ones;
    }
    sort_with_weights(q, w, qs, ws);
    sets.push_back(bound_sorted(qs, ws, lambda));
  }
  return sets;
}

std::vector<SetLaws> pair_engine(const Oriented& o, const PairQuality& quality, double lambda) {
  if (quality.r_m.size() != o.q.size()) throw InputError("pair quality does not match the number of pairs");
  std::vector<SetLaws> sets;
  sets.reserve(o.q.size());
  for (std::size_t i = 0; i < o.q.size(); ++i) {
    const auto& q = o.q[i];
    if (q.size() != 2) throw InputError("adaptive pair engine needs a pair design");
    SetLaws s;
    if (q[0] == q[1]) {
      s.mu = q[0];
      s.split = 2;
      s.mu_by_split = {q[0], q[0]};
      s.candidates.push_back(point_mass(q[0]));
      sets.push_back(std::move(s));
      continue;
    }
    const auto p = adaptive_pair_probabilities(q[0], q[1], quality.r_m[i], lambda);
    Law law = q[0] <= q[1] ? Law{{q[0], q[1]}, {p[0], p[1]}} : Law{{q[1], q[0]}, {p[1], p[0]}};
    moments(law, s.mu, s.nu);
    s.split = 1;
    s.candidates.push_back(std::move(law));
    sets.push_back(std::move(s));
  }
  return sets;
}

std::vector<std::size_t> merge_floored(const SensitivitySpec& spec) {
  if (spec.pair_quality) return spec.pair_quality->floored;
  if (spec.set_weights) return spec.set_weights->floored;
  return {};
}

template <class OneSided>
WorstCaseReport with_alternative(const SensitivitySpec& spec, OneSided&& one_sided) {
  spec.validate();
  if (spec.alternative != Alternative::two_sided) {
    WorstCaseReport r = one_sided(spec.alternative == Alternative::lower);
    r.alternative = spec.alternative;
    r.quantile = spec.quantile;
    r.floored = merge_floored(spec);
    return r;
  }
  WorstCaseReport up = one_sided(false);
  WorstCaseReport lo = one_sided(true);
  const double pu = up.p_value;
  const double pl = lo.p_value;
  WorstCaseReport r = pu <= pl ? std::move(up) : std::move(lo);
  r.p_upper = pu;
  r.p_lower = pl;
  r.p_value = std::min(1.0, 2.0 * std::min(pu, pl));
  r.alternative = Alternative::two_sided;
  r.quantile = spec.quantile;
  r.floored = merge_floored(spec);
  return r;
}

}  // namespace

void SensitivitySpec::validate() const {
  if (!(gamma >= 1.0) || !std::isfinite(gamma)) throw InputError("sensitivity parameter must be >= 1");
  if (quantile) {
    if (!(quantile->level > 0.0 && quantile->level <= 1.0)) throw InputError("quantile level must lie in (0, 1]");
    if (!(quantile->value >= 1.0) || !std::isfinite(quantile->value)) {
      throw InputError("quantile bound must be >= 1");
    }
  }
  if (mode == SensitivityMode::adaptive && !pair_quality && !set_weights) {
    throw InputError("adaptive mode needs matching-quality weights");
  }
  if (method == Method::monte_carlo && monte_carlo.draws == 0) throw InputError("mc method needs draws > 0");
}

double gaussian_tail(double T, double M, double V) {
  if (!(V > 0.0)) return T <= M ? 1.0 : 0.0;
  return 0.5 * std::erfc((T - M) / std::sqrt(2.0 * V));
}

SetBound worst_case_set_bound(std::span<const double> q, std::span<const double> weights, double lambda) {
  if (q.size() != weights.size()) throw InputError("scores and weights differ in length");
  if (!(lambda >= 1.0)) throw InputError("sensitivity parameter must be >= 1");
  if (!std::is_sorted(q.begin(), q.end())) throw InputError("scores must be ascending");
  std::vector<double> qs;
  std::vector<double> ws;
  sort_with_weights(q, weights, qs, ws);
  SetLaws laws = bound_sorted(qs, ws, lambda);
  return {laws.mu, laws.nu, laws.split, std::move(laws.mu_by_split)};
}

std::array<double, 2> adaptive_pair_probabilities(double q1, double q2, double r_m, double lambda) {
  if (q2 >= q1) {
    const double a = r_m * lambda;
    return {1.0 / (1.0 + a), a / (1.0 + a)};
  }
  return {lambda / (lambda + r_m), r_m / (lambda + r_m)};
}

WorstCaseReport uniform_pvalue(const ScoreTable& table, const SensitivitySpec& spec) {
  if (spec.quantile) return quantile_bound_pvalue(table, spec);
  return with_alternative(spec, [&](bool negate) {
    const Oriented o = orient(table, negate);
    return assemble(set_engine(o, nullptr, spec.gamma), o, spec);
  });
}

WorstCaseReport adaptive_pair_pvalue(const ScoreTable& table, const PairQuality& quality, const SensitivitySpec& spec) {
  SensitivitySpec s = spec;
  s.mode = SensitivityMode::adaptive;
  s.pair_quality = quality;
  return with_alternative(s, [&](bool negate) {
    const Oriented o = orient(table, negate);
    return assemble(pair_engine(o, quality, s.gamma), o, s);
  });
}

WorstCaseReport adaptive_pair_pvalue(const ScoreTable& table, const PairQuality& quality, double lambda) {
  SensitivitySpec spec;
  spec.gamma = lambda;
  return adaptive_pair_pvalue(table, quality, spec);
}

WorstCaseReport adaptive_set_pvalue(const ScoreTable& table, const SetWeights& weights, const SensitivitySpec& spec) {
  if (weights.p_m.size() != table.sets.size()) throw InputError("set weights do not match the number of sets");
  SensitivitySpec s = spec;
  s.mode = SensitivityMode::adaptive;
  s.set_weights = weights;
  return with_alternative(s, [&](bool negate) {
    const Oriented o = orient(table, negate);
    return assemble(set_engine(o, &weights, s.gamma), o, s);
  });
}

WorstCaseReport adaptive_set_pvalue(const ScoreTable& table, const SetWeights& weights, double lambda) {
  SensitivitySpec spec;
  spec.gamma = lambda;
  return adaptive_set_pvalue(table, weights, spec);
}

WorstCaseReport quantile_bound_pvalue(const ScoreTable& table, const SensitivitySpec& spec) {
  if (!spec.quantile) throw InputError("quantile bound missing");
  if (spec.method != Method::gaussian) throw InputError("quantile bounds support the gaussian method only");
  const SetWeights* weights = spec.mode == SensitivityMode::adaptive && spec.set_weights ? &*spec.set_weights : nullptr;
  return with_alternative(spec, [&](bool negate) {
    const Oriented o = orient(table, negate);
    const double lambda = spec.quantile->value;
    const std::vector<SetLaws> sets = set_engine(o, weights, lambda);
    const std::size_t I = sets.size();
    const double raw = (1.0 - spec.quantile->level) * static_cast<double>(I);
    const std::size_t k = std::min<std::size_t>(I, static_cast<std::size_t>(std::max(0.0, std::ceil(raw - 1e-9))));
    std::vector<double> top(I);
    for (std::size_t i = 0; i < I; ++i) top[i] = *std::max_element(o.q[i].begin(), o.q[i].end());

    std::vector<char> chosen(I, 0);
    auto evaluate = [&](const std::vector<char>& pick, double& M, double& V) {
      M = 0.0;
      V = 0.0;
      for (std::size_t i = 0; i < I; ++i) {
        M += pick[i] ? top[i] : sets[i].mu;
        V += pick[i] ? 0.0 : sets[i].nu;
      }
    };
    double M = 0.0;
    double V = 0.0;
    if (k > 0 && k < I && I <= 20) {
      // Exhaustive search over subsets of size k for the largest Gaussian tail.
      std::vector<char> pick(I, 0);
      std::fill(pick.end() - static_cast<std::ptrdiff_t>(k), pick.end(), 1);
      double best = -1.0;
      do {
        double m = 0.0;
        double v = 0.0;
        evaluate(pick, m, v);
        const double p = gaussian_tail(o.T, m, v);
        if (p > best) {
          best = p;
          chosen = pick;
          M = m;
          V = v;
        }
      } while (std::next_permutation(pick.begin(), pick.end()));
    } else {
      std::vector<std::size_t> order(I);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return top[a] - sets[a].mu > top[b] - sets[b].mu; });
      for (std::size_t r = 0; r < k; ++r) chosen[order[r]] = 1;
      evaluate(chosen, M, V);
      // Variance over-bound: the I - k largest nu whichever sets stay bounded.
      std::vector<double> nus(I);
      for (std::size_t i = 0; i < I; ++i) nus[i] = sets[i].nu;
      std::sort(nus.begin(), nus.end(), std::greater<>());
      V = 0.0;
      for (std::size_t r = 0; r < I - k; ++r) V += nus[r];
    }
    WorstCaseReport r;
    r.mode = spec.mode;
    r.method = spec.method;
    r.gamma = spec.gamma;
    r.T = o.T;
    r.label_switched = o.label_switched;
    for (std::size_t i = 0; i < I; ++i) {
      r.mu.push_back(chosen[i] ? top[i] : sets[i].mu);
      r.nu.push_back(chosen[i] ? 0.0 : sets[i].nu);
      r.split.push_back(chosen[i] ? 0 : sets[i].split);
      if (chosen[i]) r.unbounded.push_back(i);
    }
    r.M = M;
    r.V = V;
    r.p_value = gaussian_tail(r.T, r.M, r.V);
    return r;
  });
}

WorstCaseReport sensitivity_pvalue(const ScoreTable& table, const SensitivitySpec& spec) {
  spec.validate();
  if (spec.quantile) return quantile_bound_pvalue(table, spec);
  if (spec.mode == SensitivityMode::uniform) return uniform_pvalue(table, spec);
  if (spec.pair_quality) return adaptive_pair_pvalue(table, *spec.pair_quality, spec);
  return adaptive_set_pvalue(table, *spec.set_weights, spec);
}

std::string to_string(SensitivityMode mode) { return mode == SensitivityMode::uniform ? "uniform" : "adaptive"; }

std::string to_string(Alternative alternative) {
  switch (alternative) {
    case Alternative::upper:
      return "upper";
    case Alternative::lower:
      return "lower";
    case Alternative::two_sided:
      return "two-sided";
  }
  return "upper";
}

std::string to_string(Method method) {
  switch (method) {
    case Method::gaussian:
      return "gaussian";
    case Method::exact:
      return "exact";
    case Method::monte_carlo:
      return "mc";
  }
  return "gaussian";
}

SensitivityMode parse_mode(const std::string& text) {
  if (text == "uniform") return SensitivityMode::uniform;
  if (text == "adaptive") return SensitivityMode::adaptive;
  throw InputError("unknown mode '" + text + "' (expected uniform or adaptive)");
}

Alternative parse_alternative(const std::string& text) {
  if (text == "upper") return Alternative::upper;
  if (text == "lower") return Alternative::lower;
  if (text == "two-sided") return Alternative::two_sided;
  throw InputError("unknown alternative '" + text + "' (expected upper, lower or two-sided)");
}

Method parse_method(const std::string& text) {
  if (text == "gaussian") return Method::gaussian;
  if (text == "exact") return Method::exact;
  if (text == "mc" || text == "monte-carlo") return Method::monte_carlo;
  throw InputError("unknown method '" + text + "' (expected gaussian, exact or mc)");
}

nlohmann::json report_to_json(const WorstCaseReport& r) {
  nlohmann::json sets = nlohmann::json::array();
  for (std::size_t i = 0; i < r.mu.size(); ++i) {
    sets.push_back({{"mu", r.mu[i]}, {"nu", r.nu[i]}, {"split", r.split[i]}});
  }
  nlohmann::json j = {{"mode", to_string(r.mode)},
                      {"alternative", to_string(r.alternative)},
                      {"method", to_string(r.method)},
                      {"gamma", r.gamma},
                      {"T", r.T},
                      {"M", r.M},
                      {"V", r.V},
                      {"p_value", r.p_value},
                      {"sets", std::move(sets)},
                      {"floored", r.floored},
                      {"label_switched", r.label_switched}};
  if (r.p_upper) j["p_upper"] = *r.p_upper;
  if (r.p_lower) j["p_lower"] = *r.p_lower;
  if (r.quantile) {
    j["quantile"] = {{"level", r.quantile->level}, {"value", r.quantile->value}};
    j["unbounded"] = r.unbounded;
  }
  return j;
}

std::string report_summary(const WorstCaseReport& r) {
  std::ostringstream out;
  out << "T=" << format_double(r.T) << " M=" << format_double(r.M) << " V=" << format_double(r.V)
      << " p=" << format_double(r.p_value) << " gamma=" << format_double(r.gamma) << " mode=" << to_string(r.mode)
      << " method=" << to_string(r.method) << " alternative=" << to_string(r.alternative);
  return out.str();
}

}  // namespace permsens
