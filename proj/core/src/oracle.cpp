#include "permsens/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "permsens/sensearch.hpp"

namespace permsens::oracle {

namespace {

void require_size(std::size_t n) {
  if (n == 0 || n > kMaxEnumerationSize) {
    throw InputError("enumeration oracle supports sets of 1.." + std::to_string(kMaxEnumerationSize) + " units");
  }
}

/// Calls f(sigma) for every permutation sigma of 0..n-1, sigma[k] = rank of unit k.
template <class F>
void for_each_assignment(std::size_t n, F&& f) {
  std::vector<std::size_t> sigma(n);
  std::iota(sigma.begin(), sigma.end(), 0);
  do {
    f(sigma);
  } while (std::next_permutation(sigma.begin(), sigma.end()));
}

double density_product(const Covariates& x, const std::vector<double>& y, const std::vector<std::size_t>& sigma,
                       const TrueModel& model) {
  double w = 1.0;
  for (std::size_t k = 0; k < sigma.size(); ++k) w *= model.density(y[sigma[k]], x[k]);
  return w;
}

double propensity_product(const Covariates& x, const std::vector<double>& y, const std::vector<std::size_t>& sigma,
                          const TrueModel& model) {
  double w = model.pi1(x[0], y[sigma[0]]);
  for (std::size_t k = 1; k < sigma.size(); ++k) w *= model.pi0(x[k], y[sigma[k]]);
  return w;
}

void check_inputs(const Covariates& x, const std::vector<double>& y) {
  require_size(x.size());
  if (y.size() != x.size()) throw InputError("covariate rows and outcomes differ in count");
  if (!std::is_sorted(y.begin(), y.end())) throw InputError("outcomes must be sorted");
}

/// Composite Simpson rule on [lo, hi].
template <class F>
double integrate(F&& f, double lo, double hi, std::size_t intervals = 4000) {
  const double h = (hi - lo) / static_cast<double>(intervals);
  double acc = f(lo) + f(hi);
  for (std::size_t i = 1; i < intervals; ++i) acc += (i % 2 == 1 ? 4.0 : 2.0) * f(lo + static_cast<double>(i) * h);
  return acc * h / 3.0;
}

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double normal_pdf(double y, double mean, double sd) {
  const double z = (y - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

/// Gaussian linear outcome model with logistic outcome-dependent propensity.
struct RandomModel {
  TrueModel model;
  double intercept = 0.0;
  std::vector<double> slope;
  double sd = 1.0;

  double mean(std::span<const double> x) const {
    double m = intercept;
    for (std::size_t c = 0; c < x.size(); ++c) m += slope[c] * x[c];
    return m;
  }
};

RandomModel random_model(CounterRng& rng, std::size_t d, bool constant_propensity = false) {
  RandomModel r;
  r.intercept = 2.0 * rng.uniform() - 1.0;
  for (std::size_t c = 0; c < d; ++c) r.slope.push_back(4.0 * rng.uniform() - 2.0);
  r.sd = 0.3 + 0.7 * rng.uniform();
  const double a0 = 3.0 * rng.uniform() - 1.5;
  std::vector<double> ax;
  for (std::size_t c = 0; c < d; ++c) ax.push_back(3.0 * rng.uniform() - 1.5);
  const double ay = constant_propensity ? 0.0 : 3.0 * rng.uniform() - 1.5;
  const double const_pi = 0.1 + 0.8 * rng.uniform();
  const auto intercept = r.intercept;
  const auto slope = r.slope;
  const double sd = r.sd;
  r.model.density = [intercept, slope, sd](double y, std::span<const double> x) {
    double m = intercept;
    for (std::size_t c = 0; c < x.size(); ++c) m += slope[c] * x[c];
    return normal_pdf(y, m, sd);
  };
  if (constant_propensity) {
    r.model.pi1 = [const_pi](std::span<const double>, double) { return const_pi; };
  } else {
    r.model.pi1 = [a0, ax, ay](std::span<const double> x, double y) {
      double t = a0 + ay * y;
      for (std::size_t c = 0; c < x.size(); ++c) t += ax[c] * x[c];
      return logistic(t);
    };
  }
  r.model.label = "random";
  r.model.y_lo = -6.0 - 12.0 * sd;
  r.model.y_hi = 6.0 + 12.0 * sd;
  return r;
}

struct RandomSet {
  Covariates x;
  std::vector<double> y;
};

RandomSet random_set(CounterRng& rng, const RandomModel& m, std::size_t n, std::size_t d) {
  RandomSet s;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> xk(d);
    for (auto& v : xk) v = rng.uniform();
    s.y.push_back(rng.normal(m.mean(xk), m.sd));
    s.x.push_back(std::move(xk));
  }
  std::sort(s.y.begin(), s.y.end());
  return s;
}

TrueModel model11() {
  TrueModel m;
  m.density = [](double y, std::span<const double> x) { return normal_pdf(y, x[0], 0.2); };
  m.pi1 = [](std::span<const double> x, double) { return 0.2 + 0.5 * x[0]; };
  m.label = "eq11";
  m.y_lo = -3.0;
  m.y_hi = 4.0;
  return m;
}

SetScores probe_scores(const ProbeSet& s) {
  SetScores out;
  out.q = s.q;
  out.sorted_y0.resize(s.q.size());
  std::iota(out.sorted_y0.begin(), out.sorted_y0.end(), 0.0);
  out.observed_rank = s.observed_rank;
  return out;
}

/// Independent tail enumeration: walks every joint outcome.
double brute_tail(const std::vector<std::vector<double>>& values, const std::vector<std::vector<double>>& probs,
                  double threshold) {
  double total = 0.0;
  std::vector<std::size_t> idx(values.size(), 0);
  while (true) {
    double sum = 0.0;
    double p = 1.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      sum += values[i][idx[i]];
      p *= probs[i][idx[i]];
    }
    if (sum >= threshold) total += p;
    std::size_t i = 0;
    while (i < values.size() && ++idx[i] == values[i].size()) idx[i++] = 0;
    if (i == values.size()) break;
  }
  return total;
}

std::string describe(double worst, double tol) {
  std::ostringstream out;
  out << "worst " << worst << " (tolerance " << tol << ")";
  return out.str();
}

}  // namespace

std::vector<double> exact_set_law(const Covariates& x, const std::vector<double>& sorted_y0, const TrueModel& model) {
  check_inputs(x, sorted_y0);
  std::vector<double> law(x.size(), 0.0);
  for_each_assignment(x.size(), [&](const std::vector<std::size_t>& sigma) {
    law[sigma[0]] += density_product(x, sorted_y0, sigma, model) * propensity_product(x, sorted_y0, sigma, model);
  });
  const double total = std::accumulate(law.begin(), law.end(), 0.0);
  for (auto& v : law) v /= total;
  return law;
}

std::vector<double> matching_weights(const Covariates& x, const std::vector<double>& sorted_y0,
                                     const TrueModel& model) {
  check_inputs(x, sorted_y0);
  std::vector<double> w(x.size(), 0.0);
  for_each_assignment(x.size(), [&](const std::vector<std::size_t>& sigma) {
    w[sigma[0]] += density_product(x, sorted_y0, sigma, model);
  });
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= total;
  return w;
}

double confounding_strength(const Covariates& x, const std::vector<double>& sorted_y0, const TrueModel& model) {
  check_inputs(x, sorted_y0);
  double hi = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  for_each_assignment(x.size(), [&](const std::vector<std::size_t>& sigma) {
    const double p = propensity_product(x, sorted_y0, sigma, model);
    hi = std::max(hi, p);
    lo = std::min(lo, p);
  });
  return hi / lo;
}

double gamma_bar(const Covariates& x, const std::vector<double>& y, const TrueModel& model) {
  check_inputs(x, y);
  const std::size_t n = x.size();
  double best = 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      if (j == k) continue;
      for (std::size_t l = 1; l < n; ++l) {
        const double num = model.density(y[j], x[0]) / model.density(y[j], x[l]) * model.pi0(x[l], y[k]) /
                           model.pi0(x[l], y[j]);
        const double den = model.density(y[k], x[0]) / model.density(y[k], x[l]) * model.pi1(x[0], y[k]) /
                           model.pi1(x[0], y[j]);
        best = std::max(best, num / den);
      }
    }
  }
  return best;
}

Decomposition decomposition_identity(const std::vector<double>& x1, const std::vector<double>& x2,
                                     const std::vector<double>& y, const TrueModel& model) {
  if (y.size() != 2 || y[0] > y[1]) throw InputError("decomposition needs an ascending outcome pair");
  auto cond = [&](int z, const std::vector<double>& x, double v) {
    auto joint = [&](double t) { return (z == 1 ? model.pi1(x, t) : model.pi0(x, t)) * model.density(t, x); };
    return joint(v) / integrate(joint, model.y_lo, model.y_hi);
  };
  Decomposition out;
  out.r = cond(1, x1, y[1]) * cond(0, x2, y[0]) / (cond(1, x1, y[0]) * cond(0, x2, y[1]));
  out.r_m = (model.density(y[1], x1) / model.density(y[1], x2)) / (model.density(y[0], x1) / model.density(y[0], x2));
  out.r_u = (model.pi0(x2, y[0]) / model.pi0(x2, y[1])) / (model.pi1(x1, y[0]) / model.pi1(x1, y[1]));
  out.relative_gap = std::abs(out.r - out.r_m * out.r_u) / std::abs(out.r);
  return out;
}

DominanceReport dominance_probe(const std::vector<ProbeSet>& sets, double lambda, std::size_t draws, SeedSpec seed) {
  if (sets.empty()) throw InputError("probe needs at least one set");
  ScoreTable table;
  SetWeights weights;
  bool unit = true;
  bool pairs = true;
  double scale = 0.0;
  for (const auto& s : sets) {
    require_size(s.q.size());
    if (s.weights.size() != s.q.size() || s.observed_rank >= s.q.size()) throw InputError("malformed probe set");
    table.sets.push_back(probe_scores(s));
    weights.p_m.push_back(s.weights);
    unit = unit && std::all_of(s.weights.begin(), s.weights.end(), [](double w) { return w == 1.0; });
    pairs = pairs && s.q.size() == 2;
    double m = 0.0;
    for (double v : s.q) m = std::max(m, std::abs(v));
    scale += m;
  }
  SensitivitySpec spec;
  spec.gamma = lambda;
  spec.method = Method::exact;
  WorstCaseReport engine;
  if (unit) {
    engine = uniform_pvalue(table, spec);
  } else if (pairs) {
    PairQuality quality;
    for (const auto& s : sets) quality.r_m.push_back(s.weights[1] / s.weights[0]);
    engine = adaptive_pair_pvalue(table, quality, spec);
  } else {
    engine = adaptive_set_pvalue(table, weights, spec);
  }

  DominanceReport report;
  report.engine_pvalue = engine.p_value;
  report.T = engine.T;
  report.worst_mean_slack = -std::numeric_limits<double>::infinity();
  report.worst_tail_slack = -std::numeric_limits<double>::infinity();
  const double threshold = engine.T - 1e-10 * std::max(1.0, scale);

  std::vector<SetBound> bounds;
  for (const auto& s : sets) bounds.push_back(worst_case_set_bound(s.q, s.weights, lambda));

  CounterRng rng(seed);
  std::vector<std::vector<double>> values(sets.size());
  std::vector<std::vector<double>> probs(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) values[i] = sets[i].q;
  for (std::size_t draw = 0; draw < draws; ++draw) {
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const auto& s = sets[i];
      const double top = *std::max_element(s.weights.begin(), s.weights.end());
      std::vector<double> p(s.q.size());
      double total = 0.0;
      for (std::size_t j = 0; j < p.size(); ++j) {
        double u = rng.uniform();
        const double snap = rng.uniform();
        if (snap < 0.2) u = 0.0;
        if (snap > 0.8) u = 1.0;
        p[j] = s.weights[j] / top * std::pow(lambda, u);
        total += p[j];
      }
      double mean = 0.0;
      for (std::size_t j = 0; j < p.size(); ++j) {
        p[j] /= total;
        mean += p[j] * s.q[j];
      }
      double var = 0.0;
      for (std::size_t j = 0; j < p.size(); ++j) var += p[j] * (s.q[j] - mean) * (s.q[j] - mean);
      const double slack = mean - bounds[i].mu;
      report.worst_mean_slack = std::max(report.worst_mean_slack, slack);
      if (slack > 1e-12) ++report.mean_violations;
      if (std::abs(slack) <= 1e-12 && var > bounds[i].nu + 1e-12) ++report.variance_violations;
      probs[i] = std::move(p);
    }
    const double tail = brute_tail(values, probs, threshold);
    const double tail_slack = tail - engine.p_value;
    report.worst_tail_slack = std::max(report.worst_tail_slack, tail_slack);
    if (tail_slack > 1e-12) ++report.tail_violations;
    ++report.members;
  }
  return report;
}

CheckResult check_decomposition(const SuiteOptions& options) {
  CheckResult r{"decomposition_identity", true, 0, 0.0, ""};
  const double tol = 1e-10;
  const TrueModel m11 = model11();
  r.worst = decomposition_identity({0.3}, {0.5}, {0.2, 0.6}, m11).relative_gap;
  CounterRng rng(options.seed.child(0, 1));
  for (std::size_t t = 0; t < options.decomposition_instances; ++t) {
    const std::size_t d = 1 + t % 2;
    const RandomModel m = random_model(rng, d);
    const RandomSet s = random_set(rng, m, 2, d);
    r.worst = std::max(r.worst, decomposition_identity(s.x[0], s.x[1], s.y, m.model).relative_gap);
  }
  r.instances = options.decomposition_instances + 1;
  r.passed = r.worst < tol;
  r.detail = describe(r.worst, tol);
  return r;
}

CheckResult check_pair_closed_form(const SuiteOptions& options) {
  CheckResult r{"pair_closed_form", true, 0, 0.0, ""};
  const double tol = 1e-12;
  CounterRng rng(options.seed.child(0, 2));
  std::vector<double> gammas = {1.0, 1.5, 2.0, 3.0, 5.0, 10.0};
  for (int i = 0; i < 20; ++i) gammas.push_back(1.0 + 9.0 * rng.uniform());
  SensitivitySpec spec;
  spec.method = Method::exact;
  for (double g : gammas) {
    spec.gamma = g;
    for (std::size_t pairs = 1; pairs <= 6; ++pairs) {
      ScoreTable table;
      for (std::size_t i = 0; i < pairs; ++i) {
        const double a = 0.1 + rng.uniform();
        table.sets.push_back(probe_scores({{-a, a}, {1.0, 1.0}, 1}));
      }
      const double p = uniform_pvalue(table, spec).p_value;
      const double expected = std::pow(g / (1.0 + g), static_cast<double>(pairs));
      r.worst = std::max(r.worst, std::abs(p - expected));
      ++r.instances;
    }
  }
  // The enumeration law on pairs against 1/(1+R), R/(1+R).
  for (std::size_t t = 0; t < 200; ++t) {
    const RandomModel m = random_model(rng, 1);
    const RandomSet s = random_set(rng, m, 2, 1);
    const auto law = exact_set_law(s.x, s.y, m.model);
    const Decomposition dec = decomposition_identity(s.x[0], s.x[1], s.y, m.model);
    const double R = dec.r_m * dec.r_u;
    r.worst = std::max(r.worst, std::abs(law[0] - 1.0 / (1.0 + R)));
    r.worst = std::max(r.worst, std::abs(law[1] - R / (1.0 + R)));
    ++r.instances;
  }
  r.passed = r.worst <= tol;
  r.detail = describe(r.worst, tol);
  return r;
}

CheckResult check_pair_weights(const SuiteOptions& options) {
  CheckResult r{"set_weights_pairs_match_pair_quality", true, 0, 0.0, ""};
  const double tol = 1e-12;
  CounterRng rng(options.seed.child(0, 3));
  for (std::size_t t = 0; t < 200; ++t) {
    const std::size_t d = 1 + t % 3;
    const RandomModel m = random_model(rng, d);
    std::vector<Unit> units;
    MatchedDesign design;
    for (std::size_t i = 0; i < 5; ++i) {
      const RandomSet s = random_set(rng, m, 2, d);
      const bool swap = rng.uniform() < 0.5;
      units.push_back({s.x[0], swap ? s.y[1] : s.y[0], true});
      units.push_back({s.x[1], swap ? s.y[0] : s.y[1], false});
      design.sets.push_back({{2 * i, 2 * i + 1}, 1, false});
    }
    const StudyData data(units);
    const ImputedControls y0{data.outcomes()};
    const DensityModel model = m.model.density_model();
    const PairQuality pq = pair_quality(design, data, y0, model);
    const SetWeights sw = set_weights(design, data, y0, model);
    for (std::size_t i = 0; i < design.size(); ++i) {
      const double ratio = sw.p_m[i][1] / sw.p_m[i][0];
      r.worst = std::max(r.worst, std::abs(ratio - pq.r_m[i]) / pq.r_m[i]);
      ++r.instances;
    }
  }
  r.passed = r.worst <= tol;
  r.detail = describe(r.worst, tol);
  return r;
}

CheckResult check_unit_weights(const SuiteOptions& options) {
  CheckResult r{"unit_weights_match_uniform_bitwise", true, 0, 0.0, ""};
  CounterRng rng(options.seed.child(0, 4));
  std::size_t mismatches = 0;
  auto same = [](const WorstCaseReport& a, const WorstCaseReport& b) {
    return a.M == b.M && a.V == b.V && a.T == b.T && a.p_value == b.p_value && a.mu == b.mu && a.nu == b.nu &&
           a.split == b.split;
  };
  for (std::size_t t = 0; t < 300; ++t) {
    const bool pairs = t % 2 == 0;
    const std::size_t I = 2 + rng.below(pairs ? 9 : 4);
    ScoreTable table;
    SetWeights ones;
    SetWeights flat;
    PairQuality unit_r;
    for (std::size_t i = 0; i < I; ++i) {
      const std::size_t n = pairs ? 2 : 2 + rng.below(4);
      std::vector<double> q(n);
      for (auto& v : q) v = 2.0 * rng.uniform() - 1.0;
      if (rng.uniform() < 0.1) std::fill(q.begin(), q.end(), q[0]);
      std::sort(q.begin(), q.end());
      table.sets.push_back(probe_scores({q, std::vector<double>(n, 1.0), rng.below(n)}));
      ones.p_m.emplace_back(n, 1.0);
      flat.p_m.emplace_back(n, 1.0 / static_cast<double>(n));
      unit_r.r_m.push_back(1.0);
    }
    SensitivitySpec spec;
    spec.gamma = rng.uniform() < 0.2 ? 1.0 : 1.0 + 4.0 * rng.uniform();
    const Alternative alts[] = {Alternative::upper, Alternative::lower, Alternative::two_sided};
    spec.alternative = alts[t % 3];
    for (Method method : {Method::gaussian, Method::exact}) {
      spec.method = method;
      const WorstCaseReport u = uniform_pvalue(table, spec);
      if (!same(u, adaptive_set_pvalue(table, ones, spec))) ++mismatches;
      if (!same(u, adaptive_set_pvalue(table, flat, spec))) ++mismatches;
      if (pairs && !same(u, adaptive_pair_pvalue(table, unit_r, spec))) ++mismatches;
      r.instances += pairs ? 3 : 2;
    }
  }
  r.worst = static_cast<double>(mismatches);
  r.passed = mismatches == 0;
  r.detail = std::to_string(mismatches) + " reports differ in at least one bit";
  return r;
}

CheckResult check_set_brackets(const SuiteOptions& options) {
  CheckResult r{"set_law_brackets", true, 0, 0.0, ""};
  const double tol = 1e-10;
  CounterRng rng(options.seed.child(0, 5));
  std::size_t violations = 0;
  double worst_weights = 0.0;
  for (std::size_t t = 0; t < options.bracket_instances; ++t) {
    const std::size_t n = 2 + rng.below(4);
    const std::size_t d = 1 + rng.below(2);
    const bool constant = t % 5 == 0;
    const RandomModel m = random_model(rng, d, constant);
    const RandomSet s = random_set(rng, m, n, d);
    const auto law = exact_set_law(s.x, s.y, m.model);
    const auto pm = matching_weights(s.x, s.y, m.model);
    const double gu = confounding_strength(s.x, s.y, m.model);
    const double gb = gamma_bar(s.x, s.y, m.model);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        if (j == k) continue;
        const double ratio = law[j] / law[k];
        const double base = pm[j] / pm[k];
        // Positive excess means the ratio left its bracket.
        const double excess = std::max({base / gu / ratio - 1.0, ratio / (base * gu) - 1.0, 1.0 / (gb * ratio) - 1.0,
                                        ratio / gb - 1.0});
        r.worst = std::max(r.worst, excess);
        if (excess > tol) ++violations;
      }
    }
    if (constant) {
      // No confounding: the law is the pure matching-quality law, and the
      // permanent-based weights must reproduce it.
      std::vector<Unit> units;
      for (std::size_t k = 0; k < n; ++k) units.push_back({s.x[k], 0.0, k == 0});
      std::vector<double> y(n);
      for (std::size_t k = 0; k < n; ++k) y[k] = s.y[(k + 1) % n];
      for (std::size_t k = 0; k < n; ++k) units[k].outcome = y[k];
      const StudyData data(units);
      MatchedDesign design;
      MatchedSet set;
      set.treated_count = 1;
      for (std::size_t k = 0; k < n; ++k) set.members.push_back(k);
      design.sets.push_back(set);
      const SetWeights sw = set_weights(design, data, ImputedControls{y}, m.model.density_model());
      for (std::size_t j = 0; j < n; ++j) {
        worst_weights = std::max(worst_weights, std::abs(sw.p_m[0][j] - law[j]));
        worst_weights = std::max(worst_weights, std::abs(pm[j] - law[j]));
      }
    }
    ++r.instances;
  }
  r.passed = violations == 0 && worst_weights < 1e-12;
  std::ostringstream out;
  out << violations << " bracket violations, worst relative excess " << r.worst << ", weight mismatch "
      << worst_weights;
  r.detail = out.str();
  return r;
}

CheckResult check_dominance(const SuiteOptions& options) {
  CheckResult r{"dominance_probe", true, 0, 0.0, ""};
  CounterRng rng(options.seed.child(0, 6));
  std::size_t violations = 0;
  std::size_t config = 0;
  r.worst = -std::numeric_limits<double>::infinity();
  struct Config {
    bool adaptive;
    double lambda;
  };
  const Config configs[] = {{false, 1.0}, {false, 2.0}, {false, 5.0}, {true, 1.0}, {true, 1.5}, {true, 3.0}};
  for (const bool pairs : {true, false}) {
    for (const Config& c : configs) {
      std::vector<ProbeSet> sets;
      const std::size_t I = pairs ? 6 : 4;
      for (std::size_t i = 0; i < I; ++i) {
        const std::size_t n = pairs ? 2 : 2 + rng.below(3);
        ProbeSet s;
        s.q.resize(n);
        for (auto& v : s.q) v = 2.0 * rng.uniform() - 1.0;
        std::sort(s.q.begin(), s.q.end());
        s.weights.assign(n, 1.0);
        if (c.adaptive) {
          for (auto& w : s.weights) w = 0.2 + rng.uniform();
        }
        s.observed_rank = rng.below(n);
        sets.push_back(std::move(s));
      }
      const DominanceReport rep = dominance_probe(sets, c.lambda, options.dominance_draws, options.seed.child(config++, 7));
      violations += rep.mean_violations + rep.variance_violations + rep.tail_violations;
      r.worst = std::max({r.worst, rep.worst_mean_slack, rep.worst_tail_slack});
      r.instances += rep.members;
    }
  }
  r.passed = violations == 0;
  std::ostringstream out;
  out << violations << " violations over " << config << " configurations, worst slack " << r.worst;
  r.detail = out.str();
  return r;
}

std::vector<CheckResult> run_suite(const SuiteOptions& options) {
  return {check_decomposition(options), check_pair_closed_form(options), check_pair_weights(options),
          check_unit_weights(options), check_set_brackets(options), check_dominance(options)};
}

nlohmann::json suite_to_json(const std::vector<CheckResult>& results) {
  nlohmann::json checks = nlohmann::json::array();
  bool all = true;
  for (const auto& c : results) {
    checks.push_back({{"name", c.name},
                      {"passed", c.passed},
                      {"instances", c.instances},
                      {"worst", c.worst},
                      {"detail", c.detail}});
    all = all && c.passed;
  }
  return {{"passed", all}, {"checks", std::move(checks)}};
}

}  // namespace permsens::oracle
