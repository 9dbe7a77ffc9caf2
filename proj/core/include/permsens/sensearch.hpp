#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "permsens/density.hpp"
#include "permsens/rng.hpp"
#include "permsens/scores.hpp"

namespace permsens {

enum class SensitivityMode { uniform, adaptive };
enum class Alternative { upper, lower, two_sided };
enum class Method { gaussian, exact, monte_carlo };

struct MonteCarloSpec {
  std::size_t draws = 10000;
  SeedSpec seed{};
};

/// At most a fraction 1 - level of the sets may exceed `value`.
struct QuantileBound {
  double level = 1.0;
  double value = 1.0;
};

struct SensitivitySpec {
  SensitivityMode mode = SensitivityMode::uniform;
  /// Gamma in uniform mode, Lambda in adaptive mode.
  double gamma = 1.0;
  std::optional<PairQuality> pair_quality;
  std::optional<SetWeights> set_weights;
  std::optional<QuantileBound> quantile;
  Alternative alternative = Alternative::upper;
  Method method = Method::gaussian;
  MonteCarloSpec monte_carlo{};

  void validate() const;
};

struct SetBound {
  double mu = 0.0;
  double nu = 0.0;
  /// Number of lowest-ranked scores left at base weight (1-based, n = none boosted).
  std::size_t split = 0;
  /// mu_il for every split l = 1..n.
  std::vector<double> mu_by_split;
};

/// Worst-case mean and variance of one set's contribution when each
/// probability may be inflated by up to `lambda` relative to `weights`.
/// q must be ascending with weights aligned to it.
SetBound worst_case_set_bound(std::span<const double> q, std::span<const double> weights, double lambda);

/// Worst-case law of one pair: (P(rank 1), P(rank 2)) for the scores at
/// ranks 1 and 2 of the control outcome.
std::array<double, 2> adaptive_pair_probabilities(double q1, double q2, double r_m, double lambda);

struct WorstCaseReport {
  std::vector<double> mu;
  std::vector<double> nu;
  std::vector<std::size_t> split;
  double M = 0.0;
  double V = 0.0;
  double T = 0.0;
  double p_value = 1.0;
  /// One-sided components when the alternative is two-sided.
  std::optional<double> p_upper;
  std::optional<double> p_lower;
  SensitivityMode mode = SensitivityMode::uniform;
  Alternative alternative = Alternative::upper;
  Method method = Method::gaussian;
  double gamma = 1.0;
  std::optional<QuantileBound> quantile;
  /// Sets treated as unbounded by the quantile bound.
  std::vector<std::size_t> unbounded;
  std::vector<std::size_t> floored;
  std::vector<std::size_t> label_switched;
};

/// Gaussian upper tail: P(N(M, V) >= T), with the V = 0 case resolved to 0/1.
double gaussian_tail(double T, double M, double V);

WorstCaseReport uniform_pvalue(const ScoreTable& table, const SensitivitySpec& spec);
WorstCaseReport adaptive_pair_pvalue(const ScoreTable& table, const PairQuality& quality, const SensitivitySpec& spec);
WorstCaseReport adaptive_pair_pvalue(const ScoreTable& table, const PairQuality& quality, double lambda);
WorstCaseReport adaptive_set_pvalue(const ScoreTable& table, const SetWeights& weights, const SensitivitySpec& spec);
WorstCaseReport adaptive_set_pvalue(const ScoreTable& table, const SetWeights& weights, double lambda);
WorstCaseReport quantile_bound_pvalue(const ScoreTable& table, const SensitivitySpec& spec);

/// Dispatches on spec.mode, spec.quantile and the available weights.
WorstCaseReport sensitivity_pvalue(const ScoreTable& table, const SensitivitySpec& spec);

/// Exact-enumeration limit on the number of joint outcomes.
inline constexpr double kMaxExactOutcomes = 1048576.0;

std::string to_string(SensitivityMode mode);
std::string to_string(Alternative alternative);
std::string to_string(Method method);
SensitivityMode parse_mode(const std::string& text);
Alternative parse_alternative(const std::string& text);
Method parse_method(const std::string& text);

nlohmann::json report_to_json(const WorstCaseReport& report);
/// Fixed-field one-line summary.
std::string report_summary(const WorstCaseReport& report);

}  // namespace permsens
