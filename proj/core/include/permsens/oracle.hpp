#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "permsens/rng.hpp"
#include "permsens/truth.hpp"

// Brute-force references for tests and diagnostics. Nothing on the analysis
// path depends on this library.
namespace permsens::oracle {

inline constexpr std::size_t kMaxEnumerationSize = 8;

using Covariates = std::vector<std::vector<double>>;

/// Marginal law of the treated slot over sorted ranks, by enumerating all n!
/// assignments of outcomes to units.
std::vector<double> exact_set_law(const Covariates& x, const std::vector<double>& sorted_y0, const TrueModel& model);

/// p_mij = sum over assignments with the treated slot at rank j of the
/// product of densities, normalized.
std::vector<double> matching_weights(const Covariates& x, const std::vector<double>& sorted_y0,
                                     const TrueModel& model);

/// max over assignments of the propensity product divided by its minimum.
double confounding_strength(const Covariates& x, const std::vector<double>& sorted_y0, const TrueModel& model);

/// max over j != k, l >= 2 of R_ijkl.
double gamma_bar(const Covariates& x, const std::vector<double>& sorted_y0, const TrueModel& model);

struct Decomposition {
  double r = 0.0;    // conditional-density form
  double r_m = 0.0;  // matching quality
  double r_u = 0.0;  // confounding strength
  double relative_gap = 0.0;
};

/// R_i of a pair two ways: from the treatment-conditional densities, and as
/// the product R_mi * R_ui. `y` must be ascending.
Decomposition decomposition_identity(const std::vector<double>& x1, const std::vector<double>& x2,
                                     const std::vector<double>& y, const TrueModel& model);

/// One matched set for the dominance probe: ascending scores, base weights
/// and the rank the treated unit actually holds.
struct ProbeSet {
  std::vector<double> q;
  std::vector<double> weights;
  std::size_t observed_rank = 0;
};

struct DominanceReport {
  std::size_t members = 0;
  std::size_t mean_violations = 0;
  std::size_t variance_violations = 0;
  std::size_t tail_violations = 0;
  /// Largest member mean minus mu_i over all sets and members.
  double worst_mean_slack = 0.0;
  /// Largest member tail probability minus the engine's exact p-value.
  double worst_tail_slack = 0.0;
  double engine_pvalue = 0.0;
  double T = 0.0;
};

/// Samples members of the bounded-bias family (probabilities proportional to
/// weight * gamma_j with gamma_j in [1, lambda]), computes their exact laws
/// and checks them against the engine's worst case.
DominanceReport dominance_probe(const std::vector<ProbeSet>& sets, double lambda, std::size_t draws, SeedSpec seed);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::size_t instances = 0;
  double worst = 0.0;
  std::string detail;
};

struct SuiteOptions {
  SeedSpec seed{2024, 0};
  std::size_t decomposition_instances = 10000;
  std::size_t bracket_instances = 1000;
  std::size_t dominance_draws = 1000;
};

CheckResult check_decomposition(const SuiteOptions& options);
CheckResult check_pair_closed_form(const SuiteOptions& options);
CheckResult check_pair_weights(const SuiteOptions& options);
CheckResult check_unit_weights(const SuiteOptions& options);
CheckResult check_set_brackets(const SuiteOptions& options);
CheckResult check_dominance(const SuiteOptions& options);

std::vector<CheckResult> run_suite(const SuiteOptions& options);
nlohmann::json suite_to_json(const std::vector<CheckResult>& results);

}  // namespace permsens::oracle
