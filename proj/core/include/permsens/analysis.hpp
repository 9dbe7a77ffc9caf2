#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "permsens/density.hpp"
#include "permsens/sensearch.hpp"

namespace permsens {

enum class DensitySource { none, parametric, kernel, true_model };

/// Everything needed to go from (data, design, hypothesized effect) to a
/// p-value. Weights are filled in by the pipeline.
struct AnalysisConfig {
  SharpNull null{};
  PsiSpec psi{};
  ScaleMode scale_mode = ScaleMode::pooled;
  SensitivitySpec spec{};
  DensitySource density = DensitySource::none;
  /// External sample for density fits and covariate adjustment.
  std::optional<StudyData> external;
  /// Kernel bandwidths (d covariates then outcome); empty means Silverman.
  std::vector<double> bandwidths;
  /// Known density for DensitySource::true_model.
  std::optional<DensityModel> true_model;
  /// Regress external control outcomes on covariates and analyze residuals.
  bool adjust = false;
};

WorstCaseReport run_analysis(const StudyData& data, const MatchedDesign& design, const AnalysisConfig& config);

struct ConfidenceInterval {
  bool empty = true;
  double lower = 0.0;
  double upper = 0.0;
  /// The interval reaches the end of the grid, so the true bound may lie beyond.
  bool open_lower = false;
  bool open_upper = false;
  /// Some grid point between lower and upper was rejected.
  bool gaps = false;
  double level = 0.95;
  std::vector<double> grid;
  std::vector<double> p_upper;
  std::vector<double> p_lower;
  std::vector<bool> rejected;
};

/// Reject c when min(1, 2 * min(p_upper(c), p_lower(c))) <= alpha.
ConfidenceInterval invert_tests(const StudyData& data, const MatchedDesign& design, const AnalysisConfig& config,
                                double alpha, const std::vector<double>& grid);

/// Evenly spaced points from `from` to `to` inclusive.
std::vector<double> make_grid(double from, double to, double step);

nlohmann::json interval_to_json(const ConfidenceInterval& ci);

}  // namespace permsens
