#include "permsens/analysis.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace permsens {

namespace {

DensityModel fit_density(const AnalysisConfig& config, std::span<const double> external_y0) {
  switch (config.density) {
    case DensitySource::parametric:
      return fit_parametric(*config.external, external_y0);
    case DensitySource::kernel:
      return fit_kernel(*config.external, external_y0, config.bandwidths);
    case DensitySource::true_model:
      return *config.true_model;
    case DensitySource::none:
      break;
  }
  throw InputError("adaptive mode needs a density source (external data or a true model)");
}

void check(const AnalysisConfig& config) {
  const bool needs_external =
      config.adjust || config.density == DensitySource::parametric || config.density == DensitySource::kernel;
  if (needs_external && !config.external) throw InputError("this analysis needs an external sample");
  if (config.density == DensitySource::true_model && !config.true_model) {
    throw InputError("true-model density requested but none supplied");
  }
  if (config.spec.mode == SensitivityMode::adaptive && config.density == DensitySource::none) {
    throw InputError("adaptive mode needs --external or a true model");
  }
}

}  // namespace

WorstCaseReport run_analysis(const StudyData& data, const MatchedDesign& design, const AnalysisConfig& config) {
  check(config);
  ImputedControls y0 = impute_controls(data, config.null);
  std::vector<double> external_y0;
  if (config.external) external_y0 = impute_controls(*config.external, config.null).y0;
  if (config.adjust) {
    const Adjustment f = fit_adjustment(*config.external, external_y0);
    y0 = f.apply(data, y0);
    external_y0 = f.apply(*config.external, ImputedControls{external_y0}).y0;
  }
  const ScoreTable table = apply_label_switch(m_scores(design, y0, config.psi, config.scale_mode));

  SensitivitySpec spec = config.spec;
  spec.pair_quality.reset();
  spec.set_weights.reset();
  if (spec.mode == SensitivityMode::adaptive) {
    const DensityModel model = fit_density(config, external_y0);
    if (design.is_pair_design()) {
      spec.pair_quality = pair_quality(design, data, y0, model);
    } else {
      spec.set_weights = set_weights(design, data, y0, model);
    }
  }
  return sensitivity_pvalue(table, spec);
}

ConfidenceInterval invert_tests(const StudyData& data, const MatchedDesign& design, const AnalysisConfig& config,
                                double alpha, const std::vector<double>& grid) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InputError("alpha must lie in (0, 1]");
  if (grid.empty()) throw InputError("inversion grid is empty");
  for (double c : grid) {
    if (!std::isfinite(c)) throw InputError("inversion grid must be finite");
  }
  if (!std::is_sorted(grid.begin(), grid.end())) throw InputError("inversion grid must be sorted");

  ConfidenceInterval ci;
  ci.level = 1.0 - alpha;
  ci.grid = grid;
  AnalysisConfig cfg = config;
  cfg.spec.alternative = Alternative::two_sided;
  std::vector<std::size_t> kept;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    cfg.null = SharpNull{grid[g]};
    const WorstCaseReport r = run_analysis(data, design, cfg);
    ci.p_upper.push_back(*r.p_upper);
    ci.p_lower.push_back(*r.p_lower);
    const bool reject = r.p_value <= alpha;
    ci.rejected.push_back(reject);
    if (!reject) kept.push_back(g);
  }
  if (kept.empty()) return ci;
  ci.empty = false;
  ci.lower = grid[kept.front()];
  ci.upper = grid[kept.back()];
  ci.open_lower = kept.front() == 0;
  ci.open_upper = kept.back() + 1 == grid.size();
  ci.gaps = kept.back() - kept.front() + 1 != kept.size();
  return ci;
}

std::vector<double> make_grid(double from, double to, double step) {
  if (!(step > 0.0) || !(to >= from)) throw InputError("grid needs step > 0 and to >= from");
  const auto count = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9)) + 1;
  std::vector<double> grid(count);
  for (std::size_t g = 0; g < count; ++g) grid[g] = from + static_cast<double>(g) * step;
  return grid;
}

nlohmann::json interval_to_json(const ConfidenceInterval& ci) {
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t g = 0; g < ci.grid.size(); ++g) {
    points.push_back({{"c", ci.grid[g]}, {"p_upper", ci.p_upper[g]}, {"p_lower", ci.p_lower[g]},
                      {"rejected", static_cast<bool>(ci.rejected[g])}});
  }
  nlohmann::json j = {{"level", ci.level}, {"empty", ci.empty}, {"grid", std::move(points)}};
  if (ci.empty) {
    j["lower"] = nullptr;
    j["upper"] = nullptr;
  } else {
    j["lower"] = ci.lower;
    j["upper"] = ci.upper;
    j["open_lower"] = ci.open_lower;
    j["open_upper"] = ci.open_upper;
    j["gaps"] = ci.gaps;
  }
  return j;
}

}  // namespace permsens
