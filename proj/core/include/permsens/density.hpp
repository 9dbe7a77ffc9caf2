#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "permsens/core.hpp"
#include "permsens/matcher.hpp"

namespace permsens {

/// Densities below this value are treated as this value before any ratio.
inline constexpr double kDensityFloor = 1e-300;

struct GaussianLinearModel {
  double intercept = 0.0;
  std::vector<double> slope;
  double sigma = 1.0;
  /// The residual variance was non-positive and sigma sits on its floor.
  bool sigma_floored = false;
};

struct KernelModel {
  std::vector<std::vector<double>> x;  // training covariates
  std::vector<double> y0;              // training control outcomes
  std::vector<double> x_bandwidth;
  double y_bandwidth = 1.0;
};

/// Closed-form conditional density p(y | x) supplied by the caller.
using DensityFunction = std::function<double(double y, std::span<const double> x)>;

struct TrueDensity {
  DensityFunction density;
  std::string label;
};

/// Estimated (or known) conditional density of Y(0) given X.
class DensityModel {
 public:
  using Params = std::variant<GaussianLinearModel, KernelModel, TrueDensity>;

  explicit DensityModel(Params params, std::uint64_t training_fingerprint = 0);

  /// p(y | x), never negative.
  double evaluate(double y, std::span<const double> x) const;

  /// Density in y at a fixed x; the kernel model caches its covariate
  /// weights so that several y values cost one pass over the training data.
  std::function<double(double)> at(std::span<const double> x) const;

  const Params& params() const { return params_; }
  std::string kind() const;
  std::uint64_t training_fingerprint() const { return fingerprint_; }

 private:
  Params params_;
  std::uint64_t fingerprint_ = 0;
};

DensityModel fit_parametric(const StudyData& external, SharpNull null);
/// Same fit on caller-supplied control outcomes (e.g. covariate adjusted).
DensityModel fit_parametric(const StudyData& external, std::span<const double> y0);

DensityModel fit_kernel(const StudyData& external, SharpNull null,
                        const std::vector<double>& bandwidths = {});
/// `bandwidths`, when given, holds d covariate bandwidths followed by the
/// outcome bandwidth. Defaults: Silverman per covariate, and Silverman on the
/// residuals of a linear fit for the outcome.
DensityModel fit_kernel(const StudyData& external, std::span<const double> y0,
                        const std::vector<double>& bandwidths = {});

/// Silverman's rule 1.06 * sd * n^(-1/5).
double silverman_bandwidth(std::span<const double> values);

struct PairQuality {
  std::vector<double> r_m;
  /// Pairs where a density evaluation hit kDensityFloor.
  std::vector<std::size_t> floored;
};

/// Estimated matching quality of each pair:
///   [p(y_(2)|x_1) / p(y_(2)|x_2)] / [p(y_(1)|x_1) / p(y_(1)|x_2)].
PairQuality pair_quality(const MatchedDesign& design, const StudyData& data, const ImputedControls& y0,
                         const DensityModel& model);

struct SetWeights {
  /// Per set, weights aligned with sorted ranks, summing to one.
  std::vector<std::vector<double>> p_m;
  std::vector<std::size_t> floored;
};

inline constexpr std::size_t kMaxExactSetSize = 10;

/// p_m(j) proportional to p(y_(j) | x_1) * perm(M without rank j), where
/// M[k][l] = p(y_(l) | x_k) over the remaining members.
SetWeights set_weights(const MatchedDesign& design, const StudyData& data, const ImputedControls& y0,
                       const DensityModel& model);

/// Permanent of a square matrix (row-major, n x n) by Ryser's formula with
/// Gray-code updates. n <= 20.
double permanent(std::span<const double> matrix, std::size_t n);

/// OLS fit f(x) = intercept + slope^T x on external control outcomes.
struct Adjustment {
  double intercept = 0.0;
  std::vector<double> slope;

  double operator()(std::span<const double> x) const;
  /// y0 - f(x) for every unit of `data`.
  ImputedControls apply(const StudyData& data, const ImputedControls& y0) const;
};

Adjustment fit_adjustment(const StudyData& external, SharpNull null);
Adjustment fit_adjustment(const StudyData& external, std::span<const double> y0);

nlohmann::json density_to_json(const DensityModel& model);

}  // namespace permsens
