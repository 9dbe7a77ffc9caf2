#pragma once

#include <functional>
#include <span>
#include <string>

#include "permsens/density.hpp"

namespace permsens {

/// P(Z = 1 | X = x, Y(0) = y).
using PropensityFunction = std::function<double(std::span<const double> x, double y)>;

/// Data-generating truth: outcome density and outcome-dependent propensity.
struct TrueModel {
  DensityFunction density;
  PropensityFunction pi1;
  std::string label;
  /// Outcome window used when a normalizing integral over y is needed.
  double y_lo = -10.0;
  double y_hi = 10.0;

  double pi0(std::span<const double> x, double y) const { return 1.0 - pi1(x, y); }
  DensityModel density_model() const { return DensityModel(TrueDensity{density, label}); }
};

}  // namespace permsens
