#include "permsens/density.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace permsens {

namespace {

constexpr double kSigmaFloor = 1e-8;
const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

double gaussian_pdf(double z, double sd) { return kInvSqrt2Pi / sd * std::exp(-0.5 * (z / sd) * (z / sd)); }

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

struct OlsFit {
  double intercept = 0.0;
  std::vector<double> slope;
  double rss = 0.0;
};

OlsFit ordinary_least_squares(const StudyData& data, std::span<const double> y0) {
  const std::size_t n = data.size();
  const std::size_t d = data.dimension();
  if (y0.size() != n) throw InputError("outcome vector does not match the external sample");
  if (n <= d + 2) throw InputError("external sample of size " + std::to_string(n) + " is too small for " +
                                   std::to_string(d) + " covariates");
  Eigen::MatrixXd design(n, d + 1);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    design(static_cast<Eigen::Index>(i), 0) = 1.0;
    for (std::size_t k = 0; k < d; ++k) design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k + 1)) = data[i].covariates[k];
    y(static_cast<Eigen::Index>(i)) = y0[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < static_cast<Eigen::Index>(d + 1)) {
    throw InputError("regression design matrix is rank deficient");
  }
  Eigen::VectorXd beta = qr.solve(y);
  OlsFit fit;
  fit.intercept = beta(0);
  for (std::size_t k = 0; k < d; ++k) fit.slope.push_back(beta(static_cast<Eigen::Index>(k + 1)));
  fit.rss = (y - design * beta).squaredNorm();
  return fit;
}

double linear_mean(double intercept, const std::vector<double>& slope, std::span<const double> x) {
  double m = intercept;
  for (std::size_t k = 0; k < slope.size(); ++k) m += slope[k] * x[k];
  return m;
}

}  // namespace

DensityModel::DensityModel(Params params, std::uint64_t training_fingerprint)
    : params_(std::move(params)), fingerprint_(training_fingerprint) {
  std::visit(overloaded{[](const GaussianLinearModel& g) {
                          if (!(g.sigma > 0.0)) throw InputError("gaussian model needs sigma > 0");
                        },
                        [](const KernelModel& k) {
                          if (!(k.y_bandwidth > 0.0)) throw InputError("kernel bandwidths must be positive");
                          for (double h : k.x_bandwidth) {
                            if (!(h > 0.0)) throw InputError("kernel bandwidths must be positive");
                          }
                          if (k.x.size() != k.y0.size() || k.x.empty()) throw InputError("kernel model has no training data");
                        },
                        [](const TrueDensity& t) {
                          if (!t.density) throw InputError("true density evaluator is empty");
                        }},
             params_);
}

std::string DensityModel::kind() const {
  return std::visit(overloaded{[](const GaussianLinearModel&) { return std::string("parametric"); },
                               [](const KernelModel&) { return std::string("kernel"); },
                               [](const TrueDensity&) { return std::string("true-model"); }},
                    params_);
}

std::function<double(double)> DensityModel::at(std::span<const double> x) const {
  return std::visit(
      overloaded{
          [&](const GaussianLinearModel& g) -> std::function<double(double)> {
            const double mean = linear_mean(g.intercept, g.slope, x);
            const double sigma = g.sigma;
            return [mean, sigma](double y) { return gaussian_pdf(y - mean, sigma); };
          },
          [&](const KernelModel& k) -> std::function<double(double)> {
            // Log weights shifted by their maximum so far-away x does not underflow the ratio.
            const std::size_t n = k.x.size();
            std::vector<double> w(n);
            double top = -std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < n; ++l) {
              double lw = 0.0;
              for (std::size_t c = 0; c < x.size(); ++c) {
                const double z = (x[c] - k.x[l][c]) / k.x_bandwidth[c];
                lw -= 0.5 * z * z;
              }
              w[l] = lw;
              top = std::max(top, lw);
            }
            double total = 0.0;
            for (double& v : w) {
              v = std::exp(v - top);
              total += v;
            }
            total = std::max(total, 1e-12 * static_cast<double>(n));
            const double hy = k.y_bandwidth;
            const KernelModel* model = &k;
            return [w = std::move(w), total, hy, model](double y) {
              double acc = 0.0;
              for (std::size_t l = 0; l < w.size(); ++l) {
                if (w[l] != 0.0) acc += w[l] * gaussian_pdf(y - model->y0[l], hy);
              }
              return acc / total;
            };
          },
          [&](const TrueDensity& t) -> std::function<double(double)> {
            std::vector<double> xs(x.begin(), x.end());
            const DensityFunction* f = &t.density;
            return [xs = std::move(xs), f](double y) { return std::max(0.0, (*f)(y, xs)); };
          }},
      params_);
}

double DensityModel::evaluate(double y, std::span<const double> x) const { return at(x)(y); }

DensityModel fit_parametric(const StudyData& external, std::span<const double> y0) {
  const OlsFit fit = ordinary_least_squares(external, y0);
  GaussianLinearModel g;
  g.intercept = fit.intercept;
  g.slope = fit.slope;
  const double dof = static_cast<double>(external.size() - external.dimension() - 1);
  const double var = fit.rss / dof;
  g.sigma = std::sqrt(std::max(var, 0.0));
  if (!(var > 0.0) || g.sigma < kSigmaFloor) {
    g.sigma = kSigmaFloor;
    g.sigma_floored = true;
  }
  return DensityModel(std::move(g), design_fingerprint(external));
}

DensityModel fit_parametric(const StudyData& external, SharpNull null) {
  return fit_parametric(external, impute_controls(external, null).y0);
}

double silverman_bandwidth(std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  if (values.size() < 2) throw InputError("bandwidth needs at least two values");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return 1.06 * sd * std::pow(n, -0.2);
}

DensityModel fit_kernel(const StudyData& external, std::span<const double> y0, const std::vector<double>& bandwidths) {
  if (external.size() < 10) throw InputError("kernel density needs at least 10 external units");
  if (y0.size() != external.size()) throw InputError("outcome vector does not match the external sample");
  KernelModel k;
  k.y0.assign(y0.begin(), y0.end());
  for (const auto& u : external.units()) k.x.push_back(u.covariates);
  const std::size_t d = external.dimension();
  if (!bandwidths.empty()) {
    if (bandwidths.size() != d + 1) throw InputError("kernel needs one bandwidth per covariate plus one for the outcome");
    k.x_bandwidth.assign(bandwidths.begin(), bandwidths.begin() + static_cast<std::ptrdiff_t>(d));
    k.y_bandwidth = bandwidths.back();
  } else {
    std::vector<double> col(external.size());
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t l = 0; l < external.size(); ++l) col[l] = external[l].covariates[c];
      k.x_bandwidth.push_back(silverman_bandwidth(col));
    }
    // Outcome bandwidth from the spread around a linear fit: the conditional, not marginal, scale.
    const OlsFit fit = ordinary_least_squares(external, y0);
    std::vector<double> resid(external.size());
    for (std::size_t l = 0; l < external.size(); ++l) {
      resid[l] = y0[l] - linear_mean(fit.intercept, fit.slope, external[l].covariates);
    }
    k.y_bandwidth = silverman_bandwidth(resid);
  }
  for (double h : k.x_bandwidth) {
    if (!(h > 0.0)) throw InputError("zero kernel bandwidth (constant covariate?)");
  }
  if (!(k.y_bandwidth > 0.0)) throw InputError("zero kernel bandwidth (constant outcome?)");
  return DensityModel(std::move(k), design_fingerprint(external));
}

DensityModel fit_kernel(const StudyData& external, SharpNull null, const std::vector<double>& bandwidths) {
  return fit_kernel(external, impute_controls(external, null).y0, bandwidths);
}

PairQuality pair_quality(const MatchedDesign& design, const StudyData& data, const ImputedControls& y0,
                         const DensityModel& model) {
  if (!design.is_pair_design()) throw InputError("pair_quality needs a pair design");
  PairQuality out;
  out.r_m.reserve(design.size());
  for (std::size_t i = 0; i < design.size(); ++i) {
    const auto& s = design.sets[i];
    const double a = y0.y0[s.members[0]];
    const double b = y0.y0[s.members[1]];
    const double lo = std::min(a, b);
    const double hi = std::max(a, b);
    const auto p1 = model.at(data[s.members[0]].covariates);
    const auto p2 = model.at(data[s.members[1]].covariates);
    double v[4] = {p1(hi), p2(hi), p1(lo), p2(lo)};
    bool floored = false;
    for (double& d : v) {
      if (d < kDensityFloor) {
        d = kDensityFloor;
        floored = true;
      }
    }
    if (floored) out.floored.push_back(i);
    out.r_m.push_back((v[0] / v[1]) / (v[2] / v[3]));
  }
  return out;
}

double permanent(std::span<const double> matrix, std::size_t n) {
  if (matrix.size() != n * n) throw InputError("permanent needs a square matrix");
  if (n == 0) return 1.0;
  if (n > 20) throw InputError("permanent limited to 20 x 20");
  std::vector<double> row_sum(n, 0.0);
  double total = 0.0;
  std::uint32_t gray = 0;
  const std::uint32_t count = 1u << n;
  for (std::uint32_t step = 1; step < count; ++step) {
    const std::uint32_t next = step ^ (step >> 1);
    const std::uint32_t changed = next ^ gray;
    const std::size_t col = static_cast<std::size_t>(std::countr_zero(changed));
    const double sign = (next & changed) ? 1.0 : -1.0;
    for (std::size_t r = 0; r < n; ++r) row_sum[r] += sign * matrix[r * n + col];
    gray = next;
    double prod = 1.0;
    for (double s : row_sum) prod *= s;
    const bool odd = (std::popcount(gray) % 2) == 1;
    total += odd ? -prod : prod;
  }
  return (n % 2 == 1) ? -total : total;
}

SetWeights set_weights(const MatchedDesign& design, const StudyData& data, const ImputedControls& y0,
                       const DensityModel& model) {
  SetWeights out;
  out.p_m.reserve(design.size());
  for (std::size_t i = 0; i < design.size(); ++i) {
    const auto& s = design.sets[i];
    const std::size_t n = s.size();
    if (n > kMaxExactSetSize) {
      throw InputError("matched set " + std::to_string(i) + " has " + std::to_string(n) +
                       " units; exact weights support at most " + std::to_string(kMaxExactSetSize) +
                       " (use pair or small-set designs)");
    }
    const auto order = stable_rank_order(s.members, y0.y0);
    // dens[k * n + l] = p(y_(l) | x_k), k over members, l over sorted ranks.
    std::vector<double> dens(n * n);
    bool floored = false;
    for (std::size_t k = 0; k < n; ++k) {
      const auto pk = model.at(data[s.members[k]].covariates);
      for (std::size_t l = 0; l < n; ++l) {
        double v = pk(y0.y0[s.members[order[l]]]);
        if (v < kDensityFloor) {
          v = kDensityFloor;
          floored = true;
        }
        dens[k * n + l] = v;
      }
    }
    if (floored) out.floored.push_back(i);
    std::vector<double> w(n);
    std::vector<double> minor((n - 1) * (n - 1));
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t idx = 0;
      for (std::size_t k = 1; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) {
          if (l != j) minor[idx++] = dens[k * n + l];
        }
      }
      w[j] = dens[j] * permanent(minor, n - 1);
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(total > 0.0) || !std::isfinite(total)) {
      std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
    } else {
      for (auto& v : w) v /= total;
    }
    out.p_m.push_back(std::move(w));
  }
  return out;
}

double Adjustment::operator()(std::span<const double> x) const { return linear_mean(intercept, slope, x); }

ImputedControls Adjustment::apply(const StudyData& data, const ImputedControls& y0) const {
  ImputedControls out;
  out.y0.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out.y0.push_back(y0.y0[i] - (*this)(data[i].covariates));
  return out;
}

Adjustment fit_adjustment(const StudyData& external, std::span<const double> y0) {
  const OlsFit fit = ordinary_least_squares(external, y0);
  return {fit.intercept, fit.slope};
}

Adjustment fit_adjustment(const StudyData& external, SharpNull null) {
  return fit_adjustment(external, impute_controls(external, null).y0);
}

nlohmann::json density_to_json(const DensityModel& model) {
  std::ostringstream fp;
  fp << std::hex << model.training_fingerprint();
  nlohmann::json j = {{"kind", model.kind()}, {"training_fingerprint", fp.str()}};
  std::visit(overloaded{[&](const GaussianLinearModel& g) {
                          j["intercept"] = g.intercept;
                          j["slope"] = g.slope;
                          j["sigma"] = g.sigma;
                          j["sigma_floored"] = g.sigma_floored;
                        },
                        [&](const KernelModel& k) {
                          j["x_bandwidth"] = k.x_bandwidth;
                          j["y_bandwidth"] = k.y_bandwidth;
                          j["training_size"] = k.y0.size();
                        },
                        [&](const TrueDensity& t) { j["label"] = t.label; }},
             model.params());
  return j;
}

}  // namespace permsens
