#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace permsens {

/// Raised for malformed inputs: bad files, contract violations, inconsistent
/// configuration. The CLI maps it to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Unit {
  std::vector<double> covariates;
  double outcome = 0.0;
  bool treated = false;
};

/// The pre-matching pool. Every unit carries `dimension` covariates.
class StudyData {
 public:
  StudyData() = default;
  StudyData(std::vector<Unit> units, std::vector<std::string> covariate_names = {});

  std::size_t size() const { return units_.size(); }
  std::size_t dimension() const { return dimension_; }
  const std::vector<Unit>& units() const { return units_; }
  const Unit& operator[](std::size_t i) const { return units_[i]; }
  const std::vector<std::string>& covariate_names() const { return names_; }

  std::size_t treated_count() const;
  std::size_t control_count() const { return size() - treated_count(); }

  std::vector<double> outcomes() const;

 private:
  std::vector<Unit> units_;
  std::vector<std::string> names_;
  std::size_t dimension_ = 0;
};

/// H_c : Y(1) - Y(0) = c for every unit. c = 0 is Fisher's sharp null.
struct SharpNull {
  double effect = 0.0;
};

/// Control potential outcomes aligned with StudyData order.
struct ImputedControls {
  std::vector<double> y0;
};

ImputedControls impute_controls(const StudyData& data, SharpNull null);

struct CsvSchema {
  std::vector<std::string> covariates;
  std::string outcome = "y";
  std::string treatment = "z";
};

StudyData load_study(const std::filesystem::path& path, const CsvSchema& schema);

/// Writes a header row `x1..xd,y,z` (or the stored covariate names) using the
/// shortest round-trip representation of every double.
void save_study(const StudyData& data, const std::filesystem::path& path);

/// Indices of `values[members[k]]` in ascending order; ties keep member order.
std::vector<std::size_t> stable_rank_order(std::span<const std::size_t> members,
                                           std::span<const double> values);

/// FNV-1a over the bytes of (X, Z); outcomes never enter.
std::uint64_t design_fingerprint(const StudyData& data);

std::string format_double(double v);

}  // namespace permsens
