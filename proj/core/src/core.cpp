#include "permsens/core.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace permsens {

StudyData::StudyData(std::vector<Unit> units, std::vector<std::string> covariate_names)
    : units_(std::move(units)), names_(std::move(covariate_names)) {
  if (units_.empty()) throw InputError("study data is empty");
  dimension_ = units_.front().covariates.size();
  for (std::size_t i = 0; i < units_.size(); ++i) {
    if (units_[i].covariates.size() != dimension_) {
      throw InputError("unit " + std::to_string(i) + " has " +
                       std::to_string(units_[i].covariates.size()) +
                       " covariates, expected " + std::to_string(dimension_));
    }
  }
  if (names_.empty()) {
    for (std::size_t k = 0; k < dimension_; ++k) names_.push_back("x" + std::to_string(k + 1));
  }
  if (names_.size() != dimension_) throw InputError("covariate name count does not match dimension");
}

std::size_t StudyData::treated_count() const {
  return static_cast<std::size_t>(
      std::count_if(units_.begin(), units_.end(), [](const Unit& u) { return u.treated; }));
}

std::vector<double> StudyData::outcomes() const {
  std::vector<double> out;
  out.reserve(units_.size());
  for (const auto& u : units_) out.push_back(u.outcome);
  return out;
}

ImputedControls impute_controls(const StudyData& data, SharpNull null) {
  ImputedControls result;
  result.y0.reserve(data.size());
  for (const auto& u : data.units()) {
    result.y0.push_back(u.treated ? u.outcome - null.effect : u.outcome);
  }
  return result;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    auto b = cell.find_first_not_of(" \t\r");
    auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string where(std::size_t row, const std::string& column) {
  return "row " + std::to_string(row) + ", column '" + column + "'";
}

double parse_real(const std::string& cell, std::size_t row, const std::string& column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc{} || ptr != last || !std::isfinite(v)) {
    throw InputError("non-numeric or non-finite value '" + cell + "' at " + where(row, column));
  }
  return v;
}

}  // namespace

StudyData load_study(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open input file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty file: " + path.string());
  auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t k = 0; k < header.size(); ++k) col[header[k]] = k;

  auto lookup = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw InputError("missing column '" + name + "' in " + path.string());
    return it->second;
  };
  std::vector<std::size_t> xcols;
  for (const auto& name : schema.covariates) xcols.push_back(lookup(name));
  const std::size_t ycol = lookup(schema.outcome);
  const std::size_t zcol = lookup(schema.treatment);

  std::vector<Unit> units;
  std::size_t row = 1;  // header is row 1
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    auto cell = [&](std::size_t k, const std::string& name) -> const std::string& {
      if (k >= cells.size()) throw InputError("missing value at " + where(row, name));
      return cells[k];
    };
    Unit u;
    for (std::size_t k = 0; k < xcols.size(); ++k) {
      u.covariates.push_back(parse_real(cell(xcols[k], schema.covariates[k]), row, schema.covariates[k]));
    }
    u.outcome = parse_real(cell(ycol, schema.outcome), row, schema.outcome);
    const auto& z = cell(zcol, schema.treatment);
    if (z == "1") {
      u.treated = true;
    } else if (z == "0") {
      u.treated = false;
    } else {
      throw InputError("treatment value '" + z + "' is not 0/1 at " + where(row, schema.treatment));
    }
    units.push_back(std::move(u));
  }
  if (units.empty()) throw InputError("no data rows in " + path.string());
  return StudyData(std::move(units), schema.covariates);
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

void save_study(const StudyData& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write file: " + path.string());
  for (const auto& name : data.covariate_names()) out << name << ',';
  out << "y,z\n";
  for (const auto& u : data.units()) {
    for (double x : u.covariates) out << format_double(x) << ',';
    out << format_double(u.outcome) << ',' << (u.treated ? 1 : 0) << '\n';
  }
}

std::vector<std::size_t> stable_rank_order(std::span<const std::size_t> members,
                                           std::span<const double> values) {
  std::vector<std::size_t> order(members.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[members[a]] < values[members[b]];
  });
  return order;
}

std::uint64_t design_fingerprint(const StudyData& data) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& u : data.units()) {
    for (double x : u.covariates) mix(&x, sizeof x);
    const unsigned char z = u.treated ? 1 : 0;
    mix(&z, 1);
  }
  return h;
}

}  // namespace permsens
