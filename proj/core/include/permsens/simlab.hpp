#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "permsens/analysis.hpp"
#include "permsens/matcher.hpp"
#include "permsens/rng.hpp"
#include "permsens/truth.hpp"

namespace permsens::simlab {

/// eq11: X ~ U(0,1), Y(0) | X ~ N(X, 0.2^2), P(Z=1 | X) = 0.2 + 0.5 X, no effect.
/// a2:   Y(0) | X ~ N(2X, 0.2^2), logit P(Z=1 | X, Y(0)) = -1 + 0.5 X + 0.5 Y(0).
/// a4, a5: eq11 and a2 with a constant effect of 1.
enum class ModelId { eq11, a2, a4, a5 };

struct GenModel {
  ModelId id = ModelId::eq11;
  std::size_t n = 1000;
};

ModelId parse_model(const std::string& name);
std::string to_string(ModelId id);
/// Treatment assignment depends on Y(0) given X.
bool is_confounded(ModelId id);
double true_effect(ModelId id);
TrueModel true_model(ModelId id);

struct HiddenTruth {
  std::vector<double> y0;
  TrueModel model;
};

struct GeneratedStudy {
  StudyData data;
  HiddenTruth truth;
};

GeneratedStudy generate(const GenModel& model, SeedSpec seed);

struct PairBias {
  double r = 1.0;
  double r_m = 1.0;
  double r_u = 1.0;
  double gamma = 1.0;
  double gamma_u = 1.0;
};

std::vector<PairBias> true_bias_stats(const MatchedDesign& design, const StudyData& data, const HiddenTruth& truth);

struct BiasSummary {
  double max_gamma = 1.0;
  double q80_gamma = 1.0;
  double median_gamma = 1.0;
  double max_gamma_u = 1.0;
};

BiasSummary summarize_bias(const std::vector<PairBias>& pairs);

/// Sample quantile, linear interpolation between order statistics (type 7).
double quantile(std::vector<double> values, double p);

enum class PipelineKind { rand, sen_max, sen_quantile, sen_ui, adapt_true, adapt_para, adapt_ker, adapt_ker_relaxed };

struct PipelineSpec {
  PipelineKind kind = PipelineKind::rand;
  /// Lambda multiplier of the relaxed kernel variant.
  double relax_factor = 1.0;
  bool caliper = false;
  std::size_t external_n = 1000;
  double quantile_level = 0.8;

  std::string name() const;
};

/// Accepts rand, sen-max, sen-quantile, sen-ui, adapt.true, adapt.para,
/// adapt.ker and adapt.ker-relaxed(F); a "+caliper" suffix turns the caliper on.
PipelineSpec parse_pipeline(const std::string& text);
std::vector<std::string> pipeline_names();
std::vector<std::string> model_names();

struct StudyOptions {
  GenModel model{};
  std::vector<PipelineSpec> pipelines;
  std::size_t replications = 200;
  SeedSpec seed{};
  unsigned threads = 1;
  PsiSpec psi{};
  SharpNull null{};
  /// Test hook: replace the hidden truth with garbage before any pipeline runs.
  bool corrupt_truth = false;
};

struct PvalueRow {
  std::size_t rep = 0;
  std::string pipeline;
  double p = 0.0;
  double lambda = 1.0;
  std::size_t pairs = 0;
  bool ok = true;
  std::string error;
};

struct BiasRow {
  std::size_t rep = 0;
  std::size_t pairs = 0;
  BiasSummary all;
  bool ok = true;
};

struct PvalueStudy {
  StudyOptions options;
  std::vector<PvalueRow> rows;  // by replication, then pipeline order
  std::vector<BiasRow> bias;    // matched design without caliper
};

PvalueStudy run_pipelines(const StudyOptions& options);

/// Single pipeline convenience wrapper.
PvalueStudy run_pipeline(const GenModel& model, const PipelineSpec& pipeline, SharpNull null, std::size_t replications,
                         SeedSpec seed, unsigned threads = 1);

struct InversionOptions {
  GenModel model{ModelId::a4, 1000};
  PipelineSpec pipeline{PipelineKind::adapt_para};
  double alpha = 0.05;
  std::vector<double> grid;
  std::size_t replications = 200;
  SeedSpec seed{};
  unsigned threads = 1;
  PsiSpec psi{};
};

struct InversionRow {
  std::size_t rep = 0;
  bool ok = true;
  std::string error;
  bool empty = true;
  double lower = 0.0;
  double upper = 0.0;
  bool open_lower = false;
  bool open_upper = false;
  bool covered = false;
  double lambda = 1.0;
};

struct InversionStudy {
  InversionOptions options;
  std::vector<InversionRow> rows;
  double coverage = 0.0;
  double standard_error = 0.0;
};

InversionStudy run_inversion_study(const InversionOptions& options);

struct PipelineSummary {
  std::string pipeline;
  std::size_t ok = 0;
  std::size_t failed = 0;
  double rejection_rate = 0.0;  // at 0.05
  double ks_distance = 0.0;     // against Uniform(0, 1)
  double min_p = 0.0;
  double median_p = 0.0;
};

std::vector<PipelineSummary> summarize(const PvalueStudy& study);
/// sup |F_n - F| for the uniform distribution.
double ks_uniform(std::vector<double> p);

/// pvalues.csv, bias_stats.csv, summary.json, MANIFEST.txt, ecdf.gp.
void write_outputs(const PvalueStudy& study, const std::filesystem::path& dir);
/// coverage.csv, summary.json, MANIFEST.txt.
void write_outputs(const InversionStudy& study, const std::filesystem::path& dir);

nlohmann::json summary_json(const PvalueStudy& study);
nlohmann::json summary_json(const InversionStudy& study);

}  // namespace permsens::simlab
