#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "permsens/analysis.hpp"
#include "permsens/core.hpp"
#include "permsens/matcher.hpp"
#include "permsens/oracle.hpp"
#include "permsens/simlab.hpp"

namespace {

using namespace permsens;
namespace fs = std::filesystem;
using nlohmann::json;

// Options that change how work is scheduled but never what is produced.
const char* const kNotEchoed[] = {"threads", "timings", "help"};

struct DataArgs {
  std::string input;
  std::vector<std::string> covariates;
  std::string outcome = "y";
  std::string treatment = "z";
};

void add_data_args(CLI::App* sub, DataArgs& a) {
  sub->add_option("--input", a.input, "Study CSV with a header row")->required();
  sub->add_option("--covariates", a.covariates, "Covariate columns (default: every column but outcome/treatment)")
      ->delimiter(',');
  sub->add_option("--outcome", a.outcome, "Outcome column");
  sub->add_option("--treatment", a.treatment, "0/1 treatment column");
}

std::vector<std::string> split_header(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

StudyData load_csv(const std::string& path, const DataArgs& a) {
  if (!fs::exists(path)) throw InputError("input file not found: " + path);
  CsvSchema schema{a.covariates, a.outcome, a.treatment};
  if (schema.covariates.empty()) {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    for (auto& name : split_header(header)) {
      if (name != a.outcome && name != a.treatment) schema.covariates.push_back(name);
    }
  }
  return load_study(path, schema);
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

json config_echo(const CLI::App* sub) {
  json opts = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (std::find(std::begin(kNotEchoed), std::end(kNotEchoed), name) != std::end(kNotEchoed)) continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      opts[name] = r.size() == 1 ? json(r.front()) : json(r);
    } else {
      opts[name] = opt->get_default_str();
    }
  }
  return {{"subcommand", sub->get_name()}, {"options", std::move(opts)}};
}

void write_config(const CLI::App* sub, const fs::path& artifact) {
  const fs::path dir = artifact.has_parent_path() ? artifact.parent_path() : fs::path(".");
  write_file(dir / "run_config.json", config_echo(sub).dump(2) + "\n");
}

// ---------------------------------------------------------------- match

struct MatchArgs {
  DataArgs data;
  double caliper = 0.0;
  std::string caliper_mode = "coordinate";
  bool greedy = false;
  std::string output = "design.json";
  std::string report;
};

int run_match(const CLI::App* sub, const MatchArgs& a) {
  const StudyData data = load_csv(a.data.input, a.data);
  const DistanceMatrix distances = mahalanobis(data);
  MatchedDesign design = a.greedy ? greedy_pair_match(data, distances) : optimal_pair_match(data, distances);
  const double cost = matching_cost(design, distances);
  const std::size_t matched = design.size();
  if (a.caliper > 0.0) {
    if (a.caliper_mode != "coordinate" && a.caliper_mode != "mahalanobis") {
      throw InputError("unknown caliper mode '" + a.caliper_mode + "' (expected coordinate or mahalanobis)");
    }
    design = apply_caliper(design, data, CaliperRule{a.caliper, a.caliper_mode == "coordinate"});
  } else if (a.caliper < 0.0) {
    throw InputError("caliper width must be non-negative");
  }
  design = validate_design(design, data);
  const json report = {{"treated", data.treated_count()},
                       {"controls", data.control_count()},
                       {"matched", matched},
                       {"pairs", design.size()},
                       {"dropped_by_caliper", matched - design.size()},
                       {"total_cost_before_caliper", cost},
                       {"algorithm", a.greedy ? "greedy" : "optimal"},
                       {"caliper", a.caliper},
                       {"caliper_mode", a.caliper_mode}};
  const fs::path out = a.output;
  write_file(out, design_to_json(design).dump(2) + "\n");
  const fs::path report_path = a.report.empty() ? (out.has_parent_path() ? out.parent_path() : fs::path(".")) /
                                                      "match_report.json"
                                                : fs::path(a.report);
  write_file(report_path, report.dump(2) + "\n");
  write_config(sub, out);
  std::cerr << "matched " << design.size() << " pairs (" << matched - design.size() << " dropped by caliper)\n";
  return 0;
}

// ---------------------------------------------------------------- analyze / invert

struct AnalysisArgs {
  DataArgs data;
  std::string design;
  std::string mode = "uniform";
  double gamma = 1.0;
  double lambda = 1.0;
  std::string density = "parametric";
  std::string external;
  std::string true_model;
  double null_effect = 0.0;
  std::string alternative = "upper";
  std::string method = "gaussian";
  std::size_t draws = 10000;
  std::uint64_t seed = 0;
  double psi_inner = 0.0;
  double psi_trim = 3.0;
  std::string scale = "pooled";
  double quantile_level = 0.0;
  double quantile_value = 1.0;
  bool adjust = false;
  std::vector<double> bandwidths;
  std::string output;
};

void add_analysis_args(CLI::App* sub, AnalysisArgs& a) {
  add_data_args(sub, a.data);
  sub->add_option("--design", a.design, "Design JSON written by 'match'")->required();
  sub->add_option("--mode", a.mode, "uniform or adaptive");
  sub->add_option("--gamma", a.gamma, "Uniform-mode bias bound Gamma (>= 1)");
  sub->add_option("--lambda", a.lambda, "Adaptive-mode confounding bound Lambda (>= 1)");
  sub->add_option("--density", a.density, "parametric or kernel (adaptive mode with --external)");
  sub->add_option("--external", a.external, "External CSV for density fits and adjustment");
  sub->add_option("--true-model", a.true_model, "Use the known density of a simulation model (eq11, a2, a4, a5)");
  sub->add_option("--null-effect", a.null_effect, "Constant effect c of the sharp null");
  sub->add_option("--alternative", a.alternative, "upper, lower or two-sided");
  sub->add_option("--method", a.method, "gaussian, exact or mc");
  sub->add_option("--draws", a.draws, "Monte Carlo draws");
  sub->add_option("--seed", a.seed, "Monte Carlo seed");
  sub->add_option("--psi-inner", a.psi_inner, "Score function inner threshold");
  sub->add_option("--psi-trim", a.psi_trim, "Score function trimming point");
  sub->add_option("--scale", a.scale, "pooled or per-set score scale");
  sub->add_option("--quantile-level", a.quantile_level, "Quantile bound level theta in (0,1]; 0 disables");
  sub->add_option("--quantile-value", a.quantile_value, "Bound on the theta-quantile of the biases");
  sub->add_flag("--adjust", a.adjust, "Analyze residuals of an external regression on covariates");
  sub->add_option("--bandwidths", a.bandwidths, "Kernel bandwidths: one per covariate, then the outcome")
      ->delimiter(',');
}

AnalysisConfig build_config(const AnalysisArgs& a) {
  AnalysisConfig cfg;
  cfg.null = SharpNull{a.null_effect};
  cfg.psi = PsiSpec{a.psi_inner, a.psi_trim};
  if (a.scale == "pooled") {
    cfg.scale_mode = ScaleMode::pooled;
  } else if (a.scale == "per-set") {
    cfg.scale_mode = ScaleMode::per_set;
  } else {
    throw InputError("unknown scale '" + a.scale + "' (expected pooled or per-set)");
  }
  cfg.spec.mode = parse_mode(a.mode);
  cfg.spec.alternative = parse_alternative(a.alternative);
  cfg.spec.method = parse_method(a.method);
  cfg.spec.monte_carlo = MonteCarloSpec{a.draws, SeedSpec{a.seed, 0}};
  cfg.spec.gamma = cfg.spec.mode == SensitivityMode::uniform ? a.gamma : a.lambda;
  if (a.quantile_level != 0.0) cfg.spec.quantile = QuantileBound{a.quantile_level, a.quantile_value};
  if (!a.external.empty()) cfg.external = load_csv(a.external, a.data);
  cfg.adjust = a.adjust;
  cfg.bandwidths = a.bandwidths;
  if (cfg.spec.mode == SensitivityMode::adaptive) {
    if (!a.true_model.empty()) {
      cfg.density = DensitySource::true_model;
      cfg.true_model = simlab::true_model(simlab::parse_model(a.true_model)).density_model();
    } else if (!a.external.empty()) {
      if (a.density == "parametric") {
        cfg.density = DensitySource::parametric;
      } else if (a.density == "kernel") {
        cfg.density = DensitySource::kernel;
      } else {
        throw InputError("unknown density '" + a.density + "' (expected parametric or kernel)");
      }
    } else {
      throw InputError("adaptive mode needs --external or --true-model");
    }
  }
  // Weights come later from the pipeline; check everything else up front.
  SensitivitySpec check = cfg.spec;
  check.mode = SensitivityMode::uniform;
  check.validate();
  return cfg;
}

MatchedDesign load_design(const std::string& path, const StudyData& data) {
  if (!fs::exists(path)) throw InputError("design file not found: " + path);
  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("cannot parse design " + path + ": " + e.what());
  }
  return validate_design(design_from_json(j), data);
}

int run_analyze(const CLI::App* sub, const AnalysisArgs& a) {
  const StudyData data = load_csv(a.data.input, a.data);
  const MatchedDesign design = load_design(a.design, data);
  const AnalysisConfig cfg = build_config(a);
  const WorstCaseReport report = run_analysis(data, design, cfg);
  const std::string out = a.output.empty() ? "report.json" : a.output;
  write_file(out, report_to_json(report).dump(2) + "\n");
  write_config(sub, out);
  std::cout << report_summary(report) << "\n";
  return 0;
}

struct InvertArgs {
  AnalysisArgs analysis;
  double alpha = 0.05;
  double grid_from = 0.0;
  double grid_to = 2.0;
  double grid_step = 0.02;
  std::vector<double> grid;
};

int run_invert(const CLI::App* sub, const InvertArgs& a) {
  const StudyData data = load_csv(a.analysis.data.input, a.analysis.data);
  const MatchedDesign design = load_design(a.analysis.design, data);
  const AnalysisConfig cfg = build_config(a.analysis);
  const std::vector<double> grid = a.grid.empty() ? make_grid(a.grid_from, a.grid_to, a.grid_step) : a.grid;
  const ConfidenceInterval ci = invert_tests(data, design, cfg, a.alpha, grid);
  const std::string out = a.analysis.output.empty() ? "interval.json" : a.analysis.output;
  write_file(out, interval_to_json(ci).dump(2) + "\n");
  write_config(sub, out);
  if (ci.empty) {
    std::cout << "interval: empty (every grid point rejected at alpha=" << format_double(a.alpha) << ")\n";
  } else {
    std::cout << "interval: [" << format_double(ci.lower) << (ci.open_lower ? " (open)" : "") << ", "
              << format_double(ci.upper) << (ci.open_upper ? " (open)" : "") << "] level=" << format_double(ci.level)
              << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string model = "eq11";
  std::vector<std::string> pipelines{"rand"};
  std::size_t reps = 200;
  bool full = false;
  std::uint64_t seed = 1;
  std::size_t n = 1000;
  std::size_t external_n = 1000;
  std::string study = "pvalues";
  double null_effect = 0.0;
  double alpha = 0.05;
  double grid_from = 0.0;
  double grid_to = 2.0;
  double grid_step = 0.02;
  unsigned threads = 1;
  std::string output_dir = "simulation";
  bool timings = false;
};

int run_simulate(const CLI::App* sub, const SimulateArgs& a) {
  const simlab::GenModel model{simlab::parse_model(a.model), a.n};
  std::vector<simlab::PipelineSpec> pipes;
  for (const auto& name : a.pipelines) {
    auto spec = simlab::parse_pipeline(name);
    spec.external_n = a.external_n;
    pipes.push_back(spec);
  }
  const std::size_t reps = a.full ? 1000 : a.reps;
  const fs::path dir = a.output_dir;
  const auto start = std::chrono::steady_clock::now();
  if (a.study == "pvalues") {
    simlab::StudyOptions options;
    options.model = model;
    options.pipelines = pipes;
    options.replications = reps;
    options.seed = SeedSpec{a.seed, 0};
    options.threads = a.threads;
    options.null = SharpNull{a.null_effect};
    const auto study = simlab::run_pipelines(options);
    simlab::write_outputs(study, dir);
    for (const auto& s : simlab::summarize(study)) {
      std::cerr << s.pipeline << ": ok=" << s.ok << " failed=" << s.failed
                << " reject@0.05=" << format_double(s.rejection_rate) << " ks=" << format_double(s.ks_distance) << "\n";
    }
  } else if (a.study == "inversion") {
    if (pipes.size() != 1) throw InputError("the inversion study takes exactly one --pipeline");
    simlab::InversionOptions options;
    options.model = model;
    options.pipeline = pipes.front();
    options.alpha = a.alpha;
    options.grid = make_grid(a.grid_from, a.grid_to, a.grid_step);
    options.replications = reps;
    options.seed = SeedSpec{a.seed, 0};
    options.threads = a.threads;
    const auto study = simlab::run_inversion_study(options);
    simlab::write_outputs(study, dir);
    std::cerr << "coverage=" << format_double(study.coverage) << " se=" << format_double(study.standard_error) << "\n";
  } else {
    throw InputError("unknown study '" + a.study + "' (expected pvalues or inversion)");
  }
  write_config(sub, dir / "summary.json");
  if (a.timings) {
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_file(dir / "timings.json", json{{"seconds", seconds}, {"threads", a.threads}}.dump(2) + "\n");
  }
  return 0;
}

// ---------------------------------------------------------------- oracle-check / generate

struct OracleArgs {
  std::uint64_t seed = 2024;
  std::size_t decomposition = 10000;
  std::size_t brackets = 1000;
  std::size_t draws = 1000;
  std::string output = "oracle_report.json";
};

int run_oracle(const CLI::App* sub, const OracleArgs& a) {
  oracle::SuiteOptions options;
  options.seed = SeedSpec{a.seed, 0};
  options.decomposition_instances = a.decomposition;
  options.bracket_instances = a.brackets;
  options.dominance_draws = a.draws;
  const auto results = oracle::run_suite(options);
  const json report = oracle::suite_to_json(results);
  write_file(a.output, report.dump(2) + "\n");
  write_config(sub, a.output);
  for (const auto& r : results) std::cerr << (r.passed ? "pass " : "FAIL ") << r.name << ": " << r.detail << "\n";
  return report["passed"].get<bool>() ? 0 : 1;
}

struct GenerateArgs {
  std::string model = "eq11";
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  std::string output = "data.csv";
};

int run_generate(const CLI::App* sub, const GenerateArgs& a) {
  const auto study = simlab::generate({simlab::parse_model(a.model), a.n}, SeedSpec{a.seed, 0});
  const fs::path out = a.output;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_study(study.data, out);
  write_config(sub, out);
  return 0;
}

std::string joined(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Permutation-based sensitivity analysis for matched observational studies"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  MatchArgs match;
  auto* match_cmd = app.add_subcommand("match", "Optimal pair matching on Mahalanobis distance");
  add_data_args(match_cmd, match.data);
  match_cmd->add_option("--caliper", match.caliper, "Caliper width in pooled sd units; 0 disables");
  match_cmd->add_option("--caliper-mode", match.caliper_mode, "coordinate or mahalanobis");
  match_cmd->add_flag("--greedy", match.greedy, "Greedy nearest-neighbour matching instead of optimal");
  match_cmd->add_option("--output", match.output, "Design JSON path");
  match_cmd->add_option("--report", match.report, "Matching report path (default: next to the design)");

  AnalysisArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Worst-case p-value for one sharp null");
  add_analysis_args(analyze_cmd, analyze);
  analyze_cmd->add_option("--output", analyze.output, "Report JSON path (default report.json)");

  InvertArgs invert;
  auto* invert_cmd = app.add_subcommand("invert", "Confidence interval for a constant effect by test inversion");
  add_analysis_args(invert_cmd, invert.analysis);
  invert_cmd->add_option("--output", invert.analysis.output, "Interval JSON path (default interval.json)");
  invert_cmd->add_option("--alpha", invert.alpha, "Level; two one-sided tests at alpha/2");
  invert_cmd->add_option("--grid-from", invert.grid_from, "First grid value");
  invert_cmd->add_option("--grid-to", invert.grid_to, "Last grid value");
  invert_cmd->add_option("--grid-step", invert.grid_step, "Grid spacing");
  invert_cmd->add_option("--grid", invert.grid, "Explicit grid (overrides from/to/step)")->delimiter(',');

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Replicated simulation studies");
  sim_cmd->add_option("--model", sim.model, "One of: " + joined(simlab::model_names()));
  sim_cmd->add_option("--pipeline", sim.pipelines, "One or more of: " + joined(simlab::pipeline_names()) +
                                                       " (append +caliper for the 0.25 sd caliper)")
      ->delimiter(',');
  sim_cmd->add_option("--reps", sim.reps, "Replications");
  sim_cmd->add_flag("--full", sim.full, "Run 1000 replications");
  sim_cmd->add_option("--seed", sim.seed, "Base seed");
  sim_cmd->add_option("--n", sim.n, "Units per replication");
  sim_cmd->add_option("--external-n", sim.external_n, "External sample size for fitted densities");
  sim_cmd->add_option("--study", sim.study, "pvalues or inversion");
  sim_cmd->add_option("--null-effect", sim.null_effect, "Sharp null tested by the pvalues study");
  sim_cmd->add_option("--alpha", sim.alpha, "Inversion level");
  sim_cmd->add_option("--grid-from", sim.grid_from, "Inversion grid start");
  sim_cmd->add_option("--grid-to", sim.grid_to, "Inversion grid end");
  sim_cmd->add_option("--grid-step", sim.grid_step, "Inversion grid spacing");
  sim_cmd->add_option("--threads", sim.threads, "Worker threads; outputs do not depend on it");
  sim_cmd->add_option("--output-dir", sim.output_dir, "Directory for CSV/JSON outputs");
  sim_cmd->add_flag("--timings", sim.timings, "Also write timings.json (wall clock, not reproducible)");

  OracleArgs orc;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "Run the brute-force reference suite");
  oracle_cmd->add_option("--seed", orc.seed, "Seed for random instances");
  oracle_cmd->add_option("--decomposition", orc.decomposition, "Random pairs for the R_i identity");
  oracle_cmd->add_option("--brackets", orc.brackets, "Random sets for the probability-ratio brackets");
  oracle_cmd->add_option("--draws", orc.draws, "Family members per dominance configuration");
  oracle_cmd->add_option("--output", orc.output, "Report JSON path");

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Write one simulated study as CSV");
  gen_cmd->add_option("--model", gen.model, "One of: " + joined(simlab::model_names()));
  gen_cmd->add_option("--n", gen.n, "Units");
  gen_cmd->add_option("--seed", gen.seed, "Seed");
  gen_cmd->add_option("--output", gen.output, "CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (match_cmd->parsed()) return run_match(match_cmd, match);
    if (analyze_cmd->parsed()) return run_analyze(analyze_cmd, analyze);
    if (invert_cmd->parsed()) return run_invert(invert_cmd, invert);
    if (sim_cmd->parsed()) return run_simulate(sim_cmd, sim);
    if (oracle_cmd->parsed()) return run_oracle(oracle_cmd, orc);
    if (gen_cmd->parsed()) return run_generate(gen_cmd, gen);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
