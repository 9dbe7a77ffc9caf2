#include "permsens/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <thread>

#include <nlohmann/json.hpp>

namespace permsens::simlab {

namespace {

constexpr double kOutcomeSd = 0.2;

double normal_pdf(double y, double mean, double sd) {
  const double z = (y - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

double outcome_slope(ModelId id) { return id == ModelId::a2 || id == ModelId::a5 ? 2.0 : 1.0; }

/// Runs f(0..n-1) over up to `threads` workers; each index runs exactly once.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) f(i);
    });
  }
  for (auto& t : pool) t.join();
}

void corrupt(HiddenTruth& truth) {
  std::fill(truth.y0.begin(), truth.y0.end(), 0.0);
  truth.model.density = [](double, std::span<const double>) { return 1.0; };
  truth.model.pi1 = [](std::span<const double>, double) { return 0.5; };
}

struct Replicate {
  GeneratedStudy study;
  MatchedDesign design;
  std::optional<MatchedDesign> calipered;
  std::map<std::size_t, StudyData> external;

  const MatchedDesign& matched(bool caliper) {
    if (!caliper) return design;
    if (!calipered) calipered = validate_design(apply_caliper(design, study.data, CaliperRule{}), study.data);
    return *calipered;
  }
};

Replicate replicate(const GenModel& model, SeedSpec seed, std::size_t rep, bool corrupt_truth) {
  Replicate r;
  r.study = generate(model, seed.child(rep, 1));
  if (corrupt_truth) corrupt(r.study.truth);
  const DistanceMatrix distances = mahalanobis(r.study.data);
  r.design = validate_design(optimal_pair_match(r.study.data, distances), r.study.data);
  return r;
}

const StudyData& external_sample(Replicate& r, const GenModel& model, SeedSpec seed, std::size_t rep,
                                 std::size_t n) {
  auto it = r.external.find(n);
  if (it == r.external.end()) {
    // Purpose 2 + size keeps samples of different sizes independent.
    it = r.external.emplace(n, generate(GenModel{model.id, n}, seed.child(rep, 2 + (n % 200))).data).first;
  }
  return it->second;
}

bool is_adaptive(PipelineKind kind) {
  return kind == PipelineKind::adapt_true || kind == PipelineKind::adapt_para || kind == PipelineKind::adapt_ker ||
         kind == PipelineKind::adapt_ker_relaxed;
}

/// Configures the analysis for one pipeline; returns the bias parameter used.
double configure(AnalysisConfig& cfg, const PipelineSpec& pipeline, ModelId id, const BiasSummary& bias,
                 Replicate& r, const GenModel& model, SeedSpec seed, std::size_t rep) {
  switch (pipeline.kind) {
    case PipelineKind::rand:
      cfg.spec.gamma = 1.0;
      break;
    case PipelineKind::sen_max:
      cfg.spec.gamma = bias.max_gamma;
      break;
    case PipelineKind::sen_quantile:
      cfg.spec.gamma = bias.q80_gamma;
      cfg.spec.quantile = QuantileBound{pipeline.quantile_level, bias.q80_gamma};
      break;
    case PipelineKind::sen_ui:
      cfg.spec.gamma = bias.max_gamma_u;
      break;
    default:
      break;
  }
  if (is_adaptive(pipeline.kind)) {
    cfg.spec.mode = SensitivityMode::adaptive;
    double lambda = is_confounded(id) ? bias.max_gamma_u : 1.0;
    if (pipeline.kind == PipelineKind::adapt_ker_relaxed) lambda *= pipeline.relax_factor;
    cfg.spec.gamma = std::max(1.0, lambda);
    if (pipeline.kind == PipelineKind::adapt_true) {
      cfg.density = DensitySource::true_model;
      cfg.true_model = r.study.truth.model.density_model();
    } else {
      cfg.density = pipeline.kind == PipelineKind::adapt_para ? DensitySource::parametric : DensitySource::kernel;
      cfg.external = external_sample(r, model, seed, rep, pipeline.external_n);
    }
  }
  return cfg.spec.gamma;
}

bool needs_truth_bias(PipelineKind kind, ModelId id) {
  return kind == PipelineKind::sen_max || kind == PipelineKind::sen_quantile || kind == PipelineKind::sen_ui ||
         (is_adaptive(kind) && is_confounded(id));
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

}  // namespace

ModelId parse_model(const std::string& name) {
  if (name == "eq11") return ModelId::eq11;
  if (name == "a2") return ModelId::a2;
  if (name == "a4") return ModelId::a4;
  if (name == "a5") return ModelId::a5;
  throw InputError("unknown model '" + name + "' (expected one of: eq11, a2, a4, a5)");
}

std::string to_string(ModelId id) {
  switch (id) {
    case ModelId::eq11:
      return "eq11";
    case ModelId::a2:
      return "a2";
    case ModelId::a4:
      return "a4";
    case ModelId::a5:
      return "a5";
  }
  return "eq11";
}

std::vector<std::string> model_names() { return {"eq11", "a2", "a4", "a5"}; }

bool is_confounded(ModelId id) { return id == ModelId::a2 || id == ModelId::a5; }

double true_effect(ModelId id) { return id == ModelId::a4 || id == ModelId::a5 ? 1.0 : 0.0; }

TrueModel true_model(ModelId id) {
  TrueModel m;
  const double slope = outcome_slope(id);
  m.density = [slope](double y, std::span<const double> x) { return normal_pdf(y, slope * x[0], kOutcomeSd); };
  if (is_confounded(id)) {
    m.pi1 = [](std::span<const double> x, double y) { return 1.0 / (1.0 + std::exp(-(-1.0 + 0.5 * x[0] + 0.5 * y))); };
  } else {
    m.pi1 = [](std::span<const double> x, double) { return 0.2 + 0.5 * x[0]; };
  }
  m.label = to_string(id);
  m.y_lo = -2.0;
  m.y_hi = slope + 2.0;
  return m;
}

GeneratedStudy generate(const GenModel& model, SeedSpec seed) {
  if (model.n == 0) throw InputError("sample size must be positive");
  CounterRng rng(seed);
  GeneratedStudy out;
  out.truth.model = true_model(model.id);
  const double slope = outcome_slope(model.id);
  const double effect = true_effect(model.id);
  std::vector<Unit> units;
  units.reserve(model.n);
  out.truth.y0.reserve(model.n);
  for (std::size_t i = 0; i < model.n; ++i) {
    const double x = rng.uniform();
    const double y0 = rng.normal(slope * x, kOutcomeSd);
    const double xs[1] = {x};
    const bool z = rng.uniform() < out.truth.model.pi1(xs, y0);
    units.push_back({{x}, y0 + (z ? effect : 0.0), z});
    out.truth.y0.push_back(y0);
  }
  out.data = StudyData(std::move(units), {"x1"});
  return out;
}

std::vector<PairBias> true_bias_stats(const MatchedDesign& design, const StudyData& data, const HiddenTruth& truth) {
  if (!design.is_pair_design()) throw InputError("bias statistics need a pair design");
  std::vector<PairBias> out;
  out.reserve(design.size());
  const TrueModel& m = truth.model;
  for (const auto& s : design.sets) {
    const auto& x1 = data[s.members[0]].covariates;
    const auto& x2 = data[s.members[1]].covariates;
    const double a = truth.y0[s.members[0]];
    const double b = truth.y0[s.members[1]];
    const double y1 = std::min(a, b);
    const double y2 = std::max(a, b);
    PairBias p;
    p.r_m = (m.density(y2, x1) / m.density(y2, x2)) / (m.density(y1, x1) / m.density(y1, x2));
    p.r_u = (m.pi0(x2, y1) / m.pi0(x2, y2)) / (m.pi1(x1, y1) / m.pi1(x1, y2));
    if (!std::isfinite(p.r_m) || !(p.r_m > 0.0)) p.r_m = 1.0;
    if (!std::isfinite(p.r_u) || !(p.r_u > 0.0)) p.r_u = 1.0;
    p.r = p.r_m * p.r_u;
    p.gamma = std::max(p.r, 1.0 / p.r);
    p.gamma_u = std::max(p.r_u, 1.0 / p.r_u);
    out.push_back(p);
  }
  return out;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InputError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

BiasSummary summarize_bias(const std::vector<PairBias>& pairs) {
  BiasSummary s;
  if (pairs.empty()) return s;
  std::vector<double> g;
  for (const auto& p : pairs) {
    g.push_back(p.gamma);
    s.max_gamma_u = std::max(s.max_gamma_u, p.gamma_u);
  }
  s.max_gamma = *std::max_element(g.begin(), g.end());
  s.q80_gamma = quantile(g, 0.8);
  s.median_gamma = quantile(g, 0.5);
  return s;
}

std::string PipelineSpec::name() const {
  std::string base;
  switch (kind) {
    case PipelineKind::rand:
      base = "rand";
      break;
    case PipelineKind::sen_max:
      base = "sen-max";
      break;
    case PipelineKind::sen_quantile:
      base = "sen-quantile";
      break;
    case PipelineKind::sen_ui:
      base = "sen-ui";
      break;
    case PipelineKind::adapt_true:
      base = "adapt.true";
      break;
    case PipelineKind::adapt_para:
      base = "adapt.para";
      break;
    case PipelineKind::adapt_ker:
      base = "adapt.ker";
      break;
    case PipelineKind::adapt_ker_relaxed:
      base = "adapt.ker-relaxed(" + format_double(relax_factor) + ")";
      break;
  }
  return caliper ? base + "+caliper" : base;
}

std::vector<std::string> pipeline_names() {
  return {"rand", "sen-max", "sen-quantile", "sen-ui", "adapt.true", "adapt.para", "adapt.ker", "adapt.ker-relaxed(F)"};
}

PipelineSpec parse_pipeline(const std::string& text) {
  PipelineSpec spec;
  std::string name = text;
  const std::string suffix = "+caliper";
  if (name.size() > suffix.size() && name.ends_with(suffix)) {
    spec.caliper = true;
    name.resize(name.size() - suffix.size());
  }
  auto unknown = [&] {
    std::string list;
    for (const auto& n : pipeline_names()) list += (list.empty() ? "" : ", ") + n;
    return InputError("unknown pipeline '" + text + "' (expected one of: " + list + ", optionally with +caliper)");
  };
  if (name == "rand") {
    spec.kind = PipelineKind::rand;
  } else if (name == "sen-max") {
    spec.kind = PipelineKind::sen_max;
  } else if (name == "sen-quantile") {
    spec.kind = PipelineKind::sen_quantile;
  } else if (name == "sen-ui") {
    spec.kind = PipelineKind::sen_ui;
  } else if (name == "adapt.true") {
    spec.kind = PipelineKind::adapt_true;
  } else if (name == "adapt.para") {
    spec.kind = PipelineKind::adapt_para;
  } else if (name == "adapt.ker") {
    spec.kind = PipelineKind::adapt_ker;
  } else if (name.starts_with("adapt.ker-relaxed(") && name.ends_with(")")) {
    spec.kind = PipelineKind::adapt_ker_relaxed;
    const std::string arg = name.substr(18, name.size() - 19);
    try {
      std::size_t used = 0;
      spec.relax_factor = std::stod(arg, &used);
      if (used != arg.size()) throw unknown();
    } catch (const std::logic_error&) {
      throw unknown();
    }
    if (!(spec.relax_factor >= 1.0)) throw InputError("relaxation factor must be >= 1");
  } else {
    throw unknown();
  }
  return spec;
}

PvalueStudy run_pipelines(const StudyOptions& options) {
  if (options.pipelines.empty()) throw InputError("no pipelines requested");
  if (options.replications == 0) throw InputError("replications must be positive");
  PvalueStudy study;
  study.options = options;
  const std::size_t P = options.pipelines.size();
  study.rows.resize(options.replications * P);
  study.bias.resize(options.replications);
  parallel_for(options.replications, options.threads, [&](std::size_t rep) {
    std::optional<Replicate> r;
    std::string failure;
    try {
      r = replicate(options.model, options.seed, rep, options.corrupt_truth);
    } catch (const std::exception& e) {
      failure = e.what();
    }
    BiasRow& brow = study.bias[rep];
    brow.rep = rep;
    BiasSummary base_bias;
    if (r) {
      try {
        base_bias = summarize_bias(true_bias_stats(r->design, r->study.data, r->study.truth));
        brow.all = base_bias;
        brow.pairs = r->design.size();
      } catch (const std::exception&) {
        brow.ok = false;
      }
    } else {
      brow.ok = false;
    }
    for (std::size_t k = 0; k < P; ++k) {
      const PipelineSpec& pipe = options.pipelines[k];
      PvalueRow& row = study.rows[rep * P + k];
      row.rep = rep;
      row.pipeline = pipe.name();
      if (!r) {
        row.ok = false;
        row.error = failure;
        continue;
      }
      try {
        const MatchedDesign& design = r->matched(pipe.caliper);
        row.pairs = design.size();
        BiasSummary bias = base_bias;
        if (pipe.caliper && needs_truth_bias(pipe.kind, options.model.id)) {
          bias = summarize_bias(true_bias_stats(design, r->study.data, r->study.truth));
        }
        AnalysisConfig cfg;
        cfg.null = options.null;
        cfg.psi = options.psi;
        row.lambda = configure(cfg, pipe, options.model.id, bias, *r, options.model, options.seed, rep);
        row.p = run_analysis(r->study.data, design, cfg).p_value;
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
      }
    }
  });
  return study;
}

PvalueStudy run_pipeline(const GenModel& model, const PipelineSpec& pipeline, SharpNull null, std::size_t replications,
                         SeedSpec seed, unsigned threads) {
  StudyOptions options;
  options.model = model;
  options.pipelines = {pipeline};
  options.null = null;
  options.replications = replications;
  options.seed = seed;
  options.threads = threads;
  return run_pipelines(options);
}

InversionStudy run_inversion_study(const InversionOptions& options) {
  if (options.grid.empty()) throw InputError("inversion grid is empty");
  if (options.replications == 0) throw InputError("replications must be positive");
  InversionStudy study;
  study.options = options;
  study.rows.resize(options.replications);
  const double truth_effect = true_effect(options.model.id);
  parallel_for(options.replications, options.threads, [&](std::size_t rep) {
    InversionRow& row = study.rows[rep];
    row.rep = rep;
    try {
      Replicate r = replicate(options.model, options.seed, rep, false);
      const MatchedDesign& design = r.matched(options.pipeline.caliper);
      BiasSummary bias;
      if (needs_truth_bias(options.pipeline.kind, options.model.id)) {
        bias = summarize_bias(true_bias_stats(design, r.study.data, r.study.truth));
      }
      AnalysisConfig cfg;
      cfg.psi = options.psi;
      row.lambda = configure(cfg, options.pipeline, options.model.id, bias, r, options.model, options.seed, rep);
      const ConfidenceInterval ci = invert_tests(r.study.data, design, cfg, options.alpha, options.grid);
      row.empty = ci.empty;
      row.lower = ci.lower;
      row.upper = ci.upper;
      row.open_lower = ci.open_lower;
      row.open_upper = ci.open_upper;
      row.covered = !ci.empty && ci.lower - 1e-9 <= truth_effect && truth_effect <= ci.upper + 1e-9;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
  });
  std::size_t covered = 0;
  for (const auto& row : study.rows) covered += row.covered ? 1 : 0;
  const double n = static_cast<double>(study.rows.size());
  study.coverage = static_cast<double>(covered) / n;
  study.standard_error = std::sqrt(study.coverage * (1.0 - study.coverage) / n);
  return study;
}

double ks_uniform(std::vector<double> p) {
  if (p.empty()) return 1.0;
  std::sort(p.begin(), p.end());
  const double n = static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double u = std::clamp(p[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - u, u - static_cast<double>(i) / n});
  }
  return d;
}

std::vector<PipelineSummary> summarize(const PvalueStudy& study) {
  std::vector<PipelineSummary> out;
  for (const auto& pipe : study.options.pipelines) {
    PipelineSummary s;
    s.pipeline = pipe.name();
    std::vector<double> ps;
    for (const auto& row : study.rows) {
      if (row.pipeline != s.pipeline) continue;
      if (row.ok) {
        ps.push_back(row.p);
      } else {
        ++s.failed;
      }
    }
    s.ok = ps.size();
    if (!ps.empty()) {
      s.rejection_rate = static_cast<double>(std::count_if(ps.begin(), ps.end(), [](double p) { return p < 0.05; })) /
                         static_cast<double>(ps.size());
      s.ks_distance = ks_uniform(ps);
      s.min_p = *std::min_element(ps.begin(), ps.end());
      s.median_p = quantile(ps, 0.5);
    }
    out.push_back(s);
  }
  return out;
}

nlohmann::json summary_json(const PvalueStudy& study) {
  nlohmann::json pipes = nlohmann::json::array();
  for (const auto& s : summarize(study)) {
    pipes.push_back({{"pipeline", s.pipeline},
                     {"ok", s.ok},
                     {"failed", s.failed},
                     {"rejection_rate_0.05", s.rejection_rate},
                     {"ks_distance_uniform", s.ks_distance},
                     {"min_p", s.min_p},
                     {"median_p", s.median_p}});
  }
  std::vector<double> q80;
  std::vector<double> maxima;
  for (const auto& b : study.bias) {
    if (!b.ok) continue;
    q80.push_back(b.all.q80_gamma);
    maxima.push_back(b.all.max_gamma);
  }
  nlohmann::json bias = nlohmann::json::object();
  if (!q80.empty()) {
    bias = {{"median_q80_gamma", quantile(q80, 0.5)},
            {"min_q80_gamma", *std::min_element(q80.begin(), q80.end())},
            {"max_q80_gamma", *std::max_element(q80.begin(), q80.end())},
            {"median_max_gamma", quantile(maxima, 0.5)},
            {"min_max_gamma", *std::min_element(maxima.begin(), maxima.end())},
            {"max_max_gamma", *std::max_element(maxima.begin(), maxima.end())}};
  }
  const auto& o = study.options;
  return {{"model", to_string(o.model.id)},
          {"n", o.model.n},
          {"replications", o.replications},
          {"seed", o.seed.base_seed},
          {"null_effect", o.null.effect},
          {"pipelines", std::move(pipes)},
          {"bias", std::move(bias)}};
}

nlohmann::json summary_json(const InversionStudy& study) {
  std::size_t empty = 0;
  std::size_t failed = 0;
  for (const auto& row : study.rows) {
    empty += row.ok && row.empty ? 1 : 0;
    failed += row.ok ? 0 : 1;
  }
  const auto& o = study.options;
  return {{"model", to_string(o.model.id)},
          {"n", o.model.n},
          {"pipeline", o.pipeline.name()},
          {"alpha", o.alpha},
          {"grid_from", o.grid.front()},
          {"grid_to", o.grid.back()},
          {"grid_points", o.grid.size()},
          {"replications", o.replications},
          {"seed", o.seed.base_seed},
          {"true_effect", true_effect(o.model.id)},
          {"coverage", study.coverage},
          {"standard_error", study.standard_error},
          {"empty_intervals", empty},
          {"failed", failed}};
}

void write_outputs(const PvalueStudy& study, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_output(dir / "pvalues.csv");
    out << "rep,pipeline,p,lambda,pairs,status\n";
    for (const auto& row : study.rows) {
      out << row.rep << ',' << csv_escape(row.pipeline) << ',' << (row.ok ? format_double(row.p) : "") << ','
          << format_double(row.lambda) << ',' << row.pairs << ',' << (row.ok ? "ok" : csv_escape(row.error)) << '\n';
    }
  }
  {
    auto out = open_output(dir / "bias_stats.csv");
    out << "rep,pairs,max_gamma,q80_gamma,median_gamma,max_gamma_u,status\n";
    for (const auto& b : study.bias) {
      out << b.rep << ',' << b.pairs << ',' << format_double(b.all.max_gamma) << ',' << format_double(b.all.q80_gamma)
          << ',' << format_double(b.all.median_gamma) << ',' << format_double(b.all.max_gamma_u) << ','
          << (b.ok ? "ok" : "failed") << '\n';
    }
  }
  {
    auto out = open_output(dir / "summary.json");
    out << summary_json(study).dump(2) << '\n';
  }
  {
    auto out = open_output(dir / "MANIFEST.txt");
    out << "pvalues.csv     rep: replication index; pipeline: analysis name; p: p-value (empty on failure);\n"
           "                lambda: bias parameter used (Gamma or Lambda); pairs: matched pairs analyzed;\n"
           "                status: ok or the failure message\n"
           "bias_stats.csv  per replication, true biases of the optimally matched pairs (no caliper):\n"
           "                max_gamma, q80_gamma, median_gamma of Gamma_i; max_gamma_u = max Gamma_ui\n"
           "summary.json    per pipeline rejection rate at 0.05, KS distance to Uniform(0,1), bias summary\n"
           "ecdf.gp         gnuplot script drawing the p-value ECDF per pipeline\n";
  }
  {
    auto out = open_output(dir / "ecdf.gp");
    out << "set datafile separator ','\nset key left top\nset xrange [0:1]\nset yrange [0:1]\n"
           "set xlabel 'p-value'\nset ylabel 'empirical CDF'\nset terminal pngcairo size 800,600\n"
           "set output 'ecdf.png'\nplot x title 'uniform' dashtype 2";
    for (const auto& pipe : study.options.pipelines) {
      out << ", \\\n  'pvalues.csv' every ::1 using (strcol(2) eq '" << pipe.name()
          << "' ? $3 : NaN):(1.0) smooth cnormal title '" << pipe.name() << "'";
    }
    out << '\n';
  }
}

void write_outputs(const InversionStudy& study, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_output(dir / "coverage.csv");
    out << "rep,lower,upper,empty,open_lower,open_upper,covered,lambda,status\n";
    for (const auto& row : study.rows) {
      const bool has = row.ok && !row.empty;
      out << row.rep << ',' << (has ? format_double(row.lower) : "") << ',' << (has ? format_double(row.upper) : "")
          << ',' << row.empty << ',' << row.open_lower << ',' << row.open_upper << ',' << row.covered << ','
          << format_double(row.lambda) << ',' << (row.ok ? "ok" : csv_escape(row.error)) << '\n';
    }
  }
  {
    auto out = open_output(dir / "summary.json");
    out << summary_json(study).dump(2) << '\n';
  }
  {
    auto out = open_output(dir / "MANIFEST.txt");
    out << "coverage.csv  rep: replication index; lower, upper: interval endpoints (empty when no c survives);\n"
           "              empty, open_lower, open_upper: 0/1 flags (open = interval touches the grid edge);\n"
           "              covered: 1 when the interval contains the true effect; lambda: bias parameter used\n"
           "summary.json  coverage with its binomial standard error, counts of empty and failed replications\n";
  }
}

}  // namespace permsens::simlab
