// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "permsens/matcher.hpp"
#include "permsens/oracle.hpp"
#include "permsens/rng.hpp"
#include "permsens/simlab.hpp"

using namespace permsens;
namespace sl = permsens::simlab;
namespace po = permsens::oracle;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream out;
  out.precision(digits);
  out << v;
  return out.str();
}

unsigned worker_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

std::vector<double> ok_pvalues(const sl::PvalueStudy& study, const std::string& pipeline, std::size_t& failed) {
  std::vector<double> p;
  failed = 0;
  for (const auto& r : study.rows) {
    if (r.pipeline != pipeline) continue;
    if (r.ok) {
      p.push_back(r.p);
    } else {
      ++failed;
    }
  }
  return p;
}

double rejection_rate(const std::vector<double>& p) {
  if (p.empty()) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(std::count_if(p.begin(), p.end(), [](double v) { return v < 0.05; })) /
         static_cast<double>(p.size());
}

// Largest |F_n(t) - t| over the sample, recomputed here rather than borrowed.
double ks_distance(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  const double n = static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - p[i]));
    d = std::max(d, std::abs(p[i] - static_cast<double>(i) / n));
  }
  return d;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- criteria 1-5: one shared model (11) study -------------------------------

struct SharedStudy {
  sl::PvalueStudy study;
  double seconds = 0.0;
};

SharedStudy model_eleven_study() {
  sl::StudyOptions opt;
  opt.model = {sl::ModelId::eq11, 1000};
  opt.replications = 200;
  opt.seed = SeedSpec{20240601, 0};
  opt.threads = worker_threads();
  for (const char* name : {"rand", "adapt.true", "sen-max", "adapt.ker", "adapt.ker+caliper"}) {
    opt.pipelines.push_back(sl::parse_pipeline(name));
  }
  const auto start = std::chrono::steady_clock::now();
  SharedStudy s{sl::run_pipelines(opt), 0.0};
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return s;
}

Outcome criterion1(const SharedStudy& s) {
  std::size_t failed = 0;
  const auto p = ok_pvalues(s.study, "rand", failed);
  const double rate = rejection_rate(p);
  return {failed == 0 && p.size() == 200 && rate > 0.90,
          "rand rejection rate " + fmt(rate) + " over " + std::to_string(p.size()) + " reps, " +
              std::to_string(failed) + " failed; shared 5-pipeline study took " + fmt(s.seconds, 3) + " s"};
}

Outcome criterion2(const SharedStudy& s) {
  std::size_t failed = 0;
  const auto p = ok_pvalues(s.study, "adapt.true", failed);
  const double rate = rejection_rate(p);
  const double ks = ks_distance(p);
  return {failed == 0 && p.size() == 200 && rate >= 0.02 && rate <= 0.09 && ks < 0.12,
          "adapt.true rejection rate " + fmt(rate) + ", KS distance " + fmt(ks) + ", " + std::to_string(failed) +
              " failed"};
}

Outcome criterion3(const SharedStudy& s) {
  std::vector<double> q80;
  double min_max = std::numeric_limits<double>::infinity();
  std::size_t failed = 0;
  for (const auto& b : s.study.bias) {
    if (!b.ok) {
      ++failed;
      continue;
    }
    q80.push_back(b.all.q80_gamma);
    min_max = std::min(min_max, b.all.max_gamma);
  }
  const double med = q80.empty() ? std::numeric_limits<double>::quiet_NaN() : median_of(q80);
  return {failed == 0 && q80.size() == 200 && med >= 1.5 && med <= 4.0 && min_max > 5.0,
          "median of per-rep 80% quantile of Gamma_i " + fmt(med) + ", smallest per-rep max Gamma_i " +
              fmt(min_max) + ", " + std::to_string(failed) + " failed"};
}

Outcome criterion4(const SharedStudy& s) {
  std::size_t failed = 0;
  const auto p = ok_pvalues(s.study, "sen-max", failed);
  const double lowest = p.empty() ? 0.0 : *std::min_element(p.begin(), p.end());
  return {failed == 0 && p.size() == 200 && lowest > 0.9,
          "sen-max smallest p-value " + fmt(lowest, 6) + " over " + std::to_string(p.size()) + " reps"};
}

Outcome criterion5(const SharedStudy& s) {
  std::size_t f1 = 0;
  std::size_t f2 = 0;
  const auto plain = ok_pvalues(s.study, "adapt.ker", f1);
  const auto caliper = ok_pvalues(s.study, "adapt.ker+caliper", f2);
  const double excess_plain = rejection_rate(plain) - 0.05;
  const double excess_caliper = rejection_rate(caliper) - 0.05;
  return {f1 == 0 && f2 == 0 && plain.size() == 200 && caliper.size() == 200 && excess_caliper <= excess_plain,
          "excess rejection over 0.05: no caliper " + fmt(excess_plain) + ", caliper " + fmt(excess_caliper)};
}

// ---- criterion 6: inversion coverage -----------------------------------------

sl::InversionStudy coverage_run(sl::ModelId model, std::uint64_t seed) {
  sl::InversionOptions opt;
  opt.model = {model, 1000};
  opt.pipeline = sl::parse_pipeline("adapt.para");
  opt.alpha = 0.05;
  opt.grid = make_grid(0.0, 2.0, 0.02);
  opt.replications = 200;
  opt.seed = SeedSpec{seed, 0};
  opt.threads = worker_threads();
  return sl::run_inversion_study(opt);
}

double recount_coverage(const sl::InversionStudy& study, std::size_t& failed) {
  std::size_t covered = 0;
  failed = 0;
  for (const auto& r : study.rows) {
    if (!r.ok) ++failed;
    if (r.ok && !r.empty && r.lower <= 1.0 && r.upper >= 1.0) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(study.rows.size());
}

Outcome criterion6() {
  const auto a4 = coverage_run(sl::ModelId::a4, 20240602);
  const auto a5 = coverage_run(sl::ModelId::a5, 20240603);
  std::size_t f4 = 0;
  std::size_t f5 = 0;
  const double c4 = recount_coverage(a4, f4);
  const double c5 = recount_coverage(a5, f5);
  double lambda4 = 0.0;
  for (const auto& r : a4.rows) lambda4 = std::max(lambda4, r.lambda);
  return {f4 == 0 && f5 == 0 && a4.rows.size() == 200 && a5.rows.size() == 200 && c4 >= 0.90 && c5 >= 0.97 &&
              lambda4 == 1.0,
          "coverage (A4, Lambda=1) " + fmt(c4) + ", (A5, Lambda=max Gamma_ui) " + fmt(c5) + "; failures " +
              std::to_string(f4) + "/" + std::to_string(f5)};
}

// ---- criteria 7-8: oracle suite ----------------------------------------------

Outcome criterion7(const std::vector<po::CheckResult>& results) {
  const std::vector<std::string> wanted = {"decomposition_identity", "pair_closed_form",
                                           "set_weights_pairs_match_pair_quality",
                                           "unit_weights_match_uniform_bitwise", "set_law_brackets"};
  bool pass = true;
  std::string detail;
  for (const auto& name : wanted) {
    auto it = std::find_if(results.begin(), results.end(), [&](const po::CheckResult& r) { return r.name == name; });
    if (it == results.end()) {
      pass = false;
      detail += name + "=missing ";
      continue;
    }
    pass = pass && it->passed;
    detail += name + (it->passed ? "=ok" : "=FAILED") + "(n=" + std::to_string(it->instances) + ", worst " +
              fmt(it->worst, 3) + ") ";
  }
  return {pass, detail};
}

Outcome criterion8(const std::vector<po::CheckResult>& results) {
  auto it = std::find_if(results.begin(), results.end(), [](const po::CheckResult& r) { return r.name == "dominance_probe"; });
  if (it == results.end()) return {false, "dominance_probe missing"};
  return {it->passed, "members " + std::to_string(it->instances) + ", " + it->detail};
}

// ---- criterion 9: matching optimality ----------------------------------------

double brute_force_cost(const Eigen::MatrixXd& cost) {
  const auto rows = static_cast<std::size_t>(cost.rows());
  const auto cols = static_cast<std::size_t>(cost.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> best(std::size_t{1} << cols, inf);
  best[0] = 0.0;
  double answer = inf;
  for (std::size_t mask = 0; mask < best.size(); ++mask) {
    if (best[mask] == inf) continue;
    const auto r = static_cast<std::size_t>(__builtin_popcountll(mask));
    if (r == rows) {
      answer = std::min(answer, best[mask]);
      continue;
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask & (std::size_t{1} << c)) continue;
      const auto next = mask | (std::size_t{1} << c);
      best[next] = std::min(best[next], best[mask] + cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    }
  }
  return answer;
}

Outcome criterion9() {
  CounterRng rng(SeedSpec{20240604, 0});
  std::size_t mismatches = 0;
  std::size_t greedy_better = 0;
  double worst_gap = 0.0;
  for (int instance = 0; instance < 100; ++instance) {
    const std::size_t treated = 1 + rng.below(8);
    std::size_t controls = treated + rng.below(13 - treated);
    const std::size_t dim = 1 + rng.below(3);
    // The pooled covariance needs more units than coordinates.
    if (treated + controls < dim + 2) controls = dim + 2 - treated;
    std::vector<Unit> units;
    for (std::size_t i = 0; i < treated + controls; ++i) {
      Unit u;
      for (std::size_t k = 0; k < dim; ++k) u.covariates.push_back(rng.normal() + (i < treated ? 0.5 : 0.0));
      u.treated = i < treated;
      units.push_back(u);
    }
    // Shuffle so treated units are spread through the file.
    for (std::size_t i = units.size(); i > 1; --i) std::swap(units[i - 1], units[rng.below(i)]);
    const StudyData data(units);
    const auto dm = mahalanobis(data);
    const double opt = matching_cost(optimal_pair_match(data, dm), dm);
    const double brute = brute_force_cost(dm.distance);
    const double greedy = matching_cost(greedy_pair_match(data, dm), dm);
    if (opt != brute) ++mismatches;
    worst_gap = std::max(worst_gap, std::abs(opt - brute));
    if (greedy < opt) ++greedy_better;
  }
  return {mismatches == 0 && greedy_better == 0,
          "100 instances: " + std::to_string(mismatches) + " cost mismatches (largest gap " + fmt(worst_gap, 3) +
              "), " + std::to_string(greedy_better) + " where greedy beat optimal"};
}

// ---- criterion 10: CLI determinism -------------------------------------------

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(PERMSENS_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[fs::relative(entry.path(), root).string()] = ss.str();
  }
  return files;
}

bool workflow(const fs::path& dir, unsigned threads, std::string& error) {
  fs::create_directories(dir);
  const auto p = [&](const char* name) { return (dir / name).string(); };
  const fs::path log = dir.parent_path() / "cli_log.txt";
  const std::vector<std::string> steps = {
      "generate --model a2 --n 600 --seed 11 --output " + p("study.csv"),
      "generate --model a2 --n 800 --seed 12 --output " + p("external.csv"),
      "match --input " + p("study.csv") + " --caliper 0.25 --output " + p("design.json"),
      "analyze --input " + p("study.csv") + " --design " + p("design.json") +
          " --mode adaptive --lambda 1.5 --density kernel --external " + p("external.csv") +
          " --alternative two-sided --output " + p("report.json"),
      "analyze --input " + p("study.csv") + " --design " + p("design.json") +
          " --gamma 1.3 --method mc --draws 2000 --seed 9 --output " + p("report_mc.json"),
      "invert --input " + p("study.csv") + " --design " + p("design.json") +
          " --mode adaptive --lambda 1.2 --density parametric --external " + p("external.csv") +
          " --grid-from -0.5 --grid-to 0.5 --grid-step 0.1 --output " + p("interval.json"),
      "simulate --model eq11 --n 300 --reps 6 --seed 13 --pipeline rand adapt.para adapt.ker sen-quantile --threads " +
          std::to_string(threads) + " --output-dir " + p("sim"),
      "simulate --study inversion --model a4 --n 300 --reps 3 --seed 14 --pipeline adapt.para --grid-from 0.5 "
      "--grid-to 1.5 --grid-step 0.1 --threads " +
          std::to_string(threads) + " --output-dir " + p("inv"),
      "oracle-check --decomposition 100 --brackets 20 --draws 20 --output " + p("oracle.json"),
  };
  for (const auto& s : steps) {
    const int code = run_cli(s, log);
    if (code != 0) {
      error = "exit " + std::to_string(code) + " from: " + s.substr(0, s.find(' '));
      return false;
    }
  }
  return true;
}

Outcome criterion10() {
  const fs::path root = fs::temp_directory_path() / "permsens_acceptance_cli";
  fs::remove_all(root);
  std::string error;
  // Same flags, different --threads: everything written must match byte for byte.
  const std::vector<std::pair<std::string, unsigned>> runs = {{"a", 1}, {"b", 1}, {"c", 4}};
  // Every run happens in the same directory so echoed paths agree, then is moved aside.
  for (const auto& [name, threads] : runs) {
    if (!workflow(root / "work", threads, error)) return {false, "run " + name + ": " + error};
    fs::rename(root / "work", root / name);
  }
  const auto a = tree_contents(root / "a");
  std::size_t differing = 0;
  std::string first_diff;
  for (const char* other : {"b", "c"}) {
    const auto b = tree_contents(root / other);
    if (b.size() != a.size()) {
      ++differing;
      if (first_diff.empty()) first_diff = std::string("file count in ") + other;
    }
    for (const auto& [path, bytes] : a) {
      auto it = b.find(path);
      if (it == b.end() || it->second != bytes) {
        ++differing;
        if (first_diff.empty()) first_diff = std::string(other) + "/" + path;
      }
    }
  }
  return {differing == 0, std::to_string(a.size()) + " artifacts compared across 3 runs (threads 1, 1, 4); " +
                              std::to_string(differing) + " differ" +
                              (first_diff.empty() ? std::string() : " (first: " + first_diff + ")")};
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria;
  std::optional<SharedStudy> shared;
  auto study = [&]() -> const SharedStudy& {
    if (!shared) shared = model_eleven_study();
    return *shared;
  };
  std::optional<std::vector<po::CheckResult>> suite;
  auto oracle = [&]() -> const std::vector<po::CheckResult>& {
    if (!suite) suite = po::run_suite(po::SuiteOptions{});
    return *suite;
  };

  criteria.emplace_back("naive randomization test is invalid under matching", [&] { return criterion1(study()); });
  criteria.emplace_back("adaptive test with true density is valid", [&] { return criterion2(study()); });
  criteria.emplace_back("bias statistic magnitudes", [&] { return criterion3(study()); });
  criteria.emplace_back("uniform bound at true max bias is conservative", [&] { return criterion4(study()); });
  criteria.emplace_back("caliper does not worsen kernel size distortion", [&] { return criterion5(study()); });
  criteria.emplace_back("confidence interval coverage", criterion6);
  criteria.emplace_back("oracle equivalences", [&] { return criterion7(oracle()); });
  criteria.emplace_back("dominance certificates", [&] { return criterion8(oracle()); });
  criteria.emplace_back("matching optimality", criterion9);
  criteria.emplace_back("CLI determinism", criterion10);

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %zu: %s | %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
