// Acceptance gate: one PASS/FAIL line per criterion.
// Usage: acceptance <path-to-fedsim-cli> [scratch-dir]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/diagnostics.hpp"
#include "fedsim/orchestrator.hpp"

namespace fs = std::filesystem;
using namespace fedsim;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Line {
  std::string id;
  bool pass;
  std::string detail;
};

std::vector<Line> g_lines;

void report(const std::string& id, bool pass, const std::string& detail) {
  g_lines.push_back({id, pass, detail});
  std::cout << (pass ? "PASS " : "FAIL ") << id << ": " << detail << std::endl;
}

std::string fmt(double v, int prec = 4) {
  if (std::isinf(v)) return "inf";
  std::ostringstream o;
  o.precision(prec);
  o << v;
  return o.str();
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

std::string list(const std::vector<double>& xs) {
  std::string s = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + fmt(xs[i]);
  return s + "]";
}

// Per-seed benchmark streams, memoized by canonical config.
std::map<std::string, std::vector<SeedRun>> g_cache;

const std::vector<SeedRun>& runs_of(const ExperimentConfig& cfg) {
  const std::string key = canonical_config(cfg);
  auto it = g_cache.find(key);
  if (it != g_cache.end()) return it->second;
  ExperimentResult res = run_experiment(cfg);
  for (const auto& r : res.runs)
    if (!r.error.empty()) throw std::runtime_error("seed " + std::to_string(r.seed) + ": " + r.error);
  return g_cache.emplace(key, std::move(res.runs)).first->second;
}

std::vector<double> rounds_per_seed(const std::vector<SeedRun>& runs, double target) {
  std::vector<double> out;
  for (const auto& r : runs) {
    const auto hit = rounds_to_target(r.metrics, TargetKey::kTrainLoss, target);
    out.push_back(hit ? *hit : std::numeric_limits<double>::infinity());
  }
  return out;
}

std::vector<double> final_acc(const std::vector<SeedRun>& runs) {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(r.metrics.back().test_acc);
  return out;
}

double tail_consistency(const SeedRun& r, std::size_t window) {
  const std::size_t n = r.metrics.size();
  const std::size_t from = n > window ? n - window : 0;
  double s = 0.0;
  for (std::size_t i = from; i < n; ++i) s += r.metrics[i].consistency;
  return s / static_cast<double>(n - from);
}

// Train-loss target shared by the speed criteria: 1.2x the best (lowest)
// final FedAvg loss over the benchmark seeds.
double train_target() {
  const auto& avg = runs_of(benchmark_config(Method::kFedAvg));
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : avg) best = std::min(best, r.metrics.back().train_loss);
  return 1.2 * best;
}

void guarded(const std::string& id, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    report(id, false, std::string("threw: ") + e.what());
  }
}

void check_result(const std::string& id, const CheckResult& r, const std::string& extra = "") {
  report(id, r.passed, r.name + ", value " + fmt(r.value, 6) + " (limit " + fmt(r.threshold, 6) + "), " +
                           r.detail + extra);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <fedsim-cli> [scratch-dir]\n";
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path scratch = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "fedsim_acceptance";
  configure_threads_from_env();
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  // 1a
  guarded("1a", [&] {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string detail;
    for (std::uint64_t s : {1, 2}) {
      const CheckResult r = check_alpha_one_equivalence(benchmark_config(Method::kFedLada), 300, s);
      ok = ok && r.passed;
      detail += "seed " + std::to_string(s) + ": " + r.detail + "; ";
    }
    const double secs = seconds_since(t0);
    report("1a", ok && secs < 10.0, detail + "runtime " + fmt(secs, 3) + " s (limit 10 s)");
  });

  // 1b
  guarded("1b", [&] {
    double worst = 0.0;
    for (std::uint64_t s : seeds) {
      worst = std::max(worst, check_z_lemma(benchmark_config(Method::kFedLada), 50, s).value);
    }
    report("1b", worst <= 1e-9,
           "max residual over 50 rounds x 5 seeds " + fmt(worst, 6) + " (limit 1e-9), decay off");
  });

  // 1c
  guarded("1c", [&] {
    double worst = 0.0;
    for (std::uint64_t s : seeds) {
      worst = std::max(worst, check_ga_recursion(benchmark_config(Method::kFedLada), 300, s).value);
    }
    report("1c", worst <= 1e-10, "max residual over 300 rounds x 5 seeds " + fmt(worst, 6) + " (limit 1e-10)");
  });

  // 1d
  guarded("1d", [&] {
    bool ok = true;
    std::string detail;
    for (Method m : {Method::kFedLada, Method::kLocalAdam}) {
      const CheckResult r = check_vhat_theta(benchmark_config(m), 1);
      ok = ok && r.passed;
      detail += std::string(method_name(m)) + ": max theta " + fmt(r.value, 6) + ", " + r.detail + "; ";
    }
    report("1d", ok, detail + "limit 1/eps_v = 1e8");
  });

  // 1e
  guarded("1e", [&] {
    const ExperimentConfig base = benchmark_config(Method::kFedAvg);
    const CheckResult a = check_prox_reduction(base, 300, 1);
    const CheckResult b = check_scaffold_reduction(base, 300, 1);
    const CheckResult c = check_centralized_reduction(base, 300, 1);
    report("1e", a.passed && b.passed && c.passed,
           a.name + ": " + a.detail + "; " + b.name + ": " + b.detail + "; " + c.name + ": " + c.detail);
  });

  // 2
  guarded("2", [&] {
    const auto t0 = Clock::now();
    const auto results = run_gradcheck();
    const double secs = seconds_since(t0);
    bool ok = secs < 30.0;
    std::string detail;
    for (const auto& r : results) {
      ok = ok && r.passed;
      detail += r.name + " max rel err " + fmt(r.value, 3) + " (" + r.detail + "); ";
    }
    report("2", ok, detail + "runtime " + fmt(secs, 3) + " s (limit 30 s)");
  });

  // 3
  guarded("3", [&] {
    bool ok = true;
    std::string detail;
    for (const auto& r : check_step_oracles(1e-12)) {
      ok = ok && r.passed;
      detail += r.name + " err " + fmt(r.value, 3) + "; ";
    }
    report("3", ok, detail + "limit 1e-12");
  });

  // 4
  guarded("4", [&] {
    const auto t0 = Clock::now();
    const double alphas[] = {0.05, 0.5, 1.0};
    std::vector<std::vector<double>> cons(3);
    for (int k = 0; k < 3; ++k) {
      ExperimentConfig cfg = benchmark_config(Method::kFedLada);
      cfg.method.alpha = alphas[k];
      for (const auto& r : runs_of(cfg)) cons[k].push_back(tail_consistency(r, 50));
    }
    int ordered = 0;
    for (std::size_t s = 0; s < seeds.size(); ++s)
      if (cons[0][s] < cons[1][s] && cons[1][s] < cons[2][s]) ++ordered;
    const double secs = seconds_since(t0);
    report("4", ordered >= 4 && secs < 180.0,
           "consistency term (last 50 rounds) rises with alpha in " + std::to_string(ordered) +
               "/5 seeds (need 4); alpha=0.05 " + list(cons[0]) + ", 0.5 " + list(cons[1]) + ", 1.0 " +
               list(cons[2]) + "; runtime " + fmt(secs, 3) + " s (limit 180 s)");
  });

  // 5
  guarded("5", [&] {
    const double target = train_target();
    const auto avg = rounds_per_seed(runs_of(benchmark_config(Method::kFedAvg)), target);
    const auto ladam = rounds_per_seed(runs_of(benchmark_config(Method::kLocalAdam)), target);
    const auto lada = rounds_per_seed(runs_of(benchmark_config(Method::kFedLada)), target);
    const double ma = median(avg), ml = median(ladam), mf = median(lada);
    const bool first = ml < ma;
    const bool second = mf <= 1.1 * ml;
    report("5", first && second,
           "target loss " + fmt(target) + "; median rounds fedavg " + fmt(ma) + " " + list(avg) + ", localadam " +
               fmt(ml) + " " + list(ladam) + ", fedlada " + fmt(mf) + " " + list(lada) + "; localadam < fedavg: " +
               (first ? "yes" : "no") + "; fedlada <= 1.1x localadam: " + (second ? "yes" : "no"));
  });

  // 6
  guarded("6", [&] {
    const double target = train_target();
    const auto avg = rounds_per_seed(runs_of(benchmark_config(Method::kFedAvg)), target);
    const auto adam = rounds_per_seed(runs_of(benchmark_config(Method::kFedAdam)), target);
    const double ratio = median(adam) / median(avg);
    report("6", ratio >= 1.5,
           "median rounds fedadam " + fmt(median(adam)) + " " + list(adam) + " / fedavg " + fmt(median(avg)) +
               " = " + fmt(ratio) + " (need >= 1.5), eta_g = " +
               fmt(benchmark_config(Method::kFedAdam).method.eta_g));
  });

  // 7
  guarded("7", [&] {
    const double target = train_target();
    ExperimentConfig lo = benchmark_config(Method::kFedLada);
    ExperimentConfig hi = lo;
    hi.rate = 0.2;
    const auto r_lo = rounds_per_seed(runs_of(lo), target);
    const auto r_hi = rounds_per_seed(runs_of(hi), target);
    const double factor = median(r_lo) / median(r_hi);
    report("7", factor >= 1.15 && factor <= 2.5,
           "median rounds rate 0.1 " + fmt(median(r_lo)) + " " + list(r_lo) + ", rate 0.2 " + fmt(median(r_hi)) +
               " " + list(r_hi) + "; factor " + fmt(factor) + " (need [1.15, 2.5])");
  });

  // 8
  guarded("8", [&] {
    const double target = train_target();
    auto with_k = [](int k) {
      ExperimentConfig c = benchmark_config(Method::kFedLada);
      c.local_steps = k;
      return c;
    };
    const auto r2 = rounds_per_seed(runs_of(with_k(2)), target);
    const auto r4 = rounds_per_seed(runs_of(with_k(4)), target);
    const auto a4 = final_acc(runs_of(with_k(4)));
    const auto a20 = final_acc(runs_of(with_k(20)));
    const bool faster = median(r4) < median(r2);
    const bool worse = median(a20) <= median(a4);
    report("8", faster && worse,
           "median rounds K=2 " + fmt(median(r2)) + ", K=4 " + fmt(median(r4)) + " (K=4 faster: " +
               (faster ? "yes" : "no") + "); median final acc K=4 " + fmt(median(a4)) + ", K=20 " +
               fmt(median(a20)) + " (K=20 <= K=4: " + (worse ? "yes" : "no") + ")");
  });

  // 9
  guarded("9", [&] {
    fs::remove_all(scratch);
    fs::create_directories(scratch);
    const std::string sets =
        " --set method.name=fedlada --set method.eta_l=0.03 --set method.weight_decay=0.001"
        " --set fed.rate=0.5 --set fed.rounds=40 --set run.seeds=1,2";
    std::vector<std::string> csvs;
    int i = 0;
    for (const char* threads : {"1", "8", "8"}) {
      const fs::path out = scratch / ("det" + std::to_string(i++));
      const std::string cmd = std::string("FEDSIM_THREADS=") + threads + " \"" + cli + "\" run" + sets +
                              " --out \"" + out.string() + "\" > /dev/null";
      const int rc = std::system(cmd.c_str());
      if (rc != 0) throw std::runtime_error("cli exited with status " + std::to_string(rc));
      csvs.push_back(slurp(out / "metrics.csv"));
    }
    const bool same = !csvs[0].empty() && csvs[0] == csvs[1] && csvs[1] == csvs[2];
    report("9", same,
           "metrics.csv from FEDSIM_THREADS=1, 8, 8: " + std::string(same ? "byte-identical" : "differ") + " (" +
               std::to_string(csvs[0].size()) + " bytes)");
  });

  // 10
  guarded("10", [&] {
    const double scales[] = {0.25, 1.0, 1.5};
    std::vector<double> med;
    std::string detail;
    for (double s : scales) {
      ExperimentConfig cfg = benchmark_config(Method::kScaledScaffold);
      cfg.method.scaffold_scale = s;
      const auto acc = final_acc(runs_of(cfg));
      med.push_back(median(acc));
      detail += "scale " + fmt(s) + " median acc " + fmt(median(acc)) + " " + list(acc) + "; ";
    }
    report("10", med[1] >= med[0] && med[1] >= med[2], detail + "need scale 1.0 >= both");
  });

  int failed = 0;
  for (const auto& l : g_lines) failed += l.pass ? 0 : 1;
  std::cout << "acceptance: " << (g_lines.size() - failed) << "/" << g_lines.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
