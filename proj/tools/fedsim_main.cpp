// fedsim command-line driver: run, sweep, compare, gradcheck, selfcheck.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <omp.h>

#include "fedsim/config.hpp"
#include "fedsim/diagnostics.hpp"
#include "fedsim/metrics_io.hpp"
#include "fedsim/orchestrator.hpp"

namespace fs = std::filesystem;
using namespace fedsim;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

// Usage and configuration problems map to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ConfigDoc load_doc(const std::string& path, const std::vector<std::string>& overrides) {
  ConfigDoc doc = path.empty() ? ConfigDoc{} : parse_config_file(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return doc;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void print_warnings(const ExperimentConfig& cfg) {
  for (const auto& w : cfg.validate()) std::cerr << "warning: " << w << "\n";
}

// Runs one experiment into `dir`; returns the number of failed seeds.
int run_into(const ExperimentConfig& cfg, const fs::path& dir, ExperimentResult* keep = nullptr) {
  fs::create_directories(dir);
  RunManifest manifest;
  manifest.config_hash = config_hash(cfg);
  manifest.seeds = cfg.seeds;
  manifest.tool_version = kToolVersion;
  manifest.started_utc = utc_now_iso8601();
  ExperimentResult res = run_experiment(cfg);
  manifest.finished_utc = utc_now_iso8601();

  const fs::path metrics = dir / "metrics.csv";
  const fs::path summary = dir / "summary.json";
  const fs::path man = dir / "manifest.json";
  write_file(metrics, metrics_csv(res.runs));
  write_file(summary, summary_json(cfg, res));
  write_file(dir / "config.cfg", canonical_config(cfg));
  manifest.outputs = {metrics.string(), summary.string(), (dir / "config.cfg").string(), man.string()};
  write_file(man, manifest_json(manifest));

  int failed = 0;
  for (const auto& r : res.runs) {
    if (!r.error.empty()) {
      std::cerr << "seed " << r.seed << " failed: " << r.error << "\n";
      ++failed;
    }
  }
  if (keep) *keep = std::move(res);
  return failed;
}

TargetKey parse_key(const std::string& key) {
  if (key == "train_loss") return TargetKey::kTrainLoss;
  if (key == "test_acc") return TargetKey::kTestAcc;
  throw UsageError("--key must be train_loss or test_acc, got '" + key + "'");
}

int cmd_run(const std::string& config, const std::vector<std::string>& sets, const std::string& out) {
  const ExperimentConfig cfg = build_config(load_doc(config, sets));
  print_warnings(cfg);
  ExperimentResult res;
  const int failed = run_into(cfg, out, &res);
  const auto& s = res.summary;
  std::cout << method_name(cfg.method.method) << ": " << s.completed_seeds << "/" << cfg.seeds.size()
            << " seeds, final train loss " << format_double(s.final_train_loss.mean) << ", final test acc "
            << format_double(s.final_test_acc.mean) << "\nwrote " << out << "\n";
  return failed == 0 ? kOk : kRuntime;
}

int cmd_sweep(const std::string& config, const std::vector<std::string>& sets, const std::string& axis,
              const std::vector<std::string>& values, const std::string& out, const std::string& key,
              double target, bool has_target) {
  if (values.empty()) throw UsageError("--values must list at least one value");
  const auto& keys = config_keys();
  if (std::find(keys.begin(), keys.end(), axis) == keys.end() || axis.rfind("data.csv", 0) == 0 ||
      axis == "run.seeds") {
    throw UsageError("invalid sweep axis '" + axis + "'; expected a numeric or enum config key");
  }
  const std::optional<TargetKey> tk = has_target ? std::optional(parse_key(key)) : std::nullopt;

  // Resolve every sub-configuration before running anything.
  std::vector<ExperimentConfig> cfgs;
  for (const auto& v : values) {
    ConfigDoc doc = load_doc(config, sets);
    apply_override(doc, axis + "=" + v);
    cfgs.push_back(build_config(doc));
  }
  std::string csv = axis + ",completed_seeds,final_train_loss_mean,final_train_loss_std,"
                           "final_test_acc_mean,final_test_acc_std,best_test_acc_mean,best_test_acc_std,"
                           "final_grad_norm_sq_mean,final_consistency_mean";
  if (tk) csv += ",rounds_to_target";
  csv += "\n";
  int failed = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    ExperimentResult res;
    failed += run_into(cfgs[i], fs::path(out) / (axis + "=" + values[i]), &res);
    const auto& s = res.summary;
    csv += values[i] + "," + std::to_string(s.completed_seeds) + "," + format_double(s.final_train_loss.mean) +
           "," + format_double(s.final_train_loss.std) + "," + format_double(s.final_test_acc.mean) + "," +
           format_double(s.final_test_acc.std) + "," + format_double(s.best_test_acc.mean) + "," +
           format_double(s.best_test_acc.std) + "," + format_double(s.final_grad_norm_sq.mean) + "," +
           format_double(s.final_consistency.mean);
    if (tk) {
      const auto r = rounds_to_target(s.mean_stream, *tk, target);
      csv += "," + (r ? std::to_string(*r) : std::string("inf"));
    }
    csv += "\n";
    std::cout << axis << "=" << values[i] << ": final train loss " << format_double(s.final_train_loss.mean)
              << ", final test acc " << format_double(s.final_test_acc.mean) << "\n";
  }
  fs::create_directories(out);
  write_file(fs::path(out) / "sweep.csv", csv);
  std::cout << "wrote " << (fs::path(out) / "sweep.csv").string() << "\n";
  return failed == 0 ? kOk : kRuntime;
}

int cmd_compare(const std::vector<std::string>& files, const std::string& key, double target,
                const std::string& out) {
  if (files.size() < 2) throw UsageError("compare needs at least two metric files");
  std::set<fs::path> seen;
  for (const auto& f : files) {
    const fs::path canon = fs::weakly_canonical(f);
    if (!seen.insert(canon).second) throw UsageError("metric file listed twice: " + f);
  }
  const TargetKey tk = parse_key(key);
  std::vector<std::pair<std::string, std::vector<SeedRun>>> runs;
  for (const auto& f : files) {
    const fs::path p(f);
    std::string label = p.filename() == "metrics.csv" && p.has_parent_path()
                            ? fs::weakly_canonical(p).parent_path().filename().string()
                            : p.stem().string();
    runs.emplace_back(label, rows_to_runs(read_metrics_file(f)));
  }
  const auto rows = compare_runs(runs, tk, target);
  std::cout << render_compare_table(rows);
  fs::create_directories(out);
  write_file(fs::path(out) / "compare.csv", compare_csv(rows));
  return kOk;
}

int cmd_gradcheck(int checks) {
  GradcheckOptions opt;
  opt.checks_per_kind = checks;
  bool ok = true;
  for (const auto& r : run_gradcheck(opt)) {
    std::cout << format_check(r) << "\n";
    ok = ok && r.passed;
  }
  return ok ? kOk : kRuntime;
}

int cmd_selfcheck(const std::string& config, const std::vector<std::string>& sets) {
  ExperimentConfig base = benchmark_config(Method::kFedLada);
  if (!config.empty() || !sets.empty()) base = build_config(load_doc(config, sets));
  bool ok = true;
  for (const auto& r : run_selfcheck(base, base.seeds.front())) {
    std::cout << format_check(r) << "\n";
    ok = ok && r.passed;
  }
  return ok ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  configure_threads_from_env();

  CLI::App app{"Deterministic federated optimization simulator"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (overrides FEDSIM_THREADS)")->check(CLI::PositiveNumber);

  std::string config, out = "fedsim_out", axis, key = "train_loss";
  std::vector<std::string> sets, values, files;
  double target = 0.0;
  int checks = 100;

  auto* run = app.add_subcommand("run", "run one experiment over all configured seeds");
  run->add_option("config", config, "config file")->check(CLI::ExistingFile);
  run->add_option("--set", sets, "override, key=value (repeatable)");
  run->add_option("--out", out, "output directory");

  auto* sweep = app.add_subcommand("sweep", "one sub-run per value of a config key");
  sweep->add_option("config", config, "config file")->check(CLI::ExistingFile);
  sweep->add_option("--set", sets, "override, key=value (repeatable)");
  sweep->add_option("--axis", axis, "config key to vary")->required();
  sweep->add_option("--values", values, "comma-separated values")->delimiter(',');
  sweep->add_option("--out", out, "output directory");
  sweep->add_option("--key", key, "train_loss or test_acc, for rounds_to_target");
  auto* sweep_target = sweep->add_option("--target", target, "target for rounds_to_target");

  auto* compare = app.add_subcommand("compare", "rounds to target across metric files");
  compare->add_option("files", files, "metrics.csv files")->required()->check(CLI::ExistingFile);
  compare->add_option("--key", key, "train_loss or test_acc");
  compare->add_option("--target", target, "target value")->required();
  compare->add_option("--out", out, "directory for compare.csv");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--checks", checks, "checks per model kind")->check(CLI::PositiveNumber);

  auto* selfcheck = app.add_subcommand("selfcheck", "identity and reduction suite");
  selfcheck->add_option("config", config, "config file")->check(CLI::ExistingFile);
  selfcheck->add_option("--set", sets, "override, key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (threads > 0) omp_set_num_threads(threads);

  try {
    if (*run) return cmd_run(config, sets, out);
    if (*sweep) return cmd_sweep(config, sets, axis, values, out, key, target, sweep_target->count() > 0);
    if (*compare) return cmd_compare(files, key, target, out);
    if (*gradcheck) return cmd_gradcheck(checks);
    if (*selfcheck) return cmd_selfcheck(config, sets);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
