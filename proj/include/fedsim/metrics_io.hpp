#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/orchestrator.hpp"

namespace fedsim {

/// Column order of metrics.csv. Wall-clock time is deliberately absent so
/// identical runs produce identical files.
inline constexpr const char* kMetricsHeader =
    "round,seed,train_loss,test_acc,grad_norm_sq,z_grad_norm_sq,consistency,ga_norm";

struct MetricsRow {
  std::uint64_t seed = 0;
  RoundMetrics metrics;
};

void write_metrics_csv(std::ostream& out, const std::vector<SeedRun>& runs);
std::string metrics_csv(const std::vector<SeedRun>& runs);

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses a metrics.csv; throws SchemaError when the header differs.
std::vector<MetricsRow> read_metrics_csv(std::istream& in, const std::string& name = "<csv>");
std::vector<MetricsRow> read_metrics_file(const std::string& path);

/// Groups rows back into per-seed streams in first-seen seed order.
std::vector<SeedRun> rows_to_runs(const std::vector<MetricsRow>& rows);

std::string summary_json(const ExperimentConfig& cfg, const ExperimentResult& result);

struct RunManifest {
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::string started_utc;
  std::string finished_utc;
  std::vector<std::string> outputs;
  std::string tool_version;
};

std::string manifest_json(const RunManifest& m);
std::string utc_now_iso8601();

inline constexpr const char* kToolVersion = "0.3.0";

struct CompareRow {
  std::string label;
  std::optional<int> rounds;   // nullopt: target never reached
  std::optional<double> ratio;  // rounds / best rounds
};

/// Rounds-to-target per labelled run set (on the seed-mean stream) and the
/// ratio to the fastest one.
std::vector<CompareRow> compare_runs(const std::vector<std::pair<std::string, std::vector<SeedRun>>>& runs,
                                     TargetKey key, double target);
std::string render_compare_table(const std::vector<CompareRow>& rows);
std::string compare_csv(const std::vector<CompareRow>& rows);

}  // namespace fedsim
