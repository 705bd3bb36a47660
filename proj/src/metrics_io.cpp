#include "fedsim/metrics_io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "fedsim/config.hpp"

namespace fedsim {

void write_metrics_csv(std::ostream& out, const std::vector<SeedRun>& runs) {
  out << kMetricsHeader << '\n';
  for (const auto& run : runs) {
    for (const auto& m : run.metrics) {
      out << m.round << ',' << run.seed << ',' << format_double(m.train_loss) << ','
          << format_double(m.test_acc) << ',' << format_double(m.grad_norm_sq) << ','
          << (m.z_grad_norm_sq ? format_double(*m.z_grad_norm_sq) : std::string()) << ','
          << format_double(m.consistency) << ',' << format_double(m.ga_norm) << '\n';
    }
  }
}

std::string metrics_csv(const std::vector<SeedRun>& runs) {
  std::ostringstream out;
  write_metrics_csv(out, runs);
  return out.str();
}

namespace {

double parse_real(const std::string& cell, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
    throw SchemaError(where + ": bad number '" + cell + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(const std::string& cell, const std::string& where) {
  Int v = 0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
    throw SchemaError(where + ": bad integer '" + cell + "'");
  }
  return v;
}

}  // namespace

std::vector<MetricsRow> read_metrics_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(name + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) {
    throw SchemaError(name + ": unexpected header '" + line + "', expected '" + kMetricsHeader + "'");
  }
  std::vector<MetricsRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    const std::string where = name + ":" + std::to_string(line_no);
    if (cells.size() != 8) throw SchemaError(where + ": expected 8 columns");
    MetricsRow r;
    r.metrics.round = parse_int<int>(cells[0], where);
    r.seed = parse_int<std::uint64_t>(cells[1], where);
    r.metrics.train_loss = parse_real(cells[2], where);
    r.metrics.test_acc = parse_real(cells[3], where);
    r.metrics.grad_norm_sq = parse_real(cells[4], where);
    if (!cells[5].empty()) r.metrics.z_grad_norm_sq = parse_real(cells[5], where);
    r.metrics.consistency = parse_real(cells[6], where);
    r.metrics.ga_norm = parse_real(cells[7], where);
    rows.push_back(r);
  }
  return rows;
}

std::vector<MetricsRow> read_metrics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(path + ": cannot open");
  return read_metrics_csv(in, path);
}

std::vector<SeedRun> rows_to_runs(const std::vector<MetricsRow>& rows) {
  std::vector<SeedRun> runs;
  for (const auto& r : rows) {
    auto it = std::find_if(runs.begin(), runs.end(), [&](const SeedRun& s) { return s.seed == r.seed; });
    if (it == runs.end()) {
      runs.push_back(SeedRun{r.seed, {}, {}});
      it = runs.end() - 1;
    }
    it->metrics.push_back(r.metrics);
  }
  return runs;
}

namespace {

nlohmann::json stat(const MetricSummary& s) { return {{"mean", s.mean}, {"std", s.std}}; }

}  // namespace

std::string summary_json(const ExperimentConfig& cfg, const ExperimentResult& result) {
  nlohmann::json j;
  j["method"] = std::string(method_name(cfg.method.method));
  j["config_hash"] = config_hash(cfg);
  j["completed_seeds"] = result.summary.completed_seeds;
  j["final_train_loss"] = stat(result.summary.final_train_loss);
  j["final_test_acc"] = stat(result.summary.final_test_acc);
  j["best_test_acc"] = stat(result.summary.best_test_acc);
  j["final_grad_norm_sq"] = stat(result.summary.final_grad_norm_sq);
  j["final_consistency"] = stat(result.summary.final_consistency);
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& run : result.runs) {
    nlohmann::json s;
    s["seed"] = run.seed;
    if (!run.error.empty()) {
      s["error"] = run.error;
    } else if (!run.metrics.empty()) {
      const auto& last = run.metrics.back();
      double best = 0.0;
      for (const auto& m : run.metrics) best = std::max(best, m.test_acc);
      s["rounds"] = last.round;
      s["final_train_loss"] = last.train_loss;
      s["final_test_acc"] = last.test_acc;
      s["best_test_acc"] = best;
      s["final_grad_norm_sq"] = last.grad_norm_sq;
    }
    seeds.push_back(s);
  }
  j["seeds"] = seeds;
  nlohmann::json mean = nlohmann::json::array();
  for (const auto& m : result.summary.mean_stream) {
    nlohmann::json r = {{"round", m.round},
                        {"train_loss", m.train_loss},
                        {"test_acc", m.test_acc},
                        {"grad_norm_sq", m.grad_norm_sq},
                        {"consistency", m.consistency},
                        {"ga_norm", m.ga_norm}};
    if (m.z_grad_norm_sq) r["z_grad_norm_sq"] = *m.z_grad_norm_sq;
    mean.push_back(r);
  }
  j["mean_stream"] = mean;
  return j.dump(2) + "\n";
}

std::string manifest_json(const RunManifest& m) {
  nlohmann::json j;
  j["config_hash"] = m.config_hash;
  j["seeds"] = m.seeds;
  j["started_utc"] = m.started_utc;
  j["finished_utc"] = m.finished_utc;
  j["outputs"] = m.outputs;
  j["tool_version"] = m.tool_version;
  return j.dump(2) + "\n";
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::vector<CompareRow> compare_runs(const std::vector<std::pair<std::string, std::vector<SeedRun>>>& runs,
                                     TargetKey key, double target) {
  std::vector<CompareRow> rows;
  for (const auto& [label, seeds] : runs) {
    const auto summary = summarize(seeds);
    rows.push_back(CompareRow{label, rounds_to_target(summary.mean_stream, key, target), std::nullopt});
  }
  std::optional<int> best;
  for (const auto& r : rows)
    if (r.rounds && (!best || *r.rounds < *best)) best = r.rounds;
  for (auto& r : rows)
    if (r.rounds && best) r.ratio = static_cast<double>(*r.rounds) / static_cast<double>(*best);
  return rows;
}

std::string render_compare_table(const std::vector<CompareRow>& rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "method" << "  rounds\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(width)) << r.label << "  ";
    if (r.rounds) {
      std::ostringstream ratio;
      ratio << std::fixed << std::setprecision(2) << *r.ratio;
      out << *r.rounds << " (" << ratio.str() << "x)";
    } else {
      out << "inf";
    }
    out << '\n';
  }
  return out.str();
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "label,rounds_to_target,ratio\n";
  for (const auto& r : rows) {
    out << r.label << ',' << (r.rounds ? std::to_string(*r.rounds) : std::string("inf")) << ','
        << (r.ratio ? format_double(*r.ratio) : std::string("inf")) << '\n';
  }
  return out.str();
}

}  // namespace fedsim
