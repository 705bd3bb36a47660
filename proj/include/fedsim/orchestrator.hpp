#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/client.hpp"
#include "fedsim/datagen.hpp"
#include "fedsim/method.hpp"
#include "fedsim/objective.hpp"
#include "fedsim/server.hpp"

namespace fedsim {

enum class DataSource { kSynthetic, kCsv, kQuadratic };

struct DataConfig {
  DataSource source = DataSource::kSynthetic;
  // synthetic Gaussian classes
  std::size_t n_per_class = 1000;  // training samples per class
  std::size_t test_per_class = 200;
  double sep = 3.0;
  // CSV import (test file optional; otherwise test_per_class is held out)
  std::string csv_train;
  std::string csv_test;
  std::string csv_label = "label";
  // quadratic clients
  double quad_mu = 0.1;
  double quad_smoothness = 1.0;
  double quad_b_scale = 1.0;
  double quad_noise = 0.0;
  // Dirichlet label skew
  double dirichlet_beta = 0.6;
};

struct ExperimentConfig {
  MethodConfig method = MethodConfig::defaults(Method::kFedLada);
  Model model{ModelKind::kSoftmaxLinear, 20, 5, 0, Activation::kGelu, 25.0, 1e-2};
  DataConfig data;
  std::size_t clients = 20;       // m
  double rate = 0.1;              // participation
  int rounds = 300;               // T
  int local_steps = 10;           // K
  std::size_t batch = 50;
  std::vector<std::uint64_t> seeds{1};
  int metric_every = 1;

  /// ceil(rate * m), clamped to [1, m].
  std::size_t participants() const;
  /// Throws std::invalid_argument on an invalid configuration; returns
  /// non-fatal warnings.
  std::vector<std::string> validate() const;
};

struct RoundMetrics {
  int round = 0;  // 1-indexed count of completed rounds
  double train_loss = 0.0;
  double test_acc = 0.0;
  double grad_norm_sq = 0.0;
  std::optional<double> z_grad_norm_sq;
  double consistency = 0.0;
  double ga_norm = 0.0;
  double wall_ms = 0.0;
};

/// Per-seed world: data, partition, client objectives. Immutable once built.
class Federation {
 public:
  Federation(const ExperimentConfig& cfg, std::uint64_t seed);
  // Client objectives point into the owned data.
  Federation(const Federation&) = delete;
  Federation& operator=(const Federation&) = delete;

  std::size_t num_clients() const { return objectives_.size(); }
  const LocalObjective& client(std::size_t i) const { return *objectives_.at(i); }
  const Model& model() const { return model_; }
  const Dataset& train() const { return train_; }
  const Dataset& test() const { return test_; }
  const Partition& partition() const { return partition_; }
  const std::vector<QuadraticSpec>& quadratics() const { return quadratics_; }
  const ParamVector& initial_point() const { return x0_; }

  double train_loss(const ParamVector& x) const;
  double test_accuracy(const ParamVector& x) const;
  ParamVector train_grad(const ParamVector& x) const;

 private:
  Model model_;
  Dataset train_;
  Dataset test_;
  Partition partition_;
  std::vector<QuadraticSpec> quadratics_;
  QuadraticSpec quad_mean_;
  std::vector<std::unique_ptr<LocalObjective>> objectives_;
  ParamVector x0_;
};

/// Everything a round produced beyond the metrics; used by the identity checks.
struct RoundTrace {
  std::vector<std::size_t> participants;
  ParamVector x_before;   // x^{t-1}
  ParamVector x_start;    // x^t
  ParamVector x_end;      // x^{t+1}
  ParamVector ga_start;   // g_a^t
  ParamVector ga_end;     // g_a^{t+1}
  ParamVector direction_mean;  // (1/SK) sum_i sum_tau direction
  double eta_g = 0.0;
  double eta_l = 0.0;
  bool vhat_monotone = true;
  double theta_max = 0.0;
  std::vector<ClientResult> results;
};

struct RoundOutcome {
  RoundMetrics metrics;
  bool evaluated = true;  // false when metric_every skipped the full evaluation
  RoundTrace trace;
};

enum class Execution { kParallel, kSerial };

/// Uniform sample of S distinct clients without replacement, sorted ascending.
std::vector<std::size_t> sample_participants(std::size_t m, std::size_t s, std::uint64_t seed,
                                             int round);

/// Runs the participants' local loops. The parallel kernel distributes
/// clients over OpenMP threads; results land in participant order so the
/// output is identical to the serial reference.
std::vector<ClientResult> execute_clients(const Federation& fed, const ExperimentConfig& cfg,
                                          const ServerState& state,
                                          const std::vector<std::size_t>& participants,
                                          std::uint64_t seed, Execution mode);

/// One communication round. Metrics are evaluated on the aggregated model.
RoundOutcome run_round(ServerState& state, const Federation& fed, const ExperimentConfig& cfg,
                       std::uint64_t seed, Execution mode = Execution::kParallel);

/// Convenience wrapper owning the federation and server state of one seed.
class Simulation {
 public:
  Simulation(const ExperimentConfig& cfg, std::uint64_t seed);

  RoundOutcome step(Execution mode = Execution::kParallel);
  std::vector<RoundMetrics> run(Execution mode = Execution::kParallel);

  const ServerState& state() const { return state_; }
  const Federation& federation() const { return fed_; }
  const ExperimentConfig& config() const { return cfg_; }

 private:
  ExperimentConfig cfg_;
  std::uint64_t seed_;
  Federation fed_;
  ServerState state_;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<RoundMetrics> metrics;
  std::string error;  // empty on success
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
};

struct ExperimentSummary {
  int completed_seeds = 0;
  MetricSummary final_train_loss;
  MetricSummary final_test_acc;
  MetricSummary best_test_acc;
  MetricSummary final_grad_norm_sq;
  MetricSummary final_consistency;
  // Per-round mean across completed seeds, same rounds as the streams.
  std::vector<RoundMetrics> mean_stream;
};

struct ExperimentResult {
  std::vector<SeedRun> runs;
  ExperimentSummary summary;
};

/// Runs every seed independently. A failing seed is recorded and the others
/// still complete.
ExperimentResult run_experiment(const ExperimentConfig& cfg);
ExperimentSummary summarize(const std::vector<SeedRun>& runs);

enum class TargetKey { kTrainLoss, kTestAcc };

/// First round at which the key reaches the target (loss <= target or
/// accuracy >= target); nullopt means never.
std::optional<int> rounds_to_target(const std::vector<RoundMetrics>& metrics, TargetKey key,
                                    double target);

/// Sets the OpenMP thread count from FEDSIM_THREADS when present.
void configure_threads_from_env();

inline constexpr double kBenchmarkWeightDecay = 1e-3;
inline constexpr double kBenchmarkAdaptiveEtaL = 0.03;

/// The synthetic heterogeneity benchmark: SoftmaxLinear with p = 20, C = 5 on
/// 5000 training samples split over m = 20 clients by Dirichlet(0.6), batch 50,
/// K = 10, T = 300, seeds 1..5. Weight decay is 1e-3 for every method and
/// local adaptive methods use eta_l = 0.03.
ExperimentConfig benchmark_config(Method method);

}  // namespace fedsim
