#include "fedsim/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <stdexcept>

#include <omp.h>

namespace fedsim {

std::size_t ExperimentConfig::participants() const {
  const double raw = std::ceil(rate * static_cast<double>(clients) - 1e-9);
  const auto s = static_cast<std::size_t>(std::max(1.0, raw));
  return std::min(s, clients);
}

std::vector<std::string> ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (clients == 0) fail("fed.clients must be >= 1");
  if (!(rate > 0.0 && rate <= 1.0)) fail("fed.rate must lie in (0, 1]");
  if (rounds < 1) fail("fed.rounds must be >= 1");
  if (local_steps < 1) fail("fed.local_steps must be >= 1 (zero local steps is not a round)");
  if (batch == 0) fail("fed.batch must be >= 1");
  if (seeds.empty()) fail("run.seeds must list at least one seed");
  if (metric_every < 1) fail("run.metric_every must be >= 1");
  if (!(method.eta_g > 0.0)) fail("method.eta_g must be positive");
  if (!(method.decay > 0.0 && method.decay <= 1.0)) fail("method.decay must lie in (0, 1]");
  if (!(method.weight_decay >= 0.0)) fail("method.weight_decay must be >= 0");
  if (!(method.adam_v0 > 0.0)) fail("method.adam_v0 must be positive");
  if (!(data.dirichlet_beta > 0.0)) fail("data.beta must be positive");
  const bool quadratic = model.kind == ModelKind::kQuadratic;
  if (quadratic != (data.source == DataSource::kQuadratic)) {
    fail("model.kind = quadratic pairs with data.source = quadratic and nothing else");
  }
  if (model.p == 0) fail("model.features must be >= 1");
  if (!quadratic && data.source == DataSource::kSynthetic && model.classes == 0) {
    fail("model.classes must be >= 1");
  }
  if (model.kind == ModelKind::kMlp1 && model.hidden == 0) fail("model.hidden must be >= 1");
  if (model.activation == Activation::kSmu && !(model.smu_mu > 0.0)) fail("model.smu_mu must be > 0");
  if (data.source == DataSource::kSynthetic && !(data.sep > 0.0)) fail("data.sep must be positive");
  if (data.source == DataSource::kSynthetic && data.n_per_class == 0) {
    fail("data.n_per_class must be >= 1");
  }
  if (data.source == DataSource::kCsv && data.csv_train.empty()) fail("data.csv_train is required");
  if (quadratic && data.quad_smoothness < data.quad_mu) fail("data.quad_L must be >= data.quad_mu");

  try {
    LocalHyper::from(method, local_steps, method.eta_l).validate();
  } catch (const std::invalid_argument& e) {
    fail(std::string("method.") + e.what());
  }

  std::vector<std::string> warnings;
  const auto hyper = LocalHyper::from(method, local_steps, method.eta_l);
  if (is_local_adaptive(method.method) && !hyper.beta1_condition_holds()) {
    warnings.push_back("beta1 = " + std::to_string(method.beta1) + " exceeds K/(K+1) = " +
                       std::to_string(static_cast<double>(local_steps) / (local_steps + 1)) +
                       "; the convergence bound assumes beta1 <= K/(K+1)");
  }
  return warnings;
}

// ---------------------------------------------------------------------------

Federation::Federation(const ExperimentConfig& cfg, std::uint64_t seed) : model_(cfg.model) {
  model_.weight_decay = cfg.method.weight_decay;
  const std::size_t m = cfg.clients;
  if (cfg.data.source == DataSource::kQuadratic) {
    model_.kind = ModelKind::kQuadratic;
    const std::size_t p = model_.p;
    quad_mean_.p = p;
    quad_mean_.a.assign(p * p, 0.0);
    quad_mean_.b.assign(p, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      Rng rng = Rng::stream(seed, StreamTag::kData, i);
      quadratics_.push_back(QuadraticSpec::random(p, cfg.data.quad_mu, cfg.data.quad_smoothness,
                                                  cfg.data.quad_b_scale, rng));
    }
    const double inv = 1.0 / static_cast<double>(m);
    for (const auto& q : quadratics_) {
      for (std::size_t k = 0; k < p * p; ++k) quad_mean_.a[k] += q.a[k] * inv;
      for (std::size_t k = 0; k < p; ++k) quad_mean_.b[k] += q.b[k] * inv;
    }
    partition_.shards.resize(m);
    for (const auto& q : quadratics_) {
      objectives_.push_back(
          std::make_unique<QuadraticObjective>(q, model_.weight_decay, cfg.data.quad_noise));
    }
  } else {
    if (cfg.data.source == DataSource::kSynthetic) {
      Rng data_rng = Rng::stream(seed, StreamTag::kData);
      const Dataset all = generate_gaussian_classes(cfg.data.n_per_class + cfg.data.test_per_class,
                                                    model_.p, model_.classes, cfg.data.sep, data_rng);
      Rng split_rng = Rng::stream(seed, StreamTag::kTest);
      auto [tr, te] = split_train_test(all, cfg.data.test_per_class, split_rng);
      train_ = std::move(tr);
      test_ = std::move(te);
    } else {
      Dataset all = load_csv(cfg.data.csv_train, cfg.data.csv_label);
      if (!cfg.data.csv_test.empty()) {
        train_ = std::move(all);
        test_ = load_csv(cfg.data.csv_test, cfg.data.csv_label);
      } else {
        Rng split_rng = Rng::stream(seed, StreamTag::kTest);
        auto [tr, te] = split_train_test(all, cfg.data.test_per_class, split_rng);
        train_ = std::move(tr);
        test_ = std::move(te);
      }
      model_.p = train_.p;
      model_.classes = std::max(train_.classes, test_.classes);
      train_.classes = test_.classes = model_.classes;
      if (test_.p != train_.p) throw DataError("train and test CSV feature counts differ");
    }
    Rng part_rng = Rng::stream(seed, StreamTag::kPartition);
    partition_ = dirichlet_partition(train_, m, cfg.data.dirichlet_beta, part_rng);
    for (const auto& shard : partition_.shards) {
      objectives_.push_back(std::make_unique<ShardObjective>(model_, train_, shard, cfg.batch));
    }
  }
  Rng init_rng = Rng::stream(seed, StreamTag::kInit);
  x0_ = init_params(model_, init_rng);
}

double Federation::train_loss(const ParamVector& x) const {
  if (model_.kind == ModelKind::kQuadratic) return quadratic_loss(quad_mean_, x, model_.weight_decay);
  return full_loss(model_, x, train_);
}

double Federation::test_accuracy(const ParamVector& x) const {
  if (model_.kind == ModelKind::kQuadratic || test_.n == 0) return 0.0;
  return full_accuracy(model_, x, test_);
}

ParamVector Federation::train_grad(const ParamVector& x) const {
  if (model_.kind == ModelKind::kQuadratic) return quadratic_grad(quad_mean_, x, model_.weight_decay);
  return full_grad(model_, x, train_);
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> sample_participants(std::size_t m, std::size_t s, std::uint64_t seed,
                                             int round) {
  if (s == 0 || s > m) throw std::invalid_argument("sample_participants: need 1 <= S <= m");
  Rng rng = Rng::stream(seed, StreamTag::kServer, static_cast<std::uint64_t>(round));
  std::vector<std::size_t> pool(m);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < s; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(m - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(s);
  std::sort(pool.begin(), pool.end());
  return pool;
}

namespace {

ClientResult run_one(const Federation& fed, const ExperimentConfig& cfg, const ServerState& state,
                     const LocalHyper& hyper, std::size_t client, std::uint64_t seed) {
  Broadcast b;
  b.g_a = &state.g_a;
  b.v = &state.v_avg;
  if (!state.controls.empty()) b.control = &state.controls.at(client);
  Rng rng = Rng::stream(seed, StreamTag::kClient, client, static_cast<std::uint64_t>(state.round));
  return ClientResult{client, run_local(cfg.method, hyper, state.x, fed.client(client), b, rng)};
}

}  // namespace

std::vector<ClientResult> execute_clients(const Federation& fed, const ExperimentConfig& cfg,
                                          const ServerState& state,
                                          const std::vector<std::size_t>& participants,
                                          std::uint64_t seed, Execution mode) {
  const LocalHyper hyper = LocalHyper::from(cfg.method, cfg.local_steps, state.eta_l);
  std::vector<ClientResult> out;
  out.reserve(participants.size());
  if (mode == Execution::kSerial) {
    for (std::size_t c : participants) out.push_back(run_one(fed, cfg, state, hyper, c, seed));
    return out;
  }
  const auto n = static_cast<std::ptrdiff_t>(participants.size());
  std::vector<std::optional<ClientResult>> slots(participants.size());
  std::vector<std::exception_ptr> errors(participants.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      slots[k] = run_one(fed, cfg, state, hyper, participants[k], seed);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

RoundOutcome run_round(ServerState& state, const Federation& fed, const ExperimentConfig& cfg,
                       std::uint64_t seed, Execution mode) {
  const auto t0 = std::chrono::steady_clock::now();
  RoundOutcome out;
  RoundTrace& tr = out.trace;
  const int round = state.round;
  try {
    tr.participants = sample_participants(cfg.clients, cfg.participants(), seed, round);
    tr.x_before = state.x_prev;
    tr.x_start = state.x;
    tr.ga_start = state.g_a;
    tr.eta_g = state.eta_g;
    tr.eta_l = state.eta_l;

    tr.results = execute_clients(fed, cfg, state, tr.participants, seed, mode);
    server_update(state, cfg.method, cfg.local_steps, tr.results);

    tr.x_end = state.x;
    tr.ga_end = state.g_a;
    tr.direction_mean = ParamVector(state.x.size());
    for (const auto& r : tr.results) {
      for (std::size_t j = 0; j < state.x.size(); ++j) tr.direction_mean[j] += r.result.direction_sum[j];
      tr.vhat_monotone = tr.vhat_monotone && r.result.diag.vhat_monotone;
      tr.theta_max = std::max(tr.theta_max, r.result.diag.theta_max);
    }
    const double sk = static_cast<double>(tr.results.size()) * cfg.local_steps;
    for (double& v : tr.direction_mean) v /= sk;

    RoundMetrics& mt = out.metrics;
    mt.round = state.round;
    double consistency = 0.0;
    for (const auto& r : tr.results) consistency += l2_norm_sq(subtract(r.result.final_iterate, state.x));
    mt.consistency = consistency / static_cast<double>(tr.results.size());
    mt.ga_norm = std::sqrt(l2_norm_sq(state.g_a));
    const bool evaluate = state.round % cfg.metric_every == 0 || state.round == cfg.rounds;
    if (evaluate) {
      mt.train_loss = fed.train_loss(state.x);
      mt.test_acc = fed.test_accuracy(state.x);
      mt.grad_norm_sq = l2_norm_sq(fed.train_grad(state.x));
      if (has_z_sequence(cfg.method.method)) {
        const double a = cfg.method.alpha;
        ParamVector z(state.x.size());
        for (std::size_t j = 0; j < z.size(); ++j) {
          z[j] = state.x[j] / a - (1.0 - a) / a * state.x_prev[j];
        }
        mt.z_grad_norm_sq = l2_norm_sq(fed.train_grad(z));
      }
      if (!std::isfinite(mt.train_loss) || !std::isfinite(mt.grad_norm_sq)) {
        throw NonFiniteError("non-finite metric");
      }
    }
    out.evaluated = evaluate;
    apply_decay(state, cfg.method);
  } catch (const std::exception& e) {
    throw std::runtime_error("round " + std::to_string(round + 1) + ": " + e.what());
  }
  out.metrics.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------

Simulation::Simulation(const ExperimentConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), seed_(seed), fed_(cfg_, seed), state_(init_server(cfg_.method, fed_.initial_point(), cfg_.clients)) {}

RoundOutcome Simulation::step(Execution mode) { return run_round(state_, fed_, cfg_, seed_, mode); }

std::vector<RoundMetrics> Simulation::run(Execution mode) {
  std::vector<RoundMetrics> out;
  while (state_.round < cfg_.rounds) {
    RoundOutcome o = step(mode);
    if (o.evaluated) out.push_back(o.metrics);
  }
  return out;
}

namespace {

MetricSummary mean_std(const std::vector<double>& xs) {
  MetricSummary s;
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

}  // namespace

ExperimentSummary summarize(const std::vector<SeedRun>& runs) {
  ExperimentSummary s;
  std::vector<double> loss, acc, best, gn, cons;
  std::vector<const SeedRun*> ok;
  for (const auto& r : runs) {
    if (!r.error.empty() || r.metrics.empty()) continue;
    ok.push_back(&r);
    const auto& last = r.metrics.back();
    loss.push_back(last.train_loss);
    acc.push_back(last.test_acc);
    gn.push_back(last.grad_norm_sq);
    cons.push_back(last.consistency);
    double b = 0.0;
    for (const auto& m : r.metrics) b = std::max(b, m.test_acc);
    best.push_back(b);
  }
  s.completed_seeds = static_cast<int>(ok.size());
  s.final_train_loss = mean_std(loss);
  s.final_test_acc = mean_std(acc);
  s.best_test_acc = mean_std(best);
  s.final_grad_norm_sq = mean_std(gn);
  s.final_consistency = mean_std(cons);
  if (ok.empty()) return s;
  std::size_t len = ok.front()->metrics.size();
  for (const auto* r : ok) len = std::min(len, r->metrics.size());
  const double inv = 1.0 / static_cast<double>(ok.size());
  for (std::size_t i = 0; i < len; ++i) {
    RoundMetrics m;
    m.round = ok.front()->metrics[i].round;
    bool all_z = true;
    double z = 0.0;
    for (const auto* r : ok) {
      const auto& x = r->metrics[i];
      m.train_loss += x.train_loss * inv;
      m.test_acc += x.test_acc * inv;
      m.grad_norm_sq += x.grad_norm_sq * inv;
      m.consistency += x.consistency * inv;
      m.ga_norm += x.ga_norm * inv;
      m.wall_ms += x.wall_ms * inv;
      if (x.z_grad_norm_sq) {
        z += *x.z_grad_norm_sq * inv;
      } else {
        all_z = false;
      }
    }
    if (all_z) m.z_grad_norm_sq = z;
    s.mean_stream.push_back(m);
  }
  return s;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult res;
  for (std::uint64_t seed : cfg.seeds) {
    SeedRun run;
    run.seed = seed;
    try {
      Simulation sim(cfg, seed);
      run.metrics = sim.run();
    } catch (const std::exception& e) {
      run.error = e.what();
    }
    res.runs.push_back(std::move(run));
  }
  res.summary = summarize(res.runs);
  return res;
}

std::optional<int> rounds_to_target(const std::vector<RoundMetrics>& metrics, TargetKey key,
                                    double target) {
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const auto& m = metrics[i];
    const bool hit = key == TargetKey::kTrainLoss ? m.train_loss <= target : m.test_acc >= target;
    if (hit) return m.round;
  }
  return std::nullopt;
}

void configure_threads_from_env() {
  if (const char* env = std::getenv("FEDSIM_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n >= 1) omp_set_num_threads(static_cast<int>(n));
  }
}

ExperimentConfig benchmark_config(Method method) {
  ExperimentConfig cfg;
  cfg.method = MethodConfig::defaults(method);
  // One ridge coefficient for every method so train losses are comparable,
  // and the local adaptive rate picked by a grid over {1e-3 .. 1e-1} on
  // LocalAdam; the deep-network default of 1e-3 barely moves a linear model
  // in 300 rounds.
  cfg.method.weight_decay = kBenchmarkWeightDecay;
  if (is_local_adaptive(method)) cfg.method.eta_l = kBenchmarkAdaptiveEtaL;
  cfg.model = Model{ModelKind::kSoftmaxLinear, 20, 5, 0, Activation::kGelu, 25.0, 0.0};
  cfg.data = DataConfig{};
  cfg.data.n_per_class = 1000;
  cfg.data.test_per_class = 200;
  cfg.data.sep = 3.0;
  cfg.data.dirichlet_beta = 0.6;
  cfg.clients = 20;
  cfg.rate = 0.1;
  cfg.rounds = 300;
  cfg.local_steps = 10;
  cfg.batch = 50;
  cfg.seeds = {1, 2, 3, 4, 5};
  return cfg;
}

}  // namespace fedsim
