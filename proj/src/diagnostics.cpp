#include "fedsim/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "fedsim/config.hpp"

namespace fedsim {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ParamVector random_normal(std::size_t d, double scale, Rng& rng) {
  ParamVector x(d);
  for (double& v : x) v = scale * rng.normal();
  return x;
}

// Smallest |pre-activation| over the samples; ReLU checks redraw points that
// sit close to the kink.
double min_abs_preactivation(const Model& m, const ParamVector& x, const Dataset& data,
                             const IndexList& idx) {
  double out = INFINITY;
  for (std::size_t i : idx) {
    const auto u = data.row(i);
    for (std::size_t r = 0; r < m.hidden; ++r) {
      double z = x[m.hidden * m.p + r];
      for (std::size_t j = 0; j < m.p; ++j) z += x[r * m.p + j] * u[j];
      out = std::min(out, std::abs(z));
    }
  }
  return out;
}

CheckResult gradcheck_model(const std::string& name, const Model& base, const GradcheckOptions& opt,
                            Rng& rng) {
  const auto t0 = Clock::now();
  CheckResult r{name, true, 0.0, opt.tolerance, {}, 0.0};
  Dataset data = generate_gaussian_classes(6, base.p, base.classes, 2.0, rng);
  int failures = 0;
  for (int c = 0; c < opt.checks_per_kind; ++c) {
    Model model = base;
    model.weight_decay = rng.uniform() * 0.01;
    IndexList idx = sample_minibatch(data.all_indices(), 1 + rng.below(8), rng);
    ParamVector x = random_normal(model.dim(), 0.7, rng);
    if (model.kind == ModelKind::kMlp1 && model.activation == Activation::kRelu) {
      while (min_abs_preactivation(model, x, data, idx) < 1e-3) x = random_normal(model.dim(), 0.7, rng);
    }
    const ParamVector analytic = grad(model, x, data, idx);
    const ParamVector numeric = finite_difference_grad(
        [&](const ParamVector& y) { return loss(model, y, data, idx); }, x, opt.step);
    const double err = gradient_relative_error(analytic, numeric);
    r.value = std::max(r.value, err);
    if (!(err <= opt.tolerance)) ++failures;
  }
  r.passed = failures == 0;
  r.detail = std::to_string(opt.checks_per_kind - failures) + "/" +
             std::to_string(opt.checks_per_kind) + " checks within tolerance";
  r.seconds = since(t0);
  return r;
}

CheckResult gradcheck_quadratic(const GradcheckOptions& opt, Rng& rng) {
  const auto t0 = Clock::now();
  CheckResult r{"quadratic", true, 0.0, opt.tolerance, {}, 0.0};
  int failures = 0;
  for (int c = 0; c < opt.checks_per_kind; ++c) {
    const std::size_t p = 1 + rng.below(6);
    const QuadraticSpec q = QuadraticSpec::random(p, 0.1, 2.0, 1.0, rng);
    const double wd = rng.uniform() * 0.01;
    const ParamVector x = random_normal(p, 1.0, rng);
    const ParamVector analytic = quadratic_grad(q, x, wd);
    const ParamVector numeric = finite_difference_grad(
        [&](const ParamVector& y) { return quadratic_loss(q, y, wd); }, x, opt.step);
    const double err = gradient_relative_error(analytic, numeric);
    r.value = std::max(r.value, err);
    if (!(err <= opt.tolerance)) ++failures;
  }
  r.passed = failures == 0;
  r.detail = std::to_string(opt.checks_per_kind - failures) + "/" +
             std::to_string(opt.checks_per_kind) + " checks within tolerance";
  r.seconds = since(t0);
  return r;
}

// Keeps the base's data/federation settings; swaps in the method family's
// defaults unless the base already runs that method.
ExperimentConfig with_method(const ExperimentConfig& base, Method m) {
  ExperimentConfig cfg = base;
  if (cfg.method.method != m) cfg.method = MethodConfig::defaults(m);
  return cfg;
}

bool same_metrics(const RoundMetrics& a, const RoundMetrics& b, bool with_ga) {
  auto eq = [](double x, double y) { return bitwise_equal(ParamVector{x}, ParamVector{y}); };
  return a.round == b.round && eq(a.train_loss, b.train_loss) && eq(a.test_acc, b.test_acc) &&
         eq(a.grad_norm_sq, b.grad_norm_sq) && eq(a.consistency, b.consistency) &&
         (!with_ga || eq(a.ga_norm, b.ga_norm));
}

// Runs both configurations side by side and compares the global iterate and
// the shared metrics bitwise after every round. SCAFFOLD broadcasts a
// different g_a (mean control), so its norm is excluded there.
CheckResult bitwise_trajectories(const std::string& name, const ExperimentConfig& a,
                                 const ExperimentConfig& b, int rounds, std::uint64_t seed,
                                 bool with_ga = true) {
  const auto t0 = Clock::now();
  CheckResult r{name, true, 0.0, 0.0, {}, 0.0};
  ExperimentConfig ca = a, cb = b;
  ca.rounds = cb.rounds = rounds;
  Simulation sa(ca, seed), sb(cb, seed);
  for (int t = 0; t < rounds; ++t) {
    const RoundOutcome oa = sa.step(Execution::kSerial);
    const RoundOutcome ob = sb.step(Execution::kSerial);
    if (!bitwise_equal(sa.state().x, sb.state().x) || !same_metrics(oa.metrics, ob.metrics, with_ga)) {
      r.passed = false;
      r.value = t + 1;
      r.detail = "trajectories diverge at round " + std::to_string(t + 1);
      r.seconds = since(t0);
      return r;
    }
  }
  r.detail = std::to_string(rounds) + " rounds bitwise identical";
  r.seconds = since(t0);
  return r;
}

}  // namespace

std::vector<CheckResult> run_gradcheck(const GradcheckOptions& opt) {
  Rng rng = Rng::stream(opt.seed, StreamTag::kTest, 0x6772);
  std::vector<CheckResult> out;
  out.push_back(gradcheck_quadratic(opt, rng));
  out.push_back(gradcheck_model("softmax", Model{ModelKind::kSoftmaxLinear, 4, 3, 0, Activation::kGelu, 25.0, 0.0},
                                opt, rng));
  for (auto [label, act] : {std::pair{"mlp-gelu", Activation::kGelu}, std::pair{"mlp-smu", Activation::kSmu},
                            std::pair{"mlp-relu", Activation::kRelu}}) {
    out.push_back(gradcheck_model(label, Model{ModelKind::kMlp1, 4, 3, 5, act, 25.0, 0.0}, opt, rng));
  }
  return out;
}

CheckResult check_alpha_one_equivalence(const ExperimentConfig& base, int rounds, std::uint64_t seed) {
  ExperimentConfig lada = with_method(base, Method::kFedLada);
  lada.method.alpha = 1.0;
  ExperimentConfig ladam = lada;
  ladam.method.method = Method::kLocalAdam;
  return bitwise_trajectories("fedlada(alpha=1) == localadam", lada, ladam, rounds, seed);
}

CheckResult check_z_lemma(const ExperimentConfig& base, int rounds, std::uint64_t seed, double tol) {
  const auto t0 = Clock::now();
  ExperimentConfig cfg = with_method(base, Method::kFedLada);
  cfg.method.decay = 1.0;
  cfg.rounds = rounds;
  CheckResult r{"z-sequence lemma", true, 0.0, tol, {}, 0.0};
  Simulation sim(cfg, seed);
  const double a = cfg.method.alpha;
  auto z_of = [a](const ParamVector& x, const ParamVector& x_prev) {
    ParamVector z(x.size());
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = x[j] / a - (1.0 - a) / a * x_prev[j];
    return z;
  };
  for (int t = 0; t < rounds; ++t) {
    const RoundOutcome o = sim.step(Execution::kSerial);
    const RoundTrace& tr = o.trace;
    const ParamVector z0 = z_of(tr.x_start, tr.x_before);
    const ParamVector z1 = z_of(tr.x_end, tr.x_start);
    const double eta = cfg.local_steps * tr.eta_g;
    double worst = 0.0;
    for (std::size_t j = 0; j < z0.size(); ++j) {
      const double resid = (z1[j] - z0[j]) + eta * tr.eta_l * tr.direction_mean[j];
      worst = std::max(worst, std::abs(resid));
    }
    r.value = std::max(r.value, worst);
  }
  r.passed = r.value <= tol;
  r.detail = std::to_string(rounds) + " rounds, decay off";
  r.seconds = since(t0);
  return r;
}

CheckResult check_ga_recursion(const ExperimentConfig& base, int rounds, std::uint64_t seed, double tol) {
  const auto t0 = Clock::now();
  ExperimentConfig cfg = with_method(base, Method::kFedLada);
  cfg.rounds = rounds;
  CheckResult r{"g_a recursion", true, 0.0, tol, {}, 0.0};
  Simulation sim(cfg, seed);
  const double a = cfg.method.alpha;
  for (int t = 0; t < rounds; ++t) {
    const RoundOutcome o = sim.step(Execution::kSerial);
    const RoundTrace& tr = o.trace;
    double worst = 0.0;
    for (std::size_t j = 0; j < tr.ga_end.size(); ++j) {
      const double expect = a * tr.direction_mean[j] + (1.0 - a) * tr.ga_start[j];
      worst = std::max(worst, std::abs(tr.ga_end[j] - expect));
    }
    r.value = std::max(r.value, worst);
  }
  r.passed = r.value <= tol;
  r.detail = std::to_string(rounds) + " rounds";
  r.seconds = since(t0);
  return r;
}

CheckResult check_vhat_theta(const ExperimentConfig& base, std::uint64_t seed) {
  const auto t0 = Clock::now();
  ExperimentConfig cfg = with_method(base, Method::kFedLada);
  const double bound = 1.0 / cfg.method.eps_v;
  CheckResult r{"vhat monotone, theta <= 1/eps_v", true, 0.0, bound, {}, 0.0};
  Simulation sim(cfg, seed);
  int bad_rounds = 0;
  while (sim.state().round < cfg.rounds) {
    const RoundOutcome o = sim.step();
    r.value = std::max(r.value, o.trace.theta_max);
    if (!o.trace.vhat_monotone) ++bad_rounds;
  }
  r.passed = bad_rounds == 0 && r.value <= bound;
  r.detail = std::to_string(cfg.rounds) + " rounds, " + std::to_string(bad_rounds) +
             " with a decreasing vhat; value = max theta";
  r.seconds = since(t0);
  return r;
}

CheckResult check_prox_reduction(const ExperimentConfig& base, int rounds, std::uint64_t seed) {
  ExperimentConfig avg = with_method(base, Method::kFedAvg);
  ExperimentConfig prox = avg;
  prox.method.method = Method::kFedProx;
  prox.method.mu_prox = 0.0;
  return bitwise_trajectories("fedprox(mu=0) == fedavg", avg, prox, rounds, seed);
}

CheckResult check_scaffold_reduction(const ExperimentConfig& base, int rounds, std::uint64_t seed) {
  ExperimentConfig avg = with_method(base, Method::kFedAvg);
  ExperimentConfig sc = avg;
  sc.method.method = Method::kScaledScaffold;
  sc.method.scaffold_scale = 0.0;
  return bitwise_trajectories("scaffold(scale=0) == fedavg", avg, sc, rounds, seed, false);
}

CheckResult check_centralized_reduction(const ExperimentConfig& base, int rounds, std::uint64_t seed) {
  const auto t0 = Clock::now();
  CheckResult r{"fedavg(m=S=K=1) == sgd", true, 0.0, 0.0, {}, 0.0};
  ExperimentConfig cfg = with_method(base, Method::kFedAvg);
  cfg.clients = 1;
  cfg.rate = 1.0;
  cfg.local_steps = 1;
  cfg.method.eta_g = 1.0;
  cfg.rounds = rounds;
  Simulation sim(cfg, seed);

  // Reference: one data holder, plain minibatch SGD on the same streams.
  const Federation& fed = sim.federation();
  Model model = fed.model();
  const IndexList all = fed.train().all_indices();
  ShardObjective whole(model, fed.train(), all, cfg.batch);
  Rng init = Rng::stream(seed, StreamTag::kInit);
  ParamVector x = init_params(model, init);
  double eta = cfg.method.eta_l;
  if (!bitwise_equal(x, sim.state().x)) {
    r.passed = false;
    r.detail = "initial points differ";
    r.seconds = since(t0);
    return r;
  }
  for (int t = 0; t < rounds; ++t) {
    Rng rng = Rng::stream(seed, StreamTag::kClient, 0, static_cast<std::uint64_t>(t));
    const ParamVector g = whole.stochastic_grad(x, rng);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] -= eta * g[j];
    eta *= cfg.method.decay;
    sim.step(Execution::kSerial);
    if (!bitwise_equal(x, sim.state().x)) {
      r.passed = false;
      r.value = t + 1;
      r.detail = "diverges at round " + std::to_string(t + 1);
      r.seconds = since(t0);
      return r;
    }
  }
  r.detail = std::to_string(rounds) + " rounds bitwise identical";
  r.seconds = since(t0);
  return r;
}

std::vector<CheckResult> check_step_oracles(double tol) {
  std::vector<CheckResult> out;
  auto record = [&](const std::string& name, double got, double want) {
    const double err = std::abs(got - want);
    std::ostringstream d;
    d.precision(17);
    d << "got " << got << ", expected " << want;
    out.push_back(CheckResult{name, err <= tol, err, tol, d.str(), 0.0});
  };

  {  // amended adaptive step, d = 1: g = 2 from F(x) = 2x
    QuadraticSpec q{1, {0.0}, {-2.0}};
    QuadraticObjective obj(q, 0.0, 0.0);
    LocalHyper h;
    h.eta_l = 0.1;
    h.local_steps = 1;
    h.alpha = 0.5;
    h.beta1 = 0.9;
    h.beta2 = 0.99;
    h.eps_v = 1e-8;
    Rng rng(1);
    const LocalResult res =
        local_adaptive_amended(ParamVector{0.0}, obj, h, ParamVector{1.0},
                               ParamVector{h.eps_v * h.eps_v}, rng);
    record("fedlada one step", res.offset[0], 0.1);
  }
  {  // K = 3 SGD on F(x) = x^2 / 2 from x0 = 1
    QuadraticSpec q{1, {1.0}, {0.0}};
    QuadraticObjective obj(q, 0.0, 0.0);
    LocalHyper h;
    h.eta_l = 0.1;
    h.local_steps = 3;
    Rng rng(1);
    const LocalResult res = local_sgd(ParamVector{1.0}, obj, h, nullptr, rng);
    record("sgd K=3 offset", res.offset[0], 0.271);
  }
  {  // first server Adam step from m = 0, v = 1e-2
    AdamState adam{ParamVector{0.0}, ParamVector{1e-2}, ParamVector{1e-2}};
    const ParamVector x = global_adam_step(ParamVector{0.0}, adam, ParamVector{1.0}, 0.1, 0.9, 0.99,
                                           ServerVariant::kAdam, 1e-16);
    record("fedadam first step", -x[0], 0.1 * 0.9 / std::sqrt(0.9901));
  }
  return out;
}

std::vector<CheckResult> run_selfcheck(const ExperimentConfig& base, std::uint64_t seed) {
  std::vector<CheckResult> out = check_step_oracles();
  auto guarded = [&](const std::string& name, auto&& fn) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back(CheckResult{name, false, 0.0, 0.0, std::string("threw: ") + e.what(), 0.0});
    }
  };
  ExperimentConfig short_run = base;
  short_run.rounds = std::min(base.rounds, 50);
  guarded("alpha=1 equivalence", [&] { return check_alpha_one_equivalence(base, 20, seed); });
  guarded("z-sequence lemma", [&] { return check_z_lemma(base, 50, seed); });
  guarded("g_a recursion", [&] { return check_ga_recursion(base, 50, seed); });
  guarded("vhat/theta", [&] { return check_vhat_theta(short_run, seed); });
  guarded("prox reduction", [&] { return check_prox_reduction(base, 20, seed); });
  guarded("scaffold reduction", [&] { return check_scaffold_reduction(base, 20, seed); });
  guarded("centralized reduction", [&] { return check_centralized_reduction(base, 50, seed); });
  return out;
}

std::string format_check(const CheckResult& r) {
  std::ostringstream out;
  out << (r.passed ? "PASS " : "FAIL ") << r.name << ": value " << format_double(r.value)
      << " (limit " << format_double(r.threshold) << ")";
  if (!r.detail.empty()) out << ", " << r.detail;
  return out.str();
}

}  // namespace fedsim
