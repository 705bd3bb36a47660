#include "fedsim/client.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fedsim {

LocalHyper LocalHyper::from(const MethodConfig& cfg, int local_steps, double eta_l) {
  LocalHyper h;
  h.eta_l = eta_l;
  h.local_steps = local_steps;
  h.alpha = cfg.method == Method::kLocalAdam ? 1.0 : cfg.alpha;
  h.beta1 = cfg.beta1;
  h.beta2 = cfg.beta2;
  h.eps_v = cfg.eps_v;
  h.mu_prox = cfg.mu_prox;
  return h;
}

bool LocalHyper::beta1_condition_holds() const {
  return beta1 <= static_cast<double>(local_steps) / static_cast<double>(local_steps + 1);
}

void LocalHyper::validate() const {
  if (local_steps < 1) throw std::invalid_argument("local steps K must be >= 1");
  if (!(eta_l > 0.0) || !std::isfinite(eta_l)) throw std::invalid_argument("eta_l must be positive");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must lie in [0, 1)");
  if (!(eps_v > 0.0)) throw std::invalid_argument("eps_v must be positive");
  if (!(mu_prox >= 0.0)) throw std::invalid_argument("mu_prox must be >= 0");
}

namespace {

void check_dim(const ParamVector& v, std::size_t d, const char* what) {
  if (v.size() != d) {
    throw DimensionError(std::string(what) + " has dimension " + std::to_string(v.size()) +
                         ", expected " + std::to_string(d));
  }
}

LocalResult start(const ParamVector& x0, const LocalObjective& obj) {
  check_dim(x0, obj.dim(), "x0");
  LocalResult r;
  r.final_iterate = x0;
  r.direction_sum = ParamVector(x0.size());
  r.update_sum = ParamVector(x0.size());
  return r;
}

void finish(LocalResult& r, const ParamVector& x0) {
  require_finite(r.final_iterate, "local iterate");
  r.offset = subtract(x0, r.final_iterate);
}

}  // namespace

LocalResult local_sgd(const ParamVector& x0, const LocalObjective& obj, const LocalHyper& hyper,
                      const ParamVector* correction, Rng& rng) {
  LocalResult r = start(x0, obj);
  if (correction) check_dim(*correction, x0.size(), "correction");
  ParamVector& x = r.final_iterate;
  const double a = hyper.alpha;
  for (int step = 0; step < hyper.local_steps; ++step) {
    const ParamVector g = obj.stochastic_grad(x, rng);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = correction ? a * g[j] + (1.0 - a) * (*correction)[j] : g[j];
      x[j] -= hyper.eta_l * d;
      r.direction_sum[j] += g[j];
      r.update_sum[j] += d;
    }
    require_finite(x, "local_sgd iterate");
    ++r.steps_taken;
  }
  finish(r, x0);
  return r;
}

LocalResult local_prox_sgd(const ParamVector& x0, const LocalObjective& obj,
                           const LocalHyper& hyper, Rng& rng) {
  if (!(hyper.mu_prox >= 0.0)) throw std::invalid_argument("mu_prox must be >= 0");
  LocalResult r = start(x0, obj);
  ParamVector& x = r.final_iterate;
  for (int step = 0; step < hyper.local_steps; ++step) {
    ParamVector g = obj.stochastic_grad(x, rng);
    if (hyper.mu_prox != 0.0)
      for (std::size_t j = 0; j < x.size(); ++j) g[j] += hyper.mu_prox * (x[j] - x0[j]);
    for (std::size_t j = 0; j < x.size(); ++j) {
      x[j] -= hyper.eta_l * g[j];
      r.direction_sum[j] += g[j];
      r.update_sum[j] += g[j];
    }
    require_finite(x, "local_prox_sgd iterate");
    ++r.steps_taken;
  }
  finish(r, x0);
  return r;
}

LocalResult local_scaffold(const ParamVector& x0, const LocalObjective& obj,
                           const LocalHyper& hyper, const ParamVector& g_a,
                           const ParamVector& c_i, double scale, Rng& rng) {
  LocalResult r = start(x0, obj);
  check_dim(g_a, x0.size(), "g_a");
  check_dim(c_i, x0.size(), "control variate");
  ParamVector& x = r.final_iterate;
  const ParamVector shift = subtract(g_a, c_i);
  for (int step = 0; step < hyper.local_steps; ++step) {
    const ParamVector g = obj.stochastic_grad(x, rng);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = scale != 0.0 ? g[j] + scale * shift[j] : g[j];
      x[j] -= hyper.eta_l * d;
      r.direction_sum[j] += g[j];
      r.update_sum[j] += d;
    }
    require_finite(x, "local_scaffold iterate");
    ++r.steps_taken;
  }
  finish(r, x0);
  r.control = scaled(1.0 / static_cast<double>(r.steps_taken), r.direction_sum);
  return r;
}

LocalResult local_adaptive_amended(const ParamVector& x0, const LocalObjective& obj,
                                   const LocalHyper& hyper, const ParamVector& g_a,
                                   const ParamVector& v_init, Rng& rng) {
  LocalResult r = start(x0, obj);
  check_dim(g_a, x0.size(), "g_a");
  check_dim(v_init, x0.size(), "v_init");
  const double floor = hyper.eps_v * hyper.eps_v;
  for (std::size_t j = 0; j < v_init.size(); ++j) {
    if (!(v_init[j] >= floor)) {
      throw std::invalid_argument("v_init entry " + std::to_string(j) +
                                  " is below the eps_v^2 floor");
    }
  }
  ParamVector& x = r.final_iterate;
  const double a = hyper.alpha;
  const double b1 = hyper.beta1;
  const double b2 = hyper.beta2;
  ParamVector m(x.size());
  ParamVector v = v_init;
  ParamVector vhat = v_init;
  for (int step = 0; step < hyper.local_steps; ++step) {
    const ParamVector g = obj.stochastic_grad(x, rng);
    for (std::size_t j = 0; j < x.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
    }
    ParamVector next_vhat = elementwise_max(v, vhat);
    for (std::size_t j = 0; j < x.size(); ++j)
      if (next_vhat[j] < vhat[j]) r.diag.vhat_monotone = false;
    vhat = std::move(next_vhat);
    const ParamVector theta = inv_sqrt(vhat);
    r.diag.theta_max = std::max(r.diag.theta_max, *std::max_element(theta.begin(), theta.end()));
    const ParamVector dir = hadamard(m, theta);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = a * dir[j] + (1.0 - a) * g_a[j];
      x[j] -= hyper.eta_l * d;
      r.direction_sum[j] += dir[j];
      r.update_sum[j] += d;
    }
    require_finite(x, "local_adaptive_amended iterate");
    ++r.steps_taken;
  }
  finish(r, x0);
  r.vhat_final = std::move(vhat);
  return r;
}

LocalResult run_local(const MethodConfig& method, const LocalHyper& hyper, const ParamVector& x0,
                      const LocalObjective& obj, const Broadcast& broadcast, Rng& rng) {
  auto need = [&](const ParamVector* p, const char* field) -> const ParamVector& {
    if (!p) {
      throw BroadcastError(std::string(method_name(method.method)) + " requires " + field +
                           " in the broadcast");
    }
    return *p;
  };
  switch (method.method) {
    case Method::kFedAvg:
    case Method::kFedAdam:
      return local_sgd(x0, obj, hyper, nullptr, rng);
    case Method::kFedProx:
      return local_prox_sgd(x0, obj, hyper, rng);
    case Method::kFedCm:
    case Method::kFedAdamCm:
      return local_sgd(x0, obj, hyper, &need(broadcast.g_a, "g_a"), rng);
    case Method::kScaffold:
      return local_scaffold(x0, obj, hyper, need(broadcast.g_a, "g_a"),
                            need(broadcast.control, "a control variate"), 1.0, rng);
    case Method::kScaledScaffold:
      return local_scaffold(x0, obj, hyper, need(broadcast.g_a, "g_a"),
                            need(broadcast.control, "a control variate"), method.scaffold_scale,
                            rng);
    case Method::kLocalAdam: {
      LocalHyper h = hyper;
      h.alpha = 1.0;
      return local_adaptive_amended(x0, obj, h, need(broadcast.g_a, "g_a"),
                                    need(broadcast.v, "v"), rng);
    }
    case Method::kFedLada:
      return local_adaptive_amended(x0, obj, hyper, need(broadcast.g_a, "g_a"),
                                    need(broadcast.v, "v"), rng);
  }
  throw std::logic_error("run_local: unhandled method");
}

}  // namespace fedsim
