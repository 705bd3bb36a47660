#include "fedsim/server.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fedsim {

ServerState init_server(const MethodConfig& cfg, const ParamVector& x0, std::size_t num_clients) {
  const std::size_t d = x0.size();
  ServerState s;
  s.x = x0;
  s.x_prev = x0;
  s.g_a = ParamVector(d);
  s.v_avg = ParamVector(d, cfg.eps_v * cfg.eps_v);
  s.adam.m = ParamVector(d);
  s.adam.v = ParamVector(d, cfg.adam_v0);
  s.adam.vhat = ParamVector(d, cfg.adam_v0);
  if (uses_scaffold(cfg.method)) s.controls.assign(num_clients, ParamVector(d));
  s.eta_g = cfg.eta_g;
  s.eta_l = cfg.eta_l;
  return s;
}

namespace {

void require_inputs(std::span<const ClientResult> inputs, const char* op) {
  if (inputs.empty()) throw std::invalid_argument(std::string(op) + ": no participating clients");
}

}  // namespace

ParamVector mean_offset(std::span<const ClientResult> inputs) {
  require_inputs(inputs, "mean_offset");
  ParamVector acc(inputs.front().result.offset.size());
  for (const auto& in : inputs) {
    require_same_dim(acc, in.result.offset, "mean_offset");
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += in.result.offset[j];
  }
  const double inv = 1.0 / static_cast<double>(inputs.size());
  for (double& v : acc) v *= inv;
  return acc;
}

ParamVector aggregate_average_descent(const ParamVector& x, double eta_g,
                                      std::span<const ClientResult> inputs) {
  require_inputs(inputs, "aggregate_average_descent");
  if (eta_g == 1.0) {
    ParamVector acc(x.size());
    for (const auto& in : inputs) {
      require_same_dim(acc, in.result.final_iterate, "aggregate_average_descent");
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += in.result.final_iterate[j];
    }
    const double s = static_cast<double>(inputs.size());
    for (double& v : acc) v /= s;
    require_finite(acc, "aggregated model");
    return acc;
  }
  const ParamVector mean = mean_offset(inputs);
  require_same_dim(x, mean, "aggregate_average_descent");
  return axpy(-eta_g, mean, x);
}

ParamVector update_ga(const ParamVector& x_prev, const ParamVector& x_new, double eta_g,
                      double eta_l, int local_steps) {
  if (!(eta_g > 0.0) || !(eta_l > 0.0) || local_steps <= 0) {
    throw std::invalid_argument("update_ga: eta_g, eta_l and K must be positive");
  }
  const double denom = eta_g * eta_l * static_cast<double>(local_steps);
  ParamVector diff = subtract(x_prev, x_new);
  for (double& v : diff) v /= denom;
  require_finite(diff, "g_a");
  return diff;
}

ParamVector aggregate_vhat(std::span<const ClientResult> inputs) {
  require_inputs(inputs, "aggregate_vhat");
  ParamVector acc;
  for (const auto& in : inputs) {
    if (!in.result.vhat_final) {
      throw std::invalid_argument("aggregate_vhat: client " + std::to_string(in.client) +
                                  " returned no vhat");
    }
    if (acc.empty()) acc = ParamVector(in.result.vhat_final->size());
    require_same_dim(acc, *in.result.vhat_final, "aggregate_vhat");
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += (*in.result.vhat_final)[j];
  }
  const double s = static_cast<double>(inputs.size());
  for (double& v : acc) v /= s;
  return acc;
}

ParamVector global_adam_step(const ParamVector& x, AdamState& adam, const ParamVector& pseudo_grad,
                             double eta_g, double beta1, double beta2, ServerVariant variant,
                             double floor) {
  require_same_dim(x, pseudo_grad, "global_adam_step");
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double g = pseudo_grad[j];
    adam.m[j] = (1.0 - beta1) * adam.m[j] + beta1 * g;
    adam.v[j] = (1.0 - beta2) * adam.v[j] + beta2 * g * g;
  }
  adam.vhat = variant == ServerVariant::kAmsgrad ? elementwise_max(adam.vhat, adam.v) : adam.v;
  ParamVector out = x;
  for (std::size_t j = 0; j < x.size(); ++j) {
    out[j] -= eta_g * adam.m[j] / std::sqrt(std::max(adam.vhat[j], floor));
  }
  require_finite(out, "global_adam_step");
  return out;
}

ParamVector scaffold_update_controls(std::vector<ParamVector>& controls,
                                     std::span<const ClientResult> inputs) {
  require_inputs(inputs, "scaffold_update_controls");
  ParamVector acc;
  for (const auto& in : inputs) {
    if (!in.result.control) {
      throw std::invalid_argument("scaffold_update_controls: client " + std::to_string(in.client) +
                                  " returned no control variate");
    }
    if (in.client >= controls.size()) {
      throw std::out_of_range("scaffold_update_controls: unknown client " +
                              std::to_string(in.client));
    }
    const ParamVector& c = *in.result.control;
    controls[in.client] = c;
    if (acc.empty()) acc = ParamVector(c.size());
    require_same_dim(acc, c, "scaffold_update_controls");
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += c[j];
  }
  const double s = static_cast<double>(inputs.size());
  for (double& v : acc) v /= s;
  return acc;
}

void server_update(ServerState& state, const MethodConfig& cfg, int local_steps,
                   std::span<const ClientResult> inputs) {
  require_inputs(inputs, "server_update");
  ParamVector x_new;
  ParamVector g_a_new;
  if (is_global_adaptive(cfg.method)) {
    const ParamVector pseudo = mean_offset(inputs);
    x_new = global_adam_step(state.x, state.adam, pseudo, state.eta_g, cfg.beta1, cfg.beta2,
                             cfg.server_variant, cfg.eps_v * cfg.eps_v);
    // The amended clients follow the averaged per-step local direction.
    g_a_new = scaled(1.0 / (state.eta_l * static_cast<double>(local_steps)), pseudo);
  } else {
    x_new = aggregate_average_descent(state.x, state.eta_g, inputs);
    if (uses_scaffold(cfg.method)) {
      g_a_new = scaffold_update_controls(state.controls, inputs);
    } else {
      g_a_new = update_ga(state.x, x_new, state.eta_g, state.eta_l, local_steps);
    }
  }
  if (is_local_adaptive(cfg.method)) state.v_avg = aggregate_vhat(inputs);
  state.x_prev = std::move(state.x);
  state.x = std::move(x_new);
  state.g_a = std::move(g_a_new);
  ++state.round;
}

void apply_decay(ServerState& state, const MethodConfig& cfg) {
  state.eta_l *= cfg.decay;
  if (is_global_adaptive(cfg.method)) state.eta_g *= cfg.decay;
}

}  // namespace fedsim
