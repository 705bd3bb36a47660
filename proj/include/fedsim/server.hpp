#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedsim/client.hpp"
#include "fedsim/method.hpp"
#include "fedsim/numerics.hpp"

namespace fedsim {

struct ClientResult {
  std::size_t client = 0;
  LocalResult result;
};

/// Server-side Adam moments. vhat is what divides the step: the running
/// maximum for AMSGrad, v itself for Adam.
struct AdamState {
  ParamVector m;
  ParamVector v;
  ParamVector vhat;
};

struct ServerState {
  ParamVector x;
  ParamVector x_prev;   // x^{t-1}; equals x at round 0
  ParamVector g_a;      // zero at round 0
  ParamVector v_avg;    // averaged second moments, floored at eps_v^2
  AdamState adam;
  std::vector<ParamVector> controls;  // per-client SCAFFOLD control variates
  int round = 0;
  double eta_g = 1.0;
  double eta_l = 0.1;
};

ServerState init_server(const MethodConfig& cfg, const ParamVector& x0, std::size_t num_clients);

/// x - eta_g * mean(offsets). With eta_g == 1 the result is computed as the
/// mean of the final local iterates, so a single participant yields its
/// iterate bit for bit.
ParamVector aggregate_average_descent(const ParamVector& x, double eta_g,
                                      std::span<const ClientResult> inputs);

ParamVector mean_offset(std::span<const ClientResult> inputs);

/// (x_prev - x_new) / (eta_g * eta_l * K), using the rates that produced the
/// round's offsets.
ParamVector update_ga(const ParamVector& x_prev, const ParamVector& x_new, double eta_g,
                      double eta_l, int local_steps);

/// Elementwise mean of the participants' final vhat.
ParamVector aggregate_vhat(std::span<const ClientResult> inputs);

/// One server Adam step on the pseudo-gradient (mean offset). The moment
/// recursion follows the global-adaptive listing: m = (1 - b1) m + b1 g and
/// v = (1 - b2) v + b2 g^2. Returns the new x.
ParamVector global_adam_step(const ParamVector& x, AdamState& adam, const ParamVector& pseudo_grad,
                             double eta_g, double beta1, double beta2, ServerVariant variant,
                             double floor);

/// Stores each participant's new control variate and returns the broadcast
/// offset for the next round: the mean of this round's new controls.
ParamVector scaffold_update_controls(std::vector<ParamVector>& controls,
                                     std::span<const ClientResult> inputs);

/// Full server update for one round: aggregation, g_a, second moments,
/// controls. Leaves learning-rate decay to the caller.
void server_update(ServerState& state, const MethodConfig& cfg, int local_steps,
                   std::span<const ClientResult> inputs);

/// Multiplies eta_l (and eta_g for global adaptive servers) by cfg.decay.
void apply_decay(ServerState& state, const MethodConfig& cfg);

}  // namespace fedsim
