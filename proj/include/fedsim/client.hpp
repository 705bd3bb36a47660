#pragma once

#include <optional>

#include "fedsim/method.hpp"
#include "fedsim/numerics.hpp"
#include "fedsim/objective.hpp"

namespace fedsim {

struct LocalHyper {
  double eta_l = 0.1;
  int local_steps = 1;  // K
  double alpha = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps_v = 1e-8;
  double mu_prox = 0.0;

  static LocalHyper from(const MethodConfig& cfg, int local_steps, double eta_l);
  /// The convergence analysis assumes beta1 <= K/(K+1). Violations are
  /// reported as warnings by config validation, never rejected.
  bool beta1_condition_holds() const;
  void validate() const;
};

/// Per-run checks collected inside adaptive local loops.
struct LocalDiagnostics {
  bool vhat_monotone = true;
  double theta_max = 0.0;
};

struct LocalResult {
  ParamVector offset;          // x_{i,0} - x_{i,K}
  ParamVector final_iterate;   // x_{i,K}
  std::optional<ParamVector> vhat_final;  // local adaptive methods only
  std::optional<ParamVector> control;     // SCAFFOLD control variate for the next round
  // Sum over steps of the local direction before amendment: m*theta for the
  // adaptive loop, the stochastic gradient for SGD loops.
  ParamVector direction_sum;
  // Sum over steps of the full direction actually applied (offset / eta_l).
  ParamVector update_sum;
  int steps_taken = 0;
  LocalDiagnostics diag;
};

/// K steps of SGD. With a correction vector c each step uses
/// alpha * g + (1 - alpha) * c (client-level momentum).
LocalResult local_sgd(const ParamVector& x0, const LocalObjective& obj, const LocalHyper& hyper,
                      const ParamVector* correction, Rng& rng);

/// SGD on F_i(x) + mu/2 ||x - x0||^2.
LocalResult local_prox_sgd(const ParamVector& x0, const LocalObjective& obj,
                           const LocalHyper& hyper, Rng& rng);

/// SGD with the control-variate correction g + scale * (g_a - c_i). The
/// returned control is the mean stochastic gradient of this run.
LocalResult local_scaffold(const ParamVector& x0, const LocalObjective& obj,
                           const LocalHyper& hyper, const ParamVector& g_a,
                           const ParamVector& c_i, double scale, Rng& rng);

/// Amended AMSGrad loop with restarted momentum: m_0 = 0 and v_0 = vhat_0 =
/// v_init. Each step moves x by eta_l * (alpha * m * theta + (1 - alpha) * g_a)
/// with theta = 1/sqrt(vhat). alpha = 1 is the plain local adaptive loop.
LocalResult local_adaptive_amended(const ParamVector& x0, const LocalObjective& obj,
                                   const LocalHyper& hyper, const ParamVector& g_a,
                                   const ParamVector& v_init, Rng& rng);

/// Read-only state the server hands to each participant.
struct Broadcast {
  const ParamVector* g_a = nullptr;
  const ParamVector* v = nullptr;
  const ParamVector* control = nullptr;  // this client's c_i
};

class BroadcastError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

LocalResult run_local(const MethodConfig& method, const LocalHyper& hyper, const ParamVector& x0,
                      const LocalObjective& obj, const Broadcast& broadcast, Rng& rng);

}  // namespace fedsim
