#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace fedsim {

enum class Method {
  kFedAvg,
  kFedProx,
  kScaffold,
  kScaledScaffold,
  kFedCm,
  kFedAdam,
  kFedAdamCm,
  kLocalAdam,
  kFedLada,
};

/// Second-moment mapping used by the server-side adaptive step.
enum class ServerVariant { kAdam, kAmsgrad };

std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);
/// Comma-separated list of accepted method names, for diagnostics.
std::string method_names();

/// Clients run the amended AMSGrad loop (LocalAdam, FedLADA).
bool is_local_adaptive(Method m);
/// Server applies an Adam-style step to the averaged offset (FedAdam, FedAdamCM).
bool is_global_adaptive(Method m);
bool uses_scaffold(Method m);
/// Methods whose iterates define the auxiliary z-sequence (FedCM, FedLADA).
bool has_z_sequence(Method m);

struct MethodConfig {
  Method method = Method::kFedAvg;
  double eta_l = 0.1;
  double eta_g = 1.0;
  double alpha = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps_v = 1e-8;
  double mu_prox = 0.01;
  double scaffold_scale = 1.0;
  double adam_v0 = 1e-2;
  ServerVariant server_variant = ServerVariant::kAdam;
  double decay = 0.998;
  double weight_decay = 1e-3;

  /// Defaults for the method family: local SGD methods use eta_l 0.1 and
  /// weight decay 1e-3, local adaptive methods eta_l 0.001 and 1e-2; the
  /// global adaptive server uses eta_g 0.1, every other server eta_g 1.0.
  static MethodConfig defaults(Method m);
};

}  // namespace fedsim
