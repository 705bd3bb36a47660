#include "fedsim/method.hpp"

#include <array>
#include <utility>

namespace fedsim {

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 9> kNames{{
    {Method::kFedAvg, "fedavg"},
    {Method::kFedProx, "fedprox"},
    {Method::kScaffold, "scaffold"},
    {Method::kScaledScaffold, "scaled_scaffold"},
    {Method::kFedCm, "fedcm"},
    {Method::kFedAdam, "fedadam"},
    {Method::kFedAdamCm, "fedadam_cm"},
    {Method::kLocalAdam, "localadam"},
    {Method::kFedLada, "fedlada"},
}};

}  // namespace

std::string_view method_name(Method m) {
  for (const auto& [method, name] : kNames)
    if (method == m) return name;
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
  for (const auto& [method, n] : kNames)
    if (n == name) return method;
  return std::nullopt;
}

std::string method_names() {
  std::string out;
  for (const auto& [method, name] : kNames) {
    if (!out.empty()) out += ", ";
    out += name;
  }
  return out;
}

bool is_local_adaptive(Method m) { return m == Method::kLocalAdam || m == Method::kFedLada; }
bool is_global_adaptive(Method m) { return m == Method::kFedAdam || m == Method::kFedAdamCm; }
bool uses_scaffold(Method m) { return m == Method::kScaffold || m == Method::kScaledScaffold; }
bool has_z_sequence(Method m) { return m == Method::kFedCm || m == Method::kFedLada; }

MethodConfig MethodConfig::defaults(Method m) {
  MethodConfig c;
  c.method = m;
  if (is_local_adaptive(m)) {
    c.eta_l = 0.001;
    c.weight_decay = 1e-2;
  }
  if (is_global_adaptive(m)) c.eta_g = 0.1;
  if (m == Method::kLocalAdam) c.alpha = 1.0;
  return c;
}

}  // namespace fedsim
