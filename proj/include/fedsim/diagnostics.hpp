#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/orchestrator.hpp"

namespace fedsim {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // the measured quantity (max error, ratio, ...)
  double threshold = 0.0;  // what it was compared against
  std::string detail;
  double seconds = 0.0;
};

// ---- finite-difference suite ----

struct GradcheckOptions {
  int checks_per_kind = 100;
  double step = 1e-5;
  double tolerance = 1e-5;
  std::uint64_t seed = 7;
};

/// Random finite-difference checks for quadratic, softmax and MLP models
/// (MLP once per activation). One result per model kind.
std::vector<CheckResult> run_gradcheck(const GradcheckOptions& opt = {});

// ---- identity suite ----

/// FedLADA with alpha = 1 against LocalAdam, bitwise over every round.
CheckResult check_alpha_one_equivalence(const ExperimentConfig& base, int rounds, std::uint64_t seed);

/// max_t ||(z^{t+1} - z^t) + eta * eta_l * mean(m*theta)||_inf with eta = K eta_g.
/// Learning-rate decay is switched off: the identity relies on the offset of
/// round t-1 being produced with the same rates as round t.
CheckResult check_z_lemma(const ExperimentConfig& base, int rounds, std::uint64_t seed,
                          double tol = 1e-9);

/// max_t ||g_a^{t+1} - [alpha mean(m*theta) + (1 - alpha) g_a^t]||_inf.
CheckResult check_ga_recursion(const ExperimentConfig& base, int rounds, std::uint64_t seed,
                               double tol = 1e-10);

/// vhat never decreases inside a local loop and theta <= 1/eps_v, over a full run.
CheckResult check_vhat_theta(const ExperimentConfig& base, std::uint64_t seed);

/// FedProx(mu = 0) and SCAFFOLD(scale = 0) against FedAvg; bitwise.
CheckResult check_prox_reduction(const ExperimentConfig& base, int rounds, std::uint64_t seed);
CheckResult check_scaffold_reduction(const ExperimentConfig& base, int rounds, std::uint64_t seed);
/// m = S = K = 1, eta_g = 1 FedAvg against a plain SGD loop on the same
/// minibatch stream; bitwise.
CheckResult check_centralized_reduction(const ExperimentConfig& base, int rounds, std::uint64_t seed);

/// The three hand-computed one-step examples.
std::vector<CheckResult> check_step_oracles(double tol = 1e-12);

/// Everything above on a small configuration; used by `fedsim selfcheck`.
std::vector<CheckResult> run_selfcheck(const ExperimentConfig& base, std::uint64_t seed = 1);

std::string format_check(const CheckResult& r);

}  // namespace fedsim
