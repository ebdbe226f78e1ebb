#pragma once

#include <span>
#include <vector>

#include "autodiff/parameter_store.hpp"
#include "model/architecture.hpp"
#include "oracle/oracle.hpp"

namespace ocpg {

/// One environment transition with the option bookkeeping the estimators need.
struct TransitionRecord {
  int s = 0;
  std::vector<int> options;  // o^{1:N-1} active at s
  int a = 0;
  double r = 0.0;
  int s_next = 0;
  std::vector<int> next_options;       // stack in force at s' after termination
  std::vector<bool> terminated;        // terminated[ℓ-1]: level ℓ ended at s'
  /// reselection[ℓ-1] = o'^{1:ℓ} drawn as if levels ℓ..N-1 had ended at s'.
  std::vector<std::vector<int>> reselection;
  bool done = false;  // s' is terminal
  double G = 0.0;     // n-step return target
};

struct UpdateConfig {
  double alpha = 1e-3;
  double alpha_v = 0.5;
  double eta = 0.0;
  double gamma = 0.99;
  double entropy = 0.0;  // weight of an action-policy entropy bonus
  void validate() const;
};

enum class Estimator { OCPG, HOCPG, OC, HOC };

const char* estimator_name(Estimator e);
Estimator parse_estimator(const std::string& name);
/// OC and HOC train the policy over options by actor-critic at the current state.
bool is_baseline(Estimator e);

/// Scalar coefficients multiplying each log-probability / termination in the
/// step surrogate.
struct StepTargets {
  double action = 0.0;               // multiplies log π^N(a | s, o)
  std::vector<double> option;        // [ℓ-1] multiplies log π^ℓ
  std::vector<double> termination;   // [ℓ-1] A(s', o^{1:ℓ}) + η
};

/// Targets from the learned critic heads: V(s) = max_o Q(s, o) with
/// lowest-index ties, A from the per-level heads.
StepTargets critic_targets(const OptionArchitecture& arch, const TransitionRecord& rec, const UpdateConfig& cfg,
                           Estimator estimator);

/// Targets from exact values: Q_U - Q for actions, Q(s', o'^{1:ℓ}) minus the
/// critic baseline for option choices, exact A + η for terminations.
StepTargets exact_targets(const OptionArchitecture& arch, const ExactSolution& sol, const TransitionRecord& rec,
                          const UpdateConfig& cfg, Estimator estimator);

/// Learned V(s) = max over top-level Q heads.
double greedy_state_value(const OptionArchitecture& arch, int s);

/// Gradient of the summed step surrogates of a segment. `targets` may be
/// empty (critic targets are computed) or hold one entry per record.
GradientVector segment_gradient(const OptionArchitecture& arch, std::span<const TransitionRecord> records,
                                const UpdateConfig& cfg, Estimator estimator,
                                std::span<const StepTargets> targets = {}, bool include_critic = true);

GradientVector ocpg_step_gradient(const OptionArchitecture& arch, const TransitionRecord& rec, const UpdateConfig& cfg);
GradientVector hocpg_step_gradient(const OptionArchitecture& arch, const TransitionRecord& rec,
                                   const UpdateConfig& cfg);
GradientVector oc_baseline_step_gradient(const OptionArchitecture& arch, const TransitionRecord& rec,
                                         const UpdateConfig& cfg);
GradientVector hoc_baseline_step_gradient(const OptionArchitecture& arch, const TransitionRecord& rec,
                                          const UpdateConfig& cfg);

/// G_k = r_k + γ G_{k+1}, starting from G = bootstrap.
std::vector<double> n_step_returns(std::span<const double> rewards, double bootstrap, double gamma);

}  // namespace ocpg
