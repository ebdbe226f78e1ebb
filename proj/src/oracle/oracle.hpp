#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "autodiff/parameter_store.hpp"
#include "envs/mdp.hpp"
#include "model/architecture.hpp"

namespace ocpg {

/// π^ℓ and β^ℓ evaluated at every context for the current parameters.
struct OptionTables {
  /// pi[ℓ-1][(s * prefix_count(ℓ-1) + p) * n_choices(ℓ) + c]
  std::vector<std::vector<double>> pi;
  /// beta[ℓ-1][s * prefix_count(ℓ) + p], ℓ < N
  std::vector<std::vector<double>> beta;
};

OptionTables tabulate(const OptionArchitecture& arch);

/// Augmented-state index s * stack_count + stack_index.
inline std::size_t augmented_index(const OptionArchitecture& arch, int s, std::size_t stack) {
  return static_cast<std::size_t>(s) * arch.stack_count() + stack;
}

/// Distribution over o'^{1:L} after terminating, at state s', the prefix
/// o^{1:L} with L = prefix.size(): levels end bottom-up and ended levels are
/// redrawn top-down. L = N-1 gives the option transition used by the
/// augmented kernel. Indexed by prefix_index; sums to one.
std::vector<double> reselection_probs(const OptionArchitecture& arch, const OptionTables& tables, int s_next,
                                      std::span<const int> prefix);

/// Mixture weights of the kept prefix length: weights[i] is the probability
/// that levels 1..i survive and level i+1 (if any) terminates, for the
/// prefix o^{1:L}. weights[L] = 1 - β^L.
std::vector<double> keep_weights(const OptionArchitecture& arch, const OptionTables& tables, int s,
                                 std::span<const int> prefix);

/// Discounted one-step kernel over augmented states. Rows of terminal base
/// states are zero.
Eigen::MatrixXd one_step_kernel(const OptionArchitecture& arch, const OptionTables& tables, const TabularMDP& mdp);
Eigen::MatrixXd one_step_kernel(const OptionArchitecture& arch, const TabularMDP& mdp);

/// Exact values for fixed parameters.
struct ExactSolution {
  int n_levels = 0;
  int n_states = 0;
  int n_actions = 0;
  std::size_t stacks = 0;
  std::vector<std::size_t> prefix_counts;  // prefix_counts[ℓ] = prefix_count(ℓ)
  /// Q[ℓ-1][s * prefix_count(ℓ) + p] = Q_Ω(s, o^{1:ℓ}); Q[N-2] is the full-stack option value.
  std::vector<std::vector<double>> Q;
  /// A[ℓ-1] generalized advantage, same layout as Q.
  std::vector<std::vector<double>> A;
  std::vector<double> Q_U;  // [x * n_actions + a]
  std::vector<double> U;    // [x], value on arrival at s' with the stack still active
  std::vector<double> V;    // [s], exact expectation under π^1

  double q(int level, int s, std::size_t prefix) const {
    return Q[static_cast<std::size_t>(level - 1)][static_cast<std::size_t>(s) * prefix_counts[level] + prefix];
  }
  double advantage(int level, int s, std::size_t prefix) const {
    return A[static_cast<std::size_t>(level - 1)][static_cast<std::size_t>(s) * prefix_counts[level] + prefix];
  }
  double q_omega(std::size_t x) const { return Q.back()[x]; }
  double q_u(std::size_t x, int a) const { return Q_U[x * static_cast<std::size_t>(n_actions) + a]; }
};

/// Solves (I - P1) Q_Ω = r_π and derives Q_U, U, lower-level Q, V and A.
/// Throws std::runtime_error if the linear system is numerically singular.
ExactSolution solve_bellman(const OptionArchitecture& arch, const TabularMDP& mdp);

struct BellmanResiduals {
  double option_value = 0.0;  // Q_Ω(s,o) - Σ_a π Q_U
  double arrival = 0.0;       // U against the none / some / all terminate branches
  double state_value = 0.0;   // V(s) - Σ π^1 Q(s, o^1)
  double lower_levels = 0.0;  // Q(s,o^{1:ℓ}) - Σ π^{ℓ+1} Q(s,o^{1:ℓ+1})
  double max() const;
};

BellmanResiduals bellman_residuals(const OptionArchitecture& arch, const TabularMDP& mdp, const ExactSolution& sol);

struct KernelChecks {
  double row_mass = 0.0;     // max |Σ_x' P1(x,x') - γ| over non-terminal rows
  double reselection = 0.0;  // max |Σ P_{π,β} - 1| over every level and context
  double occupancy = 0.0;    // ‖mu - e_x0 - P1ᵀ mu‖∞
};

KernelChecks kernel_checks(const OptionArchitecture& arch, const TabularMDP& mdp, const AugmentedState& start);

/// Discounted occupancy mu(x) = e_{x0}ᵀ (I - P1)^{-1}.
std::vector<double> occupancy(const OptionArchitecture& arch, const OptionTables& tables, const TabularMDP& mdp,
                              const AugmentedState& start);
std::vector<double> occupancy(const OptionArchitecture& arch, const TabularMDP& mdp, const AugmentedState& start);

/// P(s'|s,o) = Σ_a π^N(a|s,o) P(s'|s,a); zero for terminal s. Indexed [x * S + s'].
std::vector<double> option_successor(const OptionArchitecture& arch, const OptionTables& tables,
                                     const TabularMDP& mdp);

/// Arrival weights w(s',o) = γ Σ_s mu(s,o) P(s'|s,o), indexed like augmented states.
std::vector<double> arrival_weights(const OptionArchitecture& arch, const OptionTables& tables, const TabularMDP& mdp,
                                    std::span<const double> mu);

/// J(θ) = Q_Ω(s0, o0).
double exact_return(const OptionArchitecture& arch, const TabularMDP& mdp, const AugmentedState& start);

AugmentedState default_start(const OptionArchitecture& arch, const TabularMDP& mdp);

/// Optimal state values V*(s) by value iteration to a sup-norm change below `tol`.
std::vector<double> optimal_values(const TabularMDP& mdp, double tol = 1e-12);

struct ExactOptions {
  /// Negates the termination term; a deliberately wrong gradient for
  /// exercising the checks.
  bool flip_beta_term = false;
};

/// Two-level shared-parameter gradient (N = 2 only) by backward over a
/// surrogate with detached values and coefficient terminations.
GradientVector exact_ocpg_gradient(const OptionArchitecture& arch, const TabularMDP& mdp, const AugmentedState& start,
                                   const ExactOptions& opts = {});

/// N-level gradient with termination-product gates and the reselection
/// distribution P_{π,β}.
GradientVector exact_hocpg_gradient(const OptionArchitecture& arch, const TabularMDP& mdp,
                                    const AugmentedState& start, const ExactOptions& opts = {});

/// Hand-derived logit gradient for the tabular two-level layout.
GradientVector exact_ocpg_gradient_manual(const OptionArchitecture& arch, const TabularMDP& mdp,
                                          const AugmentedState& start);

/// Per-component updates of the separate-theorem approach, evaluated exactly.
struct BaselineGradients {
  GradientVector grad_pi;           // π^N: Σ mu Σ_a ∂π Q_U
  GradientVector grad_pi_options;   // π^ℓ, ℓ < N: actor-critic Σ mu(s,o^{1:ℓ-1}) Σ ∂π^ℓ Q(s,o^{1:ℓ})
  GradientVector grad_beta_shifted; // weights Σ_s mu(s,o)P(s'|s,o): start one step later
  GradientVector grad_beta_same;    // weights mu(s',o): same start as the return
};

BaselineGradients exact_baseline_gradients(const OptionArchitecture& arch, const TabularMDP& mdp,
                                           const AugmentedState& start);

/// Actor-critic update for π^1 with an arbitrary state weighting:
/// Σ_s weight[s] Σ_o ∂π^1(o|s) Q(s,o).
GradientVector actor_critic_top_gradient(const OptionArchitecture& arch, const ExactSolution& sol,
                                         std::span<const double> state_weight);

struct CoagentResult {
  GradientVector grad_j1;
  GradientVector grad_j2;
  /// kappa[(s' * K + o) * K + o'] for K top-level options.
  std::vector<double> kappa;
};

/// Intra-option term J1 and joint termination / policy-over-options term J2
/// through κ(o'|s',o) = β(s',o) π_Ω(o'|s') + (1 - β(s',o)) 1[o' = o]. N = 2.
CoagentResult coagent_decomposition(const OptionArchitecture& arch, const TabularMDP& mdp,
                                    const AugmentedState& start);

}  // namespace ocpg
