#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "autodiff/parameter_store.hpp"
#include "envs/rng.hpp"

namespace ocpg {

enum class Layout { Tabular, SharedTrunk };

const char* layout_name(Layout layout);
Layout parse_layout(const std::string& name);

struct ArchitectureSpec {
  int n_states = 0;
  int n_actions = 0;
  int n_levels = 2;             // N >= 2; level N chooses primitive actions
  std::vector<int> n_options;   // |Ω^1| .. |Ω^{N-1}|
  Layout layout = Layout::Tabular;
  int trunk_width = 32;
};

/// Base state plus the active option stack o^{1:N-1}, highest level first.
struct AugmentedState {
  int s = 0;
  std::vector<int> options;
};

/// N-level option hierarchy over a ParameterStore.
///
/// Levels are numbered 1..N. Level ℓ < N is a policy over options π^ℓ(·|s,
/// o^{1:ℓ-1}); level N is the action policy π^N(·|s, o^{1:N-1}). Level ℓ < N
/// also owns a termination β^ℓ(s, o^{1:ℓ}) and a critic head Q(s, o^{1:ℓ}).
///
/// Tabular layout gives every (component, context) its own logits. The
/// shared-trunk layout feeds one-hot(s) concatenated with one-hot codes of
/// the option prefix through a tanh hidden layer common to all components,
/// followed by a private affine head per component.
class OptionArchitecture {
 public:
  explicit OptionArchitecture(ArchitectureSpec spec, std::uint64_t init_seed = 0);

  const ArchitectureSpec& spec() const { return spec_; }
  int n_levels() const { return spec_.n_levels; }
  int n_states() const { return spec_.n_states; }
  int n_actions() const { return spec_.n_actions; }
  Layout layout() const { return spec_.layout; }
  /// Options at level ℓ < N.
  int n_options(int level) const;
  /// Options at level ℓ < N, actions at level N.
  int n_choices(int level) const;

  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }

  /// Number of option prefixes o^{1:len}.
  std::size_t prefix_count(int len) const;
  /// Mixed-radix index of a prefix, level 1 most significant.
  std::size_t prefix_index(std::span<const int> prefix) const;
  std::vector<int> prefix_from_index(std::size_t index, int len) const;
  /// Number of full stacks o^{1:N-1}.
  std::size_t stack_count() const { return prefix_count(n_levels() - 1); }

  // Numeric evaluation at the current parameters (no tape).
  void policy_probs(int level, int s, std::span<const int> prefix, std::span<double> out) const;
  std::vector<double> policy_probs(int level, int s, std::span<const int> prefix) const;
  double termination_prob(int level, int s, std::span<const int> prefix) const;
  double q_value(int level, int s, std::span<const int> prefix) const;

  /// Overwrites every parameter with uniform(−scale, scale).
  void randomize(std::uint64_t seed, double scale);

  // Parameter offsets. Tabular: row-major tables; shared: head weights.
  struct HeadOffsets {
    std::size_t weight = 0;  // tabular table, or head matrix (rows × trunk_width)
    std::size_t bias = 0;    // shared layout only
    std::size_t rows = 0;    // outputs per context (choices, or 1)
  };
  const HeadOffsets& policy_head(int level) const { return policy_[static_cast<std::size_t>(level - 1)]; }
  const HeadOffsets& termination_head(int level) const { return beta_[static_cast<std::size_t>(level - 1)]; }
  const HeadOffsets& critic_head(int level) const { return q_[static_cast<std::size_t>(level - 1)]; }
  std::size_t trunk_weight() const { return trunk_w_; }
  std::size_t trunk_bias() const { return trunk_b_; }
  /// Width of the trunk input vector in the shared layout.
  std::size_t trunk_input_size() const;
  /// Position of the one-hot code for option `o` at level `level` within
  /// the trunk input.
  std::size_t option_feature(int level, int o) const;

  /// Tabular-layout parameter index of a logit/value.
  std::size_t tabular_policy_index(int level, int s, std::span<const int> prefix, int choice) const;
  std::size_t tabular_termination_index(int level, int s, std::span<const int> prefix) const;
  std::size_t tabular_critic_index(int level, int s, std::span<const int> prefix) const;

  void check_context(int level, int s, std::span<const int> prefix, int expected_len) const;

 private:
  void hidden(int s, std::span<const int> prefix, std::span<double> h) const;
  double head_scalar(const HeadOffsets& head, std::span<const double> h) const;

  ArchitectureSpec spec_;
  ParameterStore store_;
  std::vector<HeadOffsets> policy_;
  std::vector<HeadOffsets> beta_;
  std::vector<HeadOffsets> q_;
  std::size_t trunk_w_ = 0;
  std::size_t trunk_b_ = 0;
};

/// Draws o^{1:N-1} top-down from the policies over options.
std::vector<int> sample_options(const OptionArchitecture& arch, int s, Rng& rng);
int sample_action(const OptionArchitecture& arch, int s, std::span<const int> options, Rng& rng);

struct TerminationOutcome {
  std::vector<int> options;       // stack in force at s after terminations
  std::vector<bool> terminated;   // terminated[ℓ-1] for level ℓ
  /// reselection[ℓ-1] holds o'^{1:ℓ} drawn as if levels ℓ..N-1 had all
  /// terminated: the prefix from the bottom-up termination kernel, then
  /// o'^ℓ ~ π^ℓ. Equal to options[0..ℓ) whenever level ℓ actually terminated.
  std::vector<std::vector<int>> reselection;
};

/// Bottom-up termination at state s of the stack that was active on arrival:
/// β^{N-1} is tried first, level ℓ may end only if every level below it
/// ended, and ended levels are redrawn top-down.
TerminationOutcome terminate_and_reselect(const OptionArchitecture& arch, int s, std::span<const int> options,
                                          Rng& rng);

struct ActResult {
  int action = 0;
  TerminationOutcome termination;
};

/// Termination step at `state.s` followed by an action draw from π^N.
ActResult act(const OptionArchitecture& arch, const AugmentedState& state, Rng& rng);

/// Checkpoint: "key value" header lines followed by one parameter per line.
void write_checkpoint(std::ostream& os, const OptionArchitecture& arch);
OptionArchitecture read_checkpoint(std::istream& is);
void save_checkpoint(const std::string& path, const OptionArchitecture& arch);
OptionArchitecture load_checkpoint(const std::string& path);

}  // namespace ocpg
