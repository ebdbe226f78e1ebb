#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "envs/mdp.hpp"
#include "gradients/estimators.hpp"
#include "model/architecture.hpp"

namespace ocpg {

/// Malformed config text, unknown key or out-of-range value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EnvSpec {
  std::string kind = "four_rooms";  // four_rooms | chain | random | file
  double slip = 0.0;
  int goal_row = 10;
  int goal_col = 7;
  int start_row = 1;
  int start_col = 1;
  int chain_states = 8;
  int random_states = 4;
  int random_actions = 2;
  std::uint64_t env_seed = 7;
  std::string path;  // MDP fixture for kind = file
  int max_episode_steps = 1000;
};

/// η switches to `eta` once the global step reaches the threshold. With
/// `fraction` set the threshold is a fraction of total_steps.
struct EtaPoint {
  double at = 0.0;
  bool fraction = false;
  double eta = 0.0;
};

struct TrainConfig {
  EnvSpec env;
  int n_levels = 2;
  std::vector<int> n_options{4};
  Layout layout = Layout::Tabular;
  int trunk_width = 32;
  Estimator estimator = Estimator::OCPG;
  long long total_steps = 2000000;
  int workers = 4;
  int t_max = 20;
  int t_min = 5;
  UpdateConfig update;
  bool alpha_set = false;  // otherwise α follows the layout default
  double clip = 40.0;
  std::vector<EtaPoint> eta_schedule;
  std::uint64_t seed = 1;
  long long eval_every = 50000;
  int eval_episodes = 20;
  long long checkpoint_every = 0;  // 0: final checkpoint only
  bool interference = true;
  bool interference_full = false;  // dot products over the full gradient

  /// Throws ConfigError.
  void validate() const;
  ArchitectureSpec architecture(const TabularMDP& mdp) const;
  /// η in force at a global step.
  double eta_at(long long global_step) const;
  /// α actually applied.
  double alpha() const;
};

/// Applies one key=value pair. Throws ConfigError on unknown keys.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
/// "key=value" form of set_config_value.
void apply_override(TrainConfig& cfg, const std::string& assignment);

/// One key=value per line, '#' starts a comment. Validates the result.
TrainConfig parse_config(std::istream& is, TrainConfig base = {});
TrainConfig parse_config_text(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::string& path, TrainConfig base = {});

/// Every key, in a form parse_config reads back to the same config.
void write_config(std::ostream& os, const TrainConfig& cfg);

TabularMDP make_env(const EnvSpec& env, double gamma);

}  // namespace ocpg
