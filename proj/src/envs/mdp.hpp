#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "envs/rng.hpp"

namespace ocpg {

/// Row/column geometry for gridworld MDPs; state s lives at cells[s].
struct GridLayout {
  int rows = 0;
  int cols = 0;
  std::vector<std::array<int, 2>> cells;  // (row, col) per state

  /// State index at (row, col), or -1 for walls.
  int state_at(int row, int col) const;
};

/// Finite MDP with enumerated tables. P is stored as P[(s * A + a) * S + s'].
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> P;
  std::vector<double> r;  // r[s * A + a], expected reward
  double gamma = 0.9;
  int s0 = 0;
  std::vector<bool> terminal;
  /// When set, step() pays arrival_reward[s'] instead of r(s,a). r holds the
  /// matching expectation.
  std::vector<double> arrival_reward;
  std::optional<GridLayout> grid;
  std::string name = "tabular";

  double p(int s, int a, int s_next) const {
    return P[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s_next];
  }
  double reward(int s, int a) const { return r[static_cast<std::size_t>(s) * n_actions + a]; }
  const double* row(int s, int a) const {
    return P.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_states;
  }
  bool is_terminal(int s) const { return terminal[static_cast<std::size_t>(s)]; }

  /// Throws std::invalid_argument on a malformed table.
  void validate() const;
};

struct StepResult {
  int next_state;
  double reward;
  bool done;
};

/// Samples s' ~ P(·|s,a). Throws std::out_of_range on bad indices.
StepResult step(const TabularMDP& mdp, int state, int action, Rng& rng);

/// One transition of an option-hierarchy rollout.
struct TrajectoryStep {
  int s = 0;
  std::vector<int> options;  // o^{1:N-1} active at s, highest level first
  int a = 0;
  double r = 0.0;
  int s_next = 0;
  std::vector<int> next_options;  // stack after terminations at s_next
  std::vector<bool> terminated;   // terminated[l-1]: level l terminated at s_next
  bool done = false;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  double episode_return = 0.0;
  double discounted_return = 0.0;
};

/// The classic 13×13 four-rooms map ('#' is wall): 104 free cells, hallways
/// at (3,6), (10,6), (6,2) and (7,9).
inline constexpr std::array<std::string_view, 13> kFourRoomsMap = {
    "#############",
    "#     #     #",
    "#     #     #",
    "#           #",
    "#     #     #",
    "#     #     #",
    "## ####     #",
    "#     ### ###",
    "#     #     #",
    "#     #     #",
    "#           #",
    "#     #     #",
    "#############",
};

struct FourRoomsOptions {
  double slip = 0.0;  // probability of a uniformly chosen other action
  int goal_row = 10;
  int goal_col = 7;
  int start_row = 1;
  int start_col = 1;
  double gamma = 0.99;
};

/// Actions: 0 up, 1 down, 2 left, 3 right.
TabularMDP four_rooms(const FourRoomsOptions& opts = {});

/// Gridworld from an ASCII map ('#' wall, any other char free). Moving into
/// a wall keeps position; entering the goal pays 1 and ends the episode.
TabularMDP gridworld(std::span<const std::string_view> map, int goal_row, int goal_col, int start_row,
                     int start_col, double gamma, double slip, std::string name);

/// Transition rows from normalised uniform(0,1) draws, rewards uniform(0,1).
TabularMDP random_mdp(std::uint64_t seed, int n_states, int n_actions, double gamma = 0.9);

/// Linear chain: action 0 moves left, action 1 right (with probability
/// 1 − slip); the right end is terminal and entering it pays 1.
TabularMDP chain_mdp(int n_states, double slip = 0.0, double gamma = 0.9);

/// Plain-text fixture: header "states actions gamma s0", then one P row per
/// (s, a), then one r row per s. An optional trailing "terminal i j ..."
/// line lists terminal states.
void write_mdp(std::ostream& os, const TabularMDP& mdp);
TabularMDP read_mdp(std::istream& is);
void save_mdp(const std::string& path, const TabularMDP& mdp);
TabularMDP load_mdp(const std::string& path);

}  // namespace ocpg
