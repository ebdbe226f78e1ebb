#include "envs/mdp.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ocpg {

int GridLayout::state_at(int row, int col) const {
  for (std::size_t s = 0; s < cells.size(); ++s) {
    if (cells[s][0] == row && cells[s][1] == col) return static_cast<int>(s);
  }
  return -1;
}

void TabularMDP::validate() const {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("MDP needs at least one state and action");
  const auto S = static_cast<std::size_t>(n_states);
  const auto A = static_cast<std::size_t>(n_actions);
  if (P.size() != S * A * S) throw std::invalid_argument("MDP transition tensor has wrong size");
  if (r.size() != S * A) throw std::invalid_argument("MDP reward table has wrong size");
  if (terminal.size() != S) throw std::invalid_argument("MDP terminal mask has wrong size");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("MDP discount must lie in [0, 1)");
  if (s0 < 0 || s0 >= n_states) throw std::invalid_argument("MDP start state out of range");
  if (!arrival_reward.empty() && arrival_reward.size() != S) {
    throw std::invalid_argument("MDP arrival reward table has wrong size");
  }
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double total = 0.0;
      for (int t = 0; t < n_states; ++t) {
        const double q = p(s, a, t);
        if (!(q >= 0.0)) throw std::invalid_argument("MDP has a negative or NaN transition probability");
        total += q;
      }
      if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument("MDP row (" + std::to_string(s) + ", " + std::to_string(a) +
                                    ") sums to " + std::to_string(total));
      }
      if (!std::isfinite(reward(s, a))) throw std::invalid_argument("MDP reward is not finite");
    }
  }
}

StepResult step(const TabularMDP& mdp, int state, int action, Rng& rng) {
  if (state < 0 || state >= mdp.n_states) throw std::out_of_range("step: state " + std::to_string(state));
  if (action < 0 || action >= mdp.n_actions) throw std::out_of_range("step: action " + std::to_string(action));
  const double* row = mdp.row(state, action);
  const int next = static_cast<int>(rng.categorical({row, static_cast<std::size_t>(mdp.n_states)}));
  const double reward = mdp.arrival_reward.empty() ? mdp.reward(state, action)
                                                    : mdp.arrival_reward[static_cast<std::size_t>(next)];
  return {next, reward, mdp.is_terminal(next)};
}

TabularMDP gridworld(std::span<const std::string_view> map, int goal_row, int goal_col, int start_row,
                     int start_col, double gamma, double slip, std::string name) {
  GridLayout grid;
  grid.rows = static_cast<int>(map.size());
  grid.cols = grid.rows > 0 ? static_cast<int>(map[0].size()) : 0;
  for (int i = 0; i < grid.rows; ++i) {
    if (static_cast<int>(map[i].size()) != grid.cols) throw std::invalid_argument("gridworld: ragged map");
    for (int j = 0; j < grid.cols; ++j) {
      if (map[i][j] != '#') grid.cells.push_back({i, j});
    }
  }
  const int goal = grid.state_at(goal_row, goal_col);
  const int start = grid.state_at(start_row, start_col);
  if (goal < 0) throw std::invalid_argument("gridworld: goal cell is a wall");
  if (start < 0) throw std::invalid_argument("gridworld: start cell is a wall");
  if (!(slip >= 0.0 && slip < 1.0)) throw std::invalid_argument("gridworld: slip must lie in [0, 1)");

  TabularMDP mdp;
  mdp.name = std::move(name);
  mdp.n_states = static_cast<int>(grid.cells.size());
  mdp.n_actions = 4;
  mdp.gamma = gamma;
  mdp.s0 = start;
  const auto S = static_cast<std::size_t>(mdp.n_states);
  mdp.P.assign(S * 4 * S, 0.0);
  mdp.r.assign(S * 4, 0.0);
  mdp.terminal.assign(S, false);
  mdp.terminal[static_cast<std::size_t>(goal)] = true;
  mdp.arrival_reward.assign(S, 0.0);
  mdp.arrival_reward[static_cast<std::size_t>(goal)] = 1.0;

  constexpr int dr[4] = {-1, 1, 0, 0};
  constexpr int dc[4] = {0, 0, -1, 1};
  auto move = [&](int s, int dir) {
    const auto [row, col] = grid.cells[static_cast<std::size_t>(s)];
    const int t = grid.state_at(row + dr[dir], col + dc[dir]);
    return t < 0 ? s : t;
  };
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < 4; ++a) {
      double* row = mdp.P.data() + (static_cast<std::size_t>(s) * 4 + a) * S;
      if (s == goal) {
        row[s] = 1.0;
        continue;
      }
      for (int dir = 0; dir < 4; ++dir) {
        const double w = dir == a ? 1.0 - slip : slip / 3.0;
        if (w > 0.0) row[move(s, dir)] += w;
      }
      double expected = 0.0;
      for (std::size_t t = 0; t < S; ++t) expected += row[t] * mdp.arrival_reward[t];
      mdp.r[static_cast<std::size_t>(s) * 4 + a] = expected;
    }
  }
  mdp.grid = std::move(grid);
  mdp.validate();
  return mdp;
}

TabularMDP four_rooms(const FourRoomsOptions& opts) {
  return gridworld(kFourRoomsMap, opts.goal_row, opts.goal_col, opts.start_row, opts.start_col, opts.gamma,
                   opts.slip, "four_rooms");
}

TabularMDP random_mdp(std::uint64_t seed, int n_states, int n_actions, double gamma) {
  if (n_states < 2 || n_actions < 2) throw std::invalid_argument("random_mdp needs >= 2 states and actions");
  Rng rng(seed);
  TabularMDP mdp;
  mdp.name = "random";
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.s0 = 0;
  const auto S = static_cast<std::size_t>(n_states);
  const auto A = static_cast<std::size_t>(n_actions);
  mdp.P.resize(S * A * S);
  for (std::size_t sa = 0; sa < S * A; ++sa) {
    double total = 0.0;
    for (std::size_t t = 0; t < S; ++t) {
      const double u = rng.uniform();
      mdp.P[sa * S + t] = u;
      total += u;
    }
    for (std::size_t t = 0; t < S; ++t) mdp.P[sa * S + t] /= total;
  }
  mdp.r.resize(S * A);
  for (double& x : mdp.r) x = rng.uniform();
  mdp.terminal.assign(S, false);
  mdp.validate();
  return mdp;
}

TabularMDP chain_mdp(int n_states, double slip, double gamma) {
  if (n_states < 2) throw std::invalid_argument("chain_mdp needs >= 2 states");
  TabularMDP mdp;
  mdp.name = "chain";
  mdp.n_states = n_states;
  mdp.n_actions = 2;
  mdp.gamma = gamma;
  mdp.s0 = 0;
  const auto S = static_cast<std::size_t>(n_states);
  mdp.P.assign(S * 2 * S, 0.0);
  mdp.r.assign(S * 2, 0.0);
  mdp.terminal.assign(S, false);
  mdp.terminal[S - 1] = true;
  mdp.arrival_reward.assign(S, 0.0);
  mdp.arrival_reward[S - 1] = 1.0;
  for (int s = 0; s < n_states; ++s) {
    const int left = std::max(0, s - 1);
    const int right = std::min(n_states - 1, s + 1);
    for (int a = 0; a < 2; ++a) {
      double* row = mdp.P.data() + (static_cast<std::size_t>(s) * 2 + a) * S;
      if (s == n_states - 1) {
        row[s] = 1.0;
        continue;
      }
      row[a == 0 ? left : right] += 1.0 - slip;
      row[a == 0 ? right : left] += slip;
      mdp.r[static_cast<std::size_t>(s) * 2 + a] = row[S - 1];
    }
  }
  mdp.validate();
  return mdp;
}

void write_mdp(std::ostream& os, const TabularMDP& mdp) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << mdp.n_states << ' ' << mdp.n_actions << ' ' << mdp.gamma << ' ' << mdp.s0 << '\n';
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      for (int t = 0; t < mdp.n_states; ++t) os << (t ? " " : "") << mdp.p(s, a, t);
      os << '\n';
    }
  }
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) os << (a ? " " : "") << mdp.reward(s, a);
    os << '\n';
  }
  bool any = false;
  for (int s = 0; s < mdp.n_states; ++s) any = any || mdp.is_terminal(s);
  if (any) {
    os << "terminal";
    for (int s = 0; s < mdp.n_states; ++s) {
      if (mdp.is_terminal(s)) os << ' ' << s;
    }
    os << '\n';
  }
}

TabularMDP read_mdp(std::istream& is) {
  TabularMDP mdp;
  mdp.name = "file";
  if (!(is >> mdp.n_states >> mdp.n_actions >> mdp.gamma >> mdp.s0)) {
    throw std::invalid_argument("MDP fixture: malformed header");
  }
  if (mdp.n_states < 1 || mdp.n_actions < 1) throw std::invalid_argument("MDP fixture: bad dimensions");
  const auto S = static_cast<std::size_t>(mdp.n_states);
  const auto A = static_cast<std::size_t>(mdp.n_actions);
  mdp.P.resize(S * A * S);
  for (double& x : mdp.P) {
    if (!(is >> x)) throw std::invalid_argument("MDP fixture: truncated transition rows");
  }
  mdp.r.resize(S * A);
  for (double& x : mdp.r) {
    if (!(is >> x)) throw std::invalid_argument("MDP fixture: truncated reward rows");
  }
  mdp.terminal.assign(S, false);
  std::string word;
  if (is >> word) {
    if (word != "terminal") throw std::invalid_argument("MDP fixture: unexpected token '" + word + "'");
    int s;
    while (is >> s) {
      if (s < 0 || s >= mdp.n_states) throw std::invalid_argument("MDP fixture: terminal index out of range");
      mdp.terminal[static_cast<std::size_t>(s)] = true;
    }
  }
  mdp.validate();
  return mdp;
}

void save_mdp(const std::string& path, const TabularMDP& mdp) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_mdp(os, mdp);
}

TabularMDP load_mdp(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_mdp(is);
}

}  // namespace ocpg
