#include "analysis/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace ocpg {

double steps_per_termination(std::span<const Trajectory> trajectories, int level) {
  if (level < 1) throw std::invalid_argument("steps_per_termination: level must be >= 1");
  std::size_t steps = 0;
  std::size_t ended = 0;
  for (const auto& tr : trajectories) {
    steps += tr.steps.size();
    for (const auto& st : tr.steps) {
      if (static_cast<std::size_t>(level) <= st.terminated.size() && st.terminated[static_cast<std::size_t>(level - 1)]) {
        ++ended;
      }
    }
  }
  if (trajectories.empty()) return 0.0;
  if (ended == 0) return static_cast<double>(steps) / static_cast<double>(trajectories.size());
  return static_cast<double>(steps) / static_cast<double>(ended);
}

double distinct_options_per_episode(std::span<const Trajectory> trajectories) {
  if (trajectories.empty()) return 0.0;
  double total = 0.0;
  for (const auto& tr : trajectories) {
    std::set<int> used;
    for (const auto& st : tr.steps) {
      if (!st.options.empty()) used.insert(st.options[0]);
    }
    total += static_cast<double>(used.size());
  }
  return total / static_cast<double>(trajectories.size());
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return std::max(kl, 0.0);
}

double pairwise_kl(const OptionArchitecture& arch, std::span<const int> states) {
  const int N = arch.n_levels();
  const std::size_t K = arch.stack_count();
  if (K < 2) throw std::invalid_argument("pairwise_kl needs at least two option stacks");
  if (states.empty()) return 0.0;
  std::vector<std::vector<double>> pol(K);
  double total = 0.0;
  std::size_t count = 0;
  for (int s : states) {
    for (std::size_t o = 0; o < K; ++o) pol[o] = arch.policy_probs(N, s, arch.prefix_from_index(o, N - 1));
    for (std::size_t a = 0; a < K; ++a) {
      for (std::size_t b = 0; b < K; ++b) {
        if (a == b) continue;
        total += kl_divergence(pol[a], pol[b]);
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

GradientReservoir::GradientReservoir(std::size_t capacity, std::size_t sample_size)
    : capacity_(capacity), sample_size_(sample_size) {
  if (capacity == 0 || sample_size == 0) throw std::invalid_argument("GradientReservoir: sizes must be positive");
}

void GradientReservoir::insert(std::vector<double> gradient, Rng& rng) {
  const std::uint64_t id = seen_++;
  if (items_.size() < capacity_) {
    items_.push_back({std::move(gradient), id});
    return;
  }
  const std::size_t j = rng.below(static_cast<std::size_t>(seen_));
  if (j < capacity_) items_[j] = {std::move(gradient), id};
}

std::vector<double> gradient_interference(const GradientReservoir& reservoir, std::span<const double> current,
                                          Rng& rng) {
  if (reservoir.empty()) throw std::invalid_argument("gradient_interference: reservoir is empty");
  const std::size_t n = reservoir.size();
  const std::size_t k = reservoir.sample_size();
  std::vector<std::size_t> picks;
  if (n >= k) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(idx[i], idx[i + rng.below(n - i)]);
      picks.push_back(idx[i]);
    }
  } else {
    for (std::size_t i = 0; i < k; ++i) picks.push_back(rng.below(n));
  }
  std::vector<double> out;
  for (std::size_t i : picks) {
    const auto& g = reservoir.item(i);
    if (g.size() != current.size()) throw std::invalid_argument("gradient_interference: size mismatch");
    out.push_back(dot(current, g));
  }
  return out;
}

std::vector<double> update_mass_map(const OptionArchitecture& arch, const TabularMDP& mdp,
                                    const AugmentedState& start, bool unified) {
  const OptionTables tables = tabulate(arch);
  const std::vector<double> mu = occupancy(arch, tables, mdp, start);
  const std::size_t K = arch.stack_count();
  const int S = mdp.n_states;
  const int L = arch.n_levels() - 1;
  std::vector<double> map(static_cast<std::size_t>(S), 0.0);
  if (!unified) {
    for (int s = 0; s < S; ++s) {
      if (mdp.is_terminal(s)) continue;
      for (std::size_t o = 0; o < K; ++o) map[static_cast<std::size_t>(s)] += mu[augmented_index(arch, s, o)];
    }
    return map;
  }
  // gate[s' * K + o] = ∏_ℓ β^ℓ(s', o^{1:ℓ})
  std::vector<double> gate(static_cast<std::size_t>(S) * K, 0.0);
  for (int s2 = 0; s2 < S; ++s2) {
    if (mdp.is_terminal(s2)) continue;
    for (std::size_t o = 0; o < K; ++o) {
      const std::vector<int> stack = arch.prefix_from_index(o, L);
      double g = 1.0;
      for (int l = 1; l <= L; ++l) {
        g *= tables.beta[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(s2) * arch.prefix_count(l) +
                                                          arch.prefix_index(std::span<const int>(stack).first(l))];
      }
      gate[static_cast<std::size_t>(s2) * K + o] = g;
    }
  }
  const std::vector<double> succ = option_successor(arch, tables, mdp);
  for (int s = 0; s < S; ++s) {
    for (std::size_t o = 0; o < K; ++o) {
      const std::size_t x = augmented_index(arch, s, o);
      double expected = 0.0;
      for (int s2 = 0; s2 < S; ++s2) {
        expected += succ[x * static_cast<std::size_t>(S) + static_cast<std::size_t>(s2)] *
                    gate[static_cast<std::size_t>(s2) * K + o];
      }
      map[static_cast<std::size_t>(s)] += mdp.gamma * mu[x] * expected;
    }
  }
  return map;
}

void write_grid_csv(std::ostream& os, const GridLayout& grid, std::span<const double> values) {
  if (values.size() != grid.cells.size()) throw std::invalid_argument("write_grid_csv: one value per cell expected");
  os.precision(10);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      if (c) os << ',';
      const int s = grid.state_at(r, c);
      if (s >= 0) os << values[static_cast<std::size_t>(s)];
    }
    os << '\n';
  }
}

namespace {

constexpr std::array<std::string_view, 5> kDoorwayMap = {
    "###########",
    "#    #    #",
    "#         #",
    "#    #    #",
    "###########",
};

}  // namespace

DoorwayFixture doorway_fixture(double gamma) {
  DoorwayFixture f;
  f.mdp = gridworld(kDoorwayMap, 3, 9, 1, 1, gamma, 0.0, "doorway");
  const auto& grid = *f.mdp.grid;
  f.doorway = grid.state_at(2, 5);
  f.doorway_adjacent = {grid.state_at(2, 4), grid.state_at(2, 6)};
  return f;
}

OptionArchitecture doorway_architecture(const DoorwayFixture& fixture) {
  ArchitectureSpec spec;
  spec.n_states = fixture.mdp.n_states;
  spec.n_actions = 4;
  spec.n_levels = 2;
  spec.n_options = {2};
  OptionArchitecture arch(spec);
  auto& th = arch.store();
  for (int s = 0; s < spec.n_states; ++s) {
    for (int o = 0; o < 2; ++o) {
      const std::vector<int> stack{o};
      th[arch.tabular_policy_index(2, s, stack, 3)] = o == 0 ? 1.5 : 0.5;
      if (o == 1) th[arch.tabular_policy_index(2, s, stack, 1)] = 0.5;
      th[arch.tabular_termination_index(1, s, stack)] = s == fixture.doorway ? 6.0 : -6.0;
    }
  }
  return arch;
}

double mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean of an empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.size() < 2) throw std::invalid_argument("variance needs at least two values");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

double median(std::vector<double> x) {
  if (x.empty()) throw std::invalid_argument("median of an empty sample");
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

WelchResult welch_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch_test needs two samples of size >= 2");
  const double va = variance(a) / static_cast<double>(a.size());
  const double vb = variance(b) / static_cast<double>(b.size());
  WelchResult r;
  const double se2 = va + vb;
  const double diff = mean(a) - mean(b);
  if (se2 == 0.0) {
    r.t = diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
    r.df = static_cast<double>(a.size() + b.size() - 2);
    r.p = diff == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = diff / std::sqrt(se2);
  r.df = se2 * se2 /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  boost::math::students_t dist(r.df);
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

}  // namespace ocpg
