#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "envs/mdp.hpp"
#include "envs/rng.hpp"
#include "model/architecture.hpp"
#include "oracle/oracle.hpp"

namespace ocpg {

/// Total steps divided by the number of level-`level` terminations. With no
/// termination observed it is the mean episode length.
double steps_per_termination(std::span<const Trajectory> trajectories, int level);

/// Mean over episodes of the number of distinct top-level options active.
double distinct_options_per_episode(std::span<const Trajectory> trajectories);

/// KL(p ‖ q) for strictly positive q.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Mean over states and ordered pairs of distinct option stacks of
/// KL(π^N(·|s,o) ‖ π^N(·|s,o')).
double pairwise_kl(const OptionArchitecture& arch, std::span<const int> states);

/// Fixed-capacity reservoir sample of gradient vectors.
class GradientReservoir {
 public:
  explicit GradientReservoir(std::size_t capacity = 20, std::size_t sample_size = 5);

  /// Algorithm R: the n-th insertion replaces a random slot with
  /// probability capacity / n once the reservoir is full.
  void insert(std::vector<double> gradient, Rng& rng);

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t sample_size() const { return sample_size_; }
  std::uint64_t seen() const { return seen_; }
  const std::vector<double>& item(std::size_t i) const { return items_[i].gradient; }
  /// Insertion number (0-based) of the gradient held in slot i.
  std::uint64_t item_id(std::size_t i) const { return items_[i].id; }

 private:
  struct Entry {
    std::vector<double> gradient;
    std::uint64_t id;
  };
  std::size_t capacity_;
  std::size_t sample_size_;
  std::uint64_t seen_ = 0;
  std::vector<Entry> items_;
};

/// Dot products of `current` with sample_size() stored gradients drawn
/// uniformly without replacement (with replacement while the reservoir holds
/// fewer). Throws if the reservoir is empty.
std::vector<double> gradient_interference(const GradientReservoir& reservoir, std::span<const double> current,
                                          Rng& rng);

/// Where the policy over options receives update mass. The unified estimator
/// puts γ Σ_o μ(s,o) E[β(s',o)] at s (terminal successors excluded); the
/// baseline puts Σ_o μ(s,o). With N > 2 the gate is the product of every
/// level's termination, the event that re-draws π^1.
std::vector<double> update_mass_map(const OptionArchitecture& arch, const TabularMDP& mdp,
                                    const AugmentedState& start, bool unified);

/// Grid-shaped CSV: one row per map row, walls left empty.
void write_grid_csv(std::ostream& os, const GridLayout& grid, std::span<const double> values);

/// Two-room corridor used to locate the unified update mass: two 3×4 rooms
/// joined by a one-cell doorway, start in the far corner of the left room,
/// goal in the right room.
struct DoorwayFixture {
  TabularMDP mdp;
  int doorway = 0;
  std::vector<int> doorway_adjacent;  // free cells one move from the doorway
};
DoorwayFixture doorway_fixture(double gamma = 0.9);
/// Two options that both head right (with some spread); terminations are
/// near 1 at the doorway and near 0 elsewhere.
OptionArchitecture doorway_architecture(const DoorwayFixture& fixture);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};
/// Welch's unequal-variance t-test. Needs two samples of size >= 2.
WelchResult welch_test(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> x);
/// Unbiased sample variance.
double variance(std::span<const double> x);
double median(std::vector<double> x);

}  // namespace ocpg
