#include <cmath>
#include <numeric>
#include <sstream>

#include "analysis/metrics.hpp"
#include "doctest.h"
#include "trainer/trainer.hpp"

using namespace ocpg;

namespace {

Trajectory synthetic(int length, std::vector<int> terminate_at, std::vector<int> top_options = {}) {
  Trajectory tr;
  for (int t = 1; t <= length; ++t) {
    TrajectoryStep st;
    st.options = {top_options.empty() ? 0 : top_options[static_cast<std::size_t>(t - 1) % top_options.size()]};
    st.terminated = {std::find(terminate_at.begin(), terminate_at.end(), t) != terminate_at.end()};
    tr.steps.push_back(st);
  }
  return tr;
}

OptionArchitecture one_state(double logit0, double logit1) {
  ArchitectureSpec spec;
  spec.n_states = 1;
  spec.n_actions = 2;
  spec.n_options = {2};
  OptionArchitecture arch(spec);
  const std::vector<int> o0{0}, o1{1};
  arch.store()[arch.tabular_policy_index(2, 0, o0, 0)] = logit0;
  arch.store()[arch.tabular_policy_index(2, 0, o1, 0)] = logit1;
  return arch;
}

void set_all_beta(OptionArchitecture& arch, double logit) {
  const auto& sl = arch.store().slice("beta1");
  for (std::size_t i = sl.offset; i < sl.offset + sl.size; ++i) arch.store()[i] = logit;
}

}  // namespace

TEST_CASE("steps per termination") {
  std::vector<Trajectory> t{synthetic(12, {3, 7, 10})};
  CHECK(steps_per_termination(t, 1) == doctest::Approx(4.0));
  std::vector<Trajectory> none{synthetic(9, {}), synthetic(11, {})};
  CHECK(steps_per_termination(none, 1) == doctest::Approx(10.0));

  auto m = chain_mdp(6, 0.0, 0.9);
  ArchitectureSpec spec{6, 2, 2, {2}};
  OptionArchitecture arch(spec);
  arch.randomize(1, 0.5);
  Rng rng(4);
  set_all_beta(arch, 800.0);
  auto always = evaluate(arch, m, 10, 200, rng);
  CHECK(steps_per_termination(always, 1) == doctest::Approx(1.0));
  set_all_beta(arch, -800.0);
  auto never = evaluate(arch, m, 1, 200, rng);
  CHECK(steps_per_termination(never, 1) == doctest::Approx(static_cast<double>(never[0].steps.size())));
}

TEST_CASE("distinct options per episode") {
  std::vector<Trajectory> single{synthetic(5, {})};
  CHECK(distinct_options_per_episode(single) == 1.0);
  std::vector<Trajectory> all{synthetic(16, {}, {0, 1, 2, 3, 4, 5, 6, 7})};
  CHECK(distinct_options_per_episode(all) == 8.0);
  std::vector<Trajectory> mixed{synthetic(4, {}, {1, 2}), synthetic(3, {}, {2})};
  CHECK(distinct_options_per_episode(mixed) == 1.5);
}

TEST_CASE("pairwise KL closed forms") {
  const std::vector<int> states{0};
  CHECK(pairwise_kl(one_state(0.7, 0.7), states) == 0.0);
  const double l9 = std::log(9.0);
  CHECK(pairwise_kl(one_state(l9, -l9), states) == doctest::Approx(0.8 * std::log(9.0)).epsilon(1e-12));
  CHECK(pairwise_kl(one_state(l9, -l9), states) == doctest::Approx(1.7577796618689758).epsilon(1e-12));
}

TEST_CASE("KL is non-negative and zero only for equal distributions") {
  Rng rng(11);
  for (int k = 0; k < 500; ++k) {
    std::vector<double> p(4), q(4);
    double sp = 0, sq = 0;
    for (int i = 0; i < 4; ++i) {
      p[static_cast<std::size_t>(i)] = rng.uniform() + 1e-3;
      q[static_cast<std::size_t>(i)] = rng.uniform() + 1e-3;
      sp += p[static_cast<std::size_t>(i)];
      sq += q[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < 4; ++i) {
      p[static_cast<std::size_t>(i)] /= sp;
      q[static_cast<std::size_t>(i)] /= sq;
    }
    CHECK(kl_divergence(p, q) > 0.0);
    CHECK(kl_divergence(p, p) == 0.0);
  }
}

TEST_CASE("frozen KL on the trained seed-7 checkpoint") {
  TrainConfig c;
  c.env.kind = "random";
  c.env.env_seed = 7;
  c.env.random_states = 4;
  c.env.random_actions = 2;
  c.env.max_episode_steps = 100;
  c.n_options = {2};
  c.update.alpha = 0.1;
  c.alpha_set = true;
  c.update.gamma = 0.9;
  c.total_steps = 5000;
  c.eval_every = 5000;
  c.workers = 1;
  c.seed = 7;
  auto r = train(c);
  const std::vector<int> states{0, 1, 2, 3};
  CHECK(pairwise_kl(r.arch, states) == doctest::Approx(0.0060654536465405764).epsilon(1e-12));
}

TEST_CASE("reservoir never exceeds capacity") {
  GradientReservoir res;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    res.insert({static_cast<double>(i)}, rng);
    CHECK(res.size() == std::min<std::size_t>(static_cast<std::size_t>(i + 1), 20));
  }
  CHECK(res.seen() == 100);
  CHECK(res.capacity() == 20);
  CHECK(res.sample_size() == 5);
}

TEST_CASE("reservoir retention is uniform") {
  constexpr int M = 200;
  constexpr int trials = 2000;
  std::vector<int> kept(M, 0);
  Rng rng(2024);
  for (int t = 0; t < trials; ++t) {
    GradientReservoir res;
    for (int i = 0; i < M; ++i) res.insert({}, rng);
    for (std::size_t k = 0; k < res.size(); ++k) ++kept[static_cast<std::size_t>(res.item_id(k))];
  }
  const double p = 20.0 / M;
  const double sigma = std::sqrt(p * (1 - p) / trials);
  for (int i = 0; i < M; ++i) CHECK(std::abs(kept[static_cast<std::size_t>(i)] / double(trials) - p) <= 3 * sigma);
}

TEST_CASE("gradient interference examples") {
  Rng rng(3);
  const std::vector<double> g{1.0, -2.0, 0.5};
  const double g2 = 1.0 + 4.0 + 0.25;
  auto dots_with = [&](std::vector<double> stored) {
    GradientReservoir res;
    res.insert(stored, rng);
    return gradient_interference(res, g, rng);
  };
  for (double d : dots_with(g)) CHECK(d == doctest::Approx(g2));
  for (double d : dots_with({2.0, 1.0, 0.0})) CHECK(d == 0.0);
  for (double d : dots_with({-1.0, 2.0, -0.5})) CHECK(d == doctest::Approx(-g2));
  CHECK(dots_with(g).size() == 5);
  GradientReservoir empty;
  CHECK_THROWS(gradient_interference(empty, g, rng));

  // Sampling without replacement once five are stored.
  GradientReservoir res;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> e(5, 0.0);
    e[static_cast<std::size_t>(i)] = 1.0;
    res.insert(e, rng);
  }
  auto d = gradient_interference(res, std::vector<double>{1, 2, 3, 4, 5}, rng);
  std::sort(d.begin(), d.end());
  CHECK(d == std::vector<double>{1, 2, 3, 4, 5});
}

TEST_CASE("update mass map identities on four rooms") {
  auto m = four_rooms({.slip = 0.1, .gamma = 0.9});
  ArchitectureSpec spec{m.n_states, 4, 2, {2}};
  OptionArchitecture arch(spec);
  arch.randomize(5, 1.0);
  const auto start = default_start(arch, m);

  set_all_beta(arch, 800.0);
  const auto oc = update_mass_map(arch, m, start, false);
  const auto uni = update_mass_map(arch, m, start, true);
  const int goal = m.grid->state_at(10, 7);
  int interior = 0;
  for (int s = 0; s < m.n_states; ++s) {
    bool next_to_goal = false;
    for (int a = 0; a < 4; ++a) next_to_goal = next_to_goal || m.p(s, a, goal) > 0.0;
    if (s == goal || next_to_goal) continue;
    CHECK(uni[static_cast<std::size_t>(s)] == doctest::Approx(m.gamma * oc[static_cast<std::size_t>(s)]).epsilon(1e-10));
    ++interior;
  }
  CHECK(interior > 90);

  set_all_beta(arch, -800.0);
  for (double v : update_mass_map(arch, m, start, true)) CHECK(v == 0.0);

  arch.randomize(6, 2.0);
  const auto oc2 = update_mass_map(arch, m, start, false);
  const auto uni2 = update_mass_map(arch, m, start, true);
  for (int s = 0; s < m.n_states; ++s) {
    CHECK(uni2[static_cast<std::size_t>(s)] <= m.gamma * oc2[static_cast<std::size_t>(s)] + 1e-12);
  }
}

TEST_CASE("doorway fixture concentrates the unified mass next to the doorway") {
  const auto f = doorway_fixture();
  const auto arch = doorway_architecture(f);
  const auto start = default_start(arch, f.mdp);
  auto argmax = [](const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  };
  const int uni = argmax(update_mass_map(arch, f.mdp, start, true));
  const int oc = argmax(update_mass_map(arch, f.mdp, start, false));
  auto adjacent = [&](int s) {
    return std::find(f.doorway_adjacent.begin(), f.doorway_adjacent.end(), s) != f.doorway_adjacent.end();
  };
  CHECK(adjacent(uni));
  CHECK_FALSE(adjacent(oc));
  CHECK(f.doorway_adjacent.size() == 2);
  const auto& g = *f.mdp.grid;
  for (int s : f.doorway_adjacent) {
    CHECK(std::abs(g.cells[static_cast<std::size_t>(s)][0] - 2) + std::abs(g.cells[static_cast<std::size_t>(s)][1] - 5) == 1);
  }
}

TEST_CASE("grid CSV layout") {
  const auto f = doorway_fixture();
  std::vector<double> v(static_cast<std::size_t>(f.mdp.n_states));
  std::iota(v.begin(), v.end(), 0.0);
  std::ostringstream os;
  write_grid_csv(os, *f.mdp.grid, v);
  std::istringstream is(os.str());
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 10);
    ++rows;
  }
  CHECK(rows == 5);
  CHECK(os.str().find(",0,1,2,3,,") != std::string::npos);
  CHECK_THROWS(write_grid_csv(os, *f.mdp.grid, std::vector<double>{1.0}));
}

TEST_CASE("Welch test against reference values") {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 4, 6, 8, 11};
  auto r = welch_test(a, b);
  CHECK(r.t == doctest::Approx(-1.866277899263374).epsilon(1e-12));
  CHECK(r.p == doctest::Approx(0.11499016052991887).epsilon(1e-9));
  const std::vector<double> c{0.3, 0.1, 0.4, 0.1, 0.5, 0.9, 0.2}, d{0.6, 0.5, 0.3, 0.5, 0.8};
  auto s = welch_test(c, d);
  CHECK(s.t == doctest::Approx(-1.3644329025902238).epsilon(1e-12));
  CHECK(s.p == doctest::Approx(0.20247530346849715).epsilon(1e-9));
  CHECK(welch_test(a, a).p == doctest::Approx(1.0));
  CHECK_THROWS(welch_test(std::vector<double>{1.0}, b));
}

TEST_CASE("summary statistics") {
  const std::vector<double> x{3, 1, 2, 10};
  CHECK(mean(x) == 4.0);
  CHECK(median(x) == 2.5);
  CHECK(variance(x) == doctest::Approx(50.0 / 3.0));
}
