#include <cmath>

#include "autodiff/finite_diff.hpp"
#include "doctest.h"
#include "oracle/oracle.hpp"

using namespace ocpg;

namespace {

ArchitectureSpec spec(int S, int A, std::vector<int> options, Layout layout = Layout::Tabular, int width = 8) {
  ArchitectureSpec sp;
  sp.n_states = S;
  sp.n_actions = A;
  sp.n_levels = static_cast<int>(options.size()) + 1;
  sp.n_options = std::move(options);
  sp.layout = layout;
  sp.trunk_width = width;
  return sp;
}

GradientVector fd_return(const OptionArchitecture& arch, const TabularMDP& mdp, const AugmentedState& start) {
  OptionArchitecture probe = arch;
  auto fn = [&](const ParameterStore& st) {
    std::copy(st.theta().begin(), st.theta().end(), probe.store().theta().begin());
    return exact_return(probe, mdp, start);
  };
  return finite_diff_relative(fn, arch.store(), 1e-5);
}

TabularMDP with_terminal(TabularMDP m, int s) {
  for (int a = 0; a < m.n_actions; ++a) {
    for (int t = 0; t < m.n_states; ++t) m.P[(static_cast<std::size_t>(s) * m.n_actions + a) * m.n_states + t] = t == s;
    m.r[static_cast<std::size_t>(s) * m.n_actions + a] = 0.0;
  }
  m.terminal[static_cast<std::size_t>(s)] = true;
  return m;
}

void set_all(OptionArchitecture& arch, const std::string& slice, double v) {
  const auto& sl = arch.store().slice(slice);
  for (std::size_t i = 0; i < sl.size; ++i) arch.store()[sl.offset + i] = v;
}

}  // namespace

TEST_CASE("single-state MDP has the geometric-series value") {
  TabularMDP m;
  m.n_states = 1;
  m.n_actions = 2;
  m.P = {1.0, 1.0};
  m.r = {1.0, 1.0};
  m.gamma = 0.9;
  m.terminal = {false};
  OptionArchitecture arch(spec(1, 2, {3}));
  arch.randomize(1, 1.0);
  auto sol = solve_bellman(arch, m);
  for (double q : sol.Q.back()) CHECK(q == doctest::Approx(10.0).epsilon(1e-13));
  auto mu = occupancy(arch, m, default_start(arch, m));
  double total = 0.0;
  for (double v : mu) total += v;
  CHECK(total == doctest::Approx(10.0).epsilon(1e-13));
}

TEST_CASE("single augmented state self-loop occupancy") {
  TabularMDP m;
  m.n_states = 1;
  m.n_actions = 1;
  m.P = {1.0};
  m.r = {0.0};
  m.gamma = 0.75;
  m.terminal = {false};
  OptionArchitecture arch(spec(1, 1, {1}));
  auto mu = occupancy(arch, m, default_start(arch, m));
  CHECK(mu.size() == 1);
  CHECK(mu[0] == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("Bellman residuals and kernel mass") {
  for (int seed = 0; seed < 10; ++seed) {
    auto m = random_mdp(static_cast<std::uint64_t>(seed), 4, 3);
    if (seed % 2) m = with_terminal(m, 3);
    for (auto opts : {std::vector<int>{3}, std::vector<int>{2, 2}, std::vector<int>{2, 3, 2}}) {
      OptionArchitecture arch(spec(4, 3, opts, seed % 3 == 0 ? Layout::SharedTrunk : Layout::Tabular), 4);
      arch.randomize(static_cast<std::uint64_t>(seed) + 50, 2.0);
      auto sol = solve_bellman(arch, m);
      CHECK(bellman_residuals(arch, m, sol).max() < 1e-10);
      auto k = kernel_checks(arch, m, default_start(arch, m));
      CHECK(k.row_mass < 1e-12);
      CHECK(k.reselection < 1e-12);
      CHECK(k.occupancy < 1e-10);
    }
  }
}

TEST_CASE("kernel collapses for saturated terminations") {
  auto m = random_mdp(2, 3, 2);
  OptionArchitecture arch(spec(3, 2, {2}));
  arch.randomize(5, 1.0);
  auto tables = tabulate(arch);
  auto succ = option_successor(arch, tables, m);
  for (double logit : {40.0, -40.0}) {
    set_all(arch, "beta1", logit);
    tables = tabulate(arch);
    auto P1 = one_step_kernel(arch, tables, m);
    for (int s = 0; s < 3; ++s) {
      for (int o = 0; o < 2; ++o) {
        for (int t = 0; t < 3; ++t) {
          for (int o2 = 0; o2 < 2; ++o2) {
            const double p = succ[(static_cast<std::size_t>(s) * 2 + o) * 3 + t];
            const double expect = logit > 0 ? m.gamma * p * tables.pi[0][static_cast<std::size_t>(t) * 2 + o2]
                                            : m.gamma * p * (o == o2 ? 1.0 : 0.0);
            CHECK(P1(s * 2 + o, t * 2 + o2) == doctest::Approx(expect).epsilon(1e-12));
          }
        }
      }
    }
  }
}

TEST_CASE("occupancy matches the truncated power series") {
  auto m = random_mdp(9, 3, 2);
  OptionArchitecture arch(spec(3, 2, {2, 2}));
  arch.randomize(3, 1.0);
  auto P1 = one_step_kernel(arch, m);
  const auto start = default_start(arch, m);
  auto mu = occupancy(arch, m, start);
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(P1.rows());
  row[0] = 1.0;
  Eigen::RowVectorXd total = row;
  for (int t = 1; t <= 200; ++t) {
    row = row * P1;
    total += row;
  }
  for (Eigen::Index i = 0; i < P1.rows(); ++i) CHECK(std::abs(total[i] - mu[static_cast<std::size_t>(i)]) < 1e-8);
}

TEST_CASE("always-terminating options match the flat mixture policy") {
  auto m = with_terminal(random_mdp(4, 5, 2), 4);
  OptionArchitecture arch(spec(5, 2, {3}));
  arch.randomize(6, 1.5);
  set_all(arch, "beta1", 40.0);
  auto sol = solve_bellman(arch, m);
  auto tables = tabulate(arch);
  // Flat policy Σ_o π_Ω(o|s) π(a|s,o), evaluated by iteration.
  std::vector<double> v(5, 0.0);
  for (int it = 0; it < 3000; ++it) {
    std::vector<double> nv(5, 0.0);
    for (int s = 0; s < 5; ++s) {
      if (m.is_terminal(s)) continue;
      for (int o = 0; o < 3; ++o) {
        for (int a = 0; a < 2; ++a) {
          double q = m.reward(s, a);
          for (int t = 0; t < 5; ++t) q += m.gamma * m.p(s, a, t) * v[t];
          nv[s] += tables.pi[0][s * 3 + o] * tables.pi[1][(s * 3 + o) * 2 + a] * q;
        }
      }
    }
    v = nv;
  }
  for (int s = 0; s < 5; ++s) {
    if (m.is_terminal(s)) continue;
    for (int o = 0; o < 3; ++o) {
      double q = 0.0;
      for (int a = 0; a < 2; ++a) {
        double qa = m.reward(s, a);
        for (int t = 0; t < 5; ++t) qa += m.gamma * m.p(s, a, t) * v[t];
        q += tables.pi[1][(s * 3 + o) * 2 + a] * qa;
      }
      CHECK(std::abs(sol.q_omega(static_cast<std::size_t>(s) * 3 + o) - q) < 1e-10);
    }
  }
}

TEST_CASE("exact gradients match finite differences") {
  for (int seed = 0; seed < 12; ++seed) {
    auto m = random_mdp(static_cast<std::uint64_t>(seed) + 100, 4, 2);
    if (seed % 3 == 1) m = with_terminal(m, 2);
    const Layout layout = seed % 2 ? Layout::SharedTrunk : Layout::Tabular;
    OptionArchitecture two(spec(4, 2, {3}, layout), 7);
    two.randomize(static_cast<std::uint64_t>(seed), 1.5);
    const auto start = default_start(two, m);
    auto fd = fd_return(two, m, start);
    auto g = exact_ocpg_gradient(two, m, start);
    CHECK(relative_error_inf(g, fd) < 1e-5);
    CHECK((exact_hocpg_gradient(two, m, start) - g).norm_inf() < 1e-10);

    OptionArchitecture three(spec(4, 2, {2, 2}, layout), 8);
    three.randomize(static_cast<std::uint64_t>(seed) + 7, 1.5);
    const auto start3 = default_start(three, m);
    CHECK(relative_error_inf(exact_hocpg_gradient(three, m, start3), fd_return(three, m, start3)) < 1e-5);
  }
}

TEST_CASE("four-level hierarchy matches finite differences") {
  auto m = with_terminal(random_mdp(31, 3, 2), 2);
  OptionArchitecture arch(spec(3, 2, {2, 2, 2}));
  arch.randomize(2, 1.5);
  const AugmentedState start{0, {1, 0, 1}};
  CHECK(relative_error_inf(exact_hocpg_gradient(arch, m, start), fd_return(arch, m, start)) < 1e-5);
}

TEST_CASE("manual tabular derivative agrees with the surrogate") {
  for (int seed = 0; seed < 5; ++seed) {
    auto m = with_terminal(random_mdp(static_cast<std::uint64_t>(seed), 5, 3), 4);
    OptionArchitecture arch(spec(5, 3, {3}));
    arch.randomize(static_cast<std::uint64_t>(seed) + 9, 1.0);
    const AugmentedState start{1, {2}};
    CHECK((exact_ocpg_gradient_manual(arch, m, start) - exact_ocpg_gradient(arch, m, start)).norm_inf() < 1e-12);
  }
}

TEST_CASE("ocpg rejects deeper hierarchies") {
  auto m = random_mdp(1, 3, 2);
  OptionArchitecture arch(spec(3, 2, {2, 2}));
  CHECK_THROWS_WITH_AS(exact_ocpg_gradient(arch, m, default_start(arch, m)), doctest::Contains("hierarchical"),
                       std::invalid_argument);
}

TEST_CASE("termination gates the option-policy terms") {
  auto m = random_mdp(3, 4, 2);
  OptionArchitecture arch(spec(4, 2, {2, 2}));
  arch.randomize(4, 1.0);
  set_all(arch, "beta1", -800.0);
  set_all(arch, "beta2", -800.0);
  auto g = exact_hocpg_gradient(arch, m, default_start(arch, m));
  for (const char* name : {"pi1", "pi2"}) {
    const auto& sl = arch.store().slice(name);
    for (std::size_t i = 0; i < sl.size; ++i) CHECK(g[sl.offset + i] == 0.0);
  }
  double other = 0.0;
  for (const char* name : {"pi3", "beta1", "beta2"}) {
    const auto& sl = arch.store().slice(name);
    for (std::size_t i = 0; i < sl.size; ++i) other += std::abs(g[sl.offset + i]);
  }
  CHECK(other > 0.0);
}

TEST_CASE("saturated action policies give vanishing action gradients") {
  auto m = random_mdp(5, 3, 2);
  OptionArchitecture arch(spec(3, 2, {2}));
  arch.randomize(1, 1.0);
  const auto& sl = arch.store().slice("pi2");
  for (std::size_t i = 0; i < sl.size; ++i) arch.store()[sl.offset + i] = i % 2 ? 20.0 : -20.0;
  auto g = exact_ocpg_gradient(arch, m, default_start(arch, m));
  for (std::size_t i = 0; i < sl.size; ++i) CHECK(std::abs(g[sl.offset + i]) < 1e-14);
}

TEST_CASE("baseline comparisons in the tabular layout") {
  for (int seed = 0; seed < 6; ++seed) {
    auto m = with_terminal(random_mdp(static_cast<std::uint64_t>(seed) + 20, 5, 2), 4);
    OptionArchitecture arch(spec(5, 2, {3}));
    arch.randomize(static_cast<std::uint64_t>(seed), 1.0);
    const auto start = default_start(arch, m);
    auto ocpg = exact_ocpg_gradient(arch, m, start);
    auto base = exact_baseline_gradients(arch, m, start);
    const auto& pi = arch.store().slice("pi2");
    const auto& beta = arch.store().slice("beta1");
    for (std::size_t i = pi.offset; i < pi.offset + pi.size; ++i) CHECK(std::abs(ocpg[i] - base.grad_pi[i]) < 1e-12);
    for (std::size_t i = beta.offset; i < beta.offset + beta.size; ++i) {
      CHECK(std::abs(ocpg[i] - m.gamma * base.grad_beta_shifted[i]) < 1e-12);
    }
  }
}

TEST_CASE("with terminations saturated the option-policy term is the next-state actor-critic update") {
  auto m = with_terminal(random_mdp(8, 4, 2), 3);
  OptionArchitecture arch(spec(4, 2, {2}));
  arch.randomize(3, 1.0);
  set_all(arch, "beta1", 40.0);
  const auto start = default_start(arch, m);
  auto ocpg = exact_ocpg_gradient(arch, m, start);
  auto tables = tabulate(arch);
  auto mu = occupancy(arch, tables, m, start);
  auto w = arrival_weights(arch, tables, m, mu);
  std::vector<double> per_state(4, 0.0);
  for (int s = 0; s < 4; ++s) {
    if (m.is_terminal(s)) continue;
    for (int o = 0; o < 2; ++o) per_state[s] += w[s * 2 + o];
  }
  auto ac = actor_critic_top_gradient(arch, solve_bellman(arch, m), per_state);
  const auto& sl = arch.store().slice("pi1");
  for (std::size_t i = sl.offset; i < sl.offset + sl.size; ++i) CHECK(std::abs(ocpg[i] - ac[i]) < 1e-12);
}

TEST_CASE("coagent decomposition") {
  for (int seed = 0; seed < 8; ++seed) {
    auto m = random_mdp(static_cast<std::uint64_t>(seed), 4, 3);
    OptionArchitecture arch(spec(4, 3, {2}, seed % 2 ? Layout::SharedTrunk : Layout::Tabular), 2);
    arch.randomize(static_cast<std::uint64_t>(seed) + 1, 1.0);
    const auto start = default_start(arch, m);
    auto c = coagent_decomposition(arch, m, start);
    CHECK((c.grad_j1 + c.grad_j2 - exact_ocpg_gradient(arch, m, start)).norm_inf() < 1e-10);
    for (int s = 0; s < 4; ++s) {
      for (int o = 0; o < 2; ++o) CHECK(c.kappa[(s * 2 + o) * 2] + c.kappa[(s * 2 + o) * 2 + 1] == doctest::Approx(1.0));
    }
  }
  auto m = random_mdp(1, 2, 2);
  OptionArchitecture arch(spec(2, 2, {2}));
  auto c = coagent_decomposition(arch, m, default_start(arch, m));
  CHECK(c.kappa[0] == doctest::Approx(0.75));
  CHECK(c.kappa[1] == doctest::Approx(0.25));
}

TEST_CASE("sign flip of the termination term is caught") {
  auto m = random_mdp(3, 4, 2);
  OptionArchitecture arch(spec(4, 2, {2}));
  arch.randomize(5, 1.0);
  const auto start = default_start(arch, m);
  ExactOptions flip;
  flip.flip_beta_term = true;
  CHECK(relative_error_inf(exact_ocpg_gradient(arch, m, start, flip), fd_return(arch, m, start)) > 1e-3);
}
