#include <cmath>

#include "doctest.h"
#include "frozen_values.hpp"
#include "gradients/estimators.hpp"
#include "verify/consistency.hpp"

using namespace ocpg;

namespace {

ArchitectureSpec spec(int S, int A, std::vector<int> options, Layout layout = Layout::Tabular) {
  ArchitectureSpec sp;
  sp.n_states = S;
  sp.n_actions = A;
  sp.n_levels = static_cast<int>(options.size()) + 1;
  sp.n_options = std::move(options);
  sp.layout = layout;
  sp.trunk_width = 8;
  return sp;
}

TransitionRecord two_level_record() {
  TransitionRecord r;
  r.s = 1;
  r.options = {1};
  r.a = 1;
  r.r = 0.5;
  r.s_next = 2;
  r.next_options = {0};
  r.terminated = {true};
  r.reselection = {{0}};
  r.G = 0.8;
  return r;
}

TransitionRecord three_level_record() {
  TransitionRecord r;
  r.s = 1;
  r.options = {1, 0};
  r.a = 1;
  r.r = 0.5;
  r.s_next = 2;
  r.next_options = {1, 1};
  r.terminated = {false, true};
  r.reselection = {{0}, {1, 1}};
  r.G = 0.8;
  return r;
}

UpdateConfig config() {
  UpdateConfig c;
  c.gamma = 0.9;
  c.eta = 0.01;
  c.alpha_v = 0.5;
  return c;
}

double slice_abs(const OptionArchitecture& arch, const GradientVector& g, const std::string& name) {
  const auto& sl = arch.store().slice(name);
  double total = 0.0;
  for (std::size_t i = sl.offset; i < sl.offset + sl.size; ++i) total += std::abs(g[i]);
  return total;
}

void fill(OptionArchitecture& arch, const std::string& name, double v) {
  const auto& sl = arch.store().slice(name);
  for (std::size_t i = sl.offset; i < sl.offset + sl.size; ++i) arch.store()[i] = v;
}

void check_sparse(const GradientVector& g, const std::vector<std::pair<std::size_t, double>>& frozen) {
  std::size_t nonzero = 0;
  for (std::size_t i = 0; i < g.size(); ++i) nonzero += g[i] != 0.0;
  CHECK(nonzero == frozen.size());
  for (auto [i, v] : frozen) CHECK(g[i] == doctest::Approx(v).epsilon(1e-12));
}

}  // namespace

TEST_CASE("n-step returns") {
  auto g = n_step_returns(std::vector<double>{1, 1, 1}, 0.0, 0.5);
  CHECK(g == std::vector<double>{1.75, 1.5, 1.0});
  auto z = n_step_returns(std::vector<double>{0, 0, 0}, 2.0, 0.9);
  CHECK(z[2] == doctest::Approx(0.9 * 2.0));
  CHECK(z[1] == doctest::Approx(0.81 * 2.0));
  CHECK(z[0] == doctest::Approx(0.729 * 2.0));
  CHECK(n_step_returns(std::vector<double>{2.0}, 3.0, 0.9)[0] == doctest::Approx(4.7));
  CHECK_THROWS(n_step_returns(std::vector<double>{}, 0.0, 0.9));
}

TEST_CASE("zero termination closes the option-policy gate") {
  OptionArchitecture arch(spec(4, 2, {2}));
  arch.randomize(1, 1.0);
  fill(arch, "beta1", -800.0);
  auto g = ocpg_step_gradient(arch, two_level_record(), config());
  CHECK(slice_abs(arch, g, "pi1") == 0.0);
  CHECK(slice_abs(arch, g, "pi2") > 0.0);
}

TEST_CASE("matching targets give a zero gradient") {
  OptionArchitecture arch(spec(4, 2, {2}));
  arch.randomize(2, 1.0);
  fill(arch, "q1", 0.8);
  auto cfg = config();
  cfg.eta = 0.0;
  auto g = ocpg_step_gradient(arch, two_level_record(), cfg);
  CHECK(g.norm_inf() == 0.0);
}

TEST_CASE("two-level reduction of the hierarchical estimator") {
  for (Layout layout : {Layout::Tabular, Layout::SharedTrunk}) {
    OptionArchitecture arch(spec(4, 2, {2}, layout), 3);
    arch.randomize(3, 1.0);
    auto rec = two_level_record();
    for (bool done : {false, true}) {
      rec.done = done;
      CHECK((hocpg_step_gradient(arch, rec, config()) - ocpg_step_gradient(arch, rec, config())).norm_inf() <= 1e-12);
    }
  }
}

TEST_CASE("closed gates leave action, termination and critic terms") {
  OptionArchitecture arch(spec(4, 2, {2, 2}));
  arch.randomize(4, 1.0);
  fill(arch, "beta1", -800.0);
  fill(arch, "beta2", -800.0);
  auto g = hocpg_step_gradient(arch, three_level_record(), config());
  CHECK(slice_abs(arch, g, "pi1") == 0.0);
  CHECK(slice_abs(arch, g, "pi2") == 0.0);
  CHECK(slice_abs(arch, g, "pi3") > 0.0);
  CHECK(slice_abs(arch, g, "q1") > 0.0);
  CHECK(slice_abs(arch, g, "q2") > 0.0);
}

TEST_CASE("termination gradient survives at the lowest level") {
  auto checks_beta = [](double logit) {
    OptionArchitecture arch(spec(4, 2, {2, 2}));
    arch.randomize(4, 1.0);
    fill(arch, "beta1", logit);
    fill(arch, "beta2", logit);
    return hocpg_step_gradient(arch, three_level_record(), config());
  };
  OptionArchitecture ref(spec(4, 2, {2, 2}));
  auto g = checks_beta(0.0);
  CHECK(slice_abs(ref, g, "beta2") > 0.0);
  CHECK(slice_abs(ref, g, "beta1") > 0.0);
}

TEST_CASE("frozen hierarchical step gradient on the seed-7 fixture") {
  OptionArchitecture arch(spec(4, 2, {2, 2}));
  arch.randomize(7, 1.0);
  check_sparse(hocpg_step_gradient(arch, three_level_record(), config()), frozen::kSeed7HocpgStep);
}

TEST_CASE("frozen baseline step gradient on the seed-7 fixture") {
  OptionArchitecture arch(spec(4, 2, {2}));
  arch.randomize(7, 1.0);
  const auto& q = arch.store().slice("q1");
  for (std::size_t i = 0; i < q.size; ++i) arch.store()[q.offset + i] = 0.1 * static_cast<double>(i) - 0.2;
  check_sparse(oc_baseline_step_gradient(arch, two_level_record(), config()), frozen::kSeed7OcBaselineStep);
}

TEST_CASE("baseline differs from the unified step only in the policy over options") {
  OptionArchitecture arch(spec(4, 2, {2}));
  arch.randomize(5, 1.0);
  fill(arch, "beta1", 40.0);
  auto rec = two_level_record();
  auto diff = oc_baseline_step_gradient(arch, rec, config()) - ocpg_step_gradient(arch, rec, config());
  const auto& pi1 = arch.store().slice("pi1");
  for (std::size_t i = 0; i < diff.size(); ++i) {
    if (i < pi1.offset || i >= pi1.offset + pi1.size) CHECK(diff[i] == 0.0);
  }
  CHECK(slice_abs(arch, diff, "pi1") > 0.0);
  // Baseline: current state s; unified: next state s'.
  auto base = oc_baseline_step_gradient(arch, rec, config());
  auto unified = ocpg_step_gradient(arch, rec, config());
  for (int j = 0; j < 2; ++j) {
    CHECK(base[arch.tabular_policy_index(1, rec.s, {}, j)] != 0.0);
    CHECK(base[arch.tabular_policy_index(1, rec.s_next, {}, j)] == 0.0);
    CHECK(unified[arch.tabular_policy_index(1, rec.s_next, {}, j)] != 0.0);
    CHECK(unified[arch.tabular_policy_index(1, rec.s, {}, j)] == 0.0);
  }
}

TEST_CASE("baseline option-policy term ignores terminations") {
  OptionArchitecture arch(spec(4, 2, {2}));
  arch.randomize(6, 1.0);
  auto rec = two_level_record();
  auto a = oc_baseline_step_gradient(arch, rec, config());
  fill(arch, "beta1", 3.0);
  auto b = oc_baseline_step_gradient(arch, rec, config());
  const auto& pi1 = arch.store().slice("pi1");
  for (std::size_t i = pi1.offset; i < pi1.offset + pi1.size; ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("option-policy slice scales with the termination gate") {
  OptionArchitecture arch(spec(4, 2, {2}));
  arch.randomize(8, 1.0);
  auto rec = two_level_record();
  const std::vector<int> o{1};
  const std::size_t bi = arch.tabular_termination_index(1, rec.s_next, o);
  arch.store()[bi] = 0.3;
  const double b1 = arch.termination_prob(1, rec.s_next, o);
  auto g1 = ocpg_step_gradient(arch, rec, config());
  arch.store()[bi] = -1.1;
  const double b2 = arch.termination_prob(1, rec.s_next, o);
  auto g2 = ocpg_step_gradient(arch, rec, config());
  const auto& pi1 = arch.store().slice("pi1");
  for (std::size_t i = pi1.offset; i < pi1.offset + pi1.size; ++i) {
    CHECK(g2[i] == doctest::Approx(g1[i] * b2 / b1).epsilon(1e-12));
  }
}

TEST_CASE("termination slice is affine in eta") {
  OptionArchitecture arch(spec(4, 2, {2}));
  arch.randomize(9, 1.0);
  auto rec = two_level_record();
  auto cfg = config();
  cfg.eta = 0.0;
  auto g0 = ocpg_step_gradient(arch, rec, cfg);
  cfg.eta = 1.0;
  auto g1 = ocpg_step_gradient(arch, rec, cfg);
  cfg.eta = 2.5;
  auto g25 = ocpg_step_gradient(arch, rec, cfg);
  const std::vector<int> o{1};
  const std::size_t bi = arch.tabular_termination_index(1, rec.s_next, o);
  const double b = arch.termination_prob(1, rec.s_next, o);
  CHECK(g1[bi] - g0[bi] == doctest::Approx(-cfg.gamma * b * (1 - b)).epsilon(1e-12));
  CHECK(g25[bi] - g0[bi] == doctest::Approx(2.5 * (g1[bi] - g0[bi])).epsilon(1e-12));
}

TEST_CASE("terminal successor drops the next-state terms") {
  OptionArchitecture arch(spec(4, 2, {2}));
  arch.randomize(10, 1.0);
  auto rec = two_level_record();
  rec.done = true;
  rec.reselection.clear();
  auto g = ocpg_step_gradient(arch, rec, config());
  CHECK(slice_abs(arch, g, "pi1") == 0.0);
  CHECK(slice_abs(arch, g, "beta1") == 0.0);
  CHECK(slice_abs(arch, g, "pi2") > 0.0);
}

TEST_CASE("critic term descends the squared error") {
  OptionArchitecture arch(spec(4, 2, {2}));
  auto rec = two_level_record();
  auto g = ocpg_step_gradient(arch, rec, config());
  const std::size_t qi = arch.tabular_critic_index(1, rec.s, rec.options);
  CHECK(g[qi] == doctest::Approx(2.0 * 0.5 * rec.G));
}

TEST_CASE("record validation") {
  OptionArchitecture arch(spec(4, 2, {2, 2}));
  auto rec = three_level_record();
  CHECK_THROWS_AS(ocpg_step_gradient(arch, rec, config()), std::invalid_argument);
  rec.G = std::nan("");
  CHECK_THROWS_AS(hocpg_step_gradient(arch, rec, config()), std::invalid_argument);
}

TEST_CASE("exact-critic estimator is consistent with the theorem") {
  auto m = random_mdp(7, 4, 2);
  OptionArchitecture two(spec(4, 2, {2}));
  two.randomize(3, 1.0);
  auto r2 = estimator_consistency(two, m, Estimator::OCPG, 100000, 1);
  CHECK(r2.pass);
  CHECK(r2.worst_z < 3.0);
  OptionArchitecture three(spec(4, 2, {2, 2}));
  three.randomize(3, 1.0);
  auto r3 = estimator_consistency(three, m, Estimator::HOCPG, 100000, 1);
  CHECK(r3.pass);
}
