#include <cmath>
#include <set>
#include <sstream>

#include "autodiff/tape.hpp"
#include "doctest.h"
#include "model/architecture.hpp"
#include "model/graph.hpp"

using namespace ocpg;

namespace {

ArchitectureSpec spec(int S, int A, std::vector<int> options, Layout layout = Layout::Tabular) {
  ArchitectureSpec sp;
  sp.n_states = S;
  sp.n_actions = A;
  sp.n_levels = static_cast<int>(options.size()) + 1;
  sp.n_options = std::move(options);
  sp.layout = layout;
  return sp;
}

void set_all_terminations(OptionArchitecture& arch, int level, double logit) {
  const auto& h = arch.termination_head(level);
  const std::size_t n = static_cast<std::size_t>(arch.n_states()) * arch.prefix_count(level);
  for (std::size_t i = 0; i < n; ++i) arch.store()[h.weight + i] = logit;
}

GradientVector grad_of(const OptionArchitecture& arch, auto build) {
  ad::Tape t;
  ArchGraph g(arch, t);
  ad::Var out = build(g);
  t.forward(arch.store(), out);
  return t.backward(out);
}

std::set<std::size_t> nonzero(const GradientVector& g) {
  std::set<std::size_t> s;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] != 0.0) s.insert(i);
  }
  return s;
}

}  // namespace

TEST_CASE("tabular zero init gives uniform policies and beta one half") {
  OptionArchitecture arch(spec(4, 3, {2, 3}));
  std::vector<int> o1{1};
  for (double p : arch.policy_probs(2, 0, o1)) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  std::vector<int> o12{1, 2};
  for (double p : arch.policy_probs(3, 2, o12)) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(arch.termination_prob(2, 1, o12) == 0.5);
  CHECK(arch.q_value(1, 3, o1) == 0.0);
  for (double& x : arch.store().theta()) x = 1.0;
  for (double p : arch.policy_probs(1, 0, {})) CHECK(p == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("shared trunk seed 42 regression") {
  OptionArchitecture arch(spec(5, 3, {3}, Layout::SharedTrunk), 42);
  CHECK(arch.store().size() == 552);
  std::vector<int> o{1};
  const std::vector<double> frozen = {0.33543264442781717, 0.38008233122824148, 0.28448502434394124};
  auto p = arch.policy_probs(2, 2, o);
  for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(frozen[i]).epsilon(1e-14));
  const std::vector<double> frozen_top = {0.39049845265118899, 0.27760956222939631, 0.33189198511941476};
  auto q = arch.policy_probs(1, 2, {});
  for (std::size_t i = 0; i < 3; ++i) CHECK(q[i] == doctest::Approx(frozen_top[i]).epsilon(1e-14));
}

TEST_CASE("tape and numeric evaluation agree") {
  for (Layout layout : {Layout::Tabular, Layout::SharedTrunk}) {
    OptionArchitecture arch(spec(4, 2, {2, 3}, layout), 3);
    arch.randomize(8, 1.0);
    ad::Tape t;
    ArchGraph g(arch, t);
    std::vector<int> pre{1, 2};
    auto pv = g.policy(3, 2, pre);
    auto bv = g.termination(2, 1, pre);
    auto qv = g.q_value(1, 0, std::span<const int>(pre).first(1));
    t.forward(arch.store());
    auto pn = arch.policy_probs(3, 2, pre);
    for (std::size_t i = 0; i < pn.size(); ++i) CHECK(t.value(pv)[i] == doctest::Approx(pn[i]).epsilon(1e-14));
    CHECK(t.scalar_value(bv) == doctest::Approx(arch.termination_prob(2, 1, pre)).epsilon(1e-14));
    CHECK(t.scalar_value(qv) == doctest::Approx(arch.q_value(1, 0, std::span<const int>(pre).first(1))).epsilon(1e-14));
  }
}

TEST_CASE("termination saturation") {
  OptionArchitecture arch(spec(2, 2, {2}));
  std::vector<int> o{0};
  arch.store()[arch.tabular_termination_index(1, 0, o)] = 20.0;
  const double b = arch.termination_prob(1, 0, o);
  CHECK(b < 1.0);
  CHECK(1.0 - b < 1e-8);
}

TEST_CASE("normalisation over random probes") {
  Rng rng(17);
  for (int probe = 0; probe < 1000; ++probe) {
    const Layout layout = probe % 2 ? Layout::SharedTrunk : Layout::Tabular;
    static OptionArchitecture tab(spec(5, 3, {3, 2}, Layout::Tabular));
    static OptionArchitecture sh(spec(5, 3, {3, 2}, Layout::SharedTrunk), 1);
    auto& arch = layout == Layout::Tabular ? tab : sh;
    arch.randomize(static_cast<std::uint64_t>(probe), 3.0);
    const int s = static_cast<int>(rng.below(5));
    const int level = 1 + static_cast<int>(rng.below(3));
    std::vector<int> pre;
    for (int l = 1; l < level; ++l) pre.push_back(static_cast<int>(rng.below(static_cast<std::size_t>(arch.n_options(l)))));
    auto p = arch.policy_probs(level, s, pre);
    double total = 0.0;
    for (double x : p) total += x;
    CHECK(std::abs(total - 1.0) <= 1e-12);
    if (level < 3) {
      pre.push_back(0);
      const double b = arch.termination_prob(level, s, pre);
      CHECK(b > 0.0);
      CHECK(b < 1.0);
    }
  }
}

TEST_CASE("shared layout couples every component through the trunk") {
  OptionArchitecture arch(spec(4, 3, {2}, Layout::SharedTrunk), 5);
  std::vector<int> o{1};
  auto gpi = grad_of(arch, [&](ArchGraph& g) { return g.log_policy_at(2, 1, o, 0); });
  auto gpo = grad_of(arch, [&](ArchGraph& g) { return g.log_policy_at(1, 1, {}, 1); });
  auto gb = grad_of(arch, [&](ArchGraph& g) { return g.termination(1, 1, o); });
  const auto& trunk = arch.store().slice("trunk.w");
  auto touches_trunk = [&](const GradientVector& g) {
    for (std::size_t i = trunk.offset; i < trunk.offset + trunk.size; ++i) {
      if (g[i] != 0.0) return true;
    }
    return false;
  };
  CHECK(touches_trunk(gpi));
  CHECK(touches_trunk(gpo));
  CHECK(touches_trunk(gb));
  auto support = arch.store().support("beta1");
  CHECK(std::find(support.begin(), support.end(), trunk.offset) != support.end());
}

TEST_CASE("tabular components have disjoint supports") {
  OptionArchitecture arch(spec(4, 3, {2}));
  arch.randomize(2, 1.0);
  std::vector<int> o{1};
  auto gpi = nonzero(grad_of(arch, [&](ArchGraph& g) { return g.log_policy_at(2, 1, o, 0); }));
  auto gpo = nonzero(grad_of(arch, [&](ArchGraph& g) { return g.log_policy_at(1, 1, {}, 1); }));
  auto gb = nonzero(grad_of(arch, [&](ArchGraph& g) { return g.termination(1, 1, o); }));
  auto gq = nonzero(grad_of(arch, [&](ArchGraph& g) { return g.q_value(1, 1, o); }));
  CHECK(gq.size() == 1);
  CHECK(gb.size() == 1);
  for (const auto* a : {&gpi, &gpo, &gb, &gq}) {
    for (const auto* b : {&gpi, &gpo, &gb, &gq}) {
      if (a == b) continue;
      for (auto i : *a) CHECK(b->count(i) == 0);
    }
  }
  std::set<std::size_t> all;
  for (const auto& c : arch.store().components()) {
    for (auto i : arch.store().support(c)) {
      CHECK(all.count(i) == 0);
      all.insert(i);
    }
  }
  CHECK(all.size() == arch.store().size());
}

TEST_CASE("critic head fits a target table") {
  OptionArchitecture arch(spec(4, 2, {2}, Layout::SharedTrunk), 9);
  const double target[4][2] = {{0.5, -1.0}, {2.0, 0.25}, {-0.75, 1.5}, {1.0, 0.0}};
  double worst = 0.0;
  for (int it = 0; it < 6000; ++it) {
    ad::Tape t;
    ArchGraph g(arch, t);
    ad::Var loss = t.scalar(0.0);
    for (int s = 0; s < 4; ++s) {
      for (int o = 0; o < 2; ++o) {
        std::vector<int> pre{o};
        loss = loss + t.square(g.q_value(1, s, pre) - t.scalar(target[s][o]));
      }
    }
    t.forward(arch.store(), loss);
    auto grad = t.backward(loss);
    for (std::size_t i = 0; i < grad.size(); ++i) arch.store()[i] -= 0.05 * grad[i];
  }
  for (int s = 0; s < 4; ++s) {
    for (int o = 0; o < 2; ++o) {
      std::vector<int> pre{o};
      worst = std::max(worst, std::abs(arch.q_value(1, s, pre) - target[s][o]));
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("act under forced terminations") {
  OptionArchitecture arch(spec(3, 2, {3, 3}));
  arch.randomize(4, 1.0);
  Rng rng(6);

  set_all_terminations(arch, 1, 40.0);
  set_all_terminations(arch, 2, 40.0);
  for (int k = 0; k < 50; ++k) {
    auto r = act(arch, {1, {2, 1}}, rng);
    CHECK(r.termination.terminated == std::vector<bool>{true, true});
    CHECK(r.action >= 0);
    CHECK(r.action < 2);
  }

  set_all_terminations(arch, 1, -40.0);
  set_all_terminations(arch, 2, -40.0);
  for (int k = 0; k < 50; ++k) {
    auto r = act(arch, {0, {2, 1}}, rng);
    CHECK(r.termination.options == std::vector<int>{2, 1});
    CHECK(r.termination.terminated == std::vector<bool>{false, false});
  }

  set_all_terminations(arch, 1, -40.0);
  set_all_terminations(arch, 2, 40.0);
  std::vector<int> counts(3, 0);
  std::vector<int> o1{2};
  const int n = 30000;
  for (int k = 0; k < n; ++k) {
    auto r = act(arch, {1, {2, 0}}, rng);
    CHECK(r.termination.options[0] == 2);
    CHECK(r.termination.terminated == std::vector<bool>{false, true});
    ++counts[static_cast<std::size_t>(r.termination.options[1])];
  }
  auto p = arch.policy_probs(2, 1, o1);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(counts[i] / double(n) - p[i]) < 4.0 * std::sqrt(p[i] * (1 - p[i]) / n));
}

TEST_CASE("reselection scenarios are distributed as if the level terminated") {
  OptionArchitecture arch(spec(2, 2, {2, 2}));
  arch.randomize(12, 1.5);
  Rng rng(21);
  const int n = 60000;
  std::vector<int> top(2, 0);
  for (int k = 0; k < n; ++k) {
    auto out = terminate_and_reselect(arch, 0, std::vector<int>{1, 0}, rng);
    REQUIRE(out.reselection.size() == 2);
    CHECK(out.reselection[1].size() == 2);
    ++top[static_cast<std::size_t>(out.reselection[0][0])];
    if (out.terminated[0]) CHECK(out.reselection[0][0] == out.options[0]);
  }
  auto p = arch.policy_probs(1, 0, {});
  for (int i = 0; i < 2; ++i) CHECK(std::abs(top[i] / double(n) - p[i]) < 4.0 * std::sqrt(p[i] * (1 - p[i]) / n));
}

TEST_CASE("checkpoint round trip") {
  OptionArchitecture arch(spec(4, 3, {2, 2}, Layout::SharedTrunk), 13);
  std::stringstream ss;
  write_checkpoint(ss, arch);
  auto back = read_checkpoint(ss);
  CHECK(back.spec().n_options == arch.spec().n_options);
  CHECK(back.layout() == Layout::SharedTrunk);
  CHECK(std::equal(back.store().theta().begin(), back.store().theta().end(), arch.store().theta().begin()));
  std::stringstream bad("layout tabular\nn_states 2\nbogus 1\n");
  CHECK_THROWS_AS(read_checkpoint(bad), std::invalid_argument);
}

TEST_CASE("prefix indexing round trip") {
  OptionArchitecture arch(spec(2, 2, {3, 2, 4}));
  CHECK(arch.stack_count() == 24);
  for (std::size_t i = 0; i < arch.stack_count(); ++i) {
    auto pre = arch.prefix_from_index(i, 3);
    CHECK(arch.prefix_index(pre) == i);
  }
  std::vector<int> bad{3};
  CHECK_THROWS_AS(arch.prefix_index(bad), std::out_of_range);
}
