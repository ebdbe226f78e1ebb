#include "verify/suite.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <ostream>
#include <stdexcept>

#include "autodiff/finite_diff.hpp"
#include "envs/mdp.hpp"
#include "gradients/estimators.hpp"
#include "oracle/oracle.hpp"
#include "verify/consistency.hpp"

namespace ocpg {

namespace {

struct Instance {
  TabularMDP mdp;
  OptionArchitecture arch;
  AugmentedState start;
  std::string label;
};

// Last state becomes absorbing, terminal and reward-free.
void make_last_terminal(TabularMDP& m) {
  const int s = m.n_states - 1;
  for (int a = 0; a < m.n_actions; ++a) {
    for (int t = 0; t < m.n_states; ++t) {
      m.P[(static_cast<std::size_t>(s) * m.n_actions + a) * m.n_states + t] = t == s ? 1.0 : 0.0;
    }
    m.r[static_cast<std::size_t>(s) * m.n_actions + a] = 0.0;
  }
  m.terminal[static_cast<std::size_t>(s)] = true;
}

// Random instance with |S| in [2, max_states], |A| in [2, max_actions] and
// option counts drawn from [2, max_options] per level (or fixed).
Instance make_instance(std::uint64_t seed, int max_states, int max_actions, int levels, int max_options,
                       Layout layout, bool fixed_options = false) {
  Rng rng(seed * 7919 + 17);
  const int S = 2 + static_cast<int>(rng.below(static_cast<std::size_t>(max_states - 1)));
  const int A = 2 + static_cast<int>(rng.below(static_cast<std::size_t>(max_actions - 1)));
  ArchitectureSpec spec;
  spec.n_states = S;
  spec.n_actions = A;
  spec.n_levels = levels;
  for (int l = 1; l < levels; ++l) {
    spec.n_options.push_back(fixed_options ? max_options
                                           : 2 + static_cast<int>(rng.below(static_cast<std::size_t>(max_options - 1))));
  }
  spec.layout = layout;
  spec.trunk_width = 8;
  TabularMDP m = random_mdp(seed, S, A, 0.9);
  if (S >= 3 && seed % 3 == 2) make_last_terminal(m);
  OptionArchitecture arch(spec, seed + 1);
  arch.randomize(seed + 101, 1.0);
  AugmentedState start = default_start(arch, m);
  char buf[160];
  std::snprintf(buf, sizeof buf, "seed %llu (|S|=%d |A|=%d levels=%d %s)", static_cast<unsigned long long>(seed), S, A,
                levels, layout_name(layout));
  return {std::move(m), std::move(arch), std::move(start), buf};
}

GradientVector fd_return(const Instance& in) {
  OptionArchitecture probe = in.arch;
  auto fn = [&](const ParameterStore& st) {
    std::copy(st.theta().begin(), st.theta().end(), probe.store().theta().begin());
    return exact_return(probe, in.mdp, in.start);
  };
  return finite_diff_relative(fn, in.arch.store(), 1e-5);
}

void record(SuiteResult& r, double err, const std::string& label) {
  ++r.instances;
  r.worst = std::max(r.worst, err);
  if (!(err <= r.tolerance) && r.passed) {
    r.passed = false;
    char buf[64];
    std::snprintf(buf, sizeof buf, ": error %.3g", err);
    r.failure = label + buf;
  }
}

SuiteResult gradient_check(const VerifyOptions& o) {
  SuiteResult r{"gradient-check", "two-level exact gradient vs central differences (relative inf-norm)", 0, 0.0, 1e-5};
  ExactOptions eo{o.flip_beta_term};
  for (std::uint64_t k = 0; k < 50; ++k) {
    for (Layout layout : {Layout::Tabular, Layout::SharedTrunk}) {
      const Instance in = make_instance(o.seed + k, 6, 3, 2, 3, layout);
      record(r, relative_error_inf(exact_ocpg_gradient(in.arch, in.mdp, in.start, eo), fd_return(in)), in.label);
    }
  }
  return r;
}

SuiteResult hierarchical(const VerifyOptions& o) {
  SuiteResult r{"hierarchical", "three-level exact gradient vs central differences (relative inf-norm)", 0, 0.0, 1e-5};
  ExactOptions eo{o.flip_beta_term};
  for (std::uint64_t k = 0; k < 50; ++k) {
    for (Layout layout : {Layout::Tabular, Layout::SharedTrunk}) {
      const Instance in = make_instance(o.seed + 1000 + k, 5, 3, 3, 2, layout, true);
      record(r, relative_error_inf(exact_hocpg_gradient(in.arch, in.mdp, in.start, eo), fd_return(in)), in.label);
    }
  }
  return r;
}

SuiteResult reduction(const VerifyOptions& o) {
  SuiteResult r{"reduction", "hierarchical gradient at N=2 vs two-level gradient (absolute inf-norm)", 0, 0.0, 1e-10};
  ExactOptions eo{o.flip_beta_term};
  UpdateConfig cfg;
  cfg.gamma = 0.9;
  cfg.eta = 0.01;
  for (std::uint64_t k = 0; k < 100; ++k) {
    const Instance in = make_instance(o.seed + 2000 + k, 6, 3, 2, 3, k % 2 ? Layout::SharedTrunk : Layout::Tabular);
    double err = (exact_hocpg_gradient(in.arch, in.mdp, in.start, eo) -
                  exact_ocpg_gradient(in.arch, in.mdp, in.start, eo))
                     .norm_inf();
    // The sampled step estimators reduce the same way.
    Rng rng(k);
    const auto mu = occupancy(in.arch, in.mdp, in.start);
    std::vector<double> w(mu.size(), 0.0);
    double total = 0.0;
    for (std::size_t x = 0; x < mu.size(); ++x) {
      if (!in.mdp.is_terminal(static_cast<int>(x / in.arch.stack_count()))) total += (w[x] = mu[x]);
    }
    for (double& v : w) v /= total;
    TransitionRecord rec = sample_occupancy_record(in.arch, in.mdp, w, rng);
    rec.G = 0.5;
    err = std::max(err, (hocpg_step_gradient(in.arch, rec, cfg) - ocpg_step_gradient(in.arch, rec, cfg)).norm_inf());
    record(r, err, in.label);
  }
  return r;
}

SuiteResult coagent(const VerifyOptions& o) {
  SuiteResult r{"coagent", "grad J1 + grad J2 vs exact two-level gradient (absolute inf-norm)", 0, 0.0, 1e-10};
  ExactOptions eo{o.flip_beta_term};
  for (std::uint64_t k = 0; k < 50; ++k) {
    const Instance in = make_instance(o.seed + 3000 + k, 6, 3, 2, 3, k % 2 ? Layout::SharedTrunk : Layout::Tabular);
    const CoagentResult c = coagent_decomposition(in.arch, in.mdp, in.start);
    record(r, (c.grad_j1 + c.grad_j2 - exact_ocpg_gradient(in.arch, in.mdp, in.start, eo)).norm_inf(), in.label);
  }
  return r;
}

SuiteResult kernel(const VerifyOptions& o) {
  SuiteResult r{"kernel", "P1 rows sum to gamma, reselection rows to 1 (1e-12), occupancy residual (1e-10)", 0, 0.0,
                1e-12};
  for (std::uint64_t k = 0; k < 60; ++k) {
    const int levels = 2 + static_cast<int>(k % 3);
    const Instance in = make_instance(o.seed + 4000 + k, levels == 4 ? 4 : 6, 3, levels, 3,
                                      k % 2 ? Layout::SharedTrunk : Layout::Tabular);
    const KernelChecks kc = kernel_checks(in.arch, in.mdp, in.start);
    record(r, std::max(kc.row_mass, kc.reselection), in.label);
    r.occupancy_worst = std::max(r.occupancy_worst, kc.occupancy);
    if (!(kc.occupancy < 1e-10) && r.passed) {
      r.passed = false;
      r.failure = in.label + ": occupancy residual " + std::to_string(kc.occupancy);
    }
  }
  return r;
}

SuiteResult consistency(const VerifyOptions& o) {
  SuiteResult r{"consistency", "Monte-Carlo step estimator mean vs exact gradient (max z-score, 4-state MDP)", 0, 0.0,
                3.0};
  const TabularMDP m = random_mdp(7, 4, 2, 0.9);
  struct Case {
    std::vector<int> options;
    Estimator estimator;
  };
  for (const Case& c : {Case{{2}, Estimator::OCPG}, Case{{2, 2}, Estimator::HOCPG}}) {
    ArchitectureSpec spec;
    spec.n_states = 4;
    spec.n_actions = 2;
    spec.n_levels = static_cast<int>(c.options.size()) + 1;
    spec.n_options = c.options;
    OptionArchitecture arch(spec);
    arch.randomize(3, 1.0);
    const ConsistencyResult res = estimator_consistency(arch, m, c.estimator, o.consistency_samples, o.seed + 1);
    ++r.instances;
    r.worst = std::max(r.worst, res.worst_z);
    if (!res.pass && r.passed) {
      r.passed = false;
      r.failure = std::string(estimator_name(c.estimator)) + " on the seed-7 MDP: coordinate " +
                  std::to_string(res.worst_index) + " z " + std::to_string(res.worst_z);
    }
  }
  return r;
}

using SuiteFn = std::function<SuiteResult(const VerifyOptions&)>;

const std::vector<std::pair<std::string, SuiteFn>>& registry() {
  static const std::vector<std::pair<std::string, SuiteFn>> r = {
      {"gradient-check", gradient_check}, {"hierarchical", hierarchical}, {"reduction", reduction},
      {"coagent", coagent},               {"kernel", kernel},             {"consistency", consistency},
  };
  return r;
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : registry()) n.push_back(name);
    return n;
  }();
  return names;
}

std::vector<SuiteResult> run_verify(const VerifyOptions& opts) {
  for (const auto& name : opts.only) {
    if (std::find(suite_names().begin(), suite_names().end(), name) == suite_names().end()) {
      throw std::invalid_argument("unknown verify suite '" + name + "'");
    }
  }
  std::vector<SuiteResult> out;
  for (const auto& [name, fn] : registry()) {
    if (!opts.only.empty() && std::find(opts.only.begin(), opts.only.end(), name) == opts.only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    SuiteResult r = fn(opts);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

void print_verify_table(std::ostream& os, const std::vector<SuiteResult>& results) {
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %-5s %9s %11s %11s %8s\n", "suite", "", "instances", "worst", "tolerance",
                "seconds");
  os << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-16s %-5s %9d %11.3e %11.3e %8.2f\n", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                  r.instances, r.worst, r.tolerance, r.seconds);
    os << line;
    if (!r.passed) os << "  first failure: " << r.failure << '\n';
  }
}

}  // namespace ocpg
