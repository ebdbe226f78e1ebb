#include <stdexcept>

#include "autodiff/tape.hpp"
#include "model/graph.hpp"
#include "oracle/oracle.hpp"

namespace ocpg {

namespace {

struct Context {
  OptionTables tables;
  ExactSolution sol;
  std::vector<double> mu;
  std::vector<double> w;  // arrival weights, γ included
};

Context prepare(const OptionArchitecture& arch, const TabularMDP& mdp, const AugmentedState& start) {
  Context c;
  c.tables = tabulate(arch);
  c.sol = solve_bellman(arch, mdp);
  c.mu = occupancy(arch, c.tables, mdp, start);
  c.w = arrival_weights(arch, c.tables, mdp, c.mu);
  return c;
}

GradientVector differentiate(ad::Tape& t, std::vector<ad::Var>& terms, const ParameterStore& store,
                             std::string label) {
  if (terms.empty()) return GradientVector(store.size(), std::move(label));
  ad::Var total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = total + terms[i];
  t.forward(store, total);
  GradientVector g = t.backward(total);
  g.label = std::move(label);
  return g;
}

// Σ_x mu(x) Σ_a π^N(a|x) Q_U(x,a) with only π^N live.
void add_action_terms(ArchGraph& g, const TabularMDP& mdp, const Context& c, std::vector<ad::Var>& terms) {
  const auto& arch = g.arch();
  const std::size_t M = arch.stack_count();
  const int A = arch.n_actions();
  for (std::size_t x = 0; x < c.mu.size(); ++x) {
    const int s = static_cast<int>(x / M);
    if (c.mu[x] == 0.0 || mdp.is_terminal(s)) continue;
    std::vector<double> coef(static_cast<std::size_t>(A));
    for (int a = 0; a < A; ++a) coef[static_cast<std::size_t>(a)] = c.mu[x] * c.sol.q_u(x, a);
    const auto stack = arch.prefix_from_index(x % M, arch.n_levels() - 1);
    terms.push_back(g.tape().dot(g.policy(arch.n_levels(), s, stack), g.tape().constant(coef)));
  }
}

std::vector<double> top_q_row(const ExactSolution& sol, int s, int K) {
  std::vector<double> q(static_cast<std::size_t>(K));
  for (int j = 0; j < K; ++j) q[static_cast<std::size_t>(j)] = sol.q(1, s, static_cast<std::size_t>(j));
  return q;
}

void require_two_levels(const OptionArchitecture& arch, const char* what) {
  if (arch.n_levels() != 2) {
    throw std::invalid_argument(std::string(what) + " needs a two-level architecture; use the hierarchical gradient for N > 2");
  }
}

// Σ_{s,o^{1:N-1}} weight(s,o) Σ_ℓ β^ℓ(s,o^{1:ℓ}) A(s,o^{1:ℓ}) ∏_{k>ℓ} β̄^k, collected per (ℓ, s, o^{1:ℓ}).
std::vector<std::vector<double>> termination_coefficients(const OptionArchitecture& arch, const Context& c,
                                                          std::span<const double> weight) {
  const int N = arch.n_levels();
  const std::size_t M = arch.stack_count();
  std::vector<std::vector<double>> coef(static_cast<std::size_t>(N - 1));
  for (int l = 1; l < N; ++l) coef[static_cast<std::size_t>(l - 1)].assign(static_cast<std::size_t>(arch.n_states()) * arch.prefix_count(l), 0.0);
  for (std::size_t x = 0; x < weight.size(); ++x) {
    if (weight[x] == 0.0) continue;
    const int s = static_cast<int>(x / M);
    const auto stack = arch.prefix_from_index(x % M, N - 1);
    double above = 1.0;
    for (int l = N - 1; l >= 1; --l) {
      const std::size_t p = arch.prefix_index(std::span<const int>(stack).first(static_cast<std::size_t>(l)));
      const std::size_t row = static_cast<std::size_t>(s) * arch.prefix_count(l) + p;
      coef[static_cast<std::size_t>(l - 1)][row] += weight[x] * c.sol.advantage(l, s, p) * above;
      above *= c.tables.beta[static_cast<std::size_t>(l - 1)][row];
    }
  }
  return coef;
}

void add_termination_terms(ArchGraph& g, const std::vector<std::vector<double>>& coef, double sign,
                           std::vector<ad::Var>& terms) {
  const auto& arch = g.arch();
  for (int l = 1; l < arch.n_levels(); ++l) {
    const std::size_t P = arch.prefix_count(l);
    const auto& row = coef[static_cast<std::size_t>(l - 1)];
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row[i] == 0.0) continue;
      const int s = static_cast<int>(i / P);
      terms.push_back((sign * row[i]) * g.termination(l, s, arch.prefix_from_index(i % P, l)));
    }
  }
}

}  // namespace

GradientVector exact_ocpg_gradient(const OptionArchitecture& arch, const TabularMDP& mdp, const AugmentedState& start,
                                   const ExactOptions& opts) {
  require_two_levels(arch, "exact_ocpg_gradient");
  const Context c = prepare(arch, mdp, start);
  const int K = arch.n_options(1);
  ad::Tape t;
  ArchGraph g(arch, t);
  std::vector<ad::Var> terms;
  add_action_terms(g, mdp, c, terms);
  const double beta_sign = opts.flip_beta_term ? 1.0 : -1.0;
  for (int sp = 0; sp < arch.n_states(); ++sp) {
    if (mdp.is_terminal(sp)) continue;
    const auto q = top_q_row(c.sol, sp, K);
    std::vector<double> coef(static_cast<std::size_t>(K), 0.0);
    bool any = false;
    for (int o = 0; o < K; ++o) {
      const std::size_t x = static_cast<std::size_t>(sp) * K + o;
      const double w = c.w[x];
      if (w == 0.0) continue;
      any = true;
      // γ β̄(s',o) Σ_o' π_Ω(o'|s') Q̄(s',o')
      const double beta_bar = c.tables.beta[0][x];
      for (int j = 0; j < K; ++j) coef[static_cast<std::size_t>(j)] += w * beta_bar * q[static_cast<std::size_t>(j)];
      // −γ β(s',o) Ā(s',o)
      const std::vector<int> o_stack{o};
      terms.push_back((beta_sign * w * c.sol.advantage(1, sp, static_cast<std::size_t>(o))) * g.termination(1, sp, o_stack));
    }
    if (any) terms.push_back(t.dot(g.policy(1, sp, {}), t.constant(coef)));
  }
  return differentiate(t, terms, arch.store(), "ocpg");
}

GradientVector exact_hocpg_gradient(const OptionArchitecture& arch, const TabularMDP& mdp,
                                    const AugmentedState& start, const ExactOptions& opts) {
  const Context c = prepare(arch, mdp, start);
  const int N = arch.n_levels();
  const int S = arch.n_states();
  const std::size_t M = arch.stack_count();
  ad::Tape t;
  ArchGraph g(arch, t);
  std::vector<ad::Var> terms;
  add_action_terms(g, mdp, c, terms);

  // coef[ℓ-1][(s' * prefix_count(ℓ-1) + ctx) * K_ℓ + j] multiplies π^ℓ(j | s', ctx).
  std::vector<std::vector<double>> coef(static_cast<std::size_t>(N - 1));
  for (int l = 1; l < N; ++l) {
    coef[static_cast<std::size_t>(l - 1)].assign(static_cast<std::size_t>(S) * arch.prefix_count(l - 1) * arch.n_options(l), 0.0);
  }
  std::vector<double> weight(c.w);
  for (int sp = 0; sp < S; ++sp) {
    if (mdp.is_terminal(sp)) {
      for (std::size_t m = 0; m < M; ++m) weight[static_cast<std::size_t>(sp) * M + m] = 0.0;
      continue;
    }
    for (std::size_t m = 0; m < M; ++m) {
      const double w = weight[static_cast<std::size_t>(sp) * M + m];
      if (w == 0.0) continue;
      const auto stack = arch.prefix_from_index(m, N - 1);
      double gate = 1.0;  // ∏_{k=ℓ}^{N-1} β̄^k(s', o^{1:k})
      for (int l = N - 1; l >= 1; --l) {
        const std::size_t p = arch.prefix_index(std::span<const int>(stack).first(static_cast<std::size_t>(l)));
        gate *= c.tables.beta[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(sp) * arch.prefix_count(l) + p];
        if (gate == 0.0) break;
        const auto resel = reselection_probs(arch, c.tables, sp, std::span<const int>(stack).first(static_cast<std::size_t>(l - 1)));
        const auto K = static_cast<std::size_t>(arch.n_options(l));
        const std::size_t P = arch.prefix_count(l - 1);
        auto& out = coef[static_cast<std::size_t>(l - 1)];
        for (std::size_t ctx = 0; ctx < P; ++ctx) {
          if (resel[ctx] == 0.0) continue;
          for (std::size_t j = 0; j < K; ++j) {
            out[(static_cast<std::size_t>(sp) * P + ctx) * K + j] += w * gate * resel[ctx] * c.sol.q(l, sp, ctx * K + j);
          }
        }
      }
    }
  }
  for (int l = 1; l < N; ++l) {
    const std::size_t P = arch.prefix_count(l - 1);
    const auto K = static_cast<std::size_t>(arch.n_options(l));
    const auto& row = coef[static_cast<std::size_t>(l - 1)];
    for (std::size_t i = 0; i < static_cast<std::size_t>(S) * P; ++i) {
      std::vector<double> cvec(row.begin() + static_cast<std::ptrdiff_t>(i * K), row.begin() + static_cast<std::ptrdiff_t>((i + 1) * K));
      bool any = false;
      for (double v : cvec) any = any || v != 0.0;
      if (!any) continue;
      terms.push_back(t.dot(g.policy(l, static_cast<int>(i / P), arch.prefix_from_index(i % P, l - 1)), t.constant(cvec)));
    }
  }
  add_termination_terms(g, termination_coefficients(arch, c, weight), opts.flip_beta_term ? 1.0 : -1.0, terms);
  return differentiate(t, terms, arch.store(), "hocpg");
}

GradientVector exact_ocpg_gradient_manual(const OptionArchitecture& arch, const TabularMDP& mdp,
                                          const AugmentedState& start) {
  require_two_levels(arch, "exact_ocpg_gradient_manual");
  if (arch.layout() != Layout::Tabular) throw std::invalid_argument("manual gradient needs the tabular layout");
  const Context c = prepare(arch, mdp, start);
  const int K = arch.n_options(1);
  const int A = arch.n_actions();
  GradientVector g(arch.store().size(), "ocpg_manual");
  for (int s = 0; s < arch.n_states(); ++s) {
    if (mdp.is_terminal(s)) continue;
    for (int o = 0; o < K; ++o) {
      const std::size_t x = static_cast<std::size_t>(s) * K + o;
      const std::vector<int> stack{o};
      for (int a = 0; a < A; ++a) {
        const double p = c.tables.pi[1][x * A + a];
        g[arch.tabular_policy_index(2, s, stack, a)] += c.mu[x] * p * (c.sol.q_u(x, a) - c.sol.q_omega(x));
      }
      const double w = c.w[x];
      const double b = c.tables.beta[0][x];
      g[arch.tabular_termination_index(1, s, stack)] -= w * b * (1.0 - b) * c.sol.advantage(1, s, static_cast<std::size_t>(o));
      for (int j = 0; j < K; ++j) {
        const double p = c.tables.pi[0][static_cast<std::size_t>(s) * K + j];
        g[arch.tabular_policy_index(1, s, {}, j)] += w * b * p * (c.sol.q(1, s, static_cast<std::size_t>(j)) - c.sol.V[static_cast<std::size_t>(s)]);
      }
    }
  }
  return g;
}

GradientVector actor_critic_top_gradient(const OptionArchitecture& arch, const ExactSolution& sol,
                                         std::span<const double> state_weight) {
  const int K = arch.n_options(1);
  ad::Tape t;
  ArchGraph g(arch, t);
  std::vector<ad::Var> terms;
  for (int s = 0; s < arch.n_states(); ++s) {
    const double w = state_weight[static_cast<std::size_t>(s)];
    if (w == 0.0) continue;
    auto q = top_q_row(sol, s, K);
    for (double& v : q) v *= w;
    terms.push_back(t.dot(g.policy(1, s, {}), t.constant(q)));
  }
  return differentiate(t, terms, arch.store(), "actor_critic_top");
}

BaselineGradients exact_baseline_gradients(const OptionArchitecture& arch, const TabularMDP& mdp,
                                           const AugmentedState& start) {
  const Context c = prepare(arch, mdp, start);
  const int N = arch.n_levels();
  const int S = arch.n_states();
  const std::size_t M = arch.stack_count();
  BaselineGradients out;
  {
    ad::Tape t;
    ArchGraph g(arch, t);
    std::vector<ad::Var> terms;
    add_action_terms(g, mdp, c, terms);
    out.grad_pi = differentiate(t, terms, arch.store(), "baseline_pi");
  }
  {
    ad::Tape t;
    ArchGraph g(arch, t);
    std::vector<ad::Var> terms;
    for (int l = 1; l < N; ++l) {
      const std::size_t P = arch.prefix_count(l - 1);
      const auto K = static_cast<std::size_t>(arch.n_options(l));
      // Occupancy marginalised onto (s, o^{1:ℓ-1}).
      const std::size_t below = M / P;
      for (int s = 0; s < S; ++s) {
        if (mdp.is_terminal(s)) continue;
        for (std::size_t p = 0; p < P; ++p) {
          double m = 0.0;
          for (std::size_t r = 0; r < below; ++r) m += c.mu[static_cast<std::size_t>(s) * M + p * below + r];
          if (m == 0.0) continue;
          std::vector<double> q(K);
          for (std::size_t j = 0; j < K; ++j) q[j] = m * c.sol.q(l, s, p * K + j);
          terms.push_back(t.dot(g.policy(l, s, arch.prefix_from_index(p, l - 1)), t.constant(q)));
        }
      }
    }
    out.grad_pi_options = differentiate(t, terms, arch.store(), "baseline_pi_options");
  }
  auto beta_grad = [&](std::vector<double> weight, const char* label) {
    for (int s = 0; s < S; ++s) {
      if (!mdp.is_terminal(s)) continue;
      for (std::size_t m = 0; m < M; ++m) weight[static_cast<std::size_t>(s) * M + m] = 0.0;
    }
    ad::Tape t;
    ArchGraph g(arch, t);
    std::vector<ad::Var> terms;
    add_termination_terms(g, termination_coefficients(arch, c, weight), -1.0, terms);
    return differentiate(t, terms, arch.store(), label);
  };
  {
    const auto succ = option_successor(arch, c.tables, mdp);
    std::vector<double> shifted(static_cast<std::size_t>(S) * M, 0.0);
    for (std::size_t x = 0; x < shifted.size(); ++x) {
      const std::size_t m = x % M;
      for (int t = 0; t < S; ++t) shifted[static_cast<std::size_t>(t) * M + m] += c.mu[x] * succ[x * S + t];
    }
    out.grad_beta_shifted = beta_grad(std::move(shifted), "baseline_beta_shifted");
  }
  out.grad_beta_same = beta_grad(c.mu, "baseline_beta_same_start");
  return out;
}

CoagentResult coagent_decomposition(const OptionArchitecture& arch, const TabularMDP& mdp,
                                    const AugmentedState& start) {
  require_two_levels(arch, "coagent_decomposition");
  const Context c = prepare(arch, mdp, start);
  const int K = arch.n_options(1);
  const int S = arch.n_states();
  CoagentResult out;
  {
    ad::Tape t;
    ArchGraph g(arch, t);
    std::vector<ad::Var> terms;
    add_action_terms(g, mdp, c, terms);
    out.grad_j1 = differentiate(t, terms, arch.store(), "coagent_j1");
  }
  {
    ad::Tape t;
    ArchGraph g(arch, t);
    std::vector<ad::Var> terms;
    for (int sp = 0; sp < S; ++sp) {
      if (mdp.is_terminal(sp)) continue;
      const auto q = top_q_row(c.sol, sp, K);
      ad::Var pi_omega = g.policy(1, sp, {});
      ad::Var expected = t.dot(pi_omega, t.constant(q));
      for (int o = 0; o < K; ++o) {
        const double w = c.w[static_cast<std::size_t>(sp) * K + o];
        if (w == 0.0) continue;
        const std::vector<int> o_stack{o};
        ad::Var b = g.termination(1, sp, o_stack);
        // Σ_o' κ(o'|s',o) Q̄(s',o') with κ = β π_Ω + (1 − β) 1[o' = o]
        ad::Var kappa_q = b * expected + (t.scalar(1.0) - b) * t.scalar(q[static_cast<std::size_t>(o)]);
        terms.push_back(w * kappa_q);
      }
    }
    out.grad_j2 = differentiate(t, terms, arch.store(), "coagent_j2");
  }
  out.kappa.assign(static_cast<std::size_t>(S) * K * K, 0.0);
  for (int sp = 0; sp < S; ++sp) {
    for (int o = 0; o < K; ++o) {
      const double b = c.tables.beta[0][static_cast<std::size_t>(sp) * K + o];
      for (int j = 0; j < K; ++j) {
        out.kappa[(static_cast<std::size_t>(sp) * K + o) * K + j] =
            b * c.tables.pi[0][static_cast<std::size_t>(sp) * K + j] + (j == o ? 1.0 - b : 0.0);
      }
    }
  }
  return out;
}

}  // namespace ocpg
