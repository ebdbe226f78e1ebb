#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "oracle/oracle.hpp"

namespace ocpg {

namespace {

void check_compatible(const OptionArchitecture& arch, const TabularMDP& mdp) {
  if (arch.n_states() != mdp.n_states || arch.n_actions() != mdp.n_actions) {
    throw std::invalid_argument("architecture and MDP disagree on state or action counts");
  }
}

Eigen::VectorXd solve_checked(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  Eigen::VectorXd x = lu.solve(b);
  const double scale = std::max(1.0, b.lpNorm<Eigen::Infinity>());
  if (!x.allFinite() || (A * x - b).lpNorm<Eigen::Infinity>() > 1e-8 * scale) {
    throw std::runtime_error("linear system is numerically singular");
  }
  return x;
}

// One reselection table per (s', full stack).
std::vector<std::vector<double>> option_transitions(const OptionArchitecture& arch, const OptionTables& tables) {
  const std::size_t M = arch.stack_count();
  const int L = arch.n_levels() - 1;
  std::vector<std::vector<double>> T(static_cast<std::size_t>(arch.n_states()) * M);
  for (int s = 0; s < arch.n_states(); ++s) {
    for (std::size_t m = 0; m < M; ++m) {
      const auto stack = arch.prefix_from_index(m, L);
      T[static_cast<std::size_t>(s) * M + m] = reselection_probs(arch, tables, s, stack);
    }
  }
  return T;
}

Eigen::VectorXd option_rewards(const OptionArchitecture& arch, const OptionTables& tables, const TabularMDP& mdp) {
  const std::size_t M = arch.stack_count();
  const int A = arch.n_actions();
  const auto& piN = tables.pi.back();
  Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.n_states() * M));
  for (int s = 0; s < arch.n_states(); ++s) {
    if (mdp.is_terminal(s)) continue;
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t x = static_cast<std::size_t>(s) * M + m;
      double v = 0.0;
      for (int a = 0; a < A; ++a) v += piN[x * A + a] * mdp.reward(s, a);
      r[static_cast<Eigen::Index>(x)] = v;
    }
  }
  return r;
}

Eigen::MatrixXd kernel_from(const OptionArchitecture& arch, const OptionTables& tables, const TabularMDP& mdp,
                            const std::vector<std::vector<double>>& T) {
  const std::size_t M = arch.stack_count();
  const int S = arch.n_states();
  const auto n = static_cast<Eigen::Index>(static_cast<std::size_t>(S) * M);
  Eigen::MatrixXd P1 = Eigen::MatrixXd::Zero(n, n);
  const auto succ = option_successor(arch, tables, mdp);
  for (std::size_t x = 0; x < static_cast<std::size_t>(n); ++x) {
    const std::size_t m = x % M;
    for (int t = 0; t < S; ++t) {
      const double p = succ[x * S + t];
      if (p == 0.0) continue;
      const auto& row = T[static_cast<std::size_t>(t) * M + m];
      for (std::size_t m2 = 0; m2 < M; ++m2) {
        P1(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(t * M + m2)) += mdp.gamma * p * row[m2];
      }
    }
  }
  return P1;
}

Eigen::MatrixXd identity_minus(const Eigen::MatrixXd& P1) {
  return Eigen::MatrixXd::Identity(P1.rows(), P1.cols()) - P1;
}

}  // namespace

OptionTables tabulate(const OptionArchitecture& arch) {
  OptionTables t;
  const int N = arch.n_levels();
  t.pi.resize(static_cast<std::size_t>(N));
  t.beta.resize(static_cast<std::size_t>(N - 1));
  for (int l = 1; l <= N; ++l) {
    const std::size_t P = arch.prefix_count(l - 1);
    const auto K = static_cast<std::size_t>(arch.n_choices(l));
    auto& pi = t.pi[static_cast<std::size_t>(l - 1)];
    pi.resize(static_cast<std::size_t>(arch.n_states()) * P * K);
    for (int s = 0; s < arch.n_states(); ++s) {
      for (std::size_t p = 0; p < P; ++p) {
        const auto prefix = arch.prefix_from_index(p, l - 1);
        arch.policy_probs(l, s, prefix, std::span<double>(pi).subspan((static_cast<std::size_t>(s) * P + p) * K, K));
      }
    }
    if (l == N) continue;
    const std::size_t P2 = arch.prefix_count(l);
    auto& beta = t.beta[static_cast<std::size_t>(l - 1)];
    beta.resize(static_cast<std::size_t>(arch.n_states()) * P2);
    for (int s = 0; s < arch.n_states(); ++s) {
      for (std::size_t p = 0; p < P2; ++p) {
        beta[static_cast<std::size_t>(s) * P2 + p] = arch.termination_prob(l, s, arch.prefix_from_index(p, l));
      }
    }
  }
  return t;
}

std::vector<double> keep_weights(const OptionArchitecture& arch, const OptionTables& tables, int s,
                                 std::span<const int> prefix) {
  const int L = static_cast<int>(prefix.size());
  std::vector<double> beta(static_cast<std::size_t>(L) + 1, 0.0);
  for (int k = 1; k <= L; ++k) {
    const std::size_t p = arch.prefix_index(prefix.first(static_cast<std::size_t>(k)));
    beta[static_cast<std::size_t>(k)] =
        tables.beta[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(s) * arch.prefix_count(k) + p];
  }
  std::vector<double> w(static_cast<std::size_t>(L) + 1);
  double above = 1.0;  // ∏_{k>i} β^k
  for (int i = L; i >= 0; --i) {
    w[static_cast<std::size_t>(i)] = i == 0 ? above : (1.0 - beta[static_cast<std::size_t>(i)]) * above;
    if (i > 0) above *= beta[static_cast<std::size_t>(i)];
  }
  return w;
}

std::vector<double> reselection_probs(const OptionArchitecture& arch, const OptionTables& tables, int s_next,
                                      std::span<const int> prefix) {
  const int L = static_cast<int>(prefix.size());
  const std::size_t count = arch.prefix_count(L);
  std::vector<double> out(count, 0.0);
  if (L == 0) {
    out[0] = 1.0;
    return out;
  }
  const auto w = keep_weights(arch, tables, s_next, prefix);
  std::vector<double> tail(static_cast<std::size_t>(L) + 1);
  for (std::size_t idx = 0; idx < count; ++idx) {
    const auto next = arch.prefix_from_index(idx, L);
    int common = 0;
    while (common < L && next[static_cast<std::size_t>(common)] == prefix[static_cast<std::size_t>(common)]) ++common;
    // tail[i] = ∏_{k=i+1}^{L} π^k(o'^k | s', o'^{1:k-1})
    tail[static_cast<std::size_t>(L)] = 1.0;
    std::size_t ctx = 0;
    std::vector<double> pk(static_cast<std::size_t>(L) + 1, 1.0);
    for (int k = 1; k <= L; ++k) {
      const auto K = static_cast<std::size_t>(arch.n_options(k));
      const auto& pi = tables.pi[static_cast<std::size_t>(k - 1)];
      const std::size_t row = static_cast<std::size_t>(s_next) * arch.prefix_count(k - 1) + ctx;
      pk[static_cast<std::size_t>(k)] = pi[row * K + static_cast<std::size_t>(next[static_cast<std::size_t>(k - 1)])];
      ctx = ctx * K + static_cast<std::size_t>(next[static_cast<std::size_t>(k - 1)]);
    }
    for (int i = L - 1; i >= 0; --i) tail[static_cast<std::size_t>(i)] = tail[static_cast<std::size_t>(i) + 1] * pk[static_cast<std::size_t>(i) + 1];
    double total = 0.0;
    for (int i = 0; i <= common; ++i) total += w[static_cast<std::size_t>(i)] * tail[static_cast<std::size_t>(i)];
    out[idx] = total;
  }
  return out;
}

std::vector<double> option_successor(const OptionArchitecture& arch, const OptionTables& tables,
                                     const TabularMDP& mdp) {
  check_compatible(arch, mdp);
  const std::size_t M = arch.stack_count();
  const int S = arch.n_states();
  const int A = arch.n_actions();
  const auto& piN = tables.pi.back();
  std::vector<double> out(static_cast<std::size_t>(S) * M * S, 0.0);
  for (int s = 0; s < S; ++s) {
    if (mdp.is_terminal(s)) continue;
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t x = static_cast<std::size_t>(s) * M + m;
      for (int a = 0; a < A; ++a) {
        const double pa = piN[x * A + a];
        const double* row = mdp.row(s, a);
        for (int t = 0; t < S; ++t) out[x * S + t] += pa * row[t];
      }
    }
  }
  return out;
}

Eigen::MatrixXd one_step_kernel(const OptionArchitecture& arch, const OptionTables& tables, const TabularMDP& mdp) {
  check_compatible(arch, mdp);
  return kernel_from(arch, tables, mdp, option_transitions(arch, tables));
}

Eigen::MatrixXd one_step_kernel(const OptionArchitecture& arch, const TabularMDP& mdp) {
  return one_step_kernel(arch, tabulate(arch), mdp);
}

ExactSolution solve_bellman(const OptionArchitecture& arch, const TabularMDP& mdp) {
  check_compatible(arch, mdp);
  const auto tables = tabulate(arch);
  const auto T = option_transitions(arch, tables);
  const Eigen::MatrixXd P1 = kernel_from(arch, tables, mdp, T);
  const Eigen::VectorXd q = solve_checked(identity_minus(P1), option_rewards(arch, tables, mdp));

  const int N = arch.n_levels();
  const int S = arch.n_states();
  const int A = arch.n_actions();
  const std::size_t M = arch.stack_count();
  ExactSolution sol;
  sol.n_levels = N;
  sol.n_states = S;
  sol.n_actions = A;
  sol.stacks = M;
  for (int l = 0; l < N; ++l) sol.prefix_counts.push_back(arch.prefix_count(l));
  sol.Q.resize(static_cast<std::size_t>(N - 1));
  sol.Q.back().assign(q.data(), q.data() + q.size());

  const std::size_t n = static_cast<std::size_t>(S) * M;
  sol.U.assign(n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    const std::size_t s = x / M;
    const auto& row = T[x];
    double u = 0.0;
    for (std::size_t m2 = 0; m2 < M; ++m2) u += row[m2] * q[static_cast<Eigen::Index>(s * M + m2)];
    sol.U[x] = u;
  }
  sol.Q_U.assign(n * static_cast<std::size_t>(A), 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    const int s = static_cast<int>(x / M);
    const std::size_t m = x % M;
    if (mdp.is_terminal(s)) continue;
    for (int a = 0; a < A; ++a) {
      double v = mdp.reward(s, a);
      const double* row = mdp.row(s, a);
      for (int t = 0; t < S; ++t) v += mdp.gamma * row[t] * sol.U[static_cast<std::size_t>(t) * M + m];
      sol.Q_U[x * A + a] = v;
    }
  }
  for (int l = N - 2; l >= 1; --l) {
    const std::size_t P = arch.prefix_count(l);
    const auto K = static_cast<std::size_t>(arch.n_options(l + 1));
    const auto& pi = tables.pi[static_cast<std::size_t>(l)];
    const auto& below = sol.Q[static_cast<std::size_t>(l)];
    auto& cur = sol.Q[static_cast<std::size_t>(l - 1)];
    cur.assign(static_cast<std::size_t>(S) * P, 0.0);
    for (std::size_t sp = 0; sp < static_cast<std::size_t>(S) * P; ++sp) {
      double v = 0.0;
      for (std::size_t j = 0; j < K; ++j) v += pi[sp * K + j] * below[sp * K + j];
      cur[sp] = v;
    }
  }
  sol.V.assign(static_cast<std::size_t>(S), 0.0);
  {
    const auto K = static_cast<std::size_t>(arch.n_options(1));
    for (std::size_t s = 0; s < static_cast<std::size_t>(S); ++s) {
      double v = 0.0;
      for (std::size_t j = 0; j < K; ++j) v += tables.pi[0][s * K + j] * sol.Q[0][s * K + j];
      sol.V[s] = v;
    }
  }
  sol.A.resize(static_cast<std::size_t>(N - 1));
  for (int l = 1; l < N; ++l) {
    const std::size_t P = arch.prefix_count(l);
    auto& adv = sol.A[static_cast<std::size_t>(l - 1)];
    adv.assign(static_cast<std::size_t>(S) * P, 0.0);
    for (int s = 0; s < S; ++s) {
      for (std::size_t p = 0; p < P; ++p) {
        const auto prefix = arch.prefix_from_index(p, l);
        const auto w = keep_weights(arch, tables, s, std::span<const int>(prefix).first(static_cast<std::size_t>(l - 1)));
        double base = w[0] * sol.V[static_cast<std::size_t>(s)];
        for (int i = 1; i < l; ++i) {
          base += w[static_cast<std::size_t>(i)] *
                  sol.q(i, s, arch.prefix_index(std::span<const int>(prefix).first(static_cast<std::size_t>(i))));
        }
        adv[static_cast<std::size_t>(s) * P + p] = sol.q(l, s, p) - base;
      }
    }
  }
  return sol;
}

double BellmanResiduals::max() const { return std::max({option_value, arrival, state_value, lower_levels}); }

BellmanResiduals bellman_residuals(const OptionArchitecture& arch, const TabularMDP& mdp, const ExactSolution& sol) {
  const auto tables = tabulate(arch);
  const int N = arch.n_levels();
  const int S = arch.n_states();
  const int A = arch.n_actions();
  const std::size_t M = arch.stack_count();
  BellmanResiduals r;
  for (int s = 0; s < S; ++s) {
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t x = static_cast<std::size_t>(s) * M + m;
      if (!mdp.is_terminal(s)) {
        double v = 0.0;
        for (int a = 0; a < A; ++a) v += tables.pi.back()[x * A + a] * sol.q_u(x, a);
        r.option_value = std::max(r.option_value, std::abs(sol.q_omega(x) - v));
      }
      // Arrival value by branch: all levels kept, some kept, none kept.
      const auto stack = arch.prefix_from_index(m, N - 1);
      const auto w = keep_weights(arch, tables, s, stack);
      double u = w[0] * sol.V[static_cast<std::size_t>(s)];
      for (int i = 1; i < N; ++i) {
        u += w[static_cast<std::size_t>(i)] *
             sol.q(i, s, arch.prefix_index(std::span<const int>(stack).first(static_cast<std::size_t>(i))));
      }
      r.arrival = std::max(r.arrival, std::abs(sol.U[x] - u));
    }
    const auto K = static_cast<std::size_t>(arch.n_options(1));
    double v = 0.0;
    for (std::size_t j = 0; j < K; ++j) v += tables.pi[0][static_cast<std::size_t>(s) * K + j] * sol.q(1, s, j);
    r.state_value = std::max(r.state_value, std::abs(sol.V[static_cast<std::size_t>(s)] - v));
    for (int l = 1; l < N - 1; ++l) {
      const std::size_t P = arch.prefix_count(l);
      const auto K2 = static_cast<std::size_t>(arch.n_options(l + 1));
      for (std::size_t p = 0; p < P; ++p) {
        double e = 0.0;
        const std::size_t row = static_cast<std::size_t>(s) * P + p;
        for (std::size_t j = 0; j < K2; ++j) e += tables.pi[static_cast<std::size_t>(l)][row * K2 + j] * sol.q(l + 1, s, p * K2 + j);
        r.lower_levels = std::max(r.lower_levels, std::abs(sol.q(l, s, p) - e));
      }
    }
  }
  return r;
}

std::vector<double> occupancy(const OptionArchitecture& arch, const OptionTables& tables, const TabularMDP& mdp,
                              const AugmentedState& start) {
  const Eigen::MatrixXd P1 = one_step_kernel(arch, tables, mdp);
  const std::size_t x0 = augmented_index(arch, start.s, arch.prefix_index(start.options));
  if (static_cast<int>(start.options.size()) != arch.n_levels() - 1) {
    throw std::invalid_argument("start option stack has wrong depth");
  }
  Eigen::VectorXd e = Eigen::VectorXd::Zero(P1.rows());
  e[static_cast<Eigen::Index>(x0)] = 1.0;
  const Eigen::VectorXd mu = solve_checked(identity_minus(P1).transpose(), e);
  return {mu.data(), mu.data() + mu.size()};
}

std::vector<double> occupancy(const OptionArchitecture& arch, const TabularMDP& mdp, const AugmentedState& start) {
  return occupancy(arch, tabulate(arch), mdp, start);
}

std::vector<double> arrival_weights(const OptionArchitecture& arch, const OptionTables& tables, const TabularMDP& mdp,
                                    std::span<const double> mu) {
  const auto succ = option_successor(arch, tables, mdp);
  const std::size_t M = arch.stack_count();
  const int S = arch.n_states();
  std::vector<double> w(static_cast<std::size_t>(S) * M, 0.0);
  for (int s = 0; s < S; ++s) {
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t x = static_cast<std::size_t>(s) * M + m;
      if (mu[x] == 0.0) continue;
      for (int t = 0; t < S; ++t) w[static_cast<std::size_t>(t) * M + m] += mdp.gamma * mu[x] * succ[x * S + t];
    }
  }
  return w;
}

KernelChecks kernel_checks(const OptionArchitecture& arch, const TabularMDP& mdp, const AugmentedState& start) {
  const auto tables = tabulate(arch);
  const Eigen::MatrixXd P1 = one_step_kernel(arch, tables, mdp);
  const std::size_t M = arch.stack_count();
  KernelChecks k;
  for (Eigen::Index x = 0; x < P1.rows(); ++x) {
    if (mdp.is_terminal(static_cast<int>(static_cast<std::size_t>(x) / M))) continue;
    k.row_mass = std::max(k.row_mass, std::abs(P1.row(x).sum() - mdp.gamma));
  }
  for (int l = 1; l < arch.n_levels(); ++l) {
    for (int s = 0; s < arch.n_states(); ++s) {
      for (std::size_t p = 0; p < arch.prefix_count(l); ++p) {
        const auto probs = reselection_probs(arch, tables, s, arch.prefix_from_index(p, l));
        double total = 0.0;
        for (double v : probs) total += v;
        k.reselection = std::max(k.reselection, std::abs(total - 1.0));
      }
    }
  }
  const auto mu = occupancy(arch, tables, mdp, start);
  const Eigen::Map<const Eigen::VectorXd> m(mu.data(), static_cast<Eigen::Index>(mu.size()));
  Eigen::VectorXd e = Eigen::VectorXd::Zero(P1.rows());
  e[static_cast<Eigen::Index>(augmented_index(arch, start.s, arch.prefix_index(start.options)))] = 1.0;
  k.occupancy = (m - e - P1.transpose() * m).lpNorm<Eigen::Infinity>();
  return k;
}

double exact_return(const OptionArchitecture& arch, const TabularMDP& mdp, const AugmentedState& start) {
  check_compatible(arch, mdp);
  const auto tables = tabulate(arch);
  const Eigen::MatrixXd P1 = one_step_kernel(arch, tables, mdp);
  const Eigen::VectorXd q = solve_checked(identity_minus(P1), option_rewards(arch, tables, mdp));
  return q[static_cast<Eigen::Index>(augmented_index(arch, start.s, arch.prefix_index(start.options)))];
}

AugmentedState default_start(const OptionArchitecture& arch, const TabularMDP& mdp) {
  return {mdp.s0, std::vector<int>(static_cast<std::size_t>(arch.n_levels() - 1), 0)};
}

std::vector<double> optimal_values(const TabularMDP& mdp, double tol) {
  const auto S = static_cast<std::size_t>(mdp.n_states);
  std::vector<double> v(S, 0.0), next(S, 0.0);
  for (int it = 0; it < 1000000; ++it) {
    double change = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      if (mdp.is_terminal(s)) {
        next[static_cast<std::size_t>(s)] = 0.0;
        continue;
      }
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < mdp.n_actions; ++a) {
        double q = mdp.reward(s, a);
        const double* row = mdp.row(s, a);
        for (std::size_t t = 0; t < S; ++t) q += mdp.gamma * row[t] * v[t];
        best = std::max(best, q);
      }
      change = std::max(change, std::abs(best - v[static_cast<std::size_t>(s)]));
      next[static_cast<std::size_t>(s)] = best;
    }
    v.swap(next);
    if (change < tol) break;
  }
  return v;
}

}  // namespace ocpg
