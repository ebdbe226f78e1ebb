#include "gradients/estimators.hpp"

#include <cmath>
#include <stdexcept>

#include "autodiff/tape.hpp"
#include "model/graph.hpp"

namespace ocpg {

void UpdateConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (!(alpha_v >= 0.0)) throw std::invalid_argument("alpha_v must be non-negative");
  if (!(eta >= 0.0)) throw std::invalid_argument("eta must be non-negative");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (!(entropy >= 0.0)) throw std::invalid_argument("entropy weight must be non-negative");
}

const char* estimator_name(Estimator e) {
  switch (e) {
    case Estimator::OCPG: return "ocpg";
    case Estimator::HOCPG: return "hocpg";
    case Estimator::OC: return "oc";
    case Estimator::HOC: return "hoc";
  }
  return "?";
}

Estimator parse_estimator(const std::string& name) {
  if (name == "ocpg") return Estimator::OCPG;
  if (name == "hocpg") return Estimator::HOCPG;
  if (name == "oc") return Estimator::OC;
  if (name == "hoc") return Estimator::HOC;
  throw std::invalid_argument("unknown estimator '" + name + "' (expected ocpg, hocpg, oc or hoc)");
}

bool is_baseline(Estimator e) { return e == Estimator::OC || e == Estimator::HOC; }

namespace {

void check_record(const OptionArchitecture& arch, const TransitionRecord& rec, Estimator estimator) {
  const auto L = static_cast<std::size_t>(arch.n_levels() - 1);
  if ((estimator == Estimator::OCPG || estimator == Estimator::OC) && arch.n_levels() != 2) {
    throw std::invalid_argument(std::string(estimator_name(estimator)) +
                                " step gradient needs N = 2; use the hierarchical estimator");
  }
  if (rec.options.size() != L) throw std::invalid_argument("record option stack has wrong depth");
  if (!std::isfinite(rec.G)) throw std::invalid_argument("record return target is not finite");
  if (!is_baseline(estimator) && !rec.done && rec.reselection.size() != L) {
    throw std::invalid_argument("record is missing reselection draws");
  }
}

std::span<const int> first(const std::vector<int>& v, int n) {
  return std::span<const int>(v).first(static_cast<std::size_t>(n));
}

// Learned generalized advantage of o^{1:ℓ} at s with V = max_o Q.
double learned_advantage(const OptionArchitecture& arch, int s, const std::vector<int>& stack, int level,
                         double v) {
  double base = 0.0;
  double above = 1.0;  // ∏_{k=i+1}^{ℓ-1} β^k
  for (int i = level - 1; i >= 1; --i) {
    const double b = arch.termination_prob(i, s, first(stack, i));
    base += (1.0 - b) * above * arch.q_value(i, s, first(stack, i));
    above *= b;
  }
  base += above * v;
  return arch.q_value(level, s, first(stack, level)) - base;
}

}  // namespace

double greedy_state_value(const OptionArchitecture& arch, int s) {
  double best = 0.0;
  for (int o = 0; o < arch.n_options(1); ++o) {
    const std::vector<int> pre{o};
    const double q = arch.q_value(1, s, pre);
    if (o == 0 || q > best) best = q;
  }
  return best;
}

StepTargets critic_targets(const OptionArchitecture& arch, const TransitionRecord& rec, const UpdateConfig& cfg,
                           Estimator estimator) {
  check_record(arch, rec, estimator);
  const int N = arch.n_levels();
  StepTargets t;
  t.option.assign(static_cast<std::size_t>(N - 1), 0.0);
  t.termination.assign(static_cast<std::size_t>(N - 1), 0.0);
  t.action = rec.G - arch.q_value(N - 1, rec.s, rec.options);
  if (is_baseline(estimator)) {
    const double v = greedy_state_value(arch, rec.s);
    for (int l = 1; l < N; ++l) {
      t.option[static_cast<std::size_t>(l - 1)] = rec.G - (l == 1 ? v : arch.q_value(l - 1, rec.s, first(rec.options, l - 1)));
    }
  }
  if (rec.done) return t;
  const double v_next = greedy_state_value(arch, rec.s_next);
  for (int l = 1; l < N; ++l) {
    if (!is_baseline(estimator)) {
      const auto& o2 = rec.reselection[static_cast<std::size_t>(l - 1)];
      t.option[static_cast<std::size_t>(l - 1)] =
          rec.G - (l == 1 ? v_next : arch.q_value(l - 1, rec.s_next, first(o2, l - 1)));
    }
    t.termination[static_cast<std::size_t>(l - 1)] = learned_advantage(arch, rec.s_next, rec.options, l, v_next) + cfg.eta;
  }
  return t;
}

StepTargets exact_targets(const OptionArchitecture& arch, const ExactSolution& sol, const TransitionRecord& rec,
                          const UpdateConfig& cfg, Estimator estimator) {
  check_record(arch, rec, estimator);
  const int N = arch.n_levels();
  StepTargets t;
  t.option.assign(static_cast<std::size_t>(N - 1), 0.0);
  t.termination.assign(static_cast<std::size_t>(N - 1), 0.0);
  const std::size_t x = augmented_index(arch, rec.s, arch.prefix_index(rec.options));
  t.action = sol.q_u(x, rec.a) - sol.q_omega(x);
  auto baseline = [&](int s, const std::vector<int>& stack, int l) {
    return l == 1 ? sol.V[static_cast<std::size_t>(s)] : sol.q(l - 1, s, arch.prefix_index(first(stack, l - 1)));
  };
  if (is_baseline(estimator)) {
    for (int l = 1; l < N; ++l) {
      t.option[static_cast<std::size_t>(l - 1)] =
          sol.q(l, rec.s, arch.prefix_index(first(rec.options, l))) - baseline(rec.s, rec.options, l);
    }
  }
  if (rec.done) return t;
  for (int l = 1; l < N; ++l) {
    if (!is_baseline(estimator)) {
      const auto& o2 = rec.reselection[static_cast<std::size_t>(l - 1)];
      t.option[static_cast<std::size_t>(l - 1)] =
          sol.q(l, rec.s_next, arch.prefix_index(first(o2, l))) - baseline(rec.s_next, o2, l);
    }
    t.termination[static_cast<std::size_t>(l - 1)] =
        sol.advantage(l, rec.s_next, arch.prefix_index(first(rec.options, l))) + cfg.eta;
  }
  return t;
}

GradientVector segment_gradient(const OptionArchitecture& arch, std::span<const TransitionRecord> records,
                                const UpdateConfig& cfg, Estimator estimator, std::span<const StepTargets> targets,
                                bool include_critic) {
  if (!targets.empty() && targets.size() != records.size()) {
    throw std::invalid_argument("segment_gradient: one target set per record expected");
  }
  const int N = arch.n_levels();
  ad::Tape t;
  ArchGraph g(arch, t);
  std::vector<ad::Var> terms;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& rec = records[k];
    const StepTargets tg = targets.empty() ? critic_targets(arch, rec, cfg, estimator) : targets[k];
    if (!targets.empty()) check_record(arch, rec, estimator);

    if (tg.action != 0.0) terms.push_back(tg.action * g.log_policy_at(N, rec.s, rec.options, rec.a));
    if (cfg.entropy > 0.0) {
      ad::Var p = g.policy(N, rec.s, rec.options);
      terms.push_back((-cfg.entropy) * t.dot(p, g.log_policy(N, rec.s, rec.options)));
    }
    if (include_critic && cfg.alpha_v > 0.0) {
      for (int l = 1; l < N; ++l) {
        ad::Var err = t.scalar(rec.G) - g.q_value(l, rec.s, first(rec.options, l));
        terms.push_back((-cfg.alpha_v) * t.square(err));
      }
    }
    if (is_baseline(estimator)) {
      for (int l = 1; l < N; ++l) {
        const double c = tg.option[static_cast<std::size_t>(l - 1)];
        if (c != 0.0) {
          terms.push_back(c * g.log_policy_at(l, rec.s, first(rec.options, l - 1), rec.options[static_cast<std::size_t>(l - 1)]));
        }
      }
    }
    if (rec.done) continue;
    // β̄^k(s', o^{1:k}) for the stack that was active on arrival.
    std::vector<double> beta(static_cast<std::size_t>(N), 1.0);
    for (int l = 1; l < N; ++l) beta[static_cast<std::size_t>(l)] = arch.termination_prob(l, rec.s_next, first(rec.options, l));
    double above = 1.0;  // ∏_{k>ℓ} β̄^k
    for (int l = N - 1; l >= 1; --l) {
      const double c = tg.termination[static_cast<std::size_t>(l - 1)];
      if (c != 0.0 && above != 0.0) {
        terms.push_back((-cfg.gamma * above * c) * g.termination(l, rec.s_next, first(rec.options, l)));
      }
      const double gate = above * beta[static_cast<std::size_t>(l)];
      if (!is_baseline(estimator)) {
        const double co = tg.option[static_cast<std::size_t>(l - 1)];
        const auto& o2 = rec.reselection[static_cast<std::size_t>(l - 1)];
        if (co != 0.0 && gate != 0.0) {
          terms.push_back((cfg.gamma * gate * co) * g.log_policy_at(l, rec.s_next, first(o2, l - 1), o2[static_cast<std::size_t>(l - 1)]));
        }
      }
      above = gate;
    }
  }
  if (terms.empty()) return GradientVector(arch.store().size(), estimator_name(estimator));
  ad::Var total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = total + terms[i];
  t.forward(arch.store(), total);
  GradientVector grad = t.backward(total);
  grad.label = estimator_name(estimator);
  return grad;
}

GradientVector ocpg_step_gradient(const OptionArchitecture& arch, const TransitionRecord& rec, const UpdateConfig& cfg) {
  return segment_gradient(arch, std::span<const TransitionRecord>(&rec, 1), cfg, Estimator::OCPG);
}

GradientVector hocpg_step_gradient(const OptionArchitecture& arch, const TransitionRecord& rec,
                                   const UpdateConfig& cfg) {
  return segment_gradient(arch, std::span<const TransitionRecord>(&rec, 1), cfg, Estimator::HOCPG);
}

GradientVector oc_baseline_step_gradient(const OptionArchitecture& arch, const TransitionRecord& rec,
                                         const UpdateConfig& cfg) {
  return segment_gradient(arch, std::span<const TransitionRecord>(&rec, 1), cfg, Estimator::OC);
}

GradientVector hoc_baseline_step_gradient(const OptionArchitecture& arch, const TransitionRecord& rec,
                                          const UpdateConfig& cfg) {
  return segment_gradient(arch, std::span<const TransitionRecord>(&rec, 1), cfg, Estimator::HOC);
}

std::vector<double> n_step_returns(std::span<const double> rewards, double bootstrap, double gamma) {
  if (rewards.empty()) throw std::invalid_argument("n_step_returns: empty segment");
  std::vector<double> G(rewards.size());
  double g = bootstrap;
  for (std::size_t k = rewards.size(); k-- > 0;) {
    g = rewards[k] + gamma * g;
    G[k] = g;
  }
  return G;
}

}  // namespace ocpg
