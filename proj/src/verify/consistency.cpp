#include "verify/consistency.hpp"

#include <cmath>

namespace ocpg {

TransitionRecord sample_occupancy_record(const OptionArchitecture& arch, const TabularMDP& mdp,
                                         std::span<const double> normalised_mu, Rng& rng) {
  const std::size_t M = arch.stack_count();
  const std::size_t x = rng.categorical(normalised_mu);
  TransitionRecord rec;
  rec.s = static_cast<int>(x / M);
  rec.options = arch.prefix_from_index(x % M, arch.n_levels() - 1);
  rec.a = sample_action(arch, rec.s, rec.options, rng);
  const auto st = step(mdp, rec.s, rec.a, rng);
  rec.r = st.reward;
  rec.s_next = st.next_state;
  rec.done = st.done;
  auto term = terminate_and_reselect(arch, rec.s_next, rec.options, rng);
  rec.next_options = std::move(term.options);
  rec.terminated = std::move(term.terminated);
  rec.reselection = std::move(term.reselection);
  return rec;
}

ConsistencyResult estimator_consistency(const OptionArchitecture& arch, const TabularMDP& mdp, Estimator estimator,
                                        std::size_t samples, std::uint64_t seed) {
  const auto start = default_start(arch, mdp);
  const auto sol = solve_bellman(arch, mdp);
  auto mu = occupancy(arch, mdp, start);
  const std::size_t M = arch.stack_count();
  double mass = 0.0;
  for (std::size_t x = 0; x < mu.size(); ++x) {
    if (mdp.is_terminal(static_cast<int>(x / M))) mu[x] = 0.0;
    mass += mu[x];
  }
  for (double& v : mu) v /= mass;

  ConsistencyResult res;
  res.exact = estimator == Estimator::OCPG ? exact_ocpg_gradient(arch, mdp, start)
                                           : exact_hocpg_gradient(arch, mdp, start);
  const std::size_t P = arch.store().size();
  std::vector<double> sum(P, 0.0), sum_sq(P, 0.0);
  UpdateConfig cfg;
  cfg.gamma = mdp.gamma;
  Rng rng(seed);
  for (std::size_t k = 0; k < samples; ++k) {
    const auto rec = sample_occupancy_record(arch, mdp, mu, rng);
    const StepTargets tg = exact_targets(arch, sol, rec, cfg, estimator);
    const auto g = segment_gradient(arch, std::span<const TransitionRecord>(&rec, 1), cfg, estimator,
                                    std::span<const StepTargets>(&tg, 1), false);
    for (std::size_t i = 0; i < P; ++i) {
      sum[i] += g[i];
      sum_sq[i] += g[i] * g[i];
    }
  }
  const double n = static_cast<double>(samples);
  res.samples = samples;
  res.estimate = GradientVector(P, std::string(estimator_name(estimator)) + "_monte_carlo");
  res.std_error = GradientVector(P, "std_error");
  res.pass = true;
  for (std::size_t i = 0; i < P; ++i) {
    const double mean = sum[i] / n;
    const double var = std::max(0.0, sum_sq[i] / n - mean * mean) * n / (n - 1.0);
    res.estimate[i] = mass * mean;
    res.std_error[i] = mass * std::sqrt(var / n);
    const double err = std::abs(res.estimate[i] - res.exact[i]);
    const double z = res.std_error[i] > 0.0 ? err / res.std_error[i] : (err <= 1e-12 ? 0.0 : INFINITY);
    if (z > res.worst_z) {
      res.worst_z = z;
      res.worst_index = i;
    }
    if (z > 3.0) res.pass = false;
  }
  return res;
}

}  // namespace ocpg
