#include "trainer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

namespace ocpg {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kEvalStream = 1000000;
constexpr std::uint64_t kReservoirStream = 2000000;

std::string locate(const ParameterStore& store, std::size_t i) {
  for (const auto& sl : store.slices()) {
    if (i >= sl.offset && i < sl.offset + sl.size) return sl.name + "[" + std::to_string(i - sl.offset) + "]";
  }
  return "#" + std::to_string(i);
}

EvalRecord summarise(const std::vector<Trajectory>& eps, int option_levels) {
  EvalRecord rec;
  for (const auto& tr : eps) {
    rec.mean_return += tr.episode_return;
    rec.mean_discounted_return += tr.discounted_return;
    rec.mean_length += static_cast<double>(tr.steps.size());
  }
  const double n = static_cast<double>(eps.size());
  rec.mean_return /= n;
  rec.mean_discounted_return /= n;
  rec.mean_length /= n;
  for (int l = 1; l <= option_levels; ++l) rec.steps_per_termination.push_back(steps_per_termination(eps, l));
  rec.distinct_options = distinct_options_per_episode(eps);
  return rec;
}

// Parameter indices whose gradient feeds the interference dot products.
std::vector<std::size_t> interference_indices(const OptionArchitecture& arch, bool full) {
  std::vector<std::size_t> idx;
  if (full) {
    for (std::size_t i = 0; i < arch.store().size(); ++i) idx.push_back(i);
  } else {
    idx = arch.store().support("pi1");
  }
  return idx;
}

}  // namespace

void apply_gradients(ParameterStore& store, const GradientVector& g, double alpha) {
  if (g.size() != store.size()) throw std::invalid_argument("apply_gradients: gradient has wrong size");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) throw DivergenceError("non-finite gradient at " + locate(store, i));
    if (!std::isfinite(store[i] + alpha * g[i])) throw DivergenceError("non-finite parameter at " + locate(store, i));
  }
  if (alpha == 0.0) return;
  for (std::size_t i = 0; i < g.size(); ++i) store[i] += alpha * g[i];
}

double clip_global_norm(GradientVector& g, double max_norm) {
  // Scaled by the largest entry so huge but finite gradients keep a finite norm.
  const double m = g.norm_inf();
  if (m == 0.0 || !std::isfinite(m)) return m;
  double ss = 0.0;
  for (double v : g.values) ss += (v / m) * (v / m);
  const double n = m * std::sqrt(ss);
  if (n > max_norm) {
    const double c = max_norm / n;
    for (double& v : g.values) v *= c;
  }
  return n;
}

RolloutWorker::RolloutWorker(const TabularMDP& mdp, const TrainConfig& cfg, int worker_id)
    : mdp_(mdp), cfg_(cfg), id_(worker_id), rng_(worker_seed(cfg.seed, static_cast<std::uint64_t>(worker_id))) {}

void RolloutWorker::reset(const OptionArchitecture& arch) {
  s_ = mdp_.s0;
  options_ = sample_options(arch, s_, rng_);
  episode_steps_ = 0;
  episode_return_ = 0.0;
  fresh_ = false;
}

Segment RolloutWorker::rollout(const OptionArchitecture& arch) {
  if (fresh_) reset(arch);
  Segment seg;
  const int L = arch.n_levels() - 1;
  while (true) {
    TransitionRecord rec;
    rec.s = s_;
    rec.options = options_;
    rec.a = sample_action(arch, s_, options_, rng_);
    const StepResult st = step(mdp_, s_, rec.a, rng_);
    rec.r = st.reward;
    rec.s_next = st.next_state;
    rec.done = st.done;
    ++episode_steps_;
    episode_return_ += st.reward;
    bool any_terminated = false;
    if (!st.done) {
      TerminationOutcome out = terminate_and_reselect(arch, st.next_state, options_, rng_);
      rec.next_options = std::move(out.options);
      rec.terminated = std::move(out.terminated);
      rec.reselection = std::move(out.reselection);
      for (bool t : rec.terminated) any_terminated = any_terminated || t;
    } else {
      rec.next_options = options_;
      rec.terminated.assign(static_cast<std::size_t>(L), false);
    }
    s_ = rec.s_next;
    options_ = rec.next_options;
    const bool capped = !st.done && episode_steps_ >= cfg_.env.max_episode_steps;
    seg.records.push_back(std::move(rec));
    const auto len = static_cast<int>(seg.records.size());
    if (st.done || capped) {
      seg.episode_ended = true;
      seg.episode_return = episode_return_;
      fresh_ = true;
      break;
    }
    if (len >= cfg_.t_max) break;
    if (any_terminated && len > cfg_.t_min) break;
  }
  const auto& last = seg.records.back();
  const double bootstrap = last.done ? 0.0 : greedy_state_value(arch, last.s_next);
  std::vector<double> rewards;
  rewards.reserve(seg.records.size());
  for (const auto& r : seg.records) rewards.push_back(r.r);
  const std::vector<double> G = n_step_returns(rewards, bootstrap, cfg_.update.gamma);
  for (std::size_t k = 0; k < G.size(); ++k) seg.records[k].G = G[k];
  return seg;
}

GradientVector segment_update(const OptionArchitecture& arch, const Segment& seg, const TrainConfig& cfg,
                              double eta) {
  UpdateConfig u = cfg.update;
  u.eta = eta;
  GradientVector g = segment_gradient(arch, seg.records, u, cfg.estimator);
  clip_global_norm(g, cfg.clip);
  return g;
}

std::vector<Trajectory> evaluate(const OptionArchitecture& arch, const TabularMDP& mdp, int episodes,
                                 int max_steps, Rng& rng) {
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    Trajectory tr;
    int s = mdp.s0;
    std::vector<int> options = sample_options(arch, s, rng);
    double discount = 1.0;
    for (int t = 0; t < max_steps; ++t) {
      TrajectoryStep st;
      st.s = s;
      st.options = options;
      st.a = sample_action(arch, s, options, rng);
      const StepResult res = step(mdp, s, st.a, rng);
      st.r = res.reward;
      st.s_next = res.next_state;
      st.done = res.done;
      TerminationOutcome term = terminate_and_reselect(arch, res.next_state, options, rng);
      st.terminated = std::move(term.terminated);
      st.next_options = std::move(term.options);
      tr.episode_return += res.reward;
      tr.discounted_return += discount * res.reward;
      discount *= mdp.gamma;
      s = res.next_state;
      options = st.next_options;
      tr.steps.push_back(std::move(st));
      if (res.done) break;
    }
    out.push_back(std::move(tr));
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  const TabularMDP mdp = make_env(cfg.env, cfg.update.gamma);
  OptionArchitecture arch(cfg.architecture(mdp), cfg.seed);
  RunLog log;
  const int L = cfg.n_levels - 1;
  const double alpha = cfg.alpha();
  log.workers.assign(static_cast<std::size_t>(cfg.workers), WorkerStats{});

  if (!hooks.checkpoint_dir.empty()) std::filesystem::create_directories(hooks.checkpoint_dir);

  std::mutex mu;
  long long next_eval = 0;
  long long next_checkpoint = cfg.checkpoint_every > 0 ? cfg.checkpoint_every : std::numeric_limits<long long>::max();
  std::uint64_t eval_index = 0;
  double interval_seconds = 0.0;
  long long interval_updates = 0;
  GradientReservoir reservoir;
  Rng reservoir_rng(worker_seed(cfg.seed, kReservoirStream));
  const std::vector<std::size_t> probe = interference_indices(arch, cfg.interference_full);

  // Caller holds the lock.
  auto run_eval = [&] {
    Rng rng(worker_seed(cfg.seed, kEvalStream + eval_index++));
    auto eps = evaluate(arch, mdp, cfg.eval_episodes, cfg.env.max_episode_steps, rng);
    EvalRecord rec = summarise(eps, L);
    rec.global_step = log.global_step;
    rec.updates = log.applications;
    rec.eta = cfg.eta_at(log.global_step);
    log.evals.push_back(std::move(rec));
    if (log.global_step > 0) {
      log.timing.push_back({log.global_step, interval_updates ? interval_seconds / static_cast<double>(interval_updates) : 0.0});
    }
    interval_seconds = 0.0;
    interval_updates = 0;
  };
  run_eval();
  next_eval = cfg.eval_every;

  std::exception_ptr failure;
  bool stop = false;

  auto worker_loop = [&](int id) {
    try {
      RolloutWorker worker(mdp, cfg, id);
      OptionArchitecture local = arch;
      std::vector<double> episode_grad(probe.size(), 0.0);
      while (true) {
        double eta = 0.0;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (stop || log.global_step >= cfg.total_steps) return;
          std::copy(arch.store().theta().begin(), arch.store().theta().end(), local.store().theta().begin());
          eta = cfg.eta_at(log.global_step);
        }
        const auto t0 = Clock::now();
        Segment seg = worker.rollout(local);
        GradientVector g = segment_update(local, seg, cfg, eta);
        const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();

        std::lock_guard<std::mutex> lock(mu);
        if (stop) return;
        try {
          apply_gradients(arch.store(), g, alpha);
        } catch (const DivergenceError& e) {
          throw DivergenceError(std::string(e.what()) + " after " + std::to_string(log.global_step) +
                                " steps (worker " + std::to_string(id) + ", update " +
                                std::to_string(log.applications + 1) + ")");
        }
        double mass = 0.0;
        for (double v : g.values) mass += std::abs(alpha * v);
        auto& ws = log.workers[static_cast<std::size_t>(id)];
        ws.segments += 1;
        ws.steps += static_cast<long long>(seg.records.size());
        ws.gradient_mass += mass;
        log.applications += 1;
        log.applied_mass += mass;
        log.global_step += static_cast<long long>(seg.records.size());
        interval_seconds += seconds;
        interval_updates += 1;

        if (cfg.interference) {
          for (std::size_t k = 0; k < probe.size(); ++k) episode_grad[k] += g[probe[k]];
          if (seg.episode_ended) {
            if (!reservoir.empty()) {
              log.interference.push_back({log.global_step, gradient_interference(reservoir, episode_grad, reservoir_rng)});
            }
            reservoir.insert(episode_grad, reservoir_rng);
            std::fill(episode_grad.begin(), episode_grad.end(), 0.0);
          }
        }
        while (log.global_step >= next_eval && log.global_step < cfg.total_steps) {
          run_eval();
          next_eval += cfg.eval_every;
        }
        while (log.global_step >= next_checkpoint) {
          if (!hooks.checkpoint_dir.empty()) {
            save_checkpoint(hooks.checkpoint_dir + "/step_" + std::to_string(next_checkpoint) + ".ckpt", arch);
          }
          next_checkpoint += cfg.checkpoint_every;
        }
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!failure) failure = std::current_exception();
      stop = true;
    }
  };

  if (cfg.workers == 1) {
    worker_loop(0);
  } else {
    std::vector<std::thread> threads;
    for (int id = 0; id < cfg.workers; ++id) threads.emplace_back(worker_loop, id);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  run_eval();
  return TrainResult{std::move(log), std::move(arch), mdp};
}

void write_runlog_csv(std::ostream& os, const RunLog& log, int option_levels) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "global_step,updates,eta,mean_return,mean_discounted_return,mean_length";
  for (int l = 1; l <= option_levels; ++l) os << ",steps_per_termination_" << l;
  os << ",distinct_options\n";
  for (const auto& e : log.evals) {
    os << e.global_step << ',' << e.updates << ',' << e.eta << ',' << e.mean_return << ','
       << e.mean_discounted_return << ',' << e.mean_length;
    for (double v : e.steps_per_termination) os << ',' << v;
    os << ',' << e.distinct_options << '\n';
  }
}

void write_timing_csv(std::ostream& os, const RunLog& log) {
  os << "global_step,seconds_per_update\n";
  for (const auto& t : log.timing) os << t.global_step << ',' << t.seconds_per_update << '\n';
}

void write_interference_csv(std::ostream& os, const RunLog& log) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "global_step,dot_1,dot_2,dot_3,dot_4,dot_5,mean_dot,fraction_positive\n";
  for (const auto& r : log.interference) {
    os << r.global_step;
    double total = 0.0;
    int positive = 0;
    for (double d : r.dots) {
      os << ',' << d;
      total += d;
      positive += d > 0.0;
    }
    const double n = static_cast<double>(r.dots.size());
    os << ',' << total / n << ',' << positive / n << '\n';
  }
}

void write_workers_csv(std::ostream& os, const RunLog& log) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "worker,segments,steps,gradient_mass\n";
  for (std::size_t i = 0; i < log.workers.size(); ++i) {
    const auto& w = log.workers[i];
    os << i << ',' << w.segments << ',' << w.steps << ',' << w.gradient_mass << '\n';
  }
}

namespace {

template <typename F>
void write_file(const std::filesystem::path& path, F&& body) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  body(os);
  if (!os) throw std::runtime_error("error writing " + path.string());
}

}  // namespace

void write_run(const std::string& dir, const TrainConfig& cfg, const TrainResult& result) {
  const std::filesystem::path root(dir);
  std::filesystem::create_directories(root);
  write_file(root / "config.txt", [&](std::ostream& os) { write_config(os, cfg); });
  write_file(root / "runlog.csv", [&](std::ostream& os) { write_runlog_csv(os, result.log, cfg.n_levels - 1); });
  write_file(root / "timing.csv", [&](std::ostream& os) { write_timing_csv(os, result.log); });
  write_file(root / "interference.csv", [&](std::ostream& os) { write_interference_csv(os, result.log); });
  write_file(root / "workers.csv", [&](std::ostream& os) { write_workers_csv(os, result.log); });
  write_file(root / "final.ckpt", [&](std::ostream& os) { write_checkpoint(os, result.arch); });
}

BenchmarkResult benchmark_update_cost(const TrainConfig& cfg, long long updates, int block) {
  if (updates < 1 || block < 1) throw std::invalid_argument("benchmark_update_cost: counts must be positive");
  BenchmarkResult out;
  out.base = cfg.n_levels == 2 ? Estimator::OC : Estimator::HOC;
  out.unified = cfg.n_levels == 2 ? Estimator::OCPG : Estimator::HOCPG;
  out.updates = updates;

  struct Lane {
    TrainConfig cfg;
    TabularMDP mdp;
    OptionArchitecture arch;
    std::unique_ptr<RolloutWorker> worker;
    long long steps = 0;
    double seconds = 0.0;
  };
  auto make_lane = [&](Estimator e) {
    TrainConfig c = cfg;
    c.estimator = e;
    c.workers = 1;
    c.validate();
    TabularMDP mdp = make_env(c.env, c.update.gamma);
    OptionArchitecture arch(c.architecture(mdp), c.seed);
    auto lane = std::make_unique<Lane>(Lane{c, std::move(mdp), std::move(arch), nullptr});
    lane->worker = std::make_unique<RolloutWorker>(lane->mdp, lane->cfg, 0);
    return lane;
  };
  auto base = make_lane(out.base);
  auto unified = make_lane(out.unified);

  auto run_block = [](Lane& lane, long long n) {
    const double alpha = lane.cfg.alpha();
    const auto t0 = Clock::now();
    for (long long i = 0; i < n; ++i) {
      Segment seg = lane.worker->rollout(lane.arch);
      GradientVector g = segment_update(lane.arch, seg, lane.cfg, lane.cfg.eta_at(lane.steps));
      apply_gradients(lane.arch.store(), g, alpha);
      lane.steps += static_cast<long long>(seg.records.size());
    }
    lane.seconds += std::chrono::duration<double>(Clock::now() - t0).count();
  };
  for (long long done = 0; done < updates; done += block) {
    const long long n = std::min<long long>(block, updates - done);
    run_block(*base, n);
    run_block(*unified, n);
  }
  out.base_steps = base->steps;
  out.unified_steps = unified->steps;
  out.base_updates_per_sec = static_cast<double>(updates) / base->seconds;
  out.unified_updates_per_sec = static_cast<double>(updates) / unified->seconds;
  return out;
}

}  // namespace ocpg
