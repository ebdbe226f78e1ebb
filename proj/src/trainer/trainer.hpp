#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "analysis/metrics.hpp"
#include "trainer/config.hpp"

namespace ocpg {

/// A parameter became non-finite, or a gradient did.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// θ ← θ + α g. Throws DivergenceError (leaving the store untouched) if g or
/// the result is non-finite.
void apply_gradients(ParameterStore& store, const GradientVector& g, double alpha);

/// Scales g to global L2 norm `max_norm` when it is larger. Returns the
/// norm before clipping.
double clip_global_norm(GradientVector& g, double max_norm);

/// Rollout of one segment.
struct Segment {
  std::vector<TransitionRecord> records;
  bool episode_ended = false;      // reached a terminal state or the step cap
  double episode_return = 0.0;     // valid when episode_ended
};

/// One learner thread's environment, RNG and option stack. Episodes continue
/// across segments.
class RolloutWorker {
 public:
  RolloutWorker(const TabularMDP& mdp, const TrainConfig& cfg, int worker_id);

  /// Acts with `arch` until t_max steps, the end of the episode, or a
  /// termination at any level once more than t_min steps were taken. Fills
  /// the n-step return of every record, bootstrapping from max_o Q(s', o).
  Segment rollout(const OptionArchitecture& arch);

  int id() const { return id_; }

 private:
  void reset(const OptionArchitecture& arch);

  const TabularMDP& mdp_;
  const TrainConfig& cfg_;
  int id_;
  Rng rng_;
  bool fresh_ = true;
  int s_ = 0;
  std::vector<int> options_;
  int episode_steps_ = 0;
  double episode_return_ = 0.0;
};

/// Clipped gradient of a segment at the given η.
GradientVector segment_update(const OptionArchitecture& arch, const Segment& seg, const TrainConfig& cfg,
                              double eta);

/// Sampled (not argmax) episodes with the current parameters, capped at
/// max_episode_steps. Termination flags are recorded at every arrival,
/// including the terminal one.
std::vector<Trajectory> evaluate(const OptionArchitecture& arch, const TabularMDP& mdp, int episodes,
                                 int max_steps, Rng& rng);

struct EvalRecord {
  long long global_step = 0;
  long long updates = 0;
  double eta = 0.0;
  double mean_return = 0.0;             // undiscounted
  double mean_discounted_return = 0.0;
  double mean_length = 0.0;
  std::vector<double> steps_per_termination;  // per option level
  double distinct_options = 0.0;
};

struct TimingRecord {
  long long global_step = 0;
  double seconds_per_update = 0.0;
};

struct InterferenceRecord {
  long long global_step = 0;
  std::vector<double> dots;
};

struct WorkerStats {
  long long segments = 0;
  long long steps = 0;
  double gradient_mass = 0.0;  // Σ ‖α g‖₁ over this worker's applications
};

struct RunLog {
  std::vector<EvalRecord> evals;
  std::vector<TimingRecord> timing;
  std::vector<InterferenceRecord> interference;
  std::vector<WorkerStats> workers;
  long long applications = 0;
  double applied_mass = 0.0;  // Σ ‖α g‖₁ observed by the store
  long long global_step = 0;
};

struct TrainResult {
  RunLog log;
  OptionArchitecture arch;
  TabularMDP mdp;
};

/// Optional hooks for writing checkpoints as training proceeds.
struct TrainHooks {
  std::string checkpoint_dir;  // empty: no intermediate checkpoints
};

/// Runs the learner threads until total_steps environment steps have been
/// applied. Gradient application is serialised; each worker computes from
/// a snapshot taken just before its rollout. Throws DivergenceError.
TrainResult train(const TrainConfig& cfg, const TrainHooks& hooks = {});

void write_runlog_csv(std::ostream& os, const RunLog& log, int option_levels);
void write_timing_csv(std::ostream& os, const RunLog& log);
void write_interference_csv(std::ostream& os, const RunLog& log);
void write_workers_csv(std::ostream& os, const RunLog& log);

/// Writes config.txt, runlog.csv, timing.csv, interference.csv, workers.csv
/// and final.ckpt to `dir`, creating it if needed.
void write_run(const std::string& dir, const TrainConfig& cfg, const TrainResult& result);

struct BenchmarkResult {
  Estimator base = Estimator::OC;
  Estimator unified = Estimator::OCPG;
  long long updates = 0;  // per estimator
  long long base_steps = 0;
  long long unified_steps = 0;
  double base_updates_per_sec = 0.0;
  double unified_updates_per_sec = 0.0;
  double ratio() const { return unified_updates_per_sec / base_updates_per_sec; }
};

/// Runs `updates` segment updates for the baseline and the unified
/// estimator on identical single-worker workloads, interleaving blocks of
/// `block` updates so slow drifts in machine load hit both alike.
BenchmarkResult benchmark_update_cost(const TrainConfig& cfg, long long updates, int block = 50);

}  // namespace ocpg
