#include "analysis/run_analysis.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "analysis/metrics.hpp"
#include "trainer/trainer.hpp"

namespace ocpg {

namespace {

namespace fs = std::filesystem;

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  return os;
}

void write_map(const fs::path& p, const TabularMDP& mdp, const std::vector<double>& map) {
  auto os = open_out(p);
  if (mdp.grid) {
    write_grid_csv(os, *mdp.grid, map);
  } else {
    os << "state,mass\n";
    for (std::size_t s = 0; s < map.size(); ++s) os << s << ',' << map[s] << '\n';
  }
}

}  // namespace

std::vector<std::string> analyze_run(const std::string& run_dir, const std::string& out_dir,
                                     const AnalysisOptions& opts) {
  const fs::path run(run_dir);
  const fs::path out(out_dir);
  const TrainConfig cfg = load_config((run / "config.txt").string());
  const TabularMDP mdp = make_env(cfg.env, cfg.update.gamma);
  const OptionArchitecture arch = load_checkpoint((run / "final.ckpt").string());
  if (arch.n_states() != mdp.n_states || arch.n_actions() != mdp.n_actions) {
    throw std::runtime_error("checkpoint does not match the run's environment");
  }
  fs::create_directories(out);
  std::vector<std::string> written;

  Rng rng(worker_seed(cfg.seed, 3000000 + opts.seed));
  const auto eps = evaluate(arch, mdp, opts.episodes, cfg.env.max_episode_steps, rng);
  std::vector<int> states;
  for (const auto& tr : eps) {
    for (const auto& st : tr.steps) states.push_back(st.s);
  }
  const int L = arch.n_levels() - 1;

  std::ostringstream summary;
  summary << std::setprecision(std::numeric_limits<double>::max_digits10);
  {
    auto os = open_out(out / "steps_per_termination.csv");
    os << "level,steps_per_termination\n";
    for (int l = 1; l <= L; ++l) {
      const double v = steps_per_termination(eps, l);
      os << l << ',' << v << '\n';
      summary << "steps_per_termination_" << l << ',' << v << '\n';
    }
    written.push_back((out / "steps_per_termination.csv").string());
  }
  {
    auto os = open_out(out / "distinct_options.csv");
    os << "episode,distinct_options\n";
    for (std::size_t i = 0; i < eps.size(); ++i) {
      os << i << ',' << distinct_options_per_episode(std::span<const Trajectory>(&eps[i], 1)) << '\n';
    }
    summary << "distinct_options," << distinct_options_per_episode(eps) << '\n';
    written.push_back((out / "distinct_options.csv").string());
  }
  {
    auto os = open_out(out / "pairwise_kl.csv");
    os << "states,pairwise_kl\n";
    const double kl = arch.stack_count() >= 2 ? pairwise_kl(arch, states) : 0.0;
    os << states.size() << ',' << kl << '\n';
    summary << "pairwise_kl," << kl << '\n';
    written.push_back((out / "pairwise_kl.csv").string());
  }
  {
    // Per-episode dot products logged during training.
    std::ifstream in(run / "interference.csv");
    if (!in) throw std::runtime_error("cannot read " + (run / "interference.csv").string());
    auto os = open_out(out / "gradient_interference.csv");
    std::string line;
    double total = 0.0;
    double positive = 0.0;
    std::size_t rows = 0;
    bool header = true;
    while (std::getline(in, line)) {
      os << line << '\n';
      if (header) {
        header = false;
        continue;
      }
      std::vector<std::string> cols;
      std::stringstream ls(line);
      std::string c;
      while (std::getline(ls, c, ',')) cols.push_back(c);
      if (cols.size() < 3) continue;
      total += std::stod(cols[cols.size() - 2]);
      positive += std::stod(cols.back());
      ++rows;
    }
    summary << "mean_dot," << (rows ? total / static_cast<double>(rows) : 0.0) << '\n'
            << "fraction_positive," << (rows ? positive / static_cast<double>(rows) : 0.0) << '\n';
    written.push_back((out / "gradient_interference.csv").string());
  }
  const AugmentedState start = default_start(arch, mdp);
  write_map(out / "update_mass_ocpg.csv", mdp, update_mass_map(arch, mdp, start, true));
  write_map(out / "update_mass_oc.csv", mdp, update_mass_map(arch, mdp, start, false));
  written.push_back((out / "update_mass_ocpg.csv").string());
  written.push_back((out / "update_mass_oc.csv").string());
  {
    auto os = open_out(out / "summary.csv");
    os << "metric,value\n" << summary.str();
    written.push_back((out / "summary.csv").string());
  }
  return written;
}

std::vector<std::string> write_doorway_maps(const std::string& out_dir) {
  const fs::path out(out_dir);
  fs::create_directories(out);
  const DoorwayFixture f = doorway_fixture();
  const OptionArchitecture arch = doorway_architecture(f);
  const AugmentedState start = default_start(arch, f.mdp);
  write_map(out / "doorway_ocpg.csv", f.mdp, update_mass_map(arch, f.mdp, start, true));
  write_map(out / "doorway_oc.csv", f.mdp, update_mass_map(arch, f.mdp, start, false));
  return {(out / "doorway_ocpg.csv").string(), (out / "doorway_oc.csv").string()};
}

}  // namespace ocpg
