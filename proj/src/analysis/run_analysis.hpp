#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ocpg {

struct AnalysisOptions {
  int episodes = 20;          // evaluation episodes whose states feed the KL sample
  std::uint64_t seed = 0;     // RNG for those episodes
};

/// Reads config.txt, final.ckpt and interference.csv from a finished run and
/// writes steps_per_termination.csv, distinct_options.csv, pairwise_kl.csv,
/// gradient_interference.csv and the two update-mass maps (grid-shaped when
/// the environment is a gridworld) into `out_dir`. Returns the files written.
std::vector<std::string> analyze_run(const std::string& run_dir, const std::string& out_dir,
                                     const AnalysisOptions& opts = {});

/// Writes doorway_ocpg.csv and doorway_oc.csv for the two-room fixture.
std::vector<std::string> write_doorway_maps(const std::string& out_dir);

}  // namespace ocpg
