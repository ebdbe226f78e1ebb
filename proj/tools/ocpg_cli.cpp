#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ocpg/ocpg.h"

namespace {

enum ExitCode { kOk = 0, kVerifyFailed = 1, kConfigError = 2, kDivergence = 3, kOtherError = 4 };

int report_error(ocpg_status st) {
  std::fprintf(stderr, "error: %s\n", ocpg_last_error());
  switch (st) {
    case OCPG_ERR_CONFIG:
    case OCPG_ERR_INVALID_ARGUMENT: return kConfigError;
    case OCPG_ERR_DIVERGENCE: return kDivergence;
    default: return kOtherError;
  }
}

struct ConfigFlags {
  std::string path;
  std::vector<std::string> sets;
  std::optional<unsigned long long> seed;
  std::optional<int> workers;

  void attach(CLI::App* app) {
    app->add_option("--config", path, "key=value config file");
    app->add_option("--set", sets, "override one key (key=value), repeatable")
        ->allow_extra_args(false)
        ->check([](const std::string& kv) {
          return kv.find('=') == std::string::npos ? std::string("expected key=value") : std::string();
        });
    app->add_option("--seed", seed, "run seed");
    app->add_option("--workers", workers, "number of rollout workers");
  }

  // Loads the file (or defaults) and applies the overrides in order.
  ocpg_status build(ocpg_config** out) const {
    ocpg_status st = path.empty() ? ocpg_config_new(out) : ocpg_config_load(path.c_str(), out);
    if (st != OCPG_OK) return st;
    auto set = [&](const std::string& k, const std::string& v) {
      return ocpg_config_set(*out, k.c_str(), v.c_str());
    };
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      st = set(kv.substr(0, eq), kv.substr(eq + 1));
      if (st != OCPG_OK) break;
    }
    if (st == OCPG_OK && seed) st = set("seed", std::to_string(*seed));
    if (st == OCPG_OK && workers) st = set("workers", std::to_string(*workers));
    if (st == OCPG_OK) st = ocpg_config_validate(*out);
    if (st != OCPG_OK) {
      ocpg_config_free(*out);
      *out = nullptr;
    }
    return st;
  }
};

int run_verify(const std::string& only, bool flip, unsigned long long seed) {
  ocpg_report* rep = nullptr;
  const ocpg_status st = ocpg_verify(only.empty() ? nullptr : only.c_str(), flip ? 1 : 0, seed, &rep);
  if (st != OCPG_OK) return report_error(st);
  std::fputs(ocpg_report_text(rep), stdout);
  const bool ok = ocpg_report_passed(rep) != 0;
  std::printf("%s\n", ok ? "all suites passed" : "verification FAILED");
  ocpg_report_free(rep);
  return ok ? kOk : kVerifyFailed;
}

int run_train(const ConfigFlags& flags, const std::string& out) {
  ocpg_config* cfg = nullptr;
  ocpg_status st = flags.build(&cfg);
  if (st != OCPG_OK) return report_error(st);
  ocpg_run* run = nullptr;
  st = ocpg_train(cfg, out.c_str(), &run);
  ocpg_config_free(cfg);
  if (st != OCPG_OK) return report_error(st);
  const size_t n = ocpg_run_num_evals(run);
  for (size_t i = 0; i < n; ++i) {
    int64_t step = 0;
    double ret = 0.0, disc = 0.0, spt = 0.0;
    ocpg_run_eval(run, i, &step, &ret, &disc, &spt);
    std::printf("step %10lld  return %8.4f  discounted %8.4f  steps/termination %8.3f\n",
                static_cast<long long>(step), ret, disc, spt);
  }
  std::printf("wrote %s\n", out.c_str());
  ocpg_run_free(run);
  return kOk;
}

int run_bench(const ConfigFlags& flags, long long updates, int block, const std::string& out) {
  ocpg_config* cfg = nullptr;
  ocpg_status st = flags.build(&cfg);
  if (st != OCPG_OK) return report_error(st);
  ocpg_bench_result r{};
  st = ocpg_bench(cfg, updates, block, &r);
  ocpg_config_free(cfg);
  if (st != OCPG_OK) return report_error(st);
  const bool hier = r.unified == OCPG_ESTIMATOR_HOCPG;
  const char* base = hier ? "hoc" : "oc";
  const char* unified = hier ? "hocpg" : "ocpg";
  std::printf("%s_updates_per_sec %.3f\n", unified, r.unified_updates_per_sec);
  std::printf("%s_updates_per_sec %.3f\n", base, r.base_updates_per_sec);
  std::printf("ratio %.4f\n", r.ratio);
  if (!out.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    std::ofstream os(std::filesystem::path(out) / "bench.csv");
    if (!os) {
      std::fprintf(stderr, "error: cannot write %s/bench.csv\n", out.c_str());
      return kOtherError;
    }
    os << "estimator,updates,env_steps,updates_per_sec\n";
    os << unified << ',' << r.updates << ',' << r.unified_steps << ',' << r.unified_updates_per_sec << '\n';
    os << base << ',' << r.updates << ',' << r.base_steps << ',' << r.base_updates_per_sec << '\n';
  }
  return kOk;
}

int run_analyze(const std::string& run_dir, std::string out, bool doorway, unsigned long long seed) {
  if (doorway) {
    if (out.empty()) out = run_dir.empty() ? "." : run_dir;
    const ocpg_status st = ocpg_write_doorway_maps(out.c_str());
    if (st != OCPG_OK) return report_error(st);
    std::printf("wrote %s/doorway_ocpg.csv and %s/doorway_oc.csv\n", out.c_str(), out.c_str());
    return kOk;
  }
  if (run_dir.empty()) {
    std::fprintf(stderr, "error: analyze needs a run directory (or --doorway)\n");
    return kConfigError;
  }
  if (out.empty()) out = (std::filesystem::path(run_dir) / "analysis").string();
  const ocpg_status st = ocpg_analyze(run_dir.c_str(), out.c_str(), seed);
  if (st != OCPG_OK) return report_error(st);
  std::printf("wrote %s\n", out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Option-critic policy gradients: verification, training and analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ocpg_version()));

  auto* verify = app.add_subcommand("verify", "run the exact-oracle verification suites");
  std::string only;
  bool flip = false;
  unsigned long long verify_seed = 0;
  verify->add_option("--only", only, "comma-separated suite names");
  verify->add_option("--seed", verify_seed, "offset for every instance seed");
  verify->add_flag("--flip-beta-term", flip, "debug: flip the sign of the termination term");

  auto* train = app.add_subcommand("train", "train a learner and write the run directory");
  ConfigFlags train_flags;
  std::string train_out;
  train_flags.attach(train);
  train->add_option("--out", train_out, "run directory")->required();

  auto* bench = app.add_subcommand("bench", "compare update throughput of the unified and baseline learners");
  ConfigFlags bench_flags;
  long long updates = 2000;
  int block = 50;
  std::string bench_out;
  bench_flags.attach(bench);
  bench->add_option("--updates", updates, "updates per learner")->check(CLI::PositiveNumber);
  bench->add_option("--block", block, "updates per interleaved block")->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out, "directory for bench.csv");

  auto* analyze = app.add_subcommand("analyze", "emit metric files for a finished run");
  std::string run_dir;
  std::string analyze_out;
  bool doorway = false;
  unsigned long long analyze_seed = 0;
  analyze->add_option("run_dir", run_dir, "run directory written by train");
  analyze->add_option("--out", analyze_out, "output directory (default RUN_DIR/analysis)");
  analyze->add_option("--seed", analyze_seed, "seed for the re-evaluation episodes");
  analyze->add_flag("--doorway", doorway, "write the doorway fixture update-mass maps instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (verify->parsed()) return run_verify(only, flip, verify_seed);
  if (train->parsed()) return run_train(train_flags, train_out);
  if (bench->parsed()) return run_bench(bench_flags, updates, block, bench_out);
  return run_analyze(run_dir, analyze_out, doorway, analyze_seed);
}
