#include "ocpg/ocpg.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "analysis/run_analysis.hpp"
#include "autodiff/finite_diff.hpp"
#include "oracle/oracle.hpp"
#include "trainer/trainer.hpp"
#include "verify/suite.hpp"

struct ocpg_config {
  ocpg::TrainConfig cfg;
};
struct ocpg_mdp {
  ocpg::TabularMDP mdp;
};
struct ocpg_arch {
  ocpg::OptionArchitecture arch;
};
struct ocpg_run {
  ocpg::TrainResult result;
};
struct ocpg_report {
  std::vector<ocpg::SuiteResult> suites;
  std::string text;
};

namespace {

thread_local std::string g_last_error;

ocpg_status fail(ocpg_status code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

// Runs fn, mapping exceptions onto status codes.
template <typename F>
ocpg_status guarded(F&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const ocpg::ConfigError& e) {
    return fail(OCPG_ERR_CONFIG, e.what());
  } catch (const ocpg::DivergenceError& e) {
    return fail(OCPG_ERR_DIVERGENCE, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(OCPG_ERR_IO, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(OCPG_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::out_of_range& e) {
    return fail(OCPG_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    if (msg.rfind("cannot ", 0) == 0 || msg.rfind("error writing", 0) == 0) return fail(OCPG_ERR_IO, msg);
    return fail(OCPG_ERR_RUNTIME, msg);
  } catch (...) {
    return fail(OCPG_ERR_RUNTIME, "unknown error");
  }
}

#define OCPG_REQUIRE(cond, what) \
  if (!(cond)) return fail(OCPG_ERR_INVALID_ARGUMENT, what)

ocpg::Estimator to_estimator(ocpg_estimator e) {
  switch (e) {
    case OCPG_ESTIMATOR_OCPG: return ocpg::Estimator::OCPG;
    case OCPG_ESTIMATOR_HOCPG: return ocpg::Estimator::HOCPG;
    case OCPG_ESTIMATOR_OC: return ocpg::Estimator::OC;
    case OCPG_ESTIMATOR_HOC: return ocpg::Estimator::HOC;
  }
  throw std::invalid_argument("unknown estimator code");
}

ocpg_estimator from_estimator(ocpg::Estimator e) {
  switch (e) {
    case ocpg::Estimator::OCPG: return OCPG_ESTIMATOR_OCPG;
    case ocpg::Estimator::HOCPG: return OCPG_ESTIMATOR_HOCPG;
    case ocpg::Estimator::OC: return OCPG_ESTIMATOR_OC;
    case ocpg::Estimator::HOC: return OCPG_ESTIMATOR_HOC;
  }
  return OCPG_ESTIMATOR_OCPG;
}

}  // namespace

extern "C" {

const char* ocpg_version(void) { return "1.0.0"; }

const char* ocpg_last_error(void) { return g_last_error.c_str(); }

ocpg_status ocpg_config_new(ocpg_config** out) {
  OCPG_REQUIRE(out, "out is null");
  return guarded([&] {
    *out = new ocpg_config{};
    return OCPG_OK;
  });
}

ocpg_status ocpg_config_load(const char* path, ocpg_config** out) {
  OCPG_REQUIRE(path && out, "null argument");
  return guarded([&] {
    *out = new ocpg_config{ocpg::load_config(path)};
    return OCPG_OK;
  });
}

ocpg_status ocpg_config_parse(const char* text, ocpg_config** out) {
  OCPG_REQUIRE(text && out, "null argument");
  return guarded([&] {
    *out = new ocpg_config{ocpg::parse_config_text(text)};
    return OCPG_OK;
  });
}

ocpg_status ocpg_config_set(ocpg_config* cfg, const char* key, const char* value) {
  OCPG_REQUIRE(cfg && key && value, "null argument");
  return guarded([&] {
    ocpg::set_config_value(cfg->cfg, key, value);
    return OCPG_OK;
  });
}

ocpg_status ocpg_config_validate(const ocpg_config* cfg) {
  OCPG_REQUIRE(cfg, "config is null");
  return guarded([&] {
    cfg->cfg.validate();
    return OCPG_OK;
  });
}

ocpg_status ocpg_config_save(const ocpg_config* cfg, const char* path) {
  OCPG_REQUIRE(cfg && path, "null argument");
  return guarded([&] {
    std::ofstream os(path);
    if (!os) return fail(OCPG_ERR_IO, std::string("cannot write ") + path);
    ocpg::write_config(os, cfg->cfg);
    return OCPG_OK;
  });
}

void ocpg_config_free(ocpg_config* cfg) { delete cfg; }

ocpg_status ocpg_mdp_from_config(const ocpg_config* cfg, ocpg_mdp** out) {
  OCPG_REQUIRE(cfg && out, "null argument");
  return guarded([&] {
    *out = new ocpg_mdp{ocpg::make_env(cfg->cfg.env, cfg->cfg.update.gamma)};
    return OCPG_OK;
  });
}

ocpg_status ocpg_mdp_four_rooms(double slip, double gamma, ocpg_mdp** out) {
  OCPG_REQUIRE(out, "out is null");
  return guarded([&] {
    ocpg::FourRoomsOptions o;
    o.slip = slip;
    o.gamma = gamma;
    *out = new ocpg_mdp{ocpg::four_rooms(o)};
    return OCPG_OK;
  });
}

ocpg_status ocpg_mdp_random(uint64_t seed, int n_states, int n_actions, double gamma, ocpg_mdp** out) {
  OCPG_REQUIRE(out, "out is null");
  return guarded([&] {
    *out = new ocpg_mdp{ocpg::random_mdp(seed, n_states, n_actions, gamma)};
    return OCPG_OK;
  });
}

ocpg_status ocpg_mdp_load(const char* path, ocpg_mdp** out) {
  OCPG_REQUIRE(path && out, "null argument");
  return guarded([&] {
    *out = new ocpg_mdp{ocpg::load_mdp(path)};
    return OCPG_OK;
  });
}

ocpg_status ocpg_mdp_save(const ocpg_mdp* mdp, const char* path) {
  OCPG_REQUIRE(mdp && path, "null argument");
  return guarded([&] {
    ocpg::save_mdp(path, mdp->mdp);
    return OCPG_OK;
  });
}

int ocpg_mdp_num_states(const ocpg_mdp* mdp) { return mdp ? mdp->mdp.n_states : -1; }

int ocpg_mdp_num_actions(const ocpg_mdp* mdp) { return mdp ? mdp->mdp.n_actions : -1; }

ocpg_status ocpg_mdp_optimal_value(const ocpg_mdp* mdp, double* out) {
  OCPG_REQUIRE(mdp && out, "null argument");
  return guarded([&] {
    *out = ocpg::optimal_values(mdp->mdp)[static_cast<std::size_t>(mdp->mdp.s0)];
    return OCPG_OK;
  });
}

void ocpg_mdp_free(ocpg_mdp* mdp) { delete mdp; }

ocpg_status ocpg_arch_new(int n_states, int n_actions, int n_levels, const int* n_options, ocpg_layout layout,
                          int trunk_width, uint64_t init_seed, ocpg_arch** out) {
  OCPG_REQUIRE(out, "out is null");
  OCPG_REQUIRE(n_levels >= 2, "n_levels must be at least 2");
  OCPG_REQUIRE(n_options, "n_options is null");
  OCPG_REQUIRE(layout == OCPG_LAYOUT_TABULAR || layout == OCPG_LAYOUT_SHARED_TRUNK, "unknown layout");
  return guarded([&] {
    ocpg::ArchitectureSpec spec;
    spec.n_states = n_states;
    spec.n_actions = n_actions;
    spec.n_levels = n_levels;
    spec.n_options.assign(n_options, n_options + (n_levels - 1));
    spec.layout = layout == OCPG_LAYOUT_TABULAR ? ocpg::Layout::Tabular : ocpg::Layout::SharedTrunk;
    spec.trunk_width = trunk_width;
    *out = new ocpg_arch{ocpg::OptionArchitecture(spec, init_seed)};
    return OCPG_OK;
  });
}

ocpg_status ocpg_arch_load(const char* path, ocpg_arch** out) {
  OCPG_REQUIRE(path && out, "null argument");
  return guarded([&] {
    *out = new ocpg_arch{ocpg::load_checkpoint(path)};
    return OCPG_OK;
  });
}

ocpg_status ocpg_arch_save(const ocpg_arch* arch, const char* path) {
  OCPG_REQUIRE(arch && path, "null argument");
  return guarded([&] {
    ocpg::save_checkpoint(path, arch->arch);
    return OCPG_OK;
  });
}

ocpg_status ocpg_arch_randomize(ocpg_arch* arch, uint64_t seed, double scale) {
  OCPG_REQUIRE(arch, "arch is null");
  return guarded([&] {
    arch->arch.randomize(seed, scale);
    return OCPG_OK;
  });
}

size_t ocpg_arch_num_params(const ocpg_arch* arch) { return arch ? arch->arch.store().size() : 0; }

int ocpg_arch_num_levels(const ocpg_arch* arch) { return arch ? arch->arch.n_levels() : -1; }

ocpg_status ocpg_arch_get_params(const ocpg_arch* arch, double* out, size_t n) {
  OCPG_REQUIRE(arch && out, "null argument");
  OCPG_REQUIRE(n == arch->arch.store().size(), "buffer size must equal the parameter count");
  const auto th = arch->arch.store().theta();
  std::copy(th.begin(), th.end(), out);
  return OCPG_OK;
}

ocpg_status ocpg_arch_set_params(ocpg_arch* arch, const double* values, size_t n) {
  OCPG_REQUIRE(arch && values, "null argument");
  OCPG_REQUIRE(n == arch->arch.store().size(), "buffer size must equal the parameter count");
  auto th = arch->arch.store().theta();
  std::copy(values, values + n, th.begin());
  return OCPG_OK;
}

ocpg_status ocpg_arch_policy(const ocpg_arch* arch, int level, int s, const int* prefix, double* out, size_t n) {
  OCPG_REQUIRE(arch && out, "null argument");
  OCPG_REQUIRE(level >= 1 && level <= arch->arch.n_levels(), "level out of range");
  OCPG_REQUIRE(level == 1 || prefix, "prefix is null");
  OCPG_REQUIRE(n == static_cast<size_t>(arch->arch.n_choices(level)), "buffer size must equal the choice count");
  return guarded([&] {
    std::vector<int> pre(prefix, prefix + (level - 1));
    const auto p = arch->arch.policy_probs(level, s, pre);
    std::copy(p.begin(), p.end(), out);
    return OCPG_OK;
  });
}

void ocpg_arch_free(ocpg_arch* arch) { delete arch; }

ocpg_status ocpg_exact_return(const ocpg_arch* arch, const ocpg_mdp* mdp, double* out) {
  OCPG_REQUIRE(arch && mdp && out, "null argument");
  return guarded([&] {
    *out = ocpg::exact_return(arch->arch, mdp->mdp, ocpg::default_start(arch->arch, mdp->mdp));
    return OCPG_OK;
  });
}

ocpg_status ocpg_exact_gradient(const ocpg_arch* arch, const ocpg_mdp* mdp, ocpg_estimator estimator,
                                int flip_beta_term, double* out, size_t n) {
  OCPG_REQUIRE(arch && mdp && out, "null argument");
  OCPG_REQUIRE(n == arch->arch.store().size(), "buffer size must equal the parameter count");
  OCPG_REQUIRE(estimator == OCPG_ESTIMATOR_OCPG || estimator == OCPG_ESTIMATOR_HOCPG,
               "exact gradients exist for the unified estimators only");
  return guarded([&] {
    const auto start = ocpg::default_start(arch->arch, mdp->mdp);
    ocpg::ExactOptions o;
    o.flip_beta_term = flip_beta_term != 0;
    const auto g = estimator == OCPG_ESTIMATOR_OCPG ? ocpg::exact_ocpg_gradient(arch->arch, mdp->mdp, start, o)
                                                    : ocpg::exact_hocpg_gradient(arch->arch, mdp->mdp, start, o);
    std::copy(g.values.begin(), g.values.end(), out);
    return OCPG_OK;
  });
}

ocpg_status ocpg_finite_diff_gradient(const ocpg_arch* arch, const ocpg_mdp* mdp, double h, double* out, size_t n) {
  OCPG_REQUIRE(arch && mdp && out, "null argument");
  OCPG_REQUIRE(n == arch->arch.store().size(), "buffer size must equal the parameter count");
  OCPG_REQUIRE(h > 0.0, "step must be positive");
  return guarded([&] {
    const auto start = ocpg::default_start(arch->arch, mdp->mdp);
    ocpg::OptionArchitecture probe = arch->arch;
    auto fn = [&](const ocpg::ParameterStore& st) {
      std::copy(st.theta().begin(), st.theta().end(), probe.store().theta().begin());
      return ocpg::exact_return(probe, mdp->mdp, start);
    };
    const auto g = ocpg::finite_diff_relative(fn, arch->arch.store(), h);
    std::copy(g.values.begin(), g.values.end(), out);
    return OCPG_OK;
  });
}

ocpg_status ocpg_update_mass_map(const ocpg_arch* arch, const ocpg_mdp* mdp, int unified, double* out, size_t n) {
  OCPG_REQUIRE(arch && mdp && out, "null argument");
  OCPG_REQUIRE(n == static_cast<size_t>(mdp->mdp.n_states), "buffer size must equal the state count");
  return guarded([&] {
    const auto m = ocpg::update_mass_map(arch->arch, mdp->mdp, ocpg::default_start(arch->arch, mdp->mdp), unified != 0);
    std::copy(m.begin(), m.end(), out);
    return OCPG_OK;
  });
}

ocpg_status ocpg_verify(const char* only, int flip_beta_term, uint64_t seed, ocpg_report** out) {
  OCPG_REQUIRE(out, "out is null");
  return guarded([&] {
    ocpg::VerifyOptions o;
    o.flip_beta_term = flip_beta_term != 0;
    o.seed = seed;
    if (only && *only) {
      std::stringstream ss(only);
      std::string name;
      while (std::getline(ss, name, ',')) {
        if (!name.empty()) o.only.push_back(name);
      }
    }
    auto rep = std::make_unique<ocpg_report>();
    rep->suites = ocpg::run_verify(o);
    std::ostringstream os;
    ocpg::print_verify_table(os, rep->suites);
    rep->text = os.str();
    *out = rep.release();
    return OCPG_OK;
  });
}

int ocpg_report_passed(const ocpg_report* report) {
  if (!report) return 0;
  for (const auto& s : report->suites) {
    if (!s.passed) return 0;
  }
  return 1;
}

size_t ocpg_report_count(const ocpg_report* report) { return report ? report->suites.size() : 0; }

const char* ocpg_report_name(const ocpg_report* report, size_t i) {
  return report && i < report->suites.size() ? report->suites[i].name.c_str() : nullptr;
}

int ocpg_report_suite_passed(const ocpg_report* report, size_t i) {
  return report && i < report->suites.size() && report->suites[i].passed ? 1 : 0;
}

double ocpg_report_worst(const ocpg_report* report, size_t i) {
  return report && i < report->suites.size() ? report->suites[i].worst : 0.0;
}

double ocpg_report_tolerance(const ocpg_report* report, size_t i) {
  return report && i < report->suites.size() ? report->suites[i].tolerance : 0.0;
}

const char* ocpg_report_text(const ocpg_report* report) { return report ? report->text.c_str() : ""; }

void ocpg_report_free(ocpg_report* report) { delete report; }

ocpg_status ocpg_train(const ocpg_config* cfg, const char* out_dir, ocpg_run** out) {
  OCPG_REQUIRE(cfg && out, "null argument");
  return guarded([&] {
    ocpg::TrainHooks hooks;
    if (out_dir) {
      std::filesystem::create_directories(out_dir);
      if (cfg->cfg.checkpoint_every > 0) hooks.checkpoint_dir = std::string(out_dir) + "/checkpoints";
    }
    auto run = std::make_unique<ocpg_run>(ocpg_run{ocpg::train(cfg->cfg, hooks)});
    if (out_dir) ocpg::write_run(out_dir, cfg->cfg, run->result);
    *out = run.release();
    return OCPG_OK;
  });
}

size_t ocpg_run_num_evals(const ocpg_run* run) { return run ? run->result.log.evals.size() : 0; }

ocpg_status ocpg_run_eval(const ocpg_run* run, size_t i, int64_t* global_step, double* mean_return,
                          double* mean_discounted_return, double* steps_per_termination) {
  OCPG_REQUIRE(run, "run is null");
  OCPG_REQUIRE(i < run->result.log.evals.size(), "evaluation index out of range");
  const auto& e = run->result.log.evals[i];
  if (global_step) *global_step = e.global_step;
  if (mean_return) *mean_return = e.mean_return;
  if (mean_discounted_return) *mean_discounted_return = e.mean_discounted_return;
  if (steps_per_termination) *steps_per_termination = e.steps_per_termination.empty() ? 0.0 : e.steps_per_termination[0];
  return OCPG_OK;
}

int64_t ocpg_run_global_step(const ocpg_run* run) { return run ? run->result.log.global_step : 0; }

ocpg_status ocpg_run_arch(const ocpg_run* run, ocpg_arch** out) {
  OCPG_REQUIRE(run && out, "null argument");
  return guarded([&] {
    *out = new ocpg_arch{run->result.arch};
    return OCPG_OK;
  });
}

void ocpg_run_free(ocpg_run* run) { delete run; }

ocpg_status ocpg_bench(const ocpg_config* cfg, int64_t updates, int block, ocpg_bench_result* out) {
  OCPG_REQUIRE(cfg && out, "null argument");
  return guarded([&] {
    const auto r = ocpg::benchmark_update_cost(cfg->cfg, updates, block);
    out->base = from_estimator(r.base);
    out->unified = from_estimator(r.unified);
    out->updates = r.updates;
    out->base_steps = r.base_steps;
    out->unified_steps = r.unified_steps;
    out->base_updates_per_sec = r.base_updates_per_sec;
    out->unified_updates_per_sec = r.unified_updates_per_sec;
    out->ratio = r.ratio();
    return OCPG_OK;
  });
}

ocpg_status ocpg_analyze(const char* run_dir, const char* out_dir, uint64_t seed) {
  OCPG_REQUIRE(run_dir && out_dir, "null argument");
  return guarded([&] {
    ocpg::AnalysisOptions o;
    o.seed = seed;
    ocpg::analyze_run(run_dir, out_dir, o);
    return OCPG_OK;
  });
}

ocpg_status ocpg_write_doorway_maps(const char* out_dir) {
  OCPG_REQUIRE(out_dir, "null argument");
  return guarded([&] {
    ocpg::write_doorway_maps(out_dir);
    return OCPG_OK;
  });
}

}  // extern "C"
