#include "trainer/config.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace ocpg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& v, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(v);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

std::vector<EtaPoint> parse_schedule(const std::string& key, const std::string& v) {
  std::vector<EtaPoint> out;
  if (v.empty() || v == "none") return out;
  for (const auto& item : split(v, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("config: '" + key + "' entries look like step:eta or 25%:eta");
    EtaPoint p;
    std::string at = trim(item.substr(0, colon));
    if (!at.empty() && at.back() == '%') {
      p.fraction = true;
      at.pop_back();
      p.at = parse_number<double>(key, at) / 100.0;
    } else {
      p.at = parse_number<double>(key, at);
    }
    p.eta = parse_number<double>(key, trim(item.substr(colon + 1)));
    out.push_back(p);
  }
  return out;
}

double threshold(const EtaPoint& p, long long total) {
  return p.fraction ? p.at * static_cast<double>(total) : p.at;
}

}  // namespace

void TrainConfig::validate() const {
  if (n_levels < 2) throw ConfigError("config: n_levels must be at least 2");
  if (static_cast<int>(n_options.size()) != n_levels - 1) {
    throw ConfigError("config: n_options needs one count per option level (" + std::to_string(n_levels - 1) + ")");
  }
  for (int k : n_options) {
    if (k < 1) throw ConfigError("config: option counts must be positive");
  }
  if ((estimator == Estimator::OCPG || estimator == Estimator::OC) && n_levels != 2) {
    throw ConfigError(std::string("config: estimator ") + estimator_name(estimator) + " needs n_levels = 2");
  }
  if (trunk_width < 1) throw ConfigError("config: trunk_width must be positive");
  if (total_steps < 1) throw ConfigError("config: total_steps must be positive");
  if (workers < 1) throw ConfigError("config: workers must be at least 1");
  if (t_max < 1 || t_min < 0 || t_min >= t_max) throw ConfigError("config: need 0 <= t_min < t_max");
  if (!(clip > 0.0)) throw ConfigError("config: clip must be positive");
  if (eval_every < 1) throw ConfigError("config: eval_every must be positive");
  if (eval_episodes < 1) throw ConfigError("config: eval_episodes must be positive");
  if (checkpoint_every < 0) throw ConfigError("config: checkpoint_every must be non-negative");
  if (env.max_episode_steps < 1) throw ConfigError("config: max_episode_steps must be positive");
  try {
    UpdateConfig u = update;
    u.alpha = alpha();
    u.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  double last = -1.0;
  for (const auto& p : eta_schedule) {
    const double at = threshold(p, total_steps);
    if (!(at > last)) throw ConfigError("config: eta_schedule thresholds must be strictly increasing");
    if (!(p.eta >= 0.0)) throw ConfigError("config: eta_schedule values must be non-negative");
    last = at;
  }
}

ArchitectureSpec TrainConfig::architecture(const TabularMDP& mdp) const {
  ArchitectureSpec spec;
  spec.n_states = mdp.n_states;
  spec.n_actions = mdp.n_actions;
  spec.n_levels = n_levels;
  spec.n_options = n_options;
  spec.layout = layout;
  spec.trunk_width = trunk_width;
  return spec;
}

double TrainConfig::eta_at(long long global_step) const {
  double eta = update.eta;
  for (const auto& p : eta_schedule) {
    if (static_cast<double>(global_step) >= threshold(p, total_steps)) eta = p.eta;
  }
  return eta;
}

double TrainConfig::alpha() const {
  if (alpha_set) return update.alpha;
  return layout == Layout::Tabular ? 1e-3 : 1e-4;
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  auto& e = cfg.env;
  try {
    if (key == "env") e.kind = v;
    else if (key == "slip") e.slip = parse_number<double>(key, v);
    else if (key == "goal_row") e.goal_row = parse_number<int>(key, v);
    else if (key == "goal_col") e.goal_col = parse_number<int>(key, v);
    else if (key == "start_row") e.start_row = parse_number<int>(key, v);
    else if (key == "start_col") e.start_col = parse_number<int>(key, v);
    else if (key == "chain_states") e.chain_states = parse_number<int>(key, v);
    else if (key == "random_states") e.random_states = parse_number<int>(key, v);
    else if (key == "random_actions") e.random_actions = parse_number<int>(key, v);
    else if (key == "env_seed") e.env_seed = parse_number<std::uint64_t>(key, v);
    else if (key == "env_path") e.path = v;
    else if (key == "max_episode_steps") e.max_episode_steps = parse_number<int>(key, v);
    else if (key == "n_levels") cfg.n_levels = parse_number<int>(key, v);
    else if (key == "n_options") {
      cfg.n_options.clear();
      for (const auto& item : split(v, ',')) cfg.n_options.push_back(parse_number<int>(key, item));
    } else if (key == "layout") cfg.layout = parse_layout(v);
    else if (key == "trunk_width") cfg.trunk_width = parse_number<int>(key, v);
    else if (key == "estimator") cfg.estimator = parse_estimator(v);
    else if (key == "total_steps") cfg.total_steps = static_cast<long long>(parse_number<double>(key, v));
    else if (key == "workers") cfg.workers = parse_number<int>(key, v);
    else if (key == "t_max") cfg.t_max = parse_number<int>(key, v);
    else if (key == "t_min") cfg.t_min = parse_number<int>(key, v);
    else if (key == "alpha") {
      cfg.update.alpha = parse_number<double>(key, v);
      cfg.alpha_set = true;
    } else if (key == "alpha_v") cfg.update.alpha_v = parse_number<double>(key, v);
    else if (key == "eta") cfg.update.eta = parse_number<double>(key, v);
    else if (key == "gamma") cfg.update.gamma = parse_number<double>(key, v);
    else if (key == "entropy") cfg.update.entropy = parse_number<double>(key, v);
    else if (key == "clip") cfg.clip = parse_number<double>(key, v);
    else if (key == "eta_schedule") cfg.eta_schedule = parse_schedule(key, v);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "eval_every") cfg.eval_every = static_cast<long long>(parse_number<double>(key, v));
    else if (key == "eval_episodes") cfg.eval_episodes = parse_number<int>(key, v);
    else if (key == "checkpoint_every") cfg.checkpoint_every = static_cast<long long>(parse_number<double>(key, v));
    else if (key == "interference") cfg.interference = parse_bool(key, v);
    else if (key == "interference_full") cfg.interference_full = parse_bool(key, v);
    else throw ConfigError("config: unknown key '" + key + "'");
  } catch (const std::invalid_argument& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set_config_value(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

TrainConfig parse_config(std::istream& is, TrainConfig base) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    try {
      set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

TrainConfig parse_config_text(const std::string& text, TrainConfig base) {
  std::istringstream is(text);
  return parse_config(is, std::move(base));
}

TrainConfig load_config(const std::string& path, TrainConfig base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  return parse_config(is, std::move(base));
}

void write_config(std::ostream& os, const TrainConfig& cfg) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  const auto& e = cfg.env;
  os << "env = " << e.kind << '\n'
     << "slip = " << e.slip << '\n'
     << "goal_row = " << e.goal_row << '\n'
     << "goal_col = " << e.goal_col << '\n'
     << "start_row = " << e.start_row << '\n'
     << "start_col = " << e.start_col << '\n'
     << "chain_states = " << e.chain_states << '\n'
     << "random_states = " << e.random_states << '\n'
     << "random_actions = " << e.random_actions << '\n'
     << "env_seed = " << e.env_seed << '\n';
  if (!e.path.empty()) os << "env_path = " << e.path << '\n';
  os << "max_episode_steps = " << e.max_episode_steps << '\n'
     << "n_levels = " << cfg.n_levels << '\n'
     << "n_options = ";
  for (std::size_t i = 0; i < cfg.n_options.size(); ++i) os << (i ? "," : "") << cfg.n_options[i];
  os << '\n'
     << "layout = " << layout_name(cfg.layout) << '\n'
     << "trunk_width = " << cfg.trunk_width << '\n'
     << "estimator = " << estimator_name(cfg.estimator) << '\n'
     << "total_steps = " << cfg.total_steps << '\n'
     << "workers = " << cfg.workers << '\n'
     << "t_max = " << cfg.t_max << '\n'
     << "t_min = " << cfg.t_min << '\n';
  if (cfg.alpha_set) os << "alpha = " << cfg.update.alpha << '\n';
  os << "alpha_v = " << cfg.update.alpha_v << '\n'
     << "eta = " << cfg.update.eta << '\n'
     << "gamma = " << cfg.update.gamma << '\n'
     << "entropy = " << cfg.update.entropy << '\n'
     << "clip = " << cfg.clip << '\n'
     << "eta_schedule = ";
  if (cfg.eta_schedule.empty()) os << "none";
  for (std::size_t i = 0; i < cfg.eta_schedule.size(); ++i) {
    const auto& p = cfg.eta_schedule[i];
    os << (i ? "," : "");
    if (p.fraction) os << p.at * 100.0 << '%';
    else os << static_cast<long long>(p.at);
    os << ':' << p.eta;
  }
  os << '\n'
     << "seed = " << cfg.seed << '\n'
     << "eval_every = " << cfg.eval_every << '\n'
     << "eval_episodes = " << cfg.eval_episodes << '\n'
     << "checkpoint_every = " << cfg.checkpoint_every << '\n'
     << "interference = " << (cfg.interference ? "true" : "false") << '\n'
     << "interference_full = " << (cfg.interference_full ? "true" : "false") << '\n';
}

TabularMDP make_env(const EnvSpec& env, double gamma) {
  try {
    if (env.kind == "four_rooms") {
      FourRoomsOptions o;
      o.slip = env.slip;
      o.goal_row = env.goal_row;
      o.goal_col = env.goal_col;
      o.start_row = env.start_row;
      o.start_col = env.start_col;
      o.gamma = gamma;
      return four_rooms(o);
    }
    if (env.kind == "chain") return chain_mdp(env.chain_states, env.slip, gamma);
    if (env.kind == "random") return random_mdp(env.env_seed, env.random_states, env.random_actions, gamma);
    if (env.kind == "file") {
      if (env.path.empty()) throw ConfigError("config: env = file needs env_path");
      TabularMDP m = load_mdp(env.path);
      m.gamma = gamma;
      return m;
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  throw ConfigError("config: unknown env '" + env.kind + "' (expected four_rooms, chain, random or file)");
}

}  // namespace ocpg
