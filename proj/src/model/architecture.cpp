#include "model/architecture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ocpg {

const char* layout_name(Layout layout) {
  return layout == Layout::Tabular ? "tabular" : "shared_trunk";
}

Layout parse_layout(const std::string& name) {
  if (name == "tabular") return Layout::Tabular;
  if (name == "shared_trunk" || name == "shared") return Layout::SharedTrunk;
  throw std::invalid_argument("unknown layout '" + name + "' (expected tabular or shared_trunk)");
}

namespace {

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void softmax_inplace(std::span<double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : v) x /= z;
}

}  // namespace

OptionArchitecture::OptionArchitecture(ArchitectureSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
  const int N = spec_.n_levels;
  if (N < 2) throw std::invalid_argument("option architecture needs at least 2 levels");
  if (static_cast<int>(spec_.n_options.size()) != N - 1) {
    throw std::invalid_argument("need one option count per level 1..N-1");
  }
  if (spec_.n_states < 1 || spec_.n_actions < 1) throw std::invalid_argument("empty state or action space");
  for (int k : spec_.n_options) {
    if (k < 1) throw std::invalid_argument("every level needs at least one option");
  }
  const auto S = static_cast<std::size_t>(spec_.n_states);
  policy_.resize(static_cast<std::size_t>(N));
  beta_.resize(static_cast<std::size_t>(N - 1));
  q_.resize(static_cast<std::size_t>(N - 1));

  if (spec_.layout == Layout::Tabular) {
    for (int l = 1; l <= N; ++l) {
      auto& h = policy_[static_cast<std::size_t>(l - 1)];
      h.rows = static_cast<std::size_t>(n_choices(l));
      h.weight = store_.allocate("pi" + std::to_string(l), S * prefix_count(l - 1) * h.rows);
      store_.attach("pi" + std::to_string(l), "pi" + std::to_string(l));
    }
    for (int l = 1; l < N; ++l) {
      auto& b = beta_[static_cast<std::size_t>(l - 1)];
      b.rows = 1;
      b.weight = store_.allocate("beta" + std::to_string(l), S * prefix_count(l));
      store_.attach("beta" + std::to_string(l), "beta" + std::to_string(l));
      auto& q = q_[static_cast<std::size_t>(l - 1)];
      q.rows = 1;
      q.weight = store_.allocate("q" + std::to_string(l), S * prefix_count(l));
      store_.attach("q" + std::to_string(l), "q" + std::to_string(l));
    }
    return;
  }

  if (spec_.trunk_width < 1) throw std::invalid_argument("trunk width must be positive");
  const auto H = static_cast<std::size_t>(spec_.trunk_width);
  const std::size_t D = trunk_input_size();
  trunk_w_ = store_.allocate("trunk.w", H * D);
  trunk_b_ = store_.allocate("trunk.b", H);
  std::vector<std::string> components;
  auto add_head = [&](HeadOffsets& h, const std::string& name, std::size_t rows) {
    h.rows = rows;
    h.weight = store_.allocate(name + ".w", rows * H);
    h.bias = store_.allocate(name + ".b", rows);
    store_.attach(name, name + ".w");
    store_.attach(name, name + ".b");
    store_.attach(name, "trunk.w");
    store_.attach(name, "trunk.b");
  };
  for (int l = 1; l <= N; ++l) {
    add_head(policy_[static_cast<std::size_t>(l - 1)], "pi" + std::to_string(l),
             static_cast<std::size_t>(n_choices(l)));
  }
  for (int l = 1; l < N; ++l) {
    add_head(beta_[static_cast<std::size_t>(l - 1)], "beta" + std::to_string(l), 1);
    add_head(q_[static_cast<std::size_t>(l - 1)], "q" + std::to_string(l), 1);
  }
  store_.attach("trunk", "trunk.w");
  store_.attach("trunk", "trunk.b");

  // uniform(−1/√fan_in, 1/√fan_in), trunk fan-in D, head fan-in H.
  Rng rng(init_seed);
  auto fill = [&](std::size_t offset, std::size_t n, double bound) {
    for (std::size_t i = 0; i < n; ++i) store_[offset + i] = (2.0 * rng.uniform() - 1.0) * bound;
  };
  const double trunk_bound = 1.0 / std::sqrt(static_cast<double>(D));
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(H));
  fill(trunk_w_, H * D, trunk_bound);
  fill(trunk_b_, H, trunk_bound);
  for (const auto& s : store_.slices()) {
    if (s.name.rfind("trunk", 0) == 0) continue;
    fill(s.offset, s.size, head_bound);
  }
}

int OptionArchitecture::n_options(int level) const {
  if (level < 1 || level >= n_levels()) throw std::out_of_range("option level " + std::to_string(level));
  return spec_.n_options[static_cast<std::size_t>(level - 1)];
}

int OptionArchitecture::n_choices(int level) const {
  if (level == n_levels()) return n_actions();
  return n_options(level);
}

std::size_t OptionArchitecture::prefix_count(int len) const {
  std::size_t n = 1;
  for (int l = 1; l <= len; ++l) n *= static_cast<std::size_t>(n_options(l));
  return n;
}

std::size_t OptionArchitecture::prefix_index(std::span<const int> prefix) const {
  std::size_t idx = 0;
  for (std::size_t l = 0; l < prefix.size(); ++l) {
    const int k = n_options(static_cast<int>(l) + 1);
    if (prefix[l] < 0 || prefix[l] >= k) {
      throw std::out_of_range("option " + std::to_string(prefix[l]) + " at level " + std::to_string(l + 1));
    }
    idx = idx * static_cast<std::size_t>(k) + static_cast<std::size_t>(prefix[l]);
  }
  return idx;
}

std::vector<int> OptionArchitecture::prefix_from_index(std::size_t index, int len) const {
  std::vector<int> out(static_cast<std::size_t>(len));
  for (int l = len; l >= 1; --l) {
    const auto k = static_cast<std::size_t>(n_options(l));
    out[static_cast<std::size_t>(l - 1)] = static_cast<int>(index % k);
    index /= k;
  }
  return out;
}

std::size_t OptionArchitecture::trunk_input_size() const {
  std::size_t d = static_cast<std::size_t>(n_states());
  for (int k : spec_.n_options) d += static_cast<std::size_t>(k);
  return d;
}

std::size_t OptionArchitecture::option_feature(int level, int o) const {
  std::size_t off = static_cast<std::size_t>(n_states());
  for (int l = 1; l < level; ++l) off += static_cast<std::size_t>(n_options(l));
  return off + static_cast<std::size_t>(o);
}

void OptionArchitecture::check_context(int level, int s, std::span<const int> prefix, int expected_len) const {
  if (level < 1 || level > n_levels()) throw std::out_of_range("level " + std::to_string(level));
  if (s < 0 || s >= n_states()) throw std::out_of_range("state " + std::to_string(s));
  if (static_cast<int>(prefix.size()) != expected_len) {
    throw std::invalid_argument("level " + std::to_string(level) + " expects a prefix of length " +
                                std::to_string(expected_len) + ", got " + std::to_string(prefix.size()));
  }
  (void)prefix_index(prefix);
}

std::size_t OptionArchitecture::tabular_policy_index(int level, int s, std::span<const int> prefix,
                                                     int choice) const {
  const auto& h = policy_head(level);
  const std::size_t row = static_cast<std::size_t>(s) * prefix_count(level - 1) + prefix_index(prefix);
  return h.weight + row * h.rows + static_cast<std::size_t>(choice);
}

std::size_t OptionArchitecture::tabular_termination_index(int level, int s, std::span<const int> prefix) const {
  return termination_head(level).weight + static_cast<std::size_t>(s) * prefix_count(level) + prefix_index(prefix);
}

std::size_t OptionArchitecture::tabular_critic_index(int level, int s, std::span<const int> prefix) const {
  return critic_head(level).weight + static_cast<std::size_t>(s) * prefix_count(level) + prefix_index(prefix);
}

void OptionArchitecture::hidden(int s, std::span<const int> prefix, std::span<double> h) const {
  const auto H = static_cast<std::size_t>(spec_.trunk_width);
  const std::size_t D = trunk_input_size();
  for (std::size_t j = 0; j < H; ++j) {
    const double* row = store_.theta().data() + trunk_w_ + j * D;
    double z = store_[trunk_b_ + j] + row[s];
    for (std::size_t l = 0; l < prefix.size(); ++l) z += row[option_feature(static_cast<int>(l) + 1, prefix[l])];
    h[j] = std::tanh(z);
  }
}

double OptionArchitecture::head_scalar(const HeadOffsets& head, std::span<const double> h) const {
  double z = store_[head.bias];
  for (std::size_t j = 0; j < h.size(); ++j) z += store_[head.weight + j] * h[j];
  return z;
}

void OptionArchitecture::policy_probs(int level, int s, std::span<const int> prefix, std::span<double> out) const {
  check_context(level, s, prefix, level - 1);
  const auto& head = policy_head(level);
  if (out.size() != head.rows) throw std::invalid_argument("policy_probs: output has wrong size");
  if (layout() == Layout::Tabular) {
    const std::size_t base = tabular_policy_index(level, s, prefix, 0);
    for (std::size_t i = 0; i < head.rows; ++i) out[i] = store_[base + i];
  } else {
    std::vector<double> h(static_cast<std::size_t>(spec_.trunk_width));
    hidden(s, prefix, h);
    for (std::size_t i = 0; i < head.rows; ++i) {
      double z = store_[head.bias + i];
      const std::size_t w = head.weight + i * h.size();
      for (std::size_t j = 0; j < h.size(); ++j) z += store_[w + j] * h[j];
      out[i] = z;
    }
  }
  softmax_inplace(out);
}

std::vector<double> OptionArchitecture::policy_probs(int level, int s, std::span<const int> prefix) const {
  std::vector<double> out(static_cast<std::size_t>(n_choices(level)));
  policy_probs(level, s, prefix, out);
  return out;
}

double OptionArchitecture::termination_prob(int level, int s, std::span<const int> prefix) const {
  if (level >= n_levels()) throw std::out_of_range("termination level must be below N");
  check_context(level, s, prefix, level);
  if (layout() == Layout::Tabular) return sigmoid(store_[tabular_termination_index(level, s, prefix)]);
  std::vector<double> h(static_cast<std::size_t>(spec_.trunk_width));
  hidden(s, prefix, h);
  return sigmoid(head_scalar(termination_head(level), h));
}

double OptionArchitecture::q_value(int level, int s, std::span<const int> prefix) const {
  if (level >= n_levels()) throw std::out_of_range("critic level must be below N");
  check_context(level, s, prefix, level);
  if (layout() == Layout::Tabular) return store_[tabular_critic_index(level, s, prefix)];
  std::vector<double> h(static_cast<std::size_t>(spec_.trunk_width));
  hidden(s, prefix, h);
  return head_scalar(critic_head(level), h);
}

void OptionArchitecture::randomize(std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (double& x : store_.theta()) x = (2.0 * rng.uniform() - 1.0) * scale;
}

std::vector<int> sample_options(const OptionArchitecture& arch, int s, Rng& rng) {
  std::vector<int> stack;
  stack.reserve(static_cast<std::size_t>(arch.n_levels() - 1));
  for (int l = 1; l < arch.n_levels(); ++l) {
    const auto probs = arch.policy_probs(l, s, stack);
    stack.push_back(static_cast<int>(rng.categorical(probs)));
  }
  return stack;
}

int sample_action(const OptionArchitecture& arch, int s, std::span<const int> options, Rng& rng) {
  const auto probs = arch.policy_probs(arch.n_levels(), s, options);
  return static_cast<int>(rng.categorical(probs));
}

namespace {

// Keeps prefix[0..keep) and redraws levels keep+1..upto top-down.
std::vector<int> redraw(const OptionArchitecture& arch, int s, std::span<const int> prefix, int keep, int upto,
                        Rng& rng) {
  std::vector<int> out(prefix.begin(), prefix.begin() + keep);
  for (int l = keep + 1; l <= upto; ++l) {
    const auto probs = arch.policy_probs(l, s, out);
    out.push_back(static_cast<int>(rng.categorical(probs)));
  }
  return out;
}

}  // namespace

TerminationOutcome terminate_and_reselect(const OptionArchitecture& arch, int s, std::span<const int> options,
                                          Rng& rng) {
  const int L = arch.n_levels() - 1;
  if (static_cast<int>(options.size()) != L) throw std::invalid_argument("option stack has wrong depth");
  // One coin per level, drawn bottom-up; coin[l-1] decides level l if reached.
  std::vector<bool> coin(static_cast<std::size_t>(L));
  for (int l = L; l >= 1; --l) {
    const double b = arch.termination_prob(l, s, options.first(static_cast<std::size_t>(l)));
    coin[static_cast<std::size_t>(l - 1)] = rng.bernoulli(b);
  }
  // Highest kept level below `limit` (0 if every level below it ends).
  auto kept_below = [&](int limit) {
    for (int j = limit - 1; j >= 1; --j) {
      if (!coin[static_cast<std::size_t>(j - 1)]) return j;
    }
    return 0;
  };
  TerminationOutcome out;
  const int keep = kept_below(L + 1);
  out.terminated.assign(static_cast<std::size_t>(L), false);
  for (int l = keep + 1; l <= L; ++l) out.terminated[static_cast<std::size_t>(l - 1)] = true;
  out.options = redraw(arch, s, options, keep, L, rng);

  out.reselection.resize(static_cast<std::size_t>(L));
  for (int l = 1; l <= L; ++l) {
    if (keep < l) {
      out.reselection[static_cast<std::size_t>(l - 1)].assign(out.options.begin(), out.options.begin() + l);
    } else {
      out.reselection[static_cast<std::size_t>(l - 1)] = redraw(arch, s, options, kept_below(l), l, rng);
    }
  }
  return out;
}

ActResult act(const OptionArchitecture& arch, const AugmentedState& state, Rng& rng) {
  ActResult out;
  out.termination = terminate_and_reselect(arch, state.s, state.options, rng);
  out.action = sample_action(arch, state.s, out.termination.options, rng);
  return out;
}

void write_checkpoint(std::ostream& os, const OptionArchitecture& arch) {
  const auto& spec = arch.spec();
  os << "layout " << layout_name(spec.layout) << '\n';
  os << "n_states " << spec.n_states << '\n';
  os << "n_actions " << spec.n_actions << '\n';
  os << "n_levels " << spec.n_levels << '\n';
  os << "n_options";
  for (int k : spec.n_options) os << ' ' << k;
  os << '\n';
  os << "trunk_width " << spec.trunk_width << '\n';
  os << "params " << arch.store().size() << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (double x : arch.store().theta()) os << x << '\n';
}

OptionArchitecture read_checkpoint(std::istream& is) {
  ArchitectureSpec spec;
  std::string key;
  std::size_t n_params = 0;
  bool have_params = false;
  while (!have_params && is >> key) {
    if (key == "layout") {
      std::string v;
      is >> v;
      spec.layout = parse_layout(v);
    } else if (key == "n_states") {
      is >> spec.n_states;
    } else if (key == "n_actions") {
      is >> spec.n_actions;
    } else if (key == "n_levels") {
      is >> spec.n_levels;
    } else if (key == "n_options") {
      spec.n_options.resize(static_cast<std::size_t>(std::max(0, spec.n_levels - 1)));
      for (int& k : spec.n_options) is >> k;
    } else if (key == "trunk_width") {
      is >> spec.trunk_width;
    } else if (key == "params") {
      is >> n_params;
      have_params = true;
    } else {
      throw std::invalid_argument("checkpoint: unknown header key '" + key + "'");
    }
    if (!is) throw std::invalid_argument("checkpoint: malformed value for '" + key + "'");
  }
  if (!have_params) throw std::invalid_argument("checkpoint: missing params header");
  OptionArchitecture arch(spec);
  if (arch.store().size() != n_params) {
    throw std::invalid_argument("checkpoint: expected " + std::to_string(arch.store().size()) + " parameters, header says " +
                                std::to_string(n_params));
  }
  for (double& x : arch.store().theta()) {
    if (!(is >> x)) throw std::invalid_argument("checkpoint: truncated parameter list");
  }
  return arch;
}

void save_checkpoint(const std::string& path, const OptionArchitecture& arch) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_checkpoint(os, arch);
}

OptionArchitecture load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_checkpoint(is);
}

}  // namespace ocpg
