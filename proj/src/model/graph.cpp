#include "model/graph.hpp"

namespace ocpg {

namespace {

std::vector<int> key(int tag, int s, std::span<const int> prefix) {
  std::vector<int> k;
  k.reserve(prefix.size() + 2);
  k.push_back(tag);
  k.push_back(s);
  k.insert(k.end(), prefix.begin(), prefix.end());
  return k;
}

}  // namespace

ad::Var ArchGraph::hidden(int s, std::span<const int> prefix) {
  auto k = key(0, s, prefix);
  if (auto it = hidden_.find(k); it != hidden_.end()) return it->second;
  std::vector<double> x(arch_.trunk_input_size(), 0.0);
  x[static_cast<std::size_t>(s)] = 1.0;
  for (std::size_t l = 0; l < prefix.size(); ++l) x[arch_.option_feature(static_cast<int>(l) + 1, prefix[l])] = 1.0;
  const auto H = static_cast<std::size_t>(arch_.spec().trunk_width);
  ad::Var w = tape_.param_matrix(arch_.trunk_weight(), H, x.size());
  ad::Var b = tape_.param(arch_.trunk_bias(), H);
  ad::Var h = tape_.tanh(tape_.matvec(w, tape_.constant(x)) + b);
  hidden_.emplace(std::move(k), h);
  return h;
}

ad::Var ArchGraph::head(const OptionArchitecture::HeadOffsets& h, ad::Var x) {
  const auto H = static_cast<std::size_t>(arch_.spec().trunk_width);
  return tape_.matvec(tape_.param_matrix(h.weight, h.rows, H), x) + tape_.param(h.bias, h.rows);
}

ad::Var ArchGraph::logits(int level, int s, std::span<const int> prefix) {
  arch_.check_context(level, s, prefix, level - 1);
  auto k = key(level, s, prefix);
  if (auto it = logits_.find(k); it != logits_.end()) return it->second;
  const auto& h = arch_.policy_head(level);
  ad::Var z = arch_.layout() == Layout::Tabular
                  ? tape_.param(arch_.tabular_policy_index(level, s, prefix, 0), h.rows)
                  : head(h, hidden(s, prefix));
  logits_.emplace(std::move(k), z);
  return z;
}

ad::Var ArchGraph::policy(int level, int s, std::span<const int> prefix) {
  return tape_.softmax(logits(level, s, prefix));
}

ad::Var ArchGraph::log_policy(int level, int s, std::span<const int> prefix) {
  auto k = key(level, s, prefix);
  if (auto it = log_policy_.find(k); it != log_policy_.end()) return it->second;
  ad::Var lp = tape_.log_softmax(logits(level, s, prefix));
  log_policy_.emplace(std::move(k), lp);
  return lp;
}

ad::Var ArchGraph::policy_at(int level, int s, std::span<const int> prefix, int choice) {
  return tape_.exp(log_policy_at(level, s, prefix, choice));
}

ad::Var ArchGraph::log_policy_at(int level, int s, std::span<const int> prefix, int choice) {
  return tape_.index(log_policy(level, s, prefix), static_cast<std::size_t>(choice));
}

ad::Var ArchGraph::termination(int level, int s, std::span<const int> prefix) {
  if (level >= arch_.n_levels()) throw std::out_of_range("termination level must be below N");
  arch_.check_context(level, s, prefix, level);
  if (arch_.layout() == Layout::Tabular) {
    return tape_.sigmoid(tape_.param(arch_.tabular_termination_index(level, s, prefix), 1));
  }
  return tape_.sigmoid(head(arch_.termination_head(level), hidden(s, prefix)));
}

ad::Var ArchGraph::q_value(int level, int s, std::span<const int> prefix) {
  if (level >= arch_.n_levels()) throw std::out_of_range("critic level must be below N");
  arch_.check_context(level, s, prefix, level);
  if (arch_.layout() == Layout::Tabular) return tape_.param(arch_.tabular_critic_index(level, s, prefix), 1);
  return head(arch_.critic_head(level), hidden(s, prefix));
}

}  // namespace ocpg
