#pragma once

#include <map>
#include <span>
#include <vector>

#include "autodiff/tape.hpp"
#include "model/architecture.hpp"

namespace ocpg {

/// Records architecture outputs on a tape so surrogate objectives can be
/// differentiated. The shared-trunk hidden layer is built once per
/// (s, prefix) and reused by every head evaluated on this graph.
class ArchGraph {
 public:
  ArchGraph(const OptionArchitecture& arch, ad::Tape& tape) : arch_(arch), tape_(tape) {}

  ad::Tape& tape() { return tape_; }
  const OptionArchitecture& arch() const { return arch_; }

  ad::Var logits(int level, int s, std::span<const int> prefix);
  ad::Var policy(int level, int s, std::span<const int> prefix);
  ad::Var log_policy(int level, int s, std::span<const int> prefix);
  /// Scalar node for π^ℓ(choice | s, prefix).
  ad::Var policy_at(int level, int s, std::span<const int> prefix, int choice);
  ad::Var log_policy_at(int level, int s, std::span<const int> prefix, int choice);
  ad::Var termination(int level, int s, std::span<const int> prefix);
  ad::Var q_value(int level, int s, std::span<const int> prefix);

 private:
  ad::Var hidden(int s, std::span<const int> prefix);
  ad::Var head(const OptionArchitecture::HeadOffsets& h, ad::Var x);

  const OptionArchitecture& arch_;
  ad::Tape& tape_;
  std::map<std::vector<int>, ad::Var> hidden_;
  std::map<std::vector<int>, ad::Var> logits_;
  std::map<std::vector<int>, ad::Var> log_policy_;
};

}  // namespace ocpg
