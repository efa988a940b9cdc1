#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "stochmap/ctmc.hpp"
#include "stochmap/tree.hpp"

namespace stochmap {

// Trajectory along one branch: states[d] holds for durations[d], starting at
// the parent node. Both vectors have jumps() + 1 entries.
struct BranchPath {
  std::vector<int> states;
  std::vector<double> durations;

  auto jumps() const -> int { return static_cast<int>(states.size()) - 1; }
  auto start_state() const -> int { return states.front(); }
  auto end_state() const -> int { return states.back(); }
  auto length() const -> double;

  friend auto operator==(const BranchPath&, const BranchPath&) -> bool = default;
};

// Observed state of each tip, indexed by tip id.
struct TipData {
  std::vector<int> states;

  auto operator[](NodeId tip) const -> int { return states[tip]; }
  // Distinct observed states, ascending.
  auto observed_states() const -> std::vector<int>;

  friend auto operator==(const TipData&, const TipData&) -> bool = default;
};

// Real transitions only: consecutive states on a branch always differ.
// branches[i] is the path above node i (root has no branch).
struct SubstitutionHistory {
  int root_state = 0;
  std::vector<BranchPath> branches;

  friend auto operator==(const SubstitutionHistory&, const SubstitutionHistory&) -> bool = default;
};

// Real and virtual transitions. A virtual jump is a position where consecutive
// labels are equal; no separate structure records them.
struct AugmentedHistory {
  int root_state = 0;
  std::vector<BranchPath> branches;

  friend auto operator==(const AugmentedHistory&, const AugmentedHistory&) -> bool = default;
};

// Sufficient statistics of a history plus its log-density.
//
// Dwell times cover every state. Transition counts are kept for ordered pairs
// of `tracked_states` only (all states unless restricted).
struct HistorySummary {
  std::vector<double> dwell;
  std::vector<int> tracked_states;
  std::vector<int> counts;  // row-major over tracked_states x tracked_states
  double log_density = 0.0;

  auto count(int from_index, int to_index) const -> int {
    return counts[static_cast<std::size_t>(from_index) * tracked_states.size() + to_index];
  }
  auto total_transitions() const -> long;
};

// Validators throw std::invalid_argument describing the first violation.
auto validate_tip_data(const TipData& tips, const Phylogeny& tree, int states) -> void;
auto validate_history(const SubstitutionHistory& h, const Phylogeny& tree, int states,
                      const TipData* tips = nullptr) -> void;
auto validate_history(const AugmentedHistory& h, const Phylogeny& tree, int states,
                      const TipData* tips = nullptr) -> void;

// Distances from the parent node to each virtual jump on the branch.
auto virtual_jump_times(const BranchPath& path) -> std::vector<double>;

// Merges runs of equal labels into one segment, summing their durations.
auto merge_self_transitions(const BranchPath& path, BranchPath& out) -> void;
auto drop_virtual_jumps(const AugmentedHistory& h) -> SubstitutionHistory;

// The same trajectory viewed as an augmented history with no virtual jumps.
auto as_augmented(const SubstitutionHistory& h) -> AugmentedHistory;

// Tip states read off the ends of tip branches.
auto tip_states_of(const SubstitutionHistory& h, const Phylogeny& tree) -> TipData;

// log p(S,T) = log pi_root + sum over segments of q_aa * t + sum over jumps of log q_ab.
auto log_density(const SubstitutionHistory& h, const RateMatrix& q) -> double;

auto summarize(const SubstitutionHistory& h, const RateMatrix& q,
               std::optional<std::span<const int>> restrict_to = std::nullopt) -> HistorySummary;

// I/O -------------------------------------------------------------------------

auto history_to_json(const SubstitutionHistory& h, const Phylogeny& tree) -> std::string;
auto write_history_json(const SubstitutionHistory& h, const Phylogeny& tree, const std::string& path) -> void;
auto read_history_json(const std::string& path, const Phylogeny& tree) -> SubstitutionHistory;

// Two columns, "label,state", one row per tip.
auto write_tip_data(const TipData& tips, const Phylogeny& tree, const std::string& path) -> void;
auto read_tip_data(const std::string& path, const Phylogeny& tree) -> TipData;

// Summary CSV: sample, dwell_<k> for every state, count_<a>_<b> for every
// ordered tracked pair, log_density. States are 0-based.
auto summary_csv_header(const HistorySummary& first) -> std::string;
auto summary_csv_row(std::size_t sample, const HistorySummary& s) -> std::string;
auto write_summary_csv(std::span<const HistorySummary> samples, const std::string& path) -> void;

}  // namespace stochmap
