#include "stochmap/history.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

namespace stochmap {

namespace {

constexpr double k_length_tolerance = 1e-9;

template <class History>
auto validate_paths(const History& h, const Phylogeny& tree, int states, const TipData* tips, bool allow_self)
    -> void {
  if (h.root_state < 0 || h.root_state >= states) {
    throw std::invalid_argument(fmt::format("history: root state {} out of range", h.root_state));
  }
  if (static_cast<int>(h.branches.size()) != tree.num_branches()) {
    throw std::invalid_argument(fmt::format("history: {} branch paths for a tree with {} branches",
                                            h.branches.size(), tree.num_branches()));
  }
  for (auto node = 0; node < tree.num_branches(); ++node) {
    const auto& path = h.branches[node];
    if (path.states.empty() || path.states.size() != path.durations.size()) {
      throw std::invalid_argument(fmt::format("history: branch {} has mismatched state/time vectors", node));
    }
    for (auto d = 0; d <= path.jumps(); ++d) {
      if (path.states[d] < 0 || path.states[d] >= states) {
        throw std::invalid_argument(fmt::format("history: branch {} has state {} out of range", node, path.states[d]));
      }
      if (!(path.durations[d] >= 0.0)) {
        throw std::invalid_argument(fmt::format("history: branch {} has a negative segment", node));
      }
      if (!allow_self && d > 0 && path.states[d] == path.states[d - 1]) {
        throw std::invalid_argument(fmt::format("history: branch {} has a self transition", node));
      }
    }
    auto len = path.length();
    auto beta = tree.branch_length(node);
    if (std::abs(len - beta) > k_length_tolerance * std::max(1.0, beta)) {
      throw std::invalid_argument(
          fmt::format("history: branch {} segments sum to {} but the branch length is {}", node, len, beta));
    }
    auto parent = tree.parent(node);
    auto expected_start = parent == tree.root() ? h.root_state : h.branches[parent].end_state();
    if (path.start_state() != expected_start) {
      throw std::invalid_argument(fmt::format("history: branch {} starts in state {} but its parent node is in state {}",
                                              node, path.start_state(), expected_start));
    }
    if (tips != nullptr && tree.is_tip(node) && path.end_state() != (*tips)[node]) {
      throw std::invalid_argument(fmt::format("history: tip {} ends in state {} but {} was observed", node,
                                              path.end_state(), (*tips)[node]));
    }
  }
}

}  // namespace

auto BranchPath::length() const -> double {
  auto total = 0.0;
  for (auto t : durations) { total += t; }
  return total;
}

auto TipData::observed_states() const -> std::vector<int> {
  auto out = states;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

auto HistorySummary::total_transitions() const -> long {
  auto total = 0L;
  for (auto c : counts) { total += c; }
  return total;
}

auto validate_tip_data(const TipData& tips, const Phylogeny& tree, int states) -> void {
  if (static_cast<int>(tips.states.size()) != tree.num_tips()) {
    throw std::invalid_argument(
        fmt::format("tip data: {} states for a tree with {} tips", tips.states.size(), tree.num_tips()));
  }
  for (auto i = 0; i < tree.num_tips(); ++i) {
    if (tips[i] < 0 || tips[i] >= states) {
      throw std::invalid_argument(fmt::format("tip data: tip '{}' has state {} outside 0..{}", tree.tip_label(i),
                                              tips[i], states - 1));
    }
  }
}

auto validate_history(const SubstitutionHistory& h, const Phylogeny& tree, int states, const TipData* tips) -> void {
  validate_paths(h, tree, states, tips, false);
}

auto validate_history(const AugmentedHistory& h, const Phylogeny& tree, int states, const TipData* tips) -> void {
  validate_paths(h, tree, states, tips, true);
}

auto virtual_jump_times(const BranchPath& path) -> std::vector<double> {
  auto out = std::vector<double>{};
  auto elapsed = 0.0;
  for (auto d = 1; d <= path.jumps(); ++d) {
    elapsed += path.durations[d - 1];
    if (path.states[d] == path.states[d - 1]) { out.push_back(elapsed); }
  }
  return out;
}

auto merge_self_transitions(const BranchPath& path, BranchPath& out) -> void {
  out.states.clear();
  out.durations.clear();
  for (auto d = 0; d <= path.jumps(); ++d) {
    if (d > 0 && path.states[d] == out.states.back()) {
      out.durations.back() += path.durations[d];
    } else {
      out.states.push_back(path.states[d]);
      out.durations.push_back(path.durations[d]);
    }
  }
}

auto drop_virtual_jumps(const AugmentedHistory& h) -> SubstitutionHistory {
  auto out = SubstitutionHistory{h.root_state, std::vector<BranchPath>(h.branches.size())};
  for (auto i = std::size_t{0}; i < h.branches.size(); ++i) { merge_self_transitions(h.branches[i], out.branches[i]); }
  return out;
}

auto as_augmented(const SubstitutionHistory& h) -> AugmentedHistory { return AugmentedHistory{h.root_state, h.branches}; }

auto tip_states_of(const SubstitutionHistory& h, const Phylogeny& tree) -> TipData {
  auto tips = TipData{std::vector<int>(tree.num_tips())};
  for (auto i = 0; i < tree.num_tips(); ++i) { tips.states[i] = h.branches[i].end_state(); }
  return tips;
}

auto log_density(const SubstitutionHistory& h, const RateMatrix& q) -> double {
  auto total = std::log(q.root_distribution()[h.root_state]);
  for (const auto& path : h.branches) {
    for (auto d = 0; d <= path.jumps(); ++d) {
      total += q(path.states[d], path.states[d]) * path.durations[d];
      if (d > 0) { total += std::log(q(path.states[d - 1], path.states[d])); }
    }
  }
  return total;
}

auto summarize(const SubstitutionHistory& h, const RateMatrix& q, std::optional<std::span<const int>> restrict_to)
    -> HistorySummary {
  auto s = q.states();
  auto out = HistorySummary{};
  out.dwell.assign(s, 0.0);
  if (restrict_to) {
    out.tracked_states.assign(restrict_to->begin(), restrict_to->end());
    std::sort(out.tracked_states.begin(), out.tracked_states.end());
  } else {
    out.tracked_states.resize(s);
    for (auto k = 0; k < s; ++k) { out.tracked_states[k] = k; }
  }
  auto index_of = std::vector<int>(s, -1);
  for (auto i = 0; i < static_cast<int>(out.tracked_states.size()); ++i) {
    auto state = out.tracked_states[i];
    if (state < 0 || state >= s) { throw std::invalid_argument(fmt::format("summarize: state {} out of range", state)); }
    index_of[state] = i;
  }
  auto k = out.tracked_states.size();
  out.counts.assign(k * k, 0);

  auto log_p = std::log(q.root_distribution()[h.root_state]);
  for (const auto& path : h.branches) {
    for (auto d = 0; d <= path.jumps(); ++d) {
      auto state = path.states[d];
      if (state < 0 || state >= s) { throw std::invalid_argument(fmt::format("summarize: state {} out of range", state)); }
      out.dwell[state] += path.durations[d];
      log_p += q(state, state) * path.durations[d];
      if (d > 0) {
        auto from = path.states[d - 1];
        log_p += std::log(q(from, state));
        if (index_of[from] >= 0 && index_of[state] >= 0) {
          ++out.counts[static_cast<std::size_t>(index_of[from]) * k + index_of[state]];
        }
      }
    }
  }
  out.log_density = log_p;
  return out;
}

// ---------------------------------------------------------------------------
// I/O

auto history_to_json(const SubstitutionHistory& h, const Phylogeny& tree) -> std::string {
  auto doc = nlohmann::json{};
  doc["root_state"] = h.root_state;
  auto branches = nlohmann::json::array();
  for (auto node = 0; node < tree.num_branches(); ++node) {
    auto b = nlohmann::json{};
    b["node"] = node;
    b["parent"] = tree.parent(node);
    if (tree.is_tip(node)) { b["tip"] = tree.tip_label(node); }
    b["length"] = tree.branch_length(node);
    b["states"] = h.branches[node].states;
    b["times"] = h.branches[node].durations;
    branches.push_back(std::move(b));
  }
  doc["branches"] = std::move(branches);
  return doc.dump(1);
}

auto write_history_json(const SubstitutionHistory& h, const Phylogeny& tree, const std::string& path) -> void {
  auto out = std::ofstream{path};
  if (!out) { throw std::runtime_error(fmt::format("cannot write history file '{}'", path)); }
  out << history_to_json(h, tree) << '\n';
}

auto read_history_json(const std::string& path, const Phylogeny& tree) -> SubstitutionHistory {
  auto in = std::ifstream{path};
  if (!in) { throw std::runtime_error(fmt::format("cannot open history file '{}'", path)); }
  auto doc = nlohmann::json::parse(in);
  auto h = SubstitutionHistory{};
  h.root_state = doc.at("root_state").get<int>();
  h.branches.resize(tree.num_branches());
  auto seen = std::vector<bool>(tree.num_branches(), false);
  for (const auto& b : doc.at("branches")) {
    auto node = b.at("node").get<int>();
    if (node < 0 || node >= tree.num_branches() || seen[node]) {
      throw std::runtime_error(fmt::format("history file: bad or duplicate node id {}", node));
    }
    seen[node] = true;
    h.branches[node].states = b.at("states").get<std::vector<int>>();
    h.branches[node].durations = b.at("times").get<std::vector<double>>();
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw std::runtime_error("history file: missing branches");
  }
  return h;
}

auto write_tip_data(const TipData& tips, const Phylogeny& tree, const std::string& path) -> void {
  auto out = std::ofstream{path};
  if (!out) { throw std::runtime_error(fmt::format("cannot write tip file '{}'", path)); }
  out << "label,state\n";
  for (auto i = 0; i < tree.num_tips(); ++i) { out << tree.tip_label(i) << ',' << tips[i] << '\n'; }
}

auto read_tip_data(const std::string& path, const Phylogeny& tree) -> TipData {
  auto in = std::ifstream{path};
  if (!in) { throw std::runtime_error(fmt::format("cannot open tip file '{}'", path)); }
  auto tips = TipData{std::vector<int>(tree.num_tips(), -1)};
  auto line = std::string{};
  auto line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') { line.pop_back(); }
    if (line.empty()) { continue; }
    auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw std::runtime_error(fmt::format("tip file line {}: expected 'label,state'", line_no));
    }
    auto label = line.substr(0, comma);
    auto value = line.substr(comma + 1);
    if (line_no == 1 && value == "state") { continue; }
    auto tip = tree.find_tip(label);
    if (tip == k_no_node) { throw std::runtime_error(fmt::format("tip file line {}: unknown tip '{}'", line_no, label)); }
    try {
      tips.states[tip] = std::stoi(value);
    } catch (const std::exception&) {
      throw std::runtime_error(fmt::format("tip file line {}: bad state '{}'", line_no, value));
    }
  }
  for (auto i = 0; i < tree.num_tips(); ++i) {
    if (tips[i] < 0) { throw std::runtime_error(fmt::format("tip file: no state for tip '{}'", tree.tip_label(i))); }
  }
  return tips;
}

auto summary_csv_header(const HistorySummary& first) -> std::string {
  auto out = std::string{"sample"};
  for (auto k = std::size_t{0}; k < first.dwell.size(); ++k) { out += fmt::format(",dwell_{}", k); }
  for (auto a : first.tracked_states) {
    for (auto b : first.tracked_states) {
      if (a != b) { out += fmt::format(",count_{}_{}", a, b); }
    }
  }
  out += ",log_density";
  return out;
}

auto summary_csv_row(std::size_t sample, const HistorySummary& s) -> std::string {
  auto out = fmt::format("{}", sample);
  for (auto d : s.dwell) { out += fmt::format(",{:.17g}", d); }
  auto k = s.tracked_states.size();
  for (auto i = std::size_t{0}; i < k; ++i) {
    for (auto j = std::size_t{0}; j < k; ++j) {
      if (i != j) { out += fmt::format(",{}", s.counts[i * k + j]); }
    }
  }
  out += fmt::format(",{:.17g}", s.log_density);
  return out;
}

auto write_summary_csv(std::span<const HistorySummary> samples, const std::string& path) -> void {
  auto out = std::ofstream{path};
  if (!out) { throw std::runtime_error(fmt::format("cannot write summary file '{}'", path)); }
  if (samples.empty()) { return; }
  out << summary_csv_header(samples.front()) << '\n';
  for (auto i = std::size_t{0}; i < samples.size(); ++i) { out << summary_csv_row(i, samples[i]) << '\n'; }
}

}  // namespace stochmap
