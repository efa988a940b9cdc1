#include "stochmap/mcmc_sampler.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include <fmt/format.h>

#include "pruning.hpp"

namespace stochmap {

namespace detail {

auto draw_segment_labels(int start, int end, int m, const UniformizedKernel& kernel,
                         std::vector<Eigen::VectorXd>& columns, std::vector<double>& weights, Rng& rng,
                         std::vector<int>& labels, bool columns_ready) -> void {
  labels.clear();
  labels.push_back(start);
  if (m == 0) {
    if (start != end) {
      throw SamplerError(fmt::format("a branch with no jumps cannot move from state {} to {}", start, end));
    }
    return;
  }
  if (m >= 2) {
    if (!columns_ready) {
      if (static_cast<int>(columns.size()) < m) { columns.resize(m); }
      columns[0].setZero(kernel.states());
      columns[0][end] = 1.0;
      for (auto j = 1; j < m; ++j) { kernel.multiply(columns[j - 1], columns[j]); }
    }
    for (auto d = 1; d < m; ++d) {
      const auto& column = columns[m - d];
      auto from = labels.back();
      auto targets = kernel.row_columns(from);
      auto values = kernel.row_values(from);
      weights.resize(targets.size());
      auto total = 0.0;
      for (std::size_t i = 0; i < targets.size(); ++i) {
        weights[i] = values[i] * column[targets[i]];
        total += weights[i];
      }
      if (!(total > 0.0)) {
        throw SamplerError(
            fmt::format("state {} cannot reach state {} in {} uniformized steps", from, end, m - d + 1));
      }
      labels.push_back(targets[sample_categorical(weights, total, rng)]);
    }
  }
  if (kernel.b(labels.back(), end) <= 0.0) {
    throw SamplerError(fmt::format("state {} cannot reach state {} in one uniformized step", labels.back(), end));
  }
  labels.push_back(end);
}

auto resample_virtual_jumps_into(const SubstitutionHistory& h, const UniformizedKernel& kernel, Rng& rng,
                                 AugmentedHistory& out, std::vector<double>& times) -> void {
  const auto& q = kernel.rate_matrix();
  out.root_state = h.root_state;
  out.branches.resize(h.branches.size());
  for (std::size_t i = 0; i < h.branches.size(); ++i) {
    const auto& path = h.branches[i];
    auto& target = out.branches[i];
    target.states.clear();
    target.durations.clear();
    for (std::size_t d = 0; d < path.states.size(); ++d) {
      auto a = path.states[d];
      auto t = path.durations[d];
      auto rate = kernel.omega() - q.exit_rate(a);
      if (rate < 0.0) {
        throw SamplerError(fmt::format("omega {} is below the exit rate of state {}", kernel.omega(), a));
      }
      auto count = sample_poisson(rate * t, rng);
      times.resize(count);
      for (auto& x : times) { x = uniform01(rng) * t; }
      std::sort(times.begin(), times.end());
      auto previous = 0.0;
      for (auto x : times) {
        target.states.push_back(a);
        target.durations.push_back(x - previous);
        previous = x;
      }
      target.states.push_back(a);
      target.durations.push_back(t - previous);
    }
  }
}

}  // namespace detail

namespace {

// out = B^m column, ping-ponging through `scratch`.
auto apply_power(const UniformizedKernel& kernel, int m, const Eigen::Ref<const Eigen::VectorXd>& column,
                 Eigen::VectorXd& out, Eigen::VectorXd& scratch) -> void {
  out = column;
  for (auto j = 0; j < m; ++j) {
    kernel.multiply(out, scratch);
    out.swap(scratch);
  }
}

// out = row h of B^m.
auto power_row(const UniformizedKernel& kernel, int m, int h, Eigen::VectorXd& out, Eigen::VectorXd& scratch)
    -> void {
  out.setZero(kernel.states());
  out[h] = 1.0;
  for (auto j = 0; j < m; ++j) {
    kernel.multiply_transpose(out, scratch);
    out.swap(scratch);
  }
}

auto check_jumps(const Phylogeny& tree, std::span<const int> jumps) -> void {
  if (static_cast<int>(jumps.size()) != tree.num_branches()) {
    throw std::invalid_argument(
        fmt::format("{} jump counts for a tree with {} branches", jumps.size(), tree.num_branches()));
  }
}

auto prune_uniformized(const Phylogeny& tree, const UniformizedKernel& kernel, std::span<const int> jumps,
                       const TipData& tips, PartialLikelihoods& partials, Eigen::VectorXd& message_a,
                       Eigen::VectorXd& message_b, Eigen::VectorXd& scratch) -> void {
  detail::prune(
      tree, tips, kernel.states(),
      [&](NodeId child, const auto& column, Eigen::VectorXd& out) {
        apply_power(kernel, jumps[child], column, out, scratch);
      },
      partials, message_a, message_b);
}

auto sample_nodes_uniformized(const Phylogeny& tree, const UniformizedKernel& kernel, std::span<const int> jumps,
                              const PartialLikelihoods& partials, int root_state, const TipData& tips, Rng& rng,
                              std::vector<int>& node_states, Eigen::VectorXd& row, Eigen::VectorXd& scratch,
                              std::vector<double>& weights) -> void {
  detail::sample_nodes(
      tree, tips, partials, root_state,
      [&](NodeId node, int h, Eigen::VectorXd& out) { power_row(kernel, jumps[node], h, out, scratch); },
      node_states, row, weights, rng);
}

auto root_weights(const PartialLikelihoods& partials, const Eigen::VectorXd& pi, NodeId root,
                  std::vector<double>& weights) -> double {
  auto column = partials.by_node.col(root);
  weights.resize(column.size());
  auto total = 0.0;
  for (Eigen::Index k = 0; k < column.size(); ++k) {
    weights[k] = pi[k] * column[k];
    total += weights[k];
  }
  return total;
}

}  // namespace

auto log_likelihood(const PartialLikelihoods& partials, const Eigen::VectorXd& pi, NodeId root) -> double {
  auto total = pi.dot(partials.by_node.col(root));
  auto out = std::log(total);
  for (auto x : partials.log_scale) { out += x; }
  return out;
}

auto compute_partial_likelihoods(const Phylogeny& tree, const UniformizedKernel& kernel, std::span<const int> jumps,
                                 const TipData& tips) -> PartialLikelihoods {
  check_jumps(tree, jumps);
  validate_tip_data(tips, tree, kernel.states());
  auto partials = PartialLikelihoods{};
  Eigen::VectorXd a, b, scratch;
  prune_uniformized(tree, kernel, jumps, tips, partials, a, b, scratch);
  return partials;
}

auto sample_root_state(const PartialLikelihoods& partials, const Eigen::VectorXd& pi, NodeId root, Rng& rng) -> int {
  auto weights = std::vector<double>{};
  auto total = root_weights(partials, pi, root, weights);
  if (!(total > 0.0)) { throw SamplerError("no root state is compatible with the root distribution and the data"); }
  return sample_categorical(weights, total, rng);
}

auto sample_internal_nodes(const Phylogeny& tree, const UniformizedKernel& kernel, std::span<const int> jumps,
                           const PartialLikelihoods& partials, int root_state, const TipData& tips, Rng& rng)
    -> std::vector<int> {
  check_jumps(tree, jumps);
  auto node_states = std::vector<int>{};
  Eigen::VectorXd row, scratch;
  auto weights = std::vector<double>{};
  sample_nodes_uniformized(tree, kernel, jumps, partials, root_state, tips, rng, node_states, row, scratch, weights);
  return node_states;
}

auto sample_branch_segments(int parent_state, int child_state, int jumps, const UniformizedKernel& kernel, Rng& rng)
    -> std::vector<int> {
  if (jumps < 0) { throw std::invalid_argument("sample_branch_segments: negative jump count"); }
  auto s = kernel.states();
  if (parent_state < 0 || parent_state >= s || child_state < 0 || child_state >= s) {
    throw std::invalid_argument("sample_branch_segments: state out of range");
  }
  auto columns = std::vector<Eigen::VectorXd>{};
  auto weights = std::vector<double>{};
  auto labels = std::vector<int>{};
  detail::draw_segment_labels(parent_state, child_state, jumps, kernel, columns, weights, rng, labels);
  return labels;
}

auto resample_virtual_jumps(const SubstitutionHistory& h, const UniformizedKernel& kernel, Rng& rng)
    -> AugmentedHistory {
  auto out = AugmentedHistory{};
  auto times = std::vector<double>{};
  detail::resample_virtual_jumps_into(h, kernel, rng, out, times);
  return out;
}

ChainState::ChainState(const Phylogeny& tree, const UniformizedKernel& kernel, const TipData& tips,
                       AugmentedHistory start, Rng rng)
    : tree_(&tree), kernel_(&kernel), tips_(tips), history_(std::move(start)), rng_(std::move(rng)) {
  validate_tip_data(tips, tree, kernel.states());
  validate_history(history_, tree, kernel.states(), &tips);
  substitution_ = drop_virtual_jumps(history_);
  jumps_.resize(tree.num_branches());
}

auto update_labels(ChainState& chain) -> void {
  const auto& tree = *chain.tree_;
  const auto& kernel = *chain.kernel_;
  const auto& tips = chain.tips_;
  auto& h = chain.history_;

  for (auto i = 0; i < tree.num_branches(); ++i) { chain.jumps_[i] = h.branches[i].jumps(); }
  prune_uniformized(tree, kernel, chain.jumps_, tips, chain.partials_, chain.message_a_, chain.message_b_,
                    chain.scratch_);
  const auto& pi = kernel.rate_matrix().root_distribution();
  auto total = root_weights(chain.partials_, pi, tree.root(), chain.weights_);
  if (!(total > 0.0)) { throw SamplerError("no root state is compatible with the root distribution and the data"); }
  auto root_state = sample_categorical(chain.weights_, total, chain.rng_);
  sample_nodes_uniformized(tree, kernel, chain.jumps_, chain.partials_, root_state, tips, chain.rng_,
                           chain.node_states_, chain.message_a_, chain.scratch_, chain.weights_);
  h.root_state = root_state;
  for (auto i = 0; i < tree.num_branches(); ++i) {
    detail::draw_segment_labels(chain.node_states_[tree.parent(i)], chain.node_states_[i], chain.jumps_[i], kernel,
                                chain.columns_, chain.weights_, chain.rng_, h.branches[i].states);
  }
}

auto update_virtual_jumps(ChainState& chain) -> void {
  auto& h = chain.history_;
  chain.substitution_.root_state = h.root_state;
  chain.substitution_.branches.resize(h.branches.size());
  for (std::size_t i = 0; i < h.branches.size(); ++i) {
    merge_self_transitions(h.branches[i], chain.substitution_.branches[i]);
  }
  detail::resample_virtual_jumps_into(chain.substitution_, *chain.kernel_, chain.rng_, h, chain.times_);
}

auto sweep(ChainState& chain) -> void {
  update_labels(chain);
  update_virtual_jumps(chain);
  ++chain.sweeps_;
#ifndef NDEBUG
  const auto& tree = *chain.tree_;
  for (auto tip = 0; tip < tree.num_tips(); ++tip) {
    assert(chain.history_.branches[tip].end_state() == chain.tips_[tip]);
  }
#endif
}

auto run_chain(ChainState& chain, long n_sweeps, int thin, const SummarySink& sink,
               std::optional<std::vector<int>> tracked_states) -> void {
  if (n_sweeps < 0) { throw std::invalid_argument("run_chain: negative sweep count"); }
  if (thin < 1) { throw std::invalid_argument("run_chain: thin must be at least 1"); }
  auto tracked = tracked_states ? std::move(*tracked_states) : chain.tips().observed_states();
  const auto& q = chain.kernel().rate_matrix();
  for (long k = 1; k <= n_sweeps; ++k) {
    sweep(chain);
    if (k % thin == 0) { sink(summarize(chain.substitution_history(), q, std::span<const int>{tracked})); }
  }
}

auto run_chain(ChainState& chain, long n_sweeps, int thin, std::optional<std::vector<int>> tracked_states)
    -> std::vector<HistorySummary> {
  auto out = std::vector<HistorySummary>{};
  out.reserve(n_sweeps / std::max(thin, 1));
  run_chain(
      chain, n_sweeps, thin, [&](const HistorySummary& s) { out.push_back(s); }, std::move(tracked_states));
  return out;
}

}  // namespace stochmap
