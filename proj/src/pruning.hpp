#pragma once

// Felsenstein pruning and top-down node sampling, parameterized by how a
// branch propagates vectors. Shared by the uniformized MCMC sampler (B^m) and
// the matrix-exponential sampler (P(beta)).

#include <cmath>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "stochmap/history.hpp"
#include "stochmap/mcmc_sampler.hpp"
#include "stochmap/random.hpp"
#include "stochmap/tree.hpp"

namespace stochmap::detail {

// child_message(node, child_column, out): out_h = sum_k T_{hk} child_column_k
// for the transition matrix T of the branch above `node`.
template <class ChildMessage>
auto prune(const Phylogeny& tree, const TipData& tips, int states, ChildMessage&& child_message,
           PartialLikelihoods& partials, Eigen::VectorXd& message_a, Eigen::VectorXd& message_b) -> void {
  partials.by_node.setZero(states, tree.num_nodes());
  partials.log_scale.assign(tree.num_nodes(), 0.0);
  for (auto tip = 0; tip < tree.num_tips(); ++tip) { partials.by_node(tips[tip], tip) = 1.0; }

  for (auto node : tree.postorder()) {
    if (tree.is_tip(node)) { continue; }
    auto [left, right] = tree.children(node);
    child_message(left, partials.by_node.col(left), message_a);
    child_message(right, partials.by_node.col(right), message_b);
    auto column = partials.by_node.col(node);
    column = message_a.cwiseProduct(message_b);
    auto largest = column.maxCoeff();
    if (!(largest > 0.0)) {
      throw SamplerError(fmt::format(
          "partial likelihoods vanish at node {}: the tip data are impossible under the current branch transitions",
          node));
    }
    column /= largest;
    partials.log_scale[node] = std::log(largest);
  }
}

// parent_row(node, h, out): out_k = T_{hk} for the branch above `node`.
template <class ParentRow>
auto sample_nodes(const Phylogeny& tree, const TipData& tips, const PartialLikelihoods& partials, int root_state,
                  ParentRow&& parent_row, std::vector<int>& node_states, Eigen::VectorXd& row,
                  std::vector<double>& weights, Rng& rng) -> void {
  auto states = partials.states();
  node_states.assign(tree.num_nodes(), -1);
  node_states[tree.root()] = root_state;
  for (auto tip = 0; tip < tree.num_tips(); ++tip) { node_states[tip] = tips[tip]; }
  weights.resize(states);
  for (auto node : tree.preorder()) {
    if (node == tree.root() || tree.is_tip(node)) { continue; }
    auto h = node_states[tree.parent(node)];
    parent_row(node, h, row);
    auto column = partials.by_node.col(node);
    auto total = 0.0;
    for (auto k = 0; k < states; ++k) {
      weights[k] = row[k] * column[k];
      total += weights[k];
    }
    if (!(total > 0.0)) {
      throw SamplerError(fmt::format("node {} has no feasible state given its parent state {}", node, h));
    }
    node_states[node] = sample_categorical(weights, total, rng);
  }
}

}  // namespace stochmap::detail

namespace stochmap::detail {

// Interior labels of a branch with m uniformized jumps from `start` to `end`.
// columns[j] ends up holding B^j e_end for j < m; pass columns_ready when the
// caller has already filled them. Writes v_0..v_m to `labels`.
auto draw_segment_labels(int start, int end, int m, const UniformizedKernel& kernel,
                         std::vector<Eigen::VectorXd>& columns, std::vector<double>& weights, Rng& rng,
                         std::vector<int>& labels, bool columns_ready = false) -> void;

// Virtual jumps for every constant segment of `h`, written into `out`.
auto resample_virtual_jumps_into(const SubstitutionHistory& h, const UniformizedKernel& kernel, Rng& rng,
                                 AugmentedHistory& out, std::vector<double>& times) -> void;

}  // namespace stochmap::detail
