#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "stochmap/random.hpp"

namespace stochmap {

using NodeId = int;
inline constexpr NodeId k_no_node = -1;

class NewickParseError : public std::runtime_error {
 public:
  NewickParseError(const std::string& what, std::size_t offset);
  auto offset() const -> std::size_t { return offset_; }

 private:
  std::size_t offset_;
};

// Rooted binary phylogeny with fixed branch lengths.
//
// Node ids are dense: tips are 0..n-1 (in left-to-right order of the input),
// internal nodes are n..2n-2 numbered so that every child id is smaller than
// its parent id. The root is always 2n-2, so ascending id order is a valid
// postorder. Branch i is the edge above node i, hence branches are 0..2n-3.
class Phylogeny {
 public:
  // `parent[i]` is k_no_node for exactly one node (the root). Node ids in the
  // input are arbitrary; the constructor renumbers into the canonical layout.
  // `branch_length[i]` is ignored for the root. `tip_labels` is indexed like
  // `parent` and ignored for internal nodes.
  Phylogeny(const std::vector<NodeId>& parent, const std::vector<double>& branch_length,
            const std::vector<std::string>& tip_labels);

  auto num_tips() const -> int { return num_tips_; }
  auto num_nodes() const -> int { return static_cast<int>(parent_.size()); }
  auto num_branches() const -> int { return num_nodes() - 1; }
  auto root() const -> NodeId { return num_nodes() - 1; }

  auto is_tip(NodeId node) const -> bool { return node < num_tips_; }
  auto parent(NodeId node) const -> NodeId { return parent_[node]; }
  auto children(NodeId node) const -> const std::array<NodeId, 2>& { return children_[node]; }
  auto branch_length(NodeId node) const -> double { return branch_length_[node]; }
  auto tip_label(NodeId tip) const -> const std::string& { return tip_labels_[tip]; }
  auto tip_labels() const -> const std::vector<std::string>& { return tip_labels_; }

  // Tip with the given label, or k_no_node.
  auto find_tip(std::string_view label) const -> NodeId;

  auto postorder() const -> const std::vector<NodeId>& { return postorder_; }
  auto preorder() const -> const std::vector<NodeId>& { return preorder_; }

  // Distance from the root to each node.
  auto node_depths() const -> std::vector<double>;

 private:
  int num_tips_ = 0;
  std::vector<NodeId> parent_;
  std::vector<std::array<NodeId, 2>> children_;
  std::vector<double> branch_length_;
  std::vector<std::string> tip_labels_;
  std::vector<NodeId> postorder_;
  std::vector<NodeId> preorder_;
};

// Warnings (e.g. an ignored root edge length) are appended to `warnings` when
// given; otherwise they are dropped.
auto parse_newick(std::string_view text, std::vector<std::string>* warnings = nullptr) -> Phylogeny;
auto read_newick_file(const std::string& path) -> Phylogeny;

auto to_newick(const Phylogeny& tree) -> std::string;
auto write_newick_file(const Phylogeny& tree, const std::string& path) -> void;

auto total_tree_length(const Phylogeny& tree) -> double;

// Pure-birth tree: starts from two lineages at the root, splits a uniformly
// chosen lineage at rate birth_rate per lineage until n_tips lineages exist,
// then runs one more exponential waiting time so tip branches are positive.
auto simulate_yule_tree(int n_tips, double birth_rate, Rng& rng) -> Phylogeny;

}  // namespace stochmap
