#include "stochmap/tree.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace stochmap {

NewickParseError::NewickParseError(const std::string& what, std::size_t offset)
    : std::runtime_error(fmt::format("newick parse error at offset {}: {}", offset, what)),
      offset_(offset) {}

Phylogeny::Phylogeny(const std::vector<NodeId>& parent, const std::vector<double>& branch_length,
                     const std::vector<std::string>& tip_labels) {
  auto n_nodes = static_cast<int>(parent.size());
  if (branch_length.size() != parent.size()) {
    throw std::invalid_argument("Phylogeny: parent and branch_length sizes differ");
  }
  if (n_nodes < 3) {
    throw std::invalid_argument("Phylogeny: need at least two tips");
  }

  auto old_root = k_no_node;
  auto kids = std::vector<std::vector<NodeId>>(n_nodes);
  for (auto i = 0; i < n_nodes; ++i) {
    if (parent[i] == k_no_node) {
      if (old_root != k_no_node) { throw std::invalid_argument("Phylogeny: more than one root"); }
      old_root = i;
    } else {
      if (parent[i] < 0 || parent[i] >= n_nodes || parent[i] == i) {
        throw std::invalid_argument(fmt::format("Phylogeny: node {} has invalid parent", i));
      }
      kids[parent[i]].push_back(i);
    }
  }
  if (old_root == k_no_node) { throw std::invalid_argument("Phylogeny: no root"); }

  // Iterative DFS: produces left-to-right tip order, postorder for internal ids.
  auto tip_order = std::vector<NodeId>{};
  auto internal_order = std::vector<NodeId>{};
  auto old_postorder = std::vector<NodeId>{};
  {
    auto stack = std::vector<std::pair<NodeId, bool>>{{old_root, false}};
    while (!stack.empty()) {
      auto [node, expanded] = stack.back();
      stack.pop_back();
      if (expanded || kids[node].empty()) {
        old_postorder.push_back(node);
        (kids[node].empty() ? tip_order : internal_order).push_back(node);
        continue;
      }
      if (kids[node].size() != 2) {
        throw std::invalid_argument(
            fmt::format("Phylogeny: internal node has {} children; only bifurcating trees are supported",
                        kids[node].size()));
      }
      stack.push_back({node, true});
      stack.push_back({kids[node][1], false});
      stack.push_back({kids[node][0], false});
      if (static_cast<int>(old_postorder.size() + stack.size()) > 2 * n_nodes) {
        throw std::invalid_argument("Phylogeny: parent links contain a cycle");
      }
    }
  }
  if (static_cast<int>(old_postorder.size()) != n_nodes) {
    throw std::invalid_argument("Phylogeny: not all nodes are connected to the root");
  }

  num_tips_ = static_cast<int>(tip_order.size());
  auto new_id = std::vector<NodeId>(n_nodes);
  for (auto i = 0; i < num_tips_; ++i) { new_id[tip_order[i]] = i; }
  for (auto i = 0; i < static_cast<int>(internal_order.size()); ++i) {
    new_id[internal_order[i]] = num_tips_ + i;
  }

  parent_.assign(n_nodes, k_no_node);
  children_.assign(n_nodes, {k_no_node, k_no_node});
  branch_length_.assign(n_nodes, 0.0);
  tip_labels_.assign(num_tips_, std::string{});
  for (auto old = 0; old < n_nodes; ++old) {
    auto id = new_id[old];
    if (parent[old] != k_no_node) {
      parent_[id] = new_id[parent[old]];
      auto len = branch_length[old];
      if (!(len > 0.0) || !std::isfinite(len)) {
        throw std::invalid_argument(
            fmt::format("Phylogeny: branch above node {} has non-positive length {}", old, len));
      }
      branch_length_[id] = len;
    }
    if (kids[old].size() == 2) {
      children_[id] = {new_id[kids[old][0]], new_id[kids[old][1]]};
    } else if (old < static_cast<int>(tip_labels.size())) {
      tip_labels_[id] = tip_labels[old];
    }
  }

  postorder_.reserve(n_nodes);
  for (auto old : old_postorder) { postorder_.push_back(new_id[old]); }
  preorder_.reserve(n_nodes);
  auto stack = std::vector<NodeId>{root()};
  while (!stack.empty()) {
    auto node = stack.back();
    stack.pop_back();
    preorder_.push_back(node);
    if (!is_tip(node)) {
      stack.push_back(children_[node][1]);
      stack.push_back(children_[node][0]);
    }
  }
}

auto Phylogeny::find_tip(std::string_view label) const -> NodeId {
  for (auto i = 0; i < num_tips_; ++i) {
    if (tip_labels_[i] == label) { return i; }
  }
  return k_no_node;
}

auto Phylogeny::node_depths() const -> std::vector<double> {
  auto depth = std::vector<double>(num_nodes(), 0.0);
  for (auto node : preorder_) {
    if (node != root()) { depth[node] = depth[parent_[node]] + branch_length_[node]; }
  }
  return depth;
}

auto total_tree_length(const Phylogeny& tree) -> double {
  auto total = 0.0;
  for (auto i = 0; i < tree.num_branches(); ++i) { total += tree.branch_length(i); }
  return total;
}

// ---------------------------------------------------------------------------
// Newick

namespace {

class NewickParser {
 public:
  NewickParser(std::string_view text, std::vector<std::string>* warnings)
      : text_(text), warnings_(warnings) {}

  auto parse() -> Phylogeny {
    skip_space();
    auto root_at = pos_;
    auto root = parse_subtree();
    if (branch_length_[root] != 0.0) {
      // parse_subtree consumed a root edge; it has no meaning here.
      if (warnings_ != nullptr) {
        warnings_->push_back(fmt::format("root edge length after offset {} ignored", root_at));
      }
      branch_length_[root] = 0.0;
    }
    skip_space();
    if (peek() != ';') { fail("expected ';' at end of tree"); }
    ++pos_;
    skip_space();
    if (pos_ != text_.size()) { fail("unexpected text after ';'"); }
    branch_length_[root] = 0.0;
    return Phylogeny{parent_, branch_length_, labels_};
  }

 private:
  std::string_view text_;
  std::vector<std::string>* warnings_;
  std::size_t pos_ = 0;
  std::vector<NodeId> parent_;
  std::vector<double> branch_length_;
  std::vector<std::string> labels_;

  [[noreturn]] auto fail(const std::string& what) const -> void { throw NewickParseError(what, pos_); }

  auto peek() const -> char { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  auto skip_space() -> void {
    while (pos_ < text_.size()) {
      auto c = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '[') {
        auto close = text_.find(']', pos_);
        if (close == std::string_view::npos) { fail("unterminated comment"); }
        pos_ = close + 1;
      } else {
        break;
      }
    }
  }

  auto new_node() -> NodeId {
    parent_.push_back(k_no_node);
    branch_length_.push_back(0.0);
    labels_.emplace_back();
    return static_cast<NodeId>(parent_.size() - 1);
  }

  auto parse_label() -> std::string {
    if (peek() == '\'') {
      auto label = std::string{};
      ++pos_;
      while (true) {
        if (pos_ >= text_.size()) { fail("unterminated quoted label"); }
        if (text_[pos_] == '\'') {
          if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '\'') {
            label.push_back('\'');
            pos_ += 2;
            continue;
          }
          ++pos_;
          return label;
        }
        label.push_back(text_[pos_++]);
      }
    }
    auto start = pos_;
    while (pos_ < text_.size()) {
      auto c = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')' || c == ',' ||
          c == ':' || c == ';' || c == '[') {
        break;
      }
      ++pos_;
    }
    return std::string{text_.substr(start, pos_ - start)};
  }

  auto parse_length(std::size_t at) -> double {
    skip_space();
    auto start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
            text_[pos_] == '-' || text_[pos_] == '+' || text_[pos_] == 'e' || text_[pos_] == 'E')) {
      ++pos_;
    }
    auto token = std::string{text_.substr(start, pos_ - start)};
    if (token.empty()) { throw NewickParseError("missing branch length after ':'", at); }
    auto consumed = std::size_t{0};
    auto value = 0.0;
    try {
      value = std::stod(token, &consumed);
    } catch (const std::exception&) {
      throw NewickParseError(fmt::format("malformed branch length '{}'", token), start);
    }
    if (consumed != token.size()) {
      throw NewickParseError(fmt::format("malformed branch length '{}'", token), start);
    }
    return value;
  }

  auto parse_subtree() -> NodeId {
    skip_space();
    auto node = new_node();
    if (peek() == '(') {
      auto open_at = pos_;
      ++pos_;
      auto kids = std::vector<NodeId>{};
      while (true) {
        auto child = parse_subtree();
        parent_[child] = node;
        kids.push_back(child);
        skip_space();
        auto c = peek();
        if (c == ',') {
          ++pos_;
        } else if (c == ')') {
          ++pos_;
          break;
        } else {
          fail("expected ',' or ')'");
        }
      }
      if (kids.size() > 2) {
        throw NewickParseError(fmt::format("polytomy with {} children; tree must be bifurcating", kids.size()),
                               open_at);
      }
      if (kids.size() < 2) { throw NewickParseError("internal node with a single child", open_at); }
      skip_space();
      parse_label();  // internal labels are accepted and discarded
    } else {
      auto at = pos_;
      labels_[node] = parse_label();
      if (labels_[node].empty()) { throw NewickParseError("expected a tip label or '('", at); }
    }
    skip_space();
    if (peek() == ':') {
      auto at = pos_;
      ++pos_;
      auto len = parse_length(at);
      if (!(len > 0.0) || !std::isfinite(len)) {
        throw NewickParseError(fmt::format("non-positive branch length {}", len), at);
      }
      branch_length_[node] = len;
    } else if (peek() == ',' || peek() == ')') {
      fail("missing branch length");
    }
    return node;
  }
};

auto format_label(const std::string& label) -> std::string {
  auto needs_quotes = label.empty();
  for (auto c : label) {
    if (c == '(' || c == ')' || c == ',' || c == ':' || c == ';' || c == '[' || c == ']' ||
        c == '\'' || c == ' ' || c == '\t' || c == '\n') {
      needs_quotes = true;
    }
  }
  if (!needs_quotes) { return label; }
  auto out = std::string{"'"};
  for (auto c : label) {
    if (c == '\'') { out += "''"; } else { out.push_back(c); }
  }
  out.push_back('\'');
  return out;
}

auto append_subtree(const Phylogeny& tree, NodeId node, std::string& out) -> void {
  if (tree.is_tip(node)) {
    out += format_label(tree.tip_label(node));
  } else {
    out.push_back('(');
    append_subtree(tree, tree.children(node)[0], out);
    out.push_back(',');
    append_subtree(tree, tree.children(node)[1], out);
    out.push_back(')');
  }
  if (node != tree.root()) { out += fmt::format(":{:.17g}", tree.branch_length(node)); }
}

}  // namespace

auto parse_newick(std::string_view text, std::vector<std::string>* warnings) -> Phylogeny {
  try {
    return NewickParser{text, warnings}.parse();
  } catch (const NewickParseError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw NewickParseError(e.what(), 0);
  }
}

auto read_newick_file(const std::string& path) -> Phylogeny {
  auto in = std::ifstream{path};
  if (!in) { throw std::runtime_error(fmt::format("cannot open tree file '{}'", path)); }
  auto buffer = std::stringstream{};
  buffer << in.rdbuf();
  return parse_newick(buffer.str());
}

auto to_newick(const Phylogeny& tree) -> std::string {
  auto out = std::string{};
  append_subtree(tree, tree.root(), out);
  out.push_back(';');
  return out;
}

auto write_newick_file(const Phylogeny& tree, const std::string& path) -> void {
  auto out = std::ofstream{path};
  if (!out) { throw std::runtime_error(fmt::format("cannot write tree file '{}'", path)); }
  out << to_newick(tree) << '\n';
}

// ---------------------------------------------------------------------------
// Yule process

auto simulate_yule_tree(int n_tips, double birth_rate, Rng& rng) -> Phylogeny {
  if (n_tips < 2) { throw std::invalid_argument("simulate_yule_tree: need at least 2 tips"); }
  if (!(birth_rate > 0.0)) { throw std::invalid_argument("simulate_yule_tree: birth_rate must be positive"); }

  auto parent = std::vector<NodeId>{k_no_node};
  auto start_time = std::vector<double>{0.0};
  auto end_time = std::vector<double>{0.0};
  auto active = std::vector<NodeId>{};
  auto spawn = [&](NodeId from, double t) {
    parent.push_back(from);
    start_time.push_back(t);
    end_time.push_back(t);
    active.push_back(static_cast<NodeId>(parent.size() - 1));
  };
  spawn(0, 0.0);
  spawn(0, 0.0);

  auto t = 0.0;
  while (static_cast<int>(active.size()) < n_tips) {
    auto k = static_cast<double>(active.size());
    t += std::exponential_distribution<double>{k * birth_rate}(rng);
    auto pick = std::uniform_int_distribution<std::size_t>{0, active.size() - 1}(rng);
    auto node = active[pick];
    end_time[node] = t;
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(pick));
    spawn(node, t);
    spawn(node, t);
  }
  t += std::exponential_distribution<double>{static_cast<double>(n_tips) * birth_rate}(rng);
  for (auto node : active) { end_time[node] = t; }

  auto lengths = std::vector<double>(parent.size(), 0.0);
  auto labels = std::vector<std::string>(parent.size());
  for (auto i = std::size_t{1}; i < parent.size(); ++i) { lengths[i] = end_time[i] - start_time[i]; }
  for (auto i = std::size_t{0}; i < active.size(); ++i) { labels[active[i]] = fmt::format("t{}", i + 1); }
  return Phylogeny{parent, lengths, labels};
}

}  // namespace stochmap
