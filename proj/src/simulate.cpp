#include "stochmap/simulate.hpp"

#include <algorithm>
#include <deque>
#include <span>
#include <stdexcept>

#include <fmt/format.h>

namespace stochmap {

auto simulate_history(const Phylogeny& tree, const RateMatrix& q, Rng& rng) -> SimulatedData {
  auto s = q.states();
  const auto& pi = q.root_distribution();
  auto out = SimulatedData{};
  out.history.root_state = sample_categorical(std::span<const double>{pi.data(), static_cast<std::size_t>(s)}, rng);
  out.history.branches.resize(tree.num_branches());

  auto row = std::vector<double>(s);
  for (auto node : tree.preorder()) {
    if (node == tree.root()) { continue; }
    auto parent = tree.parent(node);
    auto state = parent == tree.root() ? out.history.root_state : out.history.branches[parent].end_state();
    auto& path = out.history.branches[node];
    auto remaining = tree.branch_length(node);
    while (true) {
      auto exit_rate = q.exit_rate(state);
      auto hold = exit_rate > 0.0 ? std::exponential_distribution<double>{exit_rate}(rng) : remaining;
      path.states.push_back(state);
      if (hold >= remaining) {
        path.durations.push_back(remaining);
        break;
      }
      path.durations.push_back(hold);
      remaining -= hold;
      for (auto h = 0; h < s; ++h) { row[h] = h == state ? 0.0 : q(state, h); }
      state = sample_categorical(row, exit_rate, rng);
    }
  }
  out.tips = tip_states_of(out.history, tree);
  return out;
}

namespace {

// Fewest-jump route from `from` to `to` through positive rates, endpoints included.
auto shortest_route(const RateMatrix& q, int from, int to) -> std::vector<int> {
  auto s = q.states();
  auto previous = std::vector<int>(s, -1);
  previous[from] = from;
  auto queue = std::deque<int>{from};
  while (!queue.empty() && previous[to] < 0) {
    auto a = queue.front();
    queue.pop_front();
    for (auto b = 0; b < s; ++b) {
      if (b != a && previous[b] < 0 && q(a, b) > 0.0) {
        previous[b] = a;
        queue.push_back(b);
      }
    }
  }
  if (previous[to] < 0) {
    throw std::invalid_argument(fmt::format("initialize_history: state {} cannot reach state {}", from, to));
  }
  auto route = std::vector<int>{to};
  while (route.back() != from) { route.push_back(previous[route.back()]); }
  std::reverse(route.begin(), route.end());
  return route;
}

}  // namespace

auto initialize_history(const Phylogeny& tree, const TipData& tips, const RateMatrix& q) -> AugmentedHistory {
  validate_tip_data(tips, tree, q.states());
  auto root_state = tips[0];
  auto h = AugmentedHistory{root_state, std::vector<BranchPath>(tree.num_branches())};
  for (auto node = 0; node < tree.num_branches(); ++node) {
    auto beta = tree.branch_length(node);
    auto& path = h.branches[node];
    if (tree.is_tip(node) && tips[node] != root_state) {
      // k jumps at beta (j - 1/2) / k; a single jump sits at the midpoint.
      path.states = shortest_route(q, root_state, tips[node]);
      auto k = static_cast<double>(path.states.size() - 1);
      path.durations.assign(path.states.size(), beta / k);
      path.durations.front() = 0.5 * beta / k;
      path.durations.back() = beta - 0.5 * beta / k - (k - 1.0) * beta / k;
    } else {
      path.states = {root_state};
      path.durations = {beta};
    }
  }
  return h;
}

}  // namespace stochmap
