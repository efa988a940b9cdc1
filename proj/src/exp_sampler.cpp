#include "stochmap/exp_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "pruning.hpp"

namespace stochmap {

namespace {

auto log_poisson_pmf(int m, double mean) -> double {
  if (mean <= 0.0) { return m == 0 ? 0.0 : -INFINITY; }
  return -mean + m * std::log(mean) - std::lgamma(m + 1.0);
}

// Draws m from w_m / p, m <= limit, and leaves B^j e_to in columns[j] for j <= m.
auto draw_jump_count(int from, int to, double t, double p, int limit, const UniformizedKernel& kernel,
                     std::vector<Eigen::VectorXd>& columns, Rng& rng) -> int {
  auto mean = kernel.omega() * t;
  auto log_mean = std::log(mean);
  auto log_pmf = -mean;
  auto target = uniform01(rng) * p;
  auto acc = 0.0;
  auto last_feasible = -1;
  if (columns.empty()) { columns.resize(1); }
  columns[0].setZero(kernel.states());
  columns[0][to] = 1.0;
  for (auto m = 0; m <= limit; ++m) {
    if (m > 0) {
      if (static_cast<int>(columns.size()) <= m) { columns.resize(m + 1); }
      kernel.multiply(columns[m - 1], columns[m]);
      log_pmf += log_mean - std::log(static_cast<double>(m));
    }
    auto w = std::exp(log_pmf) * columns[m][from];
    if (w > 0.0) { last_feasible = m; }
    acc += w;
    if (acc >= target && last_feasible == m) { return m; }
  }
  if (last_feasible < 0) {
    throw SamplerError(fmt::format("state {} cannot reach state {} within {} uniformized steps", from, to, limit));
  }
  // Rounding left the target just beyond the truncated mass.
  return last_feasible;
}

}  // namespace

auto to_string(ExpRegime regime) -> const char* {
  return regime == ExpRegime::once ? "once" : "per_iteration";
}

auto poisson_truncation_point(double mean, double tail) -> int {
  if (mean < 0.0 || !std::isfinite(mean)) { throw std::invalid_argument("poisson_truncation_point: bad mean"); }
  if (mean == 0.0) { return 0; }
  auto cdf = 0.0;
  auto m = 0;
  while (true) {
    cdf += std::exp(log_poisson_pmf(m, mean));
    if (1.0 - cdf < tail && m >= mean) { return m; }
    ++m;
  }
}

auto endpoint_jump_weights(int from, int to, double t, const UniformizedKernel& kernel) -> std::vector<double> {
  auto mean = kernel.omega() * t;
  auto limit = poisson_truncation_point(mean);
  auto out = std::vector<double>(limit + 1);
  auto column = Eigen::VectorXd::Zero(kernel.states()).eval();
  column[to] = 1.0;
  auto next = Eigen::VectorXd(kernel.states());
  for (auto m = 0; m <= limit; ++m) {
    if (m > 0) {
      kernel.multiply(column, next);
      column.swap(next);
    }
    out[m] = std::exp(log_poisson_pmf(m, mean)) * column[from];
  }
  return out;
}

auto sample_endpoint_conditioned_path(int from, int to, double t, double p_from_to, const UniformizedKernel& kernel,
                                      Rng& rng) -> BranchPath {
  auto columns = std::vector<Eigen::VectorXd>{};
  auto weights = std::vector<double>{};
  auto labels = std::vector<int>{};
  auto m = draw_jump_count(from, to, t, p_from_to, poisson_truncation_point(kernel.omega() * t), kernel, columns, rng);
  detail::draw_segment_labels(from, to, m, kernel, columns, weights, rng, labels, true);
  auto times = std::vector<double>(m);
  for (auto& x : times) { x = uniform01(rng) * t; }
  std::sort(times.begin(), times.end());
  auto raw = BranchPath{};
  auto previous = 0.0;
  for (auto d = 0; d < m; ++d) {
    raw.states.push_back(labels[d]);
    raw.durations.push_back(times[d] - previous);
    previous = times[d];
  }
  raw.states.push_back(to);
  raw.durations.push_back(t - previous);
  auto out = BranchPath{};
  merge_self_transitions(raw, out);
  return out;
}

ExpSampler::ExpSampler(const Phylogeny& tree, const UniformizedKernel& kernel, const TipData& tips, ExpRegime regime)
    : tree_(&tree), kernel_(&kernel), tips_(tips), regime_(regime) {
  validate_tip_data(tips, tree, kernel.states());
  history_.branches.resize(tree.num_branches());
  transitions_.resize(tree.num_branches());
  limits_.resize(tree.num_branches());
  for (auto i = 0; i < tree.num_branches(); ++i) {
    limits_[i] = poisson_truncation_point(kernel.omega() * tree.branch_length(i));
  }
}

auto ExpSampler::prepare() -> void {
  const auto& tree = *tree_;
  const auto& q = kernel_->rate_matrix();
  for (auto i = 0; i < tree.num_branches(); ++i) {
    matrix_exponential_into(q, tree.branch_length(i), transitions_[i], scratch_);
  }
  detail::prune(
      tree, tips_, q.states(),
      [&](NodeId child, const auto& column, Eigen::VectorXd& out) { out.noalias() = transitions_[child] * column; },
      partials_, message_a_, message_b_);
  prepared_ = true;
}

auto ExpSampler::log_likelihood() const -> double {
  if (!prepared_) { throw std::logic_error("ExpSampler::log_likelihood called before the first draw"); }
  return stochmap::log_likelihood(partials_, kernel_->rate_matrix().root_distribution(), tree_->root());
}

auto ExpSampler::draw(Rng& rng) -> const SubstitutionHistory& {
  if (regime_ == ExpRegime::per_iteration || !prepared_) { prepare(); }
  const auto& tree = *tree_;
  const auto& kernel = *kernel_;
  const auto& pi = kernel.rate_matrix().root_distribution();

  auto root_column = partials_.by_node.col(tree.root());
  weights_.resize(root_column.size());
  auto total = 0.0;
  for (Eigen::Index k = 0; k < root_column.size(); ++k) {
    weights_[k] = pi[k] * root_column[k];
    total += weights_[k];
  }
  if (!(total > 0.0)) { throw SamplerError("no root state is compatible with the root distribution and the data"); }
  auto root_state = sample_categorical(weights_, total, rng);
  detail::sample_nodes(
      tree, tips_, partials_, root_state,
      [&](NodeId node, int h, Eigen::VectorXd& out) { out = transitions_[node].row(h).transpose(); }, node_states_,
      message_a_, weights_, rng);

  history_.root_state = root_state;
  for (auto i = 0; i < tree.num_branches(); ++i) {
    auto from = node_states_[tree.parent(i)];
    auto to = node_states_[i];
    auto t = tree.branch_length(i);
    auto m = draw_jump_count(from, to, t, transitions_[i](from, to), limits_[i], kernel, columns_, rng);
    detail::draw_segment_labels(from, to, m, kernel, columns_, weights_, rng, labels_, true);
    times_.resize(m);
    for (auto& x : times_) { x = uniform01(rng) * t; }
    std::sort(times_.begin(), times_.end());
    raw_.states.clear();
    raw_.durations.clear();
    auto previous = 0.0;
    for (auto d = 0; d < m; ++d) {
      raw_.states.push_back(labels_[d]);
      raw_.durations.push_back(times_[d] - previous);
      previous = times_[d];
    }
    raw_.states.push_back(to);
    raw_.durations.push_back(t - previous);
    merge_self_transitions(raw_, history_.branches[i]);
  }
  return history_;
}

auto sample_history_exp(const Phylogeny& tree, const UniformizedKernel& kernel, const TipData& tips, Rng& rng)
    -> SubstitutionHistory {
  auto sampler = ExpSampler{tree, kernel, tips, ExpRegime::per_iteration};
  return sampler.draw(rng);
}

}  // namespace stochmap
