#pragma once

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "stochmap/ctmc.hpp"
#include "stochmap/history.hpp"
#include "stochmap/random.hpp"
#include "stochmap/tree.hpp"

namespace stochmap {

// Raised when the data are impossible under the current configuration, e.g. a
// zero partial-likelihood row. With a strictly positive diagonal of B this
// only happens on inconsistent input.
class SamplerError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// l_{jk}: probability of the tips below node j given node j is in state k.
// Stored one column per node; each internal column is rescaled to max 1 and
// the log of the factor kept in log_scale[j].
struct PartialLikelihoods {
  Eigen::MatrixXd by_node;      // states x nodes
  std::vector<double> log_scale;

  auto node(NodeId j) const { return by_node.col(j); }
  auto states() const -> int { return static_cast<int>(by_node.rows()); }
};

// log sum_k pi_k l_{root,k} plus every recorded scale factor.
auto log_likelihood(const PartialLikelihoods& partials, const Eigen::VectorXd& pi, NodeId root) -> double;

// Felsenstein pruning with E(m_i) = B^{m_i}; each child message is m_i
// successive kernel products applied to the child's column. jumps[i] is the
// jump count on the branch above node i.
auto compute_partial_likelihoods(const Phylogeny& tree, const UniformizedKernel& kernel,
                                 std::span<const int> jumps, const TipData& tips) -> PartialLikelihoods;

// Draw from pi_k l_{root,k} / sum_h pi_h l_{root,h}.
auto sample_root_state(const PartialLikelihoods& partials, const Eigen::VectorXd& pi, NodeId root, Rng& rng) -> int;

// Preorder pass: node c with parent state h is drawn proportional to
// (row h of B^{m_c})_k * l_{ck}. Returns a state for every node; tips keep
// their observed states.
auto sample_internal_nodes(const Phylogeny& tree, const UniformizedKernel& kernel, std::span<const int> jumps,
                           const PartialLikelihoods& partials, int root_state, const TipData& tips, Rng& rng)
    -> std::vector<int>;

// Labels v_0..v_m of one branch with fixed end states: v_d is drawn
// proportional to b_{v_{d-1},k} * (B^{m-d})_{k,end}. The columns B^j e_end are
// computed once per branch.
auto sample_branch_segments(int parent_state, int child_state, int jumps, const UniformizedKernel& kernel, Rng& rng)
    -> std::vector<int>;

// Each maximal constant segment (state a, length t) receives
// Poisson((omega + q_aa) t) virtual jumps placed uniformly.
auto resample_virtual_jumps(const SubstitutionHistory& h, const UniformizedKernel& kernel, Rng& rng)
    -> AugmentedHistory;

// One chain of the two-kernel sampler. Holds references to the tree and kernel,
// which must outlive it.
class ChainState {
 public:
  ChainState(const Phylogeny& tree, const UniformizedKernel& kernel, const TipData& tips, AugmentedHistory start,
             Rng rng);

  auto history() const -> const AugmentedHistory& { return history_; }
  // Substitution history at the end of the last sweep (virtual jumps removed).
  auto substitution_history() const -> const SubstitutionHistory& { return substitution_; }
  auto sweeps() const -> long { return sweeps_; }
  auto tree() const -> const Phylogeny& { return *tree_; }
  auto kernel() const -> const UniformizedKernel& { return *kernel_; }
  auto tips() const -> const TipData& { return tips_; }
  auto rng() -> Rng& { return rng_; }

 private:
  const Phylogeny* tree_;
  const UniformizedKernel* kernel_;
  TipData tips_;
  AugmentedHistory history_;
  SubstitutionHistory substitution_;
  long sweeps_ = 0;
  Rng rng_;

  // Scratch space reused across sweeps.
  std::vector<int> jumps_;
  PartialLikelihoods partials_;
  std::vector<int> node_states_;
  std::vector<Eigen::VectorXd> columns_;
  Eigen::VectorXd message_a_, message_b_, scratch_;
  std::vector<double> weights_;
  std::vector<double> times_;

  friend auto update_labels(ChainState& chain) -> void;
  friend auto update_virtual_jumps(ChainState& chain) -> void;
  friend auto sweep(ChainState& chain) -> void;
};

// Kernel 1: resample every label V given the jump times W. W is unchanged.
auto update_labels(ChainState& chain) -> void;
// Kernel 2: drop virtual jumps and resample them given (S, T).
auto update_virtual_jumps(ChainState& chain) -> void;
// One sweep: kernel 1 then kernel 2.
auto sweep(ChainState& chain) -> void;

using SummarySink = std::function<void(const HistorySummary&)>;

// n_sweeps sweeps, emitting a summary of the substitution history every
// `thin` sweeps. Counts are tracked for `tracked_states`, or for the observed
// tip states when not given.
auto run_chain(ChainState& chain, long n_sweeps, int thin, const SummarySink& sink,
               std::optional<std::vector<int>> tracked_states = std::nullopt) -> void;
auto run_chain(ChainState& chain, long n_sweeps, int thin,
               std::optional<std::vector<int>> tracked_states = std::nullopt) -> std::vector<HistorySummary>;

}  // namespace stochmap
