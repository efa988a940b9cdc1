#pragma once

#include <vector>

#include <Eigen/Dense>

#include "stochmap/ctmc.hpp"
#include "stochmap/history.hpp"
#include "stochmap/mcmc_sampler.hpp"
#include "stochmap/random.hpp"
#include "stochmap/tree.hpp"

namespace stochmap {

// per_iteration recomputes P(beta_i) and the partial likelihoods for every
// draw, which is the cost profile of a sampler whose rates change between
// iterations. once computes them a single time and reuses them.
enum class ExpRegime { per_iteration, once };

auto to_string(ExpRegime regime) -> const char*;

// Smallest M with Pr(N > M) < tail for N ~ Poisson(mean).
auto poisson_truncation_point(double mean, double tail = 1e-12) -> int;

// w_m = Pois(m; omega t) (B^m)_{ab} for m = 0..M, M from poisson_truncation_point.
// Sums to exp(Qt)_{ab} up to the truncated tail.
auto endpoint_jump_weights(int from, int to, double t, const UniformizedKernel& kernel) -> std::vector<double>;

// Path on [0, t] from `from` to `to` drawn exactly from the endpoint-conditioned
// CTMC: jump count m by inversion of the weights above (normalized by
// p_from_to = exp(Qt)_{from,to}), interior labels from B, jump times uniform.
// Self transitions are merged away.
auto sample_endpoint_conditioned_path(int from, int to, double t, double p_from_to, const UniformizedKernel& kernel,
                                      Rng& rng) -> BranchPath;

// Independent draws from p(S | Y) using transition probabilities from the
// matrix exponential. The tree and kernel must outlive the sampler.
class ExpSampler {
 public:
  ExpSampler(const Phylogeny& tree, const UniformizedKernel& kernel, const TipData& tips, ExpRegime regime);

  auto draw(Rng& rng) -> const SubstitutionHistory&;
  auto regime() const -> ExpRegime { return regime_; }
  // log p(Y), from the most recent pruning pass.
  auto log_likelihood() const -> double;

 private:
  auto prepare() -> void;

  const Phylogeny* tree_;
  const UniformizedKernel* kernel_;
  TipData tips_;
  ExpRegime regime_;
  bool prepared_ = false;

  std::vector<Eigen::MatrixXd> transitions_;  // P(beta_i), indexed by child node
  std::vector<int> limits_;                   // Poisson truncation point per branch
  Eigen::MatrixXd scratch_;
  PartialLikelihoods partials_;
  SubstitutionHistory history_;
  std::vector<int> node_states_;
  std::vector<Eigen::VectorXd> columns_;
  Eigen::VectorXd message_a_, message_b_;
  std::vector<double> weights_;
  std::vector<int> labels_;
  std::vector<double> times_;
  BranchPath raw_;
};

// One independent draw; convenience wrapper over a per-iteration ExpSampler.
auto sample_history_exp(const Phylogeny& tree, const UniformizedKernel& kernel, const TipData& tips, Rng& rng)
    -> SubstitutionHistory;

}  // namespace stochmap
