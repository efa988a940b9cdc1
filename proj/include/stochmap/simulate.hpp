#pragma once

#include "stochmap/ctmc.hpp"
#include "stochmap/history.hpp"
#include "stochmap/random.hpp"
#include "stochmap/tree.hpp"

namespace stochmap {

struct SimulatedData {
  SubstitutionHistory history;
  TipData tips;
};

// Root state drawn from the root distribution, then each branch evolved by the
// Gillespie algorithm starting from its parent node's state. A state with no
// exit rate holds until the end of the branch.
auto simulate_history(const Phylogeny& tree, const RateMatrix& q, Rng& rng) -> SimulatedData;

// Cold-start state for the MCMC sampler: the root and every internal node take
// the state of tip 0; each tip branch whose observed state differs follows a
// fewest-jump route through positive rates of q, jumps spread evenly (one
// jump lands at the midpoint). Throws std::invalid_argument when a tip state
// is unreachable.
auto initialize_history(const Phylogeny& tree, const TipData& tips, const RateMatrix& q) -> AugmentedHistory;

}  // namespace stochmap
