#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stochmap/ctmc.hpp"
#include "stochmap/history.hpp"
#include "stochmap/tree.hpp"

namespace stochmap {

enum class Method { mcmc, mcmc_sparse, exp, exp_once };

auto parse_method(const std::string& name) -> Method;
auto to_string(Method method) -> std::string;
auto is_mcmc(Method method) -> bool;

struct RunConfig {
  Method method = Method::mcmc;
  double omega_multiplier = 2.0;
  long iterations = 10000;  // sweeps for MCMC, draws for EXP
  int thin = 1;
  std::uint64_t seed = 1;
  // MCMC only: start from this history (e.g. the simulated truth) instead of
  // initialize_history.
  std::optional<SubstitutionHistory> warm_start;
};

struct RunResult {
  std::vector<HistorySummary> samples;
  double raw_seconds = 0.0;  // sampling loop only
};

// Counts are tracked for the observed tip states.
auto run_method(const Phylogeny& tree, const RateMatrix& q, const TipData& tips, const RunConfig& config)
    -> RunResult;

}  // namespace stochmap
