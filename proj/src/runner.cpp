#include "stochmap/runner.hpp"

#include <chrono>
#include <stdexcept>

#include <fmt/format.h>

#include "stochmap/exp_sampler.hpp"
#include "stochmap/mcmc_sampler.hpp"
#include "stochmap/random.hpp"
#include "stochmap/simulate.hpp"

namespace stochmap {

auto parse_method(const std::string& name) -> Method {
  if (name == "mcmc") { return Method::mcmc; }
  if (name == "mcmc-sparse") { return Method::mcmc_sparse; }
  if (name == "exp") { return Method::exp; }
  if (name == "exp-once") { return Method::exp_once; }
  throw std::invalid_argument(fmt::format("unknown method '{}' (expected mcmc, mcmc-sparse, exp or exp-once)", name));
}

auto to_string(Method method) -> std::string {
  switch (method) {
    case Method::mcmc: return "mcmc";
    case Method::mcmc_sparse: return "mcmc-sparse";
    case Method::exp: return "exp";
    case Method::exp_once: return "exp-once";
  }
  return "unknown";
}

auto is_mcmc(Method method) -> bool { return method == Method::mcmc || method == Method::mcmc_sparse; }

auto run_method(const Phylogeny& tree, const RateMatrix& q, const TipData& tips, const RunConfig& config)
    -> RunResult {
  if (config.iterations < 0) { throw std::invalid_argument("run_method: negative iteration count"); }
  if (config.thin < 1) { throw std::invalid_argument("run_method: thin must be at least 1"); }
  if (!(config.omega_multiplier > 1.0)) {
    throw std::invalid_argument(fmt::format("omega multiplier must exceed 1, got {}", config.omega_multiplier));
  }
  validate_tip_data(tips, tree, q.states());
  auto storage = config.method == Method::mcmc_sparse ? KernelStorage::sparse : KernelStorage::dense;
  auto kernel = uniformize(q, config.omega_multiplier, storage);
  auto rng = make_rng(config.seed);
  auto tracked = tips.observed_states();
  auto result = RunResult{};
  using clock = std::chrono::steady_clock;

  if (is_mcmc(config.method)) {
    auto start = config.warm_start ? as_augmented(*config.warm_start) : initialize_history(tree, tips, q);
    auto chain = ChainState{tree, kernel, tips, std::move(start), rng};
    result.samples.reserve(config.iterations / config.thin);
    auto t0 = clock::now();
    run_chain(
        chain, config.iterations, config.thin, [&](const HistorySummary& s) { result.samples.push_back(s); },
        tracked);
    result.raw_seconds = std::chrono::duration<double>(clock::now() - t0).count();
    return result;
  }

  auto regime = config.method == Method::exp_once ? ExpRegime::once : ExpRegime::per_iteration;
  auto sampler = ExpSampler{tree, kernel, tips, regime};
  result.samples.reserve(config.iterations / config.thin);
  auto t0 = clock::now();
  for (long k = 1; k <= config.iterations; ++k) {
    const auto& h = sampler.draw(rng);
    if (k % config.thin == 0) { result.samples.push_back(summarize(h, q, std::span<const int>{tracked})); }
  }
  result.raw_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return result;
}

}  // namespace stochmap
