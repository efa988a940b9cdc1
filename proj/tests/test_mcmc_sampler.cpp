#include <doctest.h>

#include <cmath>
#include <map>

#include "oracles.hpp"
#include "stochmap/diagnostics.hpp"
#include "stochmap/mcmc_sampler.hpp"
#include "stochmap/simulate.hpp"

using namespace stochmap;

namespace {

auto random_model(int s, std::uint64_t seed) -> RateMatrix {
  auto rng = std::mt19937_64(seed);
  auto q = oracle::random_generator(s, rng);
  return RateMatrix(q, oracle::random_distribution(s, rng));
}

// Unscaled pruning with explicit matrix powers.
auto brute_likelihood(const Phylogeny& tree, const Eigen::MatrixXd& b, const std::vector<int>& m,
                      const std::vector<int>& tips, const Eigen::VectorXd& pi) -> double {
  auto s = b.rows();
  auto l = std::vector<Eigen::VectorXd>(tree.num_nodes());
  for (auto node : tree.postorder()) {
    if (tree.is_tip(node)) {
      l[node] = Eigen::VectorXd::Zero(s);
      l[node][tips[node]] = 1.0;
      continue;
    }
    auto [c1, c2] = tree.children(node);
    Eigen::VectorXd a = oracle::matrix_power(b, m[c1]) * l[c1];
    Eigen::VectorXd d = oracle::matrix_power(b, m[c2]) * l[c2];
    l[node] = a.cwiseProduct(d);
  }
  return pi.dot(l[tree.root()]);
}

}  // namespace

TEST_SUITE("mcmc_sampler") {
  TEST_CASE("partial likelihoods with no jumps") {
    auto tree = parse_newick("(A:1,B:1);");
    auto kernel = uniformize(build_equal_rates(3), 2.0);
    auto zero = std::vector<int>{0, 0};
    auto same = compute_partial_likelihoods(tree, kernel, zero, TipData{{1, 1}});
    auto root = same.node(tree.root());
    CHECK(root[0] == 0.0);
    CHECK(root[1] == 1.0);
    CHECK(root[2] == 0.0);
    CHECK_THROWS_AS(compute_partial_likelihoods(tree, kernel, zero, TipData{{0, 1}}), SamplerError);
    CHECK_THROWS(compute_partial_likelihoods(tree, kernel, std::vector<int>{0}, TipData{{0, 1}}));
  }

  TEST_CASE("partial likelihoods match explicit matrix powers") {
    auto q = random_model(4, 41);
    auto kernel = uniformize(q, 1.4);
    auto rng = make_rng(41);
    auto tree = simulate_yule_tree(5, 1.0, rng);
    for (auto rep = 0; rep < 10; ++rep) {
      auto m = std::vector<int>(tree.num_branches());
      for (auto& x : m) { x = static_cast<int>(rng() % 7); }
      auto tips = std::vector<int>(5);
      for (auto& x : tips) { x = static_cast<int>(rng() % 4); }
      auto partials = compute_partial_likelihoods(tree, kernel, m, TipData{tips});
      auto expected = brute_likelihood(tree, kernel.b(), m, tips, q.root_distribution());
      auto got = std::exp(log_likelihood(partials, q.root_distribution(), tree.root()));
      CHECK(std::abs(got - expected) <= 1e-10 * expected);
      CHECK(partials.by_node.maxCoeff() <= 1.0);
      CHECK(partials.by_node.minCoeff() >= 0.0);
      for (auto tip = 0; tip < 5; ++tip) { CHECK(partials.node(tip)[tips[tip]] == 1.0); }
    }
  }

  TEST_CASE("large trees do not underflow") {
    auto rng = make_rng(42);
    auto tree = simulate_yule_tree(100, 1.0, rng);
    auto q = scale_to_expected_transitions(build_equal_rates(20), tree, 6.0);
    auto kernel = uniformize(q, 2.0);
    auto m = std::vector<int>(tree.num_branches(), 40);
    auto tips = TipData{std::vector<int>(100)};
    for (auto& x : tips.states) { x = static_cast<int>(rng() % 20); }
    auto partials = compute_partial_likelihoods(tree, kernel, m, tips);
    auto ll = log_likelihood(partials, q.root_distribution(), tree.root());
    CHECK(std::isfinite(ll));
    CHECK(ll < -200.0);
  }

  TEST_CASE("root state draws") {
    auto rng = make_rng(43);
    auto partials = PartialLikelihoods{Eigen::MatrixXd(3, 1), {0.0}};
    partials.by_node.col(0) << 1.0, 0.0, 0.0;
    auto pi = Eigen::Vector3d(0.2, 0.3, 0.5);
    for (auto i = 0; i < 100; ++i) { CHECK(sample_root_state(partials, pi, 0, rng) == 0); }

    partials.by_node.col(0) << 0.4, 0.4, 0.4;
    auto uniform = Eigen::Vector3d::Constant(1.0 / 3.0).eval();
    constexpr auto draws = 100000;
    auto counts = std::array<double, 3>{};
    for (auto i = 0; i < draws; ++i) { counts[sample_root_state(partials, uniform, 0, rng)] += 1; }
    for (auto c : counts) {
      auto p = c / draws;
      CHECK(std::abs(p - 1.0 / 3.0) < 3.0 * std::sqrt(2.0 / 9.0 / draws));
    }

    auto two = PartialLikelihoods{Eigen::MatrixXd(2, 1), {0.0}};
    two.by_node.col(0) << 0.1, 0.9;
    auto skew = Eigen::Vector2d(0.9, 0.1);
    auto first = 0.0;
    for (auto i = 0; i < draws; ++i) { first += sample_root_state(two, skew, 0, rng) == 0 ? 1.0 : 0.0; }
    CHECK(std::abs(first / draws - 0.5) < 3.0 * std::sqrt(0.25 / draws));

    two.by_node.col(0) << 0.0, 0.0;
    CHECK_THROWS_AS(sample_root_state(two, skew, 0, rng), SamplerError);
  }

  TEST_CASE("internal node draws: simple cases") {
    auto rng = make_rng(44);
    auto tree = parse_newick("((A:1,B:1):1,C:2);");
    auto kernel = uniformize(build_equal_rates(2), 2.0);  // B = all 0.5
    auto tips = TipData{{0, 1, 1}};
    auto cherry = 3;
    // m = 0 above the cherry: cherry takes the root state.
    auto m = std::vector<int>{1, 1, 3, 0};
    auto partials = compute_partial_likelihoods(tree, kernel, m, tips);
    for (auto rep = 0; rep < 50; ++rep) {
      auto root = sample_root_state(partials, kernel.rate_matrix().root_distribution(), tree.root(), rng);
      auto states = sample_internal_nodes(tree, kernel, m, partials, root, tips, rng);
      CHECK(states[cherry] == root);
      CHECK(states[0] == 0);
      CHECK(states[2] == 1);
    }
    // m = 1 with l_c constant: child uniform whatever the parent.
    m = {1, 1, 1, 1};
    partials = compute_partial_likelihoods(tree, kernel, m, tips);
    CHECK(partials.node(cherry)[0] == partials.node(cherry)[1]);
    for (auto parent : {0, 1}) {
      auto ones = 0.0;
      constexpr auto draws = 20000;
      for (auto i = 0; i < draws; ++i) {
        ones += sample_internal_nodes(tree, kernel, m, partials, parent, tips, rng)[cherry];
      }
      CHECK(std::abs(ones / draws - 0.5) < 3.0 * std::sqrt(0.25 / draws));
    }
  }

  TEST_CASE("internal node draws match enumeration") {
    auto q = random_model(3, 45);
    auto kernel = uniformize(q, 1.5);
    const auto& b = kernel.b();
    const auto& pi = q.root_distribution();
    auto tree = parse_newick("((A:0.7,B:1.1):0.4,C:1.5);");
    auto tips = TipData{{0, 2, 1}};
    auto m = std::vector<int>{2, 3, 4, 1};
    auto cherry = 3;

    auto exact = std::map<std::vector<int>, double>{};
    auto total = 0.0;
    for (auto r = 0; r < 3; ++r) {
      for (auto c = 0; c < 3; ++c) {
        auto p = pi[r] * oracle::matrix_power(b, m[cherry])(r, c) * oracle::matrix_power(b, m[2])(r, tips[2]) *
                 oracle::matrix_power(b, m[0])(c, tips[0]) * oracle::matrix_power(b, m[1])(c, tips[1]);
        exact[{r, c}] = p;
        total += p;
      }
    }
    for (auto& [k, v] : exact) { v /= total; }

    auto rng = make_rng(45);
    auto partials = compute_partial_likelihoods(tree, kernel, m, tips);
    constexpr auto draws = 200000;
    auto empirical = std::map<std::vector<int>, double>{};
    for (auto i = 0; i < draws; ++i) {
      auto root = sample_root_state(partials, pi, tree.root(), rng);
      auto states = sample_internal_nodes(tree, kernel, m, partials, root, tips, rng);
      empirical[{root, states[cherry]}] += 1.0 / draws;
    }
    CHECK(oracle::total_variation(exact, empirical) < 0.01);
  }

  TEST_CASE("branch segments: simple cases") {
    auto rng = make_rng(46);
    auto kernel = uniformize(build_equal_rates(2), 2.0);
    CHECK(sample_branch_segments(0, 1, 1, kernel, rng) == std::vector<int>{0, 1});
    CHECK(sample_branch_segments(1, 1, 0, kernel, rng) == std::vector<int>{1});
    CHECK_THROWS_AS(sample_branch_segments(0, 1, 0, kernel, rng), SamplerError);
    constexpr auto draws = 20000;
    auto ones = 0.0;
    for (auto i = 0; i < draws; ++i) {
      auto v = sample_branch_segments(0, 0, 2, kernel, rng);
      REQUIRE(v.size() == 3);
      CHECK(v.front() == 0);
      CHECK(v.back() == 0);
      ones += v[1];
    }
    CHECK(std::abs(ones / draws - 0.5) < 3.0 * std::sqrt(0.25 / draws));
  }

  TEST_CASE("branch segments match path enumeration") {
    // m = 4 gives three interior labels, so 3^3 = 27 interior paths.
    auto q = random_model(3, 47);
    for (auto storage : {KernelStorage::dense, KernelStorage::sparse}) {
      auto kernel = uniformize(q, 1.3, storage);
      const auto& b = kernel.b();
      const auto start = 2;
      const auto end = 0;
      auto exact = std::map<std::vector<int>, double>{};
      auto total = 0.0;
      for (auto v1 = 0; v1 < 3; ++v1) {
        for (auto v2 = 0; v2 < 3; ++v2) {
          for (auto v3 = 0; v3 < 3; ++v3) {
            auto p = b(start, v1) * b(v1, v2) * b(v2, v3) * b(v3, end);
            exact[{v1, v2, v3}] = p;
            total += p;
          }
        }
      }
      for (auto& [k, v] : exact) { v /= total; }
      auto rng = make_rng(47);
      constexpr auto draws = 500000;
      auto empirical = std::map<std::vector<int>, double>{};
      for (auto i = 0; i < draws; ++i) {
        auto v = sample_branch_segments(start, end, 4, kernel, rng);
        empirical[{v[1], v[2], v[3]}] += 1.0 / draws;
      }
      CHECK(oracle::total_variation(exact, empirical) < 0.01);
    }
  }

  TEST_CASE("virtual jumps") {
    auto q = Eigen::MatrixXd(2, 2);
    q << -1, 1, 0.5, -0.5;
    auto rm = RateMatrix(q, Eigen::Vector2d(0.5, 0.5));
    auto kernel = uniformize_absolute(rm, 2.0);
    auto tree = parse_newick("(A:3,B:3);");
    auto h = SubstitutionHistory{0, {{{0}, {3.0}}, {{0, 1}, {1.0, 2.0}}}};
    auto rng = make_rng(48);
    constexpr auto draws = 100000;
    auto sum = 0.0, sum2 = 0.0;
    for (auto i = 0; i < draws; ++i) {
      auto aug = resample_virtual_jumps(h, kernel, rng);
      auto n = double(aug.branches[0].jumps());
      sum += n;
      sum2 += n * n;
      if (i < 1000) {
        validate_history(aug, tree, 2);
        auto back = drop_virtual_jumps(aug);
        CHECK(back.root_state == h.root_state);
        for (std::size_t k = 0; k < 2; ++k) {
          CHECK(back.branches[k].states == h.branches[k].states);
          for (std::size_t d = 0; d < h.branches[k].durations.size(); ++d) {
            CHECK(std::abs(back.branches[k].durations[d] - h.branches[k].durations[d]) < 1e-12);
          }
        }
      }
    }
    // q_00 = -1, omega = 2, t = 3: Poisson(3).
    auto mean = sum / draws;
    auto se = std::sqrt((sum2 / draws - mean * mean) / draws);
    CHECK(std::abs(mean - 3.0) < 3.0 * se);

    // Omega at the largest exit rate (one ulp above, as the kernel requires a
    // strict inequality): the fastest state receives no virtual jumps.
    auto tight = uniformize_absolute(rm, std::nextafter(1.0, 2.0));
    for (auto i = 0; i < 1000; ++i) { CHECK(resample_virtual_jumps(h, tight, rng).branches[0].jumps() == 0); }
  }

  TEST_CASE("single-state chain") {
    auto tree = parse_newick("((A:1,B:2):1,C:3);");
    auto rm = RateMatrix(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1));
    auto kernel = uniformize(rm, 2.0);
    auto tips = TipData{{0, 0, 0}};
    auto chain = ChainState{tree, kernel, tips, initialize_history(tree, tips, kernel.rate_matrix()), make_rng(49)};
    for (auto i = 0; i < 100; ++i) {
      sweep(chain);
      CHECK(chain.substitution_history().root_state == 0);
      for (const auto& b : chain.substitution_history().branches) { CHECK(b.states == std::vector<int>{0}); }
    }
    CHECK(chain.sweeps() == 100);
  }

  TEST_CASE("kernels preserve what they condition on") {
    auto rng = make_rng(50);
    auto tree = simulate_yule_tree(12, 1.0, rng);
    auto q = scale_to_expected_transitions(build_equal_rates(4), tree, 6.0);
    auto kernel = uniformize(q, 2.0);
    auto data = simulate_history(tree, q, rng);
    auto chain = ChainState{tree, kernel, data.tips, as_augmented(data.history), make_rng(51)};
    for (auto i = 0; i < 200; ++i) {
      auto before = chain.history();
      update_labels(chain);
      for (std::size_t b = 0; b < before.branches.size(); ++b) {
        CHECK(chain.history().branches[b].durations == before.branches[b].durations);
      }
      validate_history(chain.history(), tree, 4, &data.tips);
      auto st = drop_virtual_jumps(chain.history());
      update_virtual_jumps(chain);
      CHECK(chain.substitution_history() == st);
      auto back = drop_virtual_jumps(chain.history());
      CHECK(back.root_state == st.root_state);
      for (std::size_t b = 0; b < st.branches.size(); ++b) {
        CHECK(back.branches[b].states == st.branches[b].states);
        for (std::size_t d = 0; d < st.branches[b].durations.size(); ++d) {
          CHECK(std::abs(back.branches[b].durations[d] - st.branches[b].durations[d]) < 1e-12);
        }
      }
    }
  }

  TEST_CASE("tip consistency after every sweep") {
    auto tree = parse_newick("(A:1,B:1);");
    auto kernel = uniformize(build_equal_rates(2), 2.0);
    auto tips = TipData{{0, 1}};
    auto chain = ChainState{tree, kernel, tips, initialize_history(tree, tips, kernel.rate_matrix()), make_rng(52)};
    for (auto i = 0; i < 2000; ++i) {
      sweep(chain);
      CHECK(chain.history().branches[0].end_state() == 0);
      CHECK(chain.history().branches[1].end_state() == 1);
      validate_history(chain.substitution_history(), tree, 2, &tips);
    }
  }

  TEST_CASE("run_chain emits thinned, reproducible summaries") {
    auto rng = make_rng(53);
    auto tree = simulate_yule_tree(8, 1.0, rng);
    auto q = scale_to_expected_transitions(build_equal_rates(3), tree, 4.0);
    auto kernel = uniformize(q, 2.0);
    auto data = simulate_history(tree, q, rng);
    auto run = [&](long n, int thin) {
      auto chain = ChainState{tree, kernel, data.tips, initialize_history(tree, data.tips, kernel.rate_matrix()), make_rng(54)};
      return run_chain(chain, n, thin);
    };
    CHECK(run(10, 1).size() == 10);
    CHECK(run(100, 10).size() == 10);
    auto a = run(300, 3);
    auto b = run(300, 3);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].dwell == b[i].dwell);
      CHECK(a[i].counts == b[i].counts);
      CHECK(a[i].log_density == b[i].log_density);
    }
    auto chain = ChainState{tree, kernel, data.tips, initialize_history(tree, data.tips, kernel.rate_matrix()), make_rng(54)};
    CHECK_THROWS(run_chain(chain, 10, 0));
  }

  TEST_CASE("posterior dwell times match numerical integration") {
    // 3 tips, asymmetric 2-state chain; dense and sparse storage.
    const auto a = 0.8;
    const auto b = 1.6;
    auto q = Eigen::MatrixXd(2, 2);
    q << -a, a, b, -b;
    auto pi = Eigen::Vector2d(0.35, 0.65);
    auto rm = RateMatrix(q, pi);
    auto tree = parse_newick("((A:0.6,B:1.2):0.5,C:1.4);");
    auto tip_states = std::vector<int>{0, 1, 0};
    auto tips = TipData{tip_states};
    auto exact = oracle::two_state_posterior_dwell(tree, tip_states, a, b, pi, 1e-4);
    CHECK(exact.sum() == doctest::Approx(total_tree_length(tree)).epsilon(1e-9));

    for (auto storage : {KernelStorage::dense, KernelStorage::sparse}) {
      auto kernel = uniformize(rm, 1.5, storage);
      auto chain = ChainState{tree, kernel, tips, initialize_history(tree, tips, kernel.rate_matrix()), make_rng(55)};
      constexpr auto sweeps = 200000;
      auto samples = run_chain(chain, sweeps, 1, std::vector<int>{0, 1});
      auto dwell = std::vector<double>(samples.size());
      for (std::size_t i = 0; i < samples.size(); ++i) { dwell[i] = samples[i].dwell[0]; }
      auto mean = 0.0;
      for (auto x : dwell) { mean += x / sweeps; }
      auto var = 0.0;
      for (auto x : dwell) { var += (x - mean) * (x - mean) / (sweeps - 1); }
      auto se = std::sqrt(var / ess(dwell));
      CHECK(std::abs(mean - exact[0]) < 3.0 * se);
    }
  }
}
