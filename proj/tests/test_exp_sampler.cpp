#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "stochmap/exp_sampler.hpp"
#include "stochmap/simulate.hpp"

using namespace stochmap;

TEST_SUITE("exp_sampler") {
  TEST_CASE("poisson truncation point") {
    CHECK(poisson_truncation_point(0.0) == 0);
    for (auto mean : {0.1, 1.0, 7.5, 40.0}) {
      auto m = poisson_truncation_point(mean);
      // Upper tail beyond m, computed independently by summing the tail directly.
      auto tail = 0.0;
      for (auto k = m + 1; k < m + 400; ++k) { tail += std::exp(-mean + k * std::log(mean) - std::lgamma(k + 1.0)); }
      CHECK(tail < 1e-12);
      auto tail_before = tail + std::exp(-mean + m * std::log(mean) - std::lgamma(m + 1.0));
      CHECK((tail_before >= 1e-12 || m <= mean));
    }
  }

  TEST_CASE("jump-count weights sum to the transition probability") {
    auto rng = std::mt19937_64(61);
    for (auto rep = 0; rep < 10; ++rep) {
      auto s = 2 + rep % 5;
      auto rm = RateMatrix(oracle::random_generator(s, rng), oracle::random_distribution(s, rng));
      auto kernel = uniformize(rm, 1.0 + 0.3 * (rep + 1));
      for (auto t : {0.1, 0.5, 1.0, 2.0}) {
        auto p = matrix_exponential(rm, t).p;
        for (auto a = 0; a < s; ++a) {
          for (auto b = 0; b < s; ++b) {
            auto w = endpoint_jump_weights(a, b, t, kernel);
            CHECK(std::abs(std::accumulate(w.begin(), w.end(), 0.0) - p(a, b)) < 1e-8);
          }
        }
      }
    }
  }

  TEST_CASE("endpoint-conditioned paths: zero-jump probability") {
    // 2-state symmetric rate 1: Pr(no change | 0 -> 0 over t) = e^{-t} / P_00(t).
    auto rm = build_equal_rates(2);
    auto kernel = uniformize(rm, 2.0);
    auto rng = make_rng(62);
    for (auto t : {0.3, 1.0, 2.5}) {
      auto p00 = oracle::two_state_p(1.0, 1.0, t)(0, 0);
      auto expected = std::exp(-t) / p00;
      constexpr auto draws = 100000;
      auto hits = 0.0;
      for (auto i = 0; i < draws; ++i) {
        auto path = sample_endpoint_conditioned_path(0, 0, t, p00, kernel, rng);
        CHECK(path.start_state() == 0);
        CHECK(path.end_state() == 0);
        CHECK(std::abs(path.length() - t) < 1e-12);
        if (path.jumps() == 0) { hits += 1.0; }
      }
      auto se = std::sqrt(expected * (1 - expected) / draws);
      CHECK(std::abs(hits / draws - expected) < 3.0 * se);
    }
  }

  TEST_CASE("endpoint-conditioned paths: jump count distribution") {
    // 0 -> 1 on a 2-state symmetric chain: jumps are odd, Pr(1 jump) = t e^{-t} / P_01(t).
    auto kernel = uniformize(build_equal_rates(2), 3.0);
    auto rng = make_rng(63);
    const auto t = 1.2;
    auto p01 = oracle::two_state_p(1.0, 1.0, t)(0, 1);
    auto expected = t * std::exp(-t) / p01;
    constexpr auto draws = 100000;
    auto single = 0.0;
    for (auto i = 0; i < draws; ++i) {
      auto path = sample_endpoint_conditioned_path(0, 1, t, p01, kernel, rng);
      CHECK(path.jumps() % 2 == 1);
      if (path.jumps() == 1) { single += 1.0; }
    }
    CHECK(std::abs(single / draws - expected) < 3.0 * std::sqrt(expected * (1 - expected) / draws));
  }

  TEST_CASE("near-zero rates concentrate on no transitions") {
    auto tree = parse_newick("(A:1,B:1);");
    auto rm = build_equal_rates(3, 1e-9);
    auto kernel = uniformize(rm, 2.0);
    auto tips = TipData{{2, 2}};
    auto rng = make_rng(64);
    auto sampler = ExpSampler{tree, kernel, tips, ExpRegime::per_iteration};
    for (auto i = 0; i < 1000; ++i) {
      const auto& h = sampler.draw(rng);
      CHECK(h.root_state == 2);
      CHECK(h.branches[0].jumps() == 0);
      CHECK(h.branches[1].jumps() == 0);
    }
  }

  TEST_CASE("likelihood matches brute force over internal states") {
    const auto a = 0.7;
    const auto b = 1.3;
    auto q = Eigen::MatrixXd(2, 2);
    q << -a, a, b, -b;
    auto pi = Eigen::Vector2d(0.4, 0.6);
    auto rm = RateMatrix(q, pi);
    auto tree = parse_newick("((A:0.6,B:1.2):0.5,C:1.4);");
    auto tips = std::vector<int>{0, 1, 1};
    auto kernel = uniformize(rm, 2.0);
    auto sampler = ExpSampler{tree, kernel, TipData{tips}, ExpRegime::once};
    auto rng = make_rng(65);
    sampler.draw(rng);
    auto brute = 0.0;
    for (auto r = 0; r < 2; ++r) {
      for (auto c = 0; c < 2; ++c) {
        brute += pi[r] * oracle::two_state_p(a, b, 0.5)(r, c) * oracle::two_state_p(a, b, 1.4)(r, tips[2]) *
                 oracle::two_state_p(a, b, 0.6)(c, tips[0]) * oracle::two_state_p(a, b, 1.2)(c, tips[1]);
      }
    }
    CHECK(std::exp(sampler.log_likelihood()) == doctest::Approx(brute).epsilon(1e-12));
  }

  TEST_CASE("draws are valid and independent") {
    auto rng = make_rng(66);
    auto tree = simulate_yule_tree(20, 1.0, rng);
    auto q = scale_to_expected_transitions(build_equal_rates(4), tree, 6.0);
    auto data = simulate_history(tree, q, rng);
    auto kernel = uniformize(q, 2.0);
    auto sampler = ExpSampler{tree, kernel, data.tips, ExpRegime::per_iteration};
    constexpr auto draws = 20000;
    auto series = std::vector<double>(draws);
    for (auto i = 0; i < draws; ++i) {
      const auto& h = sampler.draw(rng);
      if (i < 500) { validate_history(h, tree, 4, &data.tips); }
      series[i] = summarize(h, q).dwell[data.tips[0]];
    }
    auto mean = std::accumulate(series.begin(), series.end(), 0.0) / draws;
    auto c0 = 0.0, c1 = 0.0;
    for (auto i = 0; i < draws; ++i) {
      c0 += (series[i] - mean) * (series[i] - mean);
      if (i > 0) { c1 += (series[i] - mean) * (series[i - 1] - mean); }
    }
    CHECK(std::abs(c1 / c0) < 3.0 / std::sqrt(double(draws)));
  }

  TEST_CASE("regimes give identical draws for the same seed") {
    auto rng = make_rng(67);
    auto tree = simulate_yule_tree(10, 1.0, rng);
    auto q = scale_to_expected_transitions(build_equal_rates(5), tree, 4.0);
    auto data = simulate_history(tree, q, rng);
    auto kernel = uniformize(q, 2.0);
    auto per = ExpSampler{tree, kernel, data.tips, ExpRegime::per_iteration};
    auto once = ExpSampler{tree, kernel, data.tips, ExpRegime::once};
    auto r1 = make_rng(68);
    auto r2 = make_rng(68);
    for (auto i = 0; i < 200; ++i) { CHECK(per.draw(r1) == once.draw(r2)); }
    CHECK(std::string(to_string(ExpRegime::once)) == "once");
  }

  TEST_CASE("convenience wrapper") {
    auto tree = parse_newick("(A:1,B:1);");
    auto kernel = uniformize(build_equal_rates(2), 2.0);
    auto tips = TipData{{0, 1}};
    auto rng = make_rng(69);
    for (auto i = 0; i < 100; ++i) {
      auto h = sample_history_exp(tree, kernel, tips, rng);
      validate_history(h, tree, 2, &tips);
    }
  }
}
