#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "stochmap/history.hpp"
#include "stochmap/simulate.hpp"

using namespace stochmap;

namespace {

// ((A:3.2,B:3.2):4.8,C:8) with tips A, B, C = nodes 0, 1, 2 and the cherry = 3.
// States are 0-based: the figure's states 1, 2, 3 are 0, 1, 2 here.
auto figure_tree() -> Phylogeny { return parse_newick("((A:3.2,B:3.2):4.8,C:8);"); }

auto figure_augmented() -> AugmentedHistory {
  auto h = AugmentedHistory{2, std::vector<BranchPath>(4)};
  h.branches[0] = {{0, 0}, {1.6, 1.6}};
  h.branches[1] = {{0, 1}, {0.64, 2.56}};
  h.branches[2] = {{2, 2}, {7.0, 1.0}};
  h.branches[3] = {{2, 0}, {2.4, 2.4}};
  return h;
}

auto figure_rates() -> RateMatrix {
  auto q = Eigen::MatrixXd(3, 3);
  q << -0.3, 0.2, 0.1, 0.1, -0.2, 0.1, 0.05, 0.05, -0.1;
  return RateMatrix(q, Eigen::Vector3d(0.2, 0.3, 0.5));
}

}  // namespace

TEST_SUITE("history") {
  TEST_CASE("dropping virtual jumps") {
    auto tree = figure_tree();
    auto aug = figure_augmented();
    validate_history(aug, tree, 3);
    auto h = drop_virtual_jumps(aug);
    CHECK(h.branches[0].states == std::vector<int>{0});
    CHECK(h.branches[0].durations == std::vector<double>{3.2});
    CHECK(h.branches[2].states == std::vector<int>{2});
    CHECK(h.branches[2].durations == std::vector<double>{8.0});
    CHECK(h.branches[1] == aug.branches[1]);
    CHECK(h.branches[3] == aug.branches[3]);
    validate_history(h, tree, 3);
    CHECK(drop_virtual_jumps(as_augmented(h)) == h);
    CHECK(virtual_jump_times(aug.branches[0]) == std::vector<double>{1.6});
    CHECK(virtual_jump_times(aug.branches[2]) == std::vector<double>{7.0});
    CHECK(virtual_jump_times(aug.branches[1]).empty());
  }

  TEST_CASE("summaries of the figure history") {
    auto tree = figure_tree();
    auto q = figure_rates();
    auto aug = figure_augmented();
    auto h = drop_virtual_jumps(aug);
    auto s = summarize(h, q);
    CHECK(s.dwell[2] == doctest::Approx(10.4).epsilon(1e-12));
    CHECK(s.dwell[0] == doctest::Approx(3.2 + 0.64 + 2.4).epsilon(1e-12));
    auto total = s.dwell[0] + s.dwell[1] + s.dwell[2];
    CHECK(std::abs(total - total_tree_length(tree)) < 1e-9);
    CHECK(s.count(0, 1) == 1);
    CHECK(s.count(2, 0) == 1);
    CHECK(s.total_transitions() == 2);
    // Dwell is unchanged by virtual jumps.
    auto s_aug = summarize(SubstitutionHistory{aug.root_state, aug.branches}, q);
    for (auto k = 0; k < 3; ++k) { CHECK(s_aug.dwell[k] == doctest::Approx(s.dwell[k]).epsilon(1e-14)); }

    auto restricted = summarize(h, q, std::vector<int>{0, 2});
    CHECK(restricted.tracked_states == std::vector<int>{0, 2});
    CHECK(restricted.counts.size() == 4);
    CHECK(restricted.count(1, 0) == 1);  // 2 -> 0
    CHECK(restricted.total_transitions() == 1);
    CHECK_THROWS(summarize(h, q, std::vector<int>{5}));
  }

  TEST_CASE("log density") {
    auto tree = parse_newick("(A:2.0,B:2.0);");
    auto q = build_equal_rates(2);
    auto h = SubstitutionHistory{0, {{{0}, {2.0}}, {{0, 1}, {1.0, 1.0}}}};
    // Per branch: one segment gives log 0.5 - 2 overall for the first example;
    // the second branch adds -1 + log 1 - 1.
    auto single = SubstitutionHistory{0, {{{0}, {2.0}}}};
    auto branch_two = SubstitutionHistory{0, {{{0, 1}, {1.0, 1.0}}}};
    CHECK(log_density(single, q) == doctest::Approx(std::log(0.5) - 2.0).epsilon(1e-14));
    CHECK(log_density(branch_two, q) == doctest::Approx(std::log(0.5) - 2.0).epsilon(1e-14));
    CHECK(log_density(h, q) == doctest::Approx(std::log(0.5) - 4.0).epsilon(1e-14));
    CHECK(summarize(h, q).log_density == doctest::Approx(log_density(h, q)).epsilon(1e-14));
    validate_history(h, tree, 2);
  }

  TEST_CASE("validation") {
    auto tree = figure_tree();
    auto h = drop_virtual_jumps(figure_augmented());
    auto tips = tip_states_of(h, tree);
    CHECK(tips.states == std::vector<int>{0, 1, 2});
    validate_history(h, tree, 3, &tips);

    auto bad_length = h;
    bad_length.branches[0].durations[0] = 3.0;
    CHECK_THROWS(validate_history(bad_length, tree, 3));
    auto self = h;
    self.branches[2] = {{2, 2}, {7.0, 1.0}};
    CHECK_THROWS(validate_history(self, tree, 3));
    CHECK_NOTHROW(validate_history(as_augmented(self), tree, 3));
    auto discontinuous = h;
    discontinuous.branches[0].states = {1};
    CHECK_THROWS(validate_history(discontinuous, tree, 3));
    auto wrong_tip = tips;
    wrong_tip.states[1] = 0;
    CHECK_THROWS(validate_history(h, tree, 3, &wrong_tip));
    CHECK_THROWS(validate_history(h, tree, 2));
    CHECK_THROWS(validate_tip_data(TipData{{0, 1}}, tree, 3));
    CHECK_THROWS(validate_tip_data(TipData{{0, 1, 3}}, tree, 3));
  }

  TEST_CASE("idempotence on simulated histories") {
    auto rng = make_rng(31);
    auto tree = simulate_yule_tree(25, 1.0, rng);
    auto q = scale_to_expected_transitions(build_equal_rates(5), tree, 10.0);
    for (auto rep = 0; rep < 20; ++rep) {
      auto data = simulate_history(tree, q, rng);
      auto once = drop_virtual_jumps(as_augmented(data.history));
      CHECK(once == data.history);
      CHECK(drop_virtual_jumps(as_augmented(once)) == once);
      auto s = summarize(data.history, q);
      auto total = 0.0;
      for (auto d : s.dwell) { total += d; }
      CHECK(std::abs(total - total_tree_length(tree)) < 1e-9);
    }
  }

  TEST_CASE("json and csv round trips") {
    auto dir = std::filesystem::temp_directory_path();
    auto tree = figure_tree();
    auto h = drop_virtual_jumps(figure_augmented());
    auto json_path = (dir / "stochmap_history.json").string();
    write_history_json(h, tree, json_path);
    CHECK(read_history_json(json_path, tree) == h);

    auto tips = tip_states_of(h, tree);
    auto csv_path = (dir / "stochmap_tips.csv").string();
    write_tip_data(tips, tree, csv_path);
    CHECK(read_tip_data(csv_path, tree) == tips);

    auto q = figure_rates();
    auto summaries = std::vector<HistorySummary>{summarize(h, q), summarize(h, q)};
    CHECK(summary_csv_header(summaries[0]).starts_with("sample,dwell_0,dwell_1,dwell_2,count_0_1"));
    auto row = summary_csv_row(3, summaries[0]);
    CHECK(row.starts_with("3,"));
    auto summary_path = (dir / "stochmap_summary.csv").string();
    write_summary_csv(summaries, summary_path);
    CHECK(std::filesystem::file_size(summary_path) > 0);
    for (const auto& p : {json_path, csv_path, summary_path}) { std::filesystem::remove(p); }
  }
}
