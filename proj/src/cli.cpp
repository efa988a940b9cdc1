#include "stochmap/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "stochmap/codon.hpp"
#include "stochmap/ctmc.hpp"
#include "stochmap/diagnostics.hpp"
#include "stochmap/history.hpp"
#include "stochmap/random.hpp"
#include "stochmap/runner.hpp"
#include "stochmap/simulate.hpp"
#include "stochmap/tree.hpp"

namespace fs = std::filesystem;

namespace stochmap {

namespace {

struct ModelSpec {
  std::string model = "equal";
  int states = 4;
  double kappa = 2.0;
  double omega = 0.5;
  std::string frequency_file;
  std::string rate_file;
};

auto build_model(const ModelSpec& spec) -> RateMatrix {
  if (spec.model == "equal") { return build_equal_rates(spec.states); }
  if (spec.model == "tridiag") { return build_tridiagonal(spec.states); }
  if (spec.model == "gy94") {
    auto freqs = spec.frequency_file.empty() ? std::vector<double>(k_sense_codons, 1.0 / k_sense_codons)
                                             : load_codon_frequencies(spec.frequency_file);
    return build_gy94(spec.kappa, spec.omega, freqs);
  }
  if (spec.model == "file") {
    if (spec.rate_file.empty()) { throw std::invalid_argument("--model file requires --rate-file"); }
    return load_rate_file(spec.rate_file);
  }
  throw std::invalid_argument(fmt::format("unknown model '{}' (expected equal, tridiag, gy94 or file)", spec.model));
}

auto has_fixed_size(const std::string& model) -> bool { return model == "gy94" || model == "file"; }

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  int tips = 50;
  ModelSpec model;
  double expected = 2.0;
  double birth_rate = 1.0;
  std::uint64_t seed = 1;
  std::string out_dir;
};

auto cmd_simulate(const SimulateArgs& args, bool states_given) -> void {
  if (states_given && has_fixed_size(args.model.model)) {
    throw std::invalid_argument(fmt::format("--states cannot be combined with --model {}", args.model.model));
  }
  if (args.tips < 2) { throw std::invalid_argument("--tips must be at least 2"); }
  if (!(args.expected > 0.0)) { throw std::invalid_argument("--expected-transitions must be positive"); }
  auto tree_rng = make_rng(args.seed, 0);
  auto tree = simulate_yule_tree(args.tips, args.birth_rate, tree_rng);
  auto q = scale_to_expected_transitions(build_model(args.model), tree, args.expected);
  auto history_rng = make_rng(args.seed, 1);
  auto data = simulate_history(tree, q, history_rng);

  fs::create_directories(args.out_dir);
  auto dir = fs::path(args.out_dir);
  write_newick_file(tree, (dir / "tree.nwk").string());
  write_tip_data(data.tips, tree, (dir / "tips.csv").string());
  write_history_json(data.history, tree, (dir / "history.json").string());
  write_rate_file(q, (dir / "rates.txt").string());
  std::cout << fmt::format("wrote {} tips, {} states, {} substitutions to {}\n", tree.num_tips(), q.states(),
                           summarize(data.history, q).total_transitions(), dir.string());
}

// ---------------------------------------------------------------------------
// sample

struct SampleArgs {
  std::string in_dir;
  std::string tree_file;
  std::string tip_file;
  std::string rate_file;
  std::string method = "mcmc";
  double omega_multiplier = 2.0;
  long sweeps = 0;
  long draws = 0;
  int thin = 1;
  std::uint64_t seed = 1;
  bool warm_start = false;
  double burn_in = 0.1;
  double target = 10000.0;
  std::string out_dir;
};

auto resolve_input(const std::string& explicit_path, const std::string& dir, const char* name) -> std::string {
  if (!explicit_path.empty()) { return explicit_path; }
  if (dir.empty()) { throw std::invalid_argument(fmt::format("missing input: give --in-dir or the {} file", name)); }
  auto path = fs::path(dir) / name;
  if (!fs::exists(path)) { throw std::invalid_argument(fmt::format("missing input file {}", path.string())); }
  return path.string();
}

auto cmd_sample(const SampleArgs& args) -> void {
  auto method = parse_method(args.method);
  if (is_mcmc(method) && args.draws > 0) { throw std::invalid_argument("use --sweeps with MCMC methods"); }
  if (!is_mcmc(method) && args.sweeps > 0) { throw std::invalid_argument("use --draws with exp methods"); }
  if (!(args.omega_multiplier > 1.0)) {
    throw std::invalid_argument(fmt::format("--omega-multiplier must exceed 1, got {}", args.omega_multiplier));
  }
  auto tree = read_newick_file(resolve_input(args.tree_file, args.in_dir, "tree.nwk"));
  auto tips = read_tip_data(resolve_input(args.tip_file, args.in_dir, "tips.csv"), tree);
  auto q = load_rate_file(resolve_input(args.rate_file, args.in_dir, "rates.txt"));

  auto config = RunConfig{};
  config.method = method;
  config.omega_multiplier = args.omega_multiplier;
  config.iterations = is_mcmc(method) ? (args.sweeps > 0 ? args.sweeps : 10000) : (args.draws > 0 ? args.draws : 10000);
  config.thin = args.thin;
  config.seed = args.seed;
  if (args.warm_start && is_mcmc(method)) {
    config.warm_start = read_history_json(resolve_input("", args.in_dir, "history.json"), tree);
  }
  auto result = run_method(tree, q, tips, config);

  fs::create_directories(args.out_dir);
  auto dir = fs::path(args.out_dir);
  auto name = to_string(method);
  write_summary_csv(result.samples, (dir / (name + "_samples.csv")).string());
  auto kept = is_mcmc(method) ? discard_burn_in(result.samples, args.burn_in)
                              : std::span<const HistorySummary>{result.samples};
  auto report = make_ess_report(monitored_statistics(kept, tips), result.raw_seconds, args.target);
  write_ess_report(report, (dir / (name + "_ess.json")).string());
  std::cout << fmt::format("{}: {} samples, {:.3f} s, min ESS {:.1f}, normalized {:.3f} s\n", name,
                           result.samples.size(), result.raw_seconds, report.min_ess, report.normalized_seconds);
}

// ---------------------------------------------------------------------------
// compare

auto read_summary_columns(const std::string& path) -> std::vector<NamedSeries> {
  auto in = std::ifstream(path);
  if (!in) { throw std::invalid_argument(fmt::format("cannot read {}", path)); }
  auto line = std::string{};
  if (!std::getline(in, line)) { throw std::invalid_argument(fmt::format("{} is empty", path)); }
  auto out = std::vector<NamedSeries>{};
  auto names = std::stringstream(line);
  auto field = std::string{};
  std::getline(names, field, ',');  // sample index
  while (std::getline(names, field, ',')) { out.push_back({field, {}, field.starts_with("count_")}); }
  auto row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) { continue; }
    auto cells = std::stringstream(line);
    std::getline(cells, field, ',');
    for (auto& series : out) {
      if (!std::getline(cells, field, ',')) {
        throw std::invalid_argument(fmt::format("{} line {}: too few columns", path, row));
      }
      series.values.push_back(std::stod(field));
    }
  }
  return out;
}

auto drop_leading(std::vector<NamedSeries>& series, double fraction) -> void {
  if (!(fraction >= 0.0 && fraction < 1.0)) { throw std::invalid_argument("burn-in fraction must lie in [0, 1)"); }
  for (auto& s : series) {
    auto drop = static_cast<std::size_t>(fraction * static_cast<double>(s.values.size()));
    s.values.erase(s.values.begin(), s.values.begin() + static_cast<std::ptrdiff_t>(drop));
  }
}

struct CompareArgs {
  std::string a;
  std::string b;
  double burn_in_a = 0.0;
  double burn_in_b = 0.0;
  std::string out;
};

auto cmd_compare(const CompareArgs& args) -> void {
  auto a = read_summary_columns(args.a);
  auto b = read_summary_columns(args.b);
  drop_leading(a, args.burn_in_a);
  drop_leading(b, args.burn_in_b);
  auto rows = compare_distributions(a, b);
  write_comparison_csv(rows, args.out);
  auto max_z = 0.0;
  auto max_tv = 0.0;
  for (const auto& r : rows) {
    max_z = std::max(max_z, std::abs(r.z));
    if (r.total_variation) { max_tv = std::max(max_tv, *r.total_variation); }
  }
  std::cout << fmt::format("{} statistics compared; max |z| = {:.3f}; max TV = {:.4f}\n", rows.size(), max_z, max_tv);
}

// ---------------------------------------------------------------------------
// benchmark

template <class T>
auto grid(const nlohmann::json& scenario, const char* key, std::vector<T> fallback) -> std::vector<T> {
  if (!scenario.contains(key)) { return fallback; }
  const auto& value = scenario.at(key);
  if (value.is_array()) { return value.get<std::vector<T>>(); }
  return {value.get<T>()};
}

}  // namespace

auto benchmark_csv_header() -> std::string {
  return "scenario_id,method,states,tips,expected_transitions,omega_multiplier,raw_seconds,min_ess,normalized_seconds";
}

auto benchmark_csv_row(const BenchmarkRow& r) -> std::string {
  return fmt::format("{},{},{},{},{},{},{:.6g},{:.6g},{:.6g}", r.scenario_id, r.method, r.states, r.tips,
                     r.expected_transitions, r.omega_multiplier, r.raw_seconds, r.min_ess, r.normalized_seconds);
}

auto run_benchmark(const std::string& scenario_json, std::ostream* progress) -> std::vector<BenchmarkRow> {
  auto rows = std::vector<BenchmarkRow>{};
  try {
    auto doc = nlohmann::json::parse(scenario_json);
    if (!doc.contains("scenarios") || !doc.at("scenarios").is_array()) {
      throw std::invalid_argument("scenario file needs a \"scenarios\" array");
    }
    for (const auto& sc : doc.at("scenarios")) {
      auto id = sc.at("id").get<std::string>();
      auto model = ModelSpec{};
      model.model = sc.value("model", std::string{"equal"});
      model.kappa = sc.value("kappa", 2.0);
      model.omega = sc.value("omega", 0.5);
      model.frequency_file = sc.value("codon_frequencies", std::string{});
      model.rate_file = sc.value("rate_file", std::string{});
      if (has_fixed_size(model.model) && sc.contains("states")) {
        throw std::invalid_argument(fmt::format("scenario {}: \"states\" cannot be set for model {}", id, model.model));
      }
      auto state_grid = has_fixed_size(model.model) ? std::vector<int>{0} : grid<int>(sc, "states", {4});
      auto tip_grid = grid<int>(sc, "tips", {50});
      auto expected_grid = grid<double>(sc, "expected_transitions", {2.0});
      auto omega_grid = grid<double>(sc, "omega_multipliers", {2.0});
      auto methods = grid<std::string>(sc, "methods", {"mcmc", "exp"});
      auto sweeps = sc.value("sweeps", 20000L);
      auto draws = sc.value("draws", 2000L);
      auto thin = sc.value("thin", 1);
      auto burn_in = sc.value("burn_in", 0.1);
      auto target = sc.value("target", 10000.0);
      auto seed = sc.value("seed", std::uint64_t{1});
      auto birth_rate = sc.value("birth_rate", 1.0);
      auto warm_start = sc.value("warm_start", false);
      for (const auto& m : methods) { parse_method(m); }

      auto data_index = std::uint64_t{0};
      auto cell_index = std::uint64_t{0};
      for (auto s : state_grid) {
        for (auto n : tip_grid) {
          for (auto expected : expected_grid) {
            model.states = s;
            auto tree_rng = make_rng(seed, 2 * data_index);
            auto tree = simulate_yule_tree(n, birth_rate, tree_rng);
            auto q = scale_to_expected_transitions(build_model(model), tree, expected);
            auto history_rng = make_rng(seed, 2 * data_index + 1);
            auto data = simulate_history(tree, q, history_rng);
            ++data_index;
            for (auto multiplier : omega_grid) {
              for (const auto& m : methods) {
                auto method = parse_method(m);
                auto config = RunConfig{};
                config.method = method;
                config.omega_multiplier = multiplier;
                config.iterations = is_mcmc(method) ? sweeps : draws;
                config.thin = thin;
                config.seed = seed * 1000003ULL + cell_index++;
                if (warm_start) { config.warm_start = data.history; }
                auto result = run_method(tree, q, data.tips, config);
                auto kept = is_mcmc(method) ? discard_burn_in(result.samples, burn_in)
                                            : std::span<const HistorySummary>{result.samples};
                auto report = make_ess_report(monitored_statistics(kept, data.tips), result.raw_seconds, target);
                auto row = BenchmarkRow{id, to_string(method), q.states(), n, expected, multiplier,
                                        result.raw_seconds, report.min_ess, report.normalized_seconds};
                if (progress != nullptr) { *progress << benchmark_csv_row(row) << '\n'; }
                rows.push_back(std::move(row));
              }
            }
          }
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(fmt::format("malformed scenario file: {}", e.what()));
  }
  return rows;
}

auto run_cli(int argc, const char* const* argv) -> int {
  auto app = CLI::App{"Stochastic mapping of substitution histories on a fixed tree"};
  app.require_subcommand(1);

  auto sim = SimulateArgs{};
  auto* simulate = app.add_subcommand("simulate", "Simulate a tree, a rate matrix, tip data and the true history");
  simulate->add_option("--tips", sim.tips, "Number of tips")->capture_default_str();
  auto* states_opt = simulate->add_option("--states", sim.model.states, "Number of states (equal, tridiag)");
  simulate->add_option("--model", sim.model.model, "equal | tridiag | gy94 | file")->capture_default_str();
  simulate->add_option("--expected-transitions", sim.expected, "Expected substitutions over the tree")
      ->capture_default_str();
  simulate->add_option("--birth-rate", sim.birth_rate, "Yule birth rate")->capture_default_str();
  simulate->add_option("--kappa", sim.model.kappa, "GY94 transition/transversion ratio")->capture_default_str();
  simulate->add_option("--omega", sim.model.omega, "GY94 dN/dS ratio")->capture_default_str();
  simulate->add_option("--pi-file", sim.model.frequency_file, "GY94 codon frequencies");
  simulate->add_option("--rate-file", sim.model.rate_file, "Rate matrix for --model file");
  simulate->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  simulate->add_option("--out-dir", sim.out_dir, "Output directory")->required();

  auto smp = SampleArgs{};
  auto* sample = app.add_subcommand("sample", "Sample substitution histories given tip data");
  sample->add_option("--in-dir", smp.in_dir, "Directory with tree.nwk, tips.csv and rates.txt");
  sample->add_option("--tree", smp.tree_file, "Newick tree");
  sample->add_option("--tip-data", smp.tip_file, "Tip CSV (label,state)");
  sample->add_option("--rates", smp.rate_file, "Rate matrix file");
  sample->add_option("--method", smp.method, "mcmc | mcmc-sparse | exp | exp-once")->capture_default_str();
  sample->add_option("--omega-multiplier", smp.omega_multiplier, "Omega as a multiple of the largest exit rate")
      ->capture_default_str();
  sample->add_option("--sweeps", smp.sweeps, "MCMC sweeps (default 10000)");
  sample->add_option("--draws", smp.draws, "Independent draws for exp methods (default 10000)");
  sample->add_option("--thin", smp.thin, "Keep every thin-th sample")->capture_default_str();
  sample->add_option("--seed", smp.seed, "Random seed")->capture_default_str();
  sample->add_option("--warm-start", smp.warm_start,
                     "Start the chain from history.json in --in-dir instead of a cold start (true|false)")
      ->capture_default_str();
  sample->add_option("--burn-in", smp.burn_in, "Fraction of MCMC samples dropped before ESS")->capture_default_str();
  sample->add_option("--target", smp.target, "Effective sample size used for normalized time")
      ->capture_default_str();
  sample->add_option("--out-dir", smp.out_dir, "Output directory")->required();

  auto cmp = CompareArgs{};
  auto* compare = app.add_subcommand("compare", "Compare two summary CSVs statistic by statistic");
  compare->add_option("--a", cmp.a, "First summary CSV")->required();
  compare->add_option("--b", cmp.b, "Second summary CSV")->required();
  compare->add_option("--burn-in-a", cmp.burn_in_a, "Fraction of rows dropped from --a")->capture_default_str();
  compare->add_option("--burn-in-b", cmp.burn_in_b, "Fraction of rows dropped from --b")->capture_default_str();
  compare->add_option("--out", cmp.out, "Comparison CSV")->required();

  auto scenario_path = std::string{};
  auto bench_out = std::string{};
  auto* benchmark = app.add_subcommand("benchmark", "Run a scenario grid and write timing CSV");
  benchmark->add_option("--scenario", scenario_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  benchmark->add_option("--out", bench_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (simulate->parsed()) { cmd_simulate(sim, states_opt->count() > 0); }
    if (sample->parsed()) { cmd_sample(smp); }
    if (compare->parsed()) { cmd_compare(cmp); }
    if (benchmark->parsed()) {
      auto in = std::ifstream(scenario_path);
      auto text = std::string(std::istreambuf_iterator<char>(in), {});
      auto rows = run_benchmark(text, &std::cerr);
      auto out = std::ofstream(bench_out);
      if (!out) { throw std::runtime_error(fmt::format("cannot write {}", bench_out)); }
      out << benchmark_csv_header() << '\n';
      for (const auto& row : rows) { out << benchmark_csv_row(row) << '\n'; }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace stochmap
