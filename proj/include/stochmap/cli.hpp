#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stochmap {

// Entry point for the `stochmap` executable: subcommands simulate, sample,
// compare and benchmark. Returns the process exit code.
auto run_cli(int argc, const char* const* argv) -> int;

struct BenchmarkRow {
  std::string scenario_id;
  std::string method;
  int states = 0;
  int tips = 0;
  double expected_transitions = 0.0;
  double omega_multiplier = 0.0;
  double raw_seconds = 0.0;
  double min_ess = 0.0;
  double normalized_seconds = 0.0;
};

// Runs every cell of a scenario document (JSON text; schema in README).
// Throws std::invalid_argument for a malformed document.
auto run_benchmark(const std::string& scenario_json, std::ostream* progress = nullptr) -> std::vector<BenchmarkRow>;

auto benchmark_csv_header() -> std::string;
auto benchmark_csv_row(const BenchmarkRow& row) -> std::string;

}  // namespace stochmap
