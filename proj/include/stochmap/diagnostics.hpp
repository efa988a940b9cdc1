#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stochmap/history.hpp"

namespace stochmap {

// Effective sample size from the spectral density at zero of an autoregressive
// fit (Yule-Walker, order by AIC up to min(N - 1, 10 log10 N)):
// ESS = N * var(x) / spec0, capped at N. A constant series gives N.
// Throws for fewer than 100 values or non-finite input.
auto ess(std::span<const double> series) -> double;

// Batch-means cross-check: batches of floor(sqrt(N)) values.
auto ess_batch_means(std::span<const double> series) -> double;

struct NamedSeries {
  std::string name;
  std::vector<double> values;
  bool integer_valued = false;
};

// dwell_<k> for each observed tip state k, count_<a>_<b> for each ordered
// pair of distinct observed states, and log_density. States are 0-based.
auto monitored_statistics(std::span<const HistorySummary> samples, const TipData& tips) -> std::vector<NamedSeries>;

// Drops the leading floor(fraction * N) samples.
auto discard_burn_in(std::span<const HistorySummary> samples, double fraction) -> std::span<const HistorySummary>;

// raw * target / min_ess
auto normalized_time(double raw_seconds, double min_ess, double target = 10000.0) -> double;

struct EssReport {
  std::vector<std::string> statistics;
  std::vector<double> ess;
  double min_ess = 0.0;
  std::size_t samples = 0;
  double raw_seconds = 0.0;
  double target_draws = 10000.0;
  double normalized_seconds = 0.0;
};

auto make_ess_report(std::span<const NamedSeries> series, double raw_seconds, double target = 10000.0) -> EssReport;
auto ess_report_to_json(const EssReport& report) -> std::string;
auto write_ess_report(const EssReport& report, const std::string& path) -> void;

struct StatisticComparison {
  std::string name;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double se_a = 0.0;  // sd / sqrt(ESS)
  double se_b = 0.0;
  double ess_a = 0.0;
  double ess_b = 0.0;
  double z = 0.0;
  std::optional<double> total_variation;  // integer-valued statistics only
};

// Matches statistics by name; those present in only one set are skipped.
auto compare_distributions(std::span<const NamedSeries> a, std::span<const NamedSeries> b)
    -> std::vector<StatisticComparison>;
auto write_comparison_csv(std::span<const StatisticComparison> rows, const std::string& path) -> void;

}  // namespace stochmap
