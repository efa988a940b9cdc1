#include "stochmap/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

namespace stochmap {

namespace {

constexpr std::size_t k_min_series = 100;

auto check_series(std::span<const double> x) -> void {
  if (x.size() < k_min_series) {
    throw std::invalid_argument(fmt::format("ess: series of length {} is shorter than {}", x.size(), k_min_series));
  }
  for (auto v : x) {
    if (!std::isfinite(v)) { throw std::invalid_argument("ess: series contains non-finite values"); }
  }
}

auto mean_of(std::span<const double> x) -> double {
  auto total = 0.0;
  for (auto v : x) { total += v; }
  return total / static_cast<double>(x.size());
}

// Unbiased sample variance.
auto variance_of(std::span<const double> x, double mean) -> double {
  auto total = 0.0;
  for (auto v : x) { total += (v - mean) * (v - mean); }
  return total / static_cast<double>(x.size() - 1);
}

}  // namespace

auto ess(std::span<const double> series) -> double {
  check_series(series);
  auto n = series.size();
  auto nd = static_cast<double>(n);
  auto mean = mean_of(series);
  auto var = variance_of(series, mean);
  if (var <= 0.0) { return nd; }

  auto max_order = std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::floor(10.0 * std::log10(nd))));
  // Biased autocovariances r_0..r_p.
  auto r = std::vector<double>(max_order + 1, 0.0);
  for (std::size_t lag = 0; lag <= max_order; ++lag) {
    auto acc = 0.0;
    for (std::size_t i = lag; i < n; ++i) { acc += (series[i] - mean) * (series[i - lag] - mean); }
    r[lag] = acc / nd;
  }

  // Levinson-Durbin, keeping the coefficients of the AIC-best order.
  auto phi = std::vector<double>{};
  auto best_phi = std::vector<double>{};
  auto innovation = r[0];
  auto best_innovation = innovation;
  auto best_order = std::size_t{0};
  auto best_aic = nd * std::log(innovation);
  for (std::size_t k = 1; k <= max_order; ++k) {
    auto acc = r[k];
    for (std::size_t j = 1; j < k; ++j) { acc -= phi[j - 1] * r[k - j]; }
    auto reflection = acc / innovation;
    auto next = std::vector<double>(k);
    for (std::size_t j = 1; j < k; ++j) { next[j - 1] = phi[j - 1] - reflection * phi[k - j - 1]; }
    next[k - 1] = reflection;
    phi = std::move(next);
    innovation *= 1.0 - reflection * reflection;
    if (!(innovation > 0.0)) { break; }
    auto aic = nd * std::log(innovation) + 2.0 * static_cast<double>(k);
    if (aic < best_aic) {
      best_aic = aic;
      best_order = k;
      best_phi = phi;
      best_innovation = innovation;
    }
  }
  auto var_pred = best_innovation * nd / (nd - static_cast<double>(best_order + 1));
  auto coef_sum = 0.0;
  for (auto c : best_phi) { coef_sum += c; }
  auto spec0 = var_pred / ((1.0 - coef_sum) * (1.0 - coef_sum));
  if (!(spec0 > 0.0) || !std::isfinite(spec0)) { return nd; }
  return std::min(nd, nd * var / spec0);
}

auto ess_batch_means(std::span<const double> series) -> double {
  check_series(series);
  auto n = series.size();
  auto nd = static_cast<double>(n);
  auto mean = mean_of(series);
  auto var = variance_of(series, mean);
  if (var <= 0.0) { return nd; }
  auto batch = static_cast<std::size_t>(std::floor(std::sqrt(nd)));
  auto batches = n / batch;
  auto used = batches * batch;
  auto overall = mean_of(series.subspan(0, used));
  auto acc = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    auto m = mean_of(series.subspan(b * batch, batch));
    acc += (m - overall) * (m - overall);
  }
  auto sigma2 = static_cast<double>(batch) * acc / static_cast<double>(batches - 1);
  if (!(sigma2 > 0.0)) { return nd; }
  return std::min(nd, nd * var / sigma2);
}

auto monitored_statistics(std::span<const HistorySummary> samples, const TipData& tips) -> std::vector<NamedSeries> {
  if (samples.empty()) { throw std::invalid_argument("monitored_statistics: no samples"); }
  auto observed = tips.observed_states();
  const auto& tracked = samples.front().tracked_states;
  auto index = std::vector<int>{};
  for (auto state : observed) {
    auto it = std::find(tracked.begin(), tracked.end(), state);
    if (it == tracked.end()) {
      throw std::invalid_argument(fmt::format("monitored_statistics: observed state {} is not tracked", state));
    }
    index.push_back(static_cast<int>(it - tracked.begin()));
  }

  auto out = std::vector<NamedSeries>{};
  auto n = samples.size();
  for (auto state : observed) {
    auto series = NamedSeries{fmt::format("dwell_{}", state), std::vector<double>(n), false};
    for (std::size_t i = 0; i < n; ++i) { series.values[i] = samples[i].dwell[state]; }
    out.push_back(std::move(series));
  }
  for (std::size_t a = 0; a < observed.size(); ++a) {
    for (std::size_t b = 0; b < observed.size(); ++b) {
      if (a == b) { continue; }
      auto series = NamedSeries{fmt::format("count_{}_{}", observed[a], observed[b]), std::vector<double>(n), true};
      for (std::size_t i = 0; i < n; ++i) { series.values[i] = samples[i].count(index[a], index[b]); }
      out.push_back(std::move(series));
    }
  }
  auto series = NamedSeries{"log_density", std::vector<double>(n), false};
  for (std::size_t i = 0; i < n; ++i) { series.values[i] = samples[i].log_density; }
  out.push_back(std::move(series));
  return out;
}

auto discard_burn_in(std::span<const HistorySummary> samples, double fraction) -> std::span<const HistorySummary> {
  if (!(fraction >= 0.0 && fraction < 1.0)) { throw std::invalid_argument("burn-in fraction must lie in [0, 1)"); }
  auto drop = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(samples.size())));
  return samples.subspan(drop);
}

auto normalized_time(double raw_seconds, double min_ess, double target) -> double {
  if (!(min_ess > 0.0)) { throw std::invalid_argument("normalized_time: min ESS must be positive"); }
  return raw_seconds * target / min_ess;
}

auto make_ess_report(std::span<const NamedSeries> series, double raw_seconds, double target) -> EssReport {
  if (series.empty()) { throw std::invalid_argument("make_ess_report: no statistics"); }
  auto report = EssReport{};
  report.raw_seconds = raw_seconds;
  report.target_draws = target;
  report.samples = series.front().values.size();
  report.min_ess = std::numeric_limits<double>::infinity();
  for (const auto& s : series) {
    auto value = ess(s.values);
    report.statistics.push_back(s.name);
    report.ess.push_back(value);
    report.min_ess = std::min(report.min_ess, value);
  }
  report.normalized_seconds = normalized_time(raw_seconds, report.min_ess, target);
  return report;
}

auto ess_report_to_json(const EssReport& report) -> std::string {
  auto doc = nlohmann::json{};
  auto per = nlohmann::json::object();
  for (std::size_t i = 0; i < report.statistics.size(); ++i) { per[report.statistics[i]] = report.ess[i]; }
  doc["ess"] = per;
  doc["min_ess"] = report.min_ess;
  doc["samples"] = report.samples;
  doc["raw_seconds"] = report.raw_seconds;
  doc["target_draws"] = report.target_draws;
  doc["normalized_seconds"] = report.normalized_seconds;
  return doc.dump(2);
}

auto write_ess_report(const EssReport& report, const std::string& path) -> void {
  auto out = std::ofstream(path);
  if (!out) { throw std::runtime_error(fmt::format("cannot write {}", path)); }
  out << ess_report_to_json(report) << '\n';
}

auto compare_distributions(std::span<const NamedSeries> a, std::span<const NamedSeries> b)
    -> std::vector<StatisticComparison> {
  if (a.empty() || b.empty()) { throw std::invalid_argument("compare_distributions: empty sample set"); }
  auto rows = std::vector<StatisticComparison>{};
  for (const auto& sa : a) {
    auto it = std::find_if(b.begin(), b.end(), [&](const NamedSeries& s) { return s.name == sa.name; });
    if (it == b.end()) { continue; }
    const auto& sb = *it;
    if (sa.values.empty() || sb.values.empty()) {
      throw std::invalid_argument(fmt::format("compare_distributions: statistic {} has no samples", sa.name));
    }
    auto row = StatisticComparison{};
    row.name = sa.name;
    row.mean_a = mean_of(sa.values);
    row.mean_b = mean_of(sb.values);
    row.ess_a = ess(sa.values);
    row.ess_b = ess(sb.values);
    row.se_a = std::sqrt(variance_of(sa.values, row.mean_a) / row.ess_a);
    row.se_b = std::sqrt(variance_of(sb.values, row.mean_b) / row.ess_b);
    auto diff = row.mean_a - row.mean_b;
    auto se = std::hypot(row.se_a, row.se_b);
    row.z = diff == 0.0 ? 0.0 : (se > 0.0 ? diff / se : std::copysign(INFINITY, diff));
    if (sa.integer_valued && sb.integer_valued) {
      auto freq = std::map<long, std::pair<double, double>>{};
      for (auto v : sa.values) { freq[std::lround(v)].first += 1.0; }
      for (auto v : sb.values) { freq[std::lround(v)].second += 1.0; }
      auto na = static_cast<double>(sa.values.size());
      auto nb = static_cast<double>(sb.values.size());
      auto tv = 0.0;
      for (const auto& [value, counts] : freq) { tv += std::abs(counts.first / na - counts.second / nb); }
      row.total_variation = 0.5 * tv;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

auto write_comparison_csv(std::span<const StatisticComparison> rows, const std::string& path) -> void {
  auto out = std::ofstream(path);
  if (!out) { throw std::runtime_error(fmt::format("cannot write {}", path)); }
  out << "statistic,mean_a,mean_b,se_a,se_b,ess_a,ess_b,z,total_variation\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.6g},{}\n", r.name, r.mean_a, r.mean_b,
                       r.se_a, r.se_b, r.ess_a, r.ess_b, r.z,
                       r.total_variation ? fmt::format("{:.6g}", *r.total_variation) : std::string{});
  }
}

}  // namespace stochmap
