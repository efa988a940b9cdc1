#include "stochmap/ctmc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <unsupported/Eigen/MatrixFunctions>
#include <fmt/format.h>

#include "stochmap/codon.hpp"

namespace stochmap {

namespace detail {

// Filled once on first use of matrix_exponential.
struct ExponentialCache {
  std::once_flag once;
  bool symmetric = false;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd left;   // diag(pi)^{-1/2} U
  Eigen::MatrixXd right;  // U^T diag(pi)^{1/2}
};

}  // namespace detail

namespace {


auto reset_diagonal(Eigen::MatrixXd& q) -> void {
  for (auto k = 0; k < q.rows(); ++k) {
    auto sum = 0.0;
    for (auto h = 0; h < q.cols(); ++h) {
      if (h != k) { sum += q(k, h); }
    }
    q(k, k) = -sum;
  }
}

auto detailed_balance_holds(const Eigen::MatrixXd& q, const Eigen::VectorXd& pi) -> bool {
  if ((pi.array() <= 0.0).any()) { return false; }
  auto max_flux = 0.0;
  auto max_gap = 0.0;
  for (auto a = 0; a < q.rows(); ++a) {
    for (auto b = a + 1; b < q.cols(); ++b) {
      auto forward = pi[a] * q(a, b);
      auto backward = pi[b] * q(b, a);
      max_flux = std::max({max_flux, forward, backward});
      max_gap = std::max(max_gap, std::abs(forward - backward));
    }
  }
  return max_gap <= 1e-10 * std::max(max_flux, 1e-300);
}

auto fill_exponential_cache(const RateMatrix& rates, detail::ExponentialCache& cache) -> void {
  const auto& q = rates.q();
  auto s = rates.states();
  auto pi = rates.root_distribution();
  if (!detailed_balance_holds(q, pi)) {
    try {
      pi = stationary_distribution(rates);
    } catch (const std::exception&) {
      return;
    }
    if (!detailed_balance_holds(q, pi)) { return; }
  }

  auto sqrt_pi = pi.array().sqrt().matrix();
  auto sym = Eigen::MatrixXd(s, s);
  for (auto a = 0; a < s; ++a) {
    for (auto b = 0; b < s; ++b) { sym(a, b) = sqrt_pi[a] * q(a, b) / sqrt_pi[b]; }
  }
  sym = 0.5 * (sym + sym.transpose()).eval();
  auto solver = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>{sym};
  if (solver.info() != Eigen::Success) { return; }

  cache.eigenvalues = solver.eigenvalues();
  cache.left = sqrt_pi.cwiseInverse().asDiagonal() * solver.eigenvectors();
  cache.right = solver.eigenvectors().transpose() * sqrt_pi.asDiagonal();
  cache.symmetric = true;
}

auto parse_numeric_tokens(const std::string& text) -> std::vector<double> {
  auto in = std::istringstream{text};
  auto values = std::vector<double>{};
  auto token = std::string{};
  while (in >> token) {
    auto consumed = std::size_t{0};
    auto value = 0.0;
    try {
      value = std::stod(token, &consumed);
    } catch (const std::exception&) {
      break;
    }
    if (consumed != token.size()) { break; }
    values.push_back(value);
  }
  return values;
}

auto is_count(double x) -> bool { return x >= 1.0 && x == std::floor(x) && x < 1e6; }

auto rate_matrix_from_exchangeabilities(std::span<const double> lower, std::span<const double> freqs)
    -> RateMatrix {
  auto s = static_cast<int>(freqs.size());
  auto total = 0.0;
  for (auto f : freqs) {
    if (f < 0.0) { throw std::runtime_error("rate file: negative frequency"); }
    total += f;
  }
  if (!(total > 0.0)) { throw std::runtime_error("rate file: frequencies sum to zero"); }
  auto pi = Eigen::VectorXd(s);
  for (auto k = 0; k < s; ++k) { pi[k] = freqs[k] / total; }

  auto q = Eigen::MatrixXd::Zero(s, s).eval();
  auto next = std::size_t{0};
  for (auto i = 1; i < s; ++i) {
    for (auto j = 0; j < i; ++j) {
      auto x = lower[next++];
      if (x < 0.0) {
        throw std::runtime_error(fmt::format("rate file: negative exchangeability at ({}, {})", i, j));
      }
      q(i, j) = x * pi[j];
      q(j, i) = x * pi[i];
    }
  }
  return RateMatrix{q, pi};
}

}  // namespace

// ---------------------------------------------------------------------------
// RateMatrix

RateMatrix::RateMatrix(Eigen::MatrixXd q, Eigen::VectorXd root_distribution,
                       std::optional<SparsityPattern> pattern)
    : q_(std::move(q)),
      pi_(std::move(root_distribution)),
      pattern_(std::move(pattern)),
      cache_(std::make_shared<detail::ExponentialCache>()) {
  auto s = q_.rows();
  if (s < 1 || q_.cols() != s) { throw std::invalid_argument("RateMatrix: Q must be square and non-empty"); }
  if (pi_.size() != s) { throw std::invalid_argument("RateMatrix: root distribution has wrong length"); }
  for (auto k = 0; k < s; ++k) {
    for (auto h = 0; h < s; ++h) {
      if (!std::isfinite(q_(k, h))) { throw std::invalid_argument("RateMatrix: non-finite rate"); }
      if (h != k && q_(k, h) < 0.0) {
        throw std::invalid_argument(fmt::format("RateMatrix: negative off-diagonal rate q({}, {}) = {}", k, h, q_(k, h)));
      }
    }
  }
  reset_diagonal(q_);

  if ((pi_.array() < 0.0).any() || !pi_.allFinite()) {
    throw std::invalid_argument("RateMatrix: root distribution has negative entries");
  }
  if (std::abs(pi_.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument(fmt::format("RateMatrix: root distribution sums to {}", pi_.sum()));
  }
  pi_ /= pi_.sum();

  if (pattern_) {
    if (static_cast<Eigen::Index>(pattern_->size()) != s) {
      throw std::invalid_argument("RateMatrix: sparsity pattern has wrong number of rows");
    }
    for (auto k = 0; k < s; ++k) {
      auto& row = (*pattern_)[k];
      std::sort(row.begin(), row.end());
      row.erase(std::unique(row.begin(), row.end()), row.end());
      for (auto h : row) {
        if (h < 0 || h >= s || h == k) { throw std::invalid_argument("RateMatrix: invalid sparsity pattern entry"); }
      }
      for (auto h = 0; h < s; ++h) {
        if (h != k && q_(k, h) != 0.0 && !std::binary_search(row.begin(), row.end(), h)) {
          throw std::invalid_argument(
              fmt::format("RateMatrix: nonzero rate q({}, {}) missing from the sparsity pattern", k, h));
        }
      }
    }
  }
}

auto RateMatrix::with_stationary_root(Eigen::MatrixXd q, std::optional<SparsityPattern> pattern) -> RateMatrix {
  auto s = q.rows();
  auto provisional = RateMatrix{std::move(q), Eigen::VectorXd::Constant(s, 1.0 / static_cast<double>(s)),
                                std::move(pattern)};
  auto pi = stationary_distribution(provisional);
  return RateMatrix{provisional.q_, pi, provisional.pattern_};
}

auto RateMatrix::max_exit_rate() const -> double { return (-q_.diagonal()).maxCoeff(); }

auto RateMatrix::scaled(double c) const -> RateMatrix {
  if (!(c > 0.0) || !std::isfinite(c)) { throw std::invalid_argument("RateMatrix::scaled: factor must be positive"); }
  return RateMatrix{q_ * c, pi_, pattern_};
}

// ---------------------------------------------------------------------------
// UniformizedKernel

UniformizedKernel::UniformizedKernel(const RateMatrix& q, double omega, KernelStorage storage)
    : source_(q), omega_(omega) {
  auto s = q.states();
  if (!(omega > q.max_exit_rate()) || !std::isfinite(omega)) {
    throw std::invalid_argument(fmt::format(
        "uniformize: omega = {} must exceed the largest rate of leaving a state ({})", omega, q.max_exit_rate()));
  }
  b_ = Eigen::MatrixXd::Identity(s, s) + q.q() / omega;
  for (auto k = 0; k < s; ++k) {
    for (auto h = 0; h < s; ++h) {
      if (h != k && b_(k, h) < 0.0) { b_(k, h) = 0.0; }
    }
  }

  sparse_ = storage == KernelStorage::sparse || (storage == KernelStorage::automatic && q.pattern().has_value());
  row_ptr_.assign(1, 0);
  for (auto k = 0; k < s; ++k) {
    if (sparse_) {
      auto row = std::vector<int>{};
      if (q.pattern()) {
        row = (*q.pattern())[k];
      } else {
        for (auto h = 0; h < s; ++h) {
          if (h != k && q(k, h) != 0.0) { row.push_back(h); }
        }
      }
      row.push_back(k);
      std::sort(row.begin(), row.end());
      for (auto h : row) {
        cols_.push_back(h);
        values_.push_back(b_(k, h));
      }
    } else {
      for (auto h = 0; h < s; ++h) {
        cols_.push_back(h);
        values_.push_back(b_(k, h));
      }
    }
    row_ptr_.push_back(static_cast<int>(cols_.size()));
  }
}

auto UniformizedKernel::multiply(const Eigen::VectorXd& in, Eigen::VectorXd& out) const -> void {
  if (!sparse_) {
    out.noalias() = b_ * in;
    return;
  }
  auto s = states();
  out.resize(s);
  for (auto r = 0; r < s; ++r) {
    auto acc = 0.0;
    for (auto k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) { acc += values_[k] * in[cols_[k]]; }
    out[r] = acc;
  }
}

auto UniformizedKernel::multiply_transpose(const Eigen::VectorXd& in, Eigen::VectorXd& out) const -> void {
  if (!sparse_) {
    out.noalias() = b_.transpose() * in;
    return;
  }
  auto s = states();
  out.setZero(s);
  for (auto r = 0; r < s; ++r) {
    auto x = in[r];
    if (x == 0.0) { continue; }
    for (auto k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) { out[cols_[k]] += values_[k] * x; }
  }
}

// ---------------------------------------------------------------------------
// Builders

auto build_equal_rates(int states, double rate) -> RateMatrix {
  if (states < 2) { throw std::invalid_argument("build_equal_rates: need at least 2 states"); }
  if (!(rate > 0.0)) { throw std::invalid_argument("build_equal_rates: rate must be positive"); }
  auto q = Eigen::MatrixXd::Constant(states, states, rate).eval();
  return RateMatrix{q, Eigen::VectorXd::Constant(states, 1.0 / states)};
}

auto build_tridiagonal(int states, double birth, double death) -> RateMatrix {
  if (states < 2) { throw std::invalid_argument("build_tridiagonal: need at least 2 states"); }
  if (!(birth > 0.0) || !(death > 0.0)) { throw std::invalid_argument("build_tridiagonal: rates must be positive"); }
  auto q = Eigen::MatrixXd::Zero(states, states).eval();
  auto pattern = SparsityPattern(states);
  for (auto k = 0; k < states; ++k) {
    if (k > 0) {
      q(k, k - 1) = death;
      pattern[k].push_back(k - 1);
    }
    if (k + 1 < states) {
      q(k, k + 1) = birth;
      pattern[k].push_back(k + 1);
    }
  }
  // Detailed balance gives pi_{k+1} / pi_k = birth / death.
  auto pi = Eigen::VectorXd(states);
  pi[0] = 1.0;
  for (auto k = 1; k < states; ++k) { pi[k] = pi[k - 1] * birth / death; }
  pi /= pi.sum();
  return RateMatrix{q, pi, pattern};
}

auto build_gy94(double kappa, double omega, std::span<const double> codon_frequencies) -> RateMatrix {
  if (!(kappa > 0.0) || !(omega > 0.0)) { throw std::invalid_argument("build_gy94: kappa and omega must be positive"); }
  if (codon_frequencies.size() != k_sense_codons) {
    throw std::invalid_argument(
        fmt::format("build_gy94: expected {} codon frequencies, got {}", k_sense_codons, codon_frequencies.size()));
  }
  auto total = 0.0;
  for (auto f : codon_frequencies) {
    if (!(f > 0.0)) { throw std::invalid_argument("build_gy94: codon frequencies must be positive"); }
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(fmt::format("build_gy94: codon frequencies sum to {}, not 1", total));
  }

  const auto& codons = sense_codons();
  auto q = Eigen::MatrixXd::Zero(k_sense_codons, k_sense_codons).eval();
  auto pattern = SparsityPattern(k_sense_codons);
  for (auto a = 0; a < k_sense_codons; ++a) {
    for (auto b = 0; b < k_sense_codons; ++b) {
      if (a == b) { continue; }
      auto diff = -1;
      auto n_diff = 0;
      for (auto pos = 0; pos < 3; ++pos) {
        if (codons[a][pos] != codons[b][pos]) {
          diff = pos;
          ++n_diff;
        }
      }
      if (n_diff != 1) { continue; }
      auto rate = codon_frequencies[b];
      if (is_transition(codons[a][diff], codons[b][diff])) { rate *= kappa; }
      if (translate_codon(codons[a]) != translate_codon(codons[b])) { rate *= omega; }
      q(a, b) = rate;
      pattern[a].push_back(b);
    }
  }
  auto pi = Eigen::Map<const Eigen::VectorXd>(codon_frequencies.data(), k_sense_codons);
  return RateMatrix{q, pi, pattern};
}

auto parse_rate_text(const std::string& text) -> RateMatrix {
  auto values = parse_numeric_tokens(text);
  auto n = values.size();
  if (n == 0) { throw std::runtime_error("rate file: no numeric values"); }

  if (is_count(values[0])) {
    auto s = static_cast<std::size_t>(values[0]);
    if (n - 1 == s * s) {
      auto q = Eigen::MatrixXd(s, s);
      for (auto k = std::size_t{0}; k < s; ++k) {
        for (auto h = std::size_t{0}; h < s; ++h) {
          auto x = values[1 + k * s + h];
          if (k != h && x < 0.0) {
            throw std::runtime_error(fmt::format("rate file: negative off-diagonal rate at ({}, {})", k, h));
          }
          q(k, h) = x;
        }
      }
      if (s == 1) { return RateMatrix{q, Eigen::VectorXd::Ones(1)}; }
      return RateMatrix::with_stationary_root(q);
    }
    if (n - 1 == s * (s - 1) / 2 + s) {
      auto body = std::span<const double>{values}.subspan(1);
      return rate_matrix_from_exchangeabilities(body.first(n - 1 - s), body.last(s));
    }
  }
  for (auto s = std::size_t{2}; s * (s + 1) / 2 <= n; ++s) {
    if (s * (s + 1) / 2 == n) {
      auto all = std::span<const double>{values};
      return rate_matrix_from_exchangeabilities(all.first(n - s), all.last(s));
    }
  }
  throw std::runtime_error(
      fmt::format("rate file: {} values match neither an s x s matrix nor a lower-triangle layout", n));
}

auto load_rate_file(const std::string& path) -> RateMatrix {
  auto in = std::ifstream{path};
  if (!in) { throw std::runtime_error(fmt::format("cannot open rate file '{}'", path)); }
  auto buffer = std::stringstream{};
  buffer << in.rdbuf();
  return parse_rate_text(buffer.str());
}

auto write_rate_file(const RateMatrix& q, const std::string& path) -> void {
  auto out = std::ofstream{path};
  if (!out) { throw std::runtime_error(fmt::format("cannot write rate file '{}'", path)); }
  auto s = q.states();
  out << s << '\n';
  for (auto k = 0; k < s; ++k) {
    for (auto h = 0; h < s; ++h) { out << (h == 0 ? "" : " ") << fmt::format("{:.17g}", q(k, h)); }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Operations

auto stationary_distribution(const RateMatrix& q) -> Eigen::VectorXd {
  auto s = q.states();
  if (s == 1) { return Eigen::VectorXd::Ones(1); }
  auto qt = q.q().transpose().eval();
  auto scale = q.q().cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) { throw std::invalid_argument("stationary_distribution: Q is zero, hence reducible"); }

  auto lu = Eigen::FullPivLU<Eigen::MatrixXd>{qt / scale};
  lu.setThreshold(1e-10);
  if (lu.rank() < s - 1) {
    throw std::invalid_argument(
        fmt::format("stationary_distribution: Q is reducible (null space dimension {})", s - lu.rank()));
  }
  // Replace one balance equation by the normalization constraint.
  auto system = (qt / scale).eval();
  system.row(s - 1).setOnes();
  auto rhs = Eigen::VectorXd::Zero(s).eval();
  rhs[s - 1] = 1.0;
  Eigen::VectorXd pi = system.fullPivLu().solve(rhs);
  for (auto k = 0; k < s; ++k) {
    if (pi[k] < 0.0) { pi[k] = 0.0; }
  }
  return pi / pi.sum();
}

auto expected_transitions(const RateMatrix& q, const Phylogeny& tree) -> double {
  auto pi = stationary_distribution(q);
  auto per_unit_time = 0.0;
  for (auto k = 0; k < q.states(); ++k) { per_unit_time += pi[k] * q.exit_rate(k); }
  return total_tree_length(tree) * per_unit_time;
}

auto scale_to_expected_transitions(const RateMatrix& q, const Phylogeny& tree, double target) -> RateMatrix {
  if (!(target > 0.0)) { throw std::invalid_argument("scale_to_expected_transitions: target must be positive"); }
  if (!(q.max_exit_rate() > 0.0)) { throw std::invalid_argument("scale_to_expected_transitions: Q is all zeros"); }
  auto current = expected_transitions(q, tree);
  if (!(current > 0.0)) { throw std::invalid_argument("scale_to_expected_transitions: Q is degenerate"); }
  return q.scaled(target / current);
}

auto uniformize(const RateMatrix& q, double multiplier, KernelStorage storage) -> UniformizedKernel {
  if (!(multiplier > 1.0)) {
    throw std::invalid_argument(fmt::format(
        "uniformize: multiplier {} must exceed 1 so omega is greater than the largest rate of leaving a state",
        multiplier));
  }
  auto max_rate = q.max_exit_rate();
  auto omega = max_rate > 0.0 ? multiplier * max_rate : multiplier;
  return UniformizedKernel{q, omega, storage};
}

auto uniformize_absolute(const RateMatrix& q, double omega, KernelStorage storage) -> UniformizedKernel {
  return UniformizedKernel{q, omega, storage};
}

auto uses_eigen_exponential(const RateMatrix& q) -> bool {
  auto& cache = *q.cache_;
  std::call_once(cache.once, [&] { fill_exponential_cache(q, cache); });
  return cache.symmetric;
}

auto matrix_exponential(const RateMatrix& q, double t) -> TransitionMatrix {
  auto result = TransitionMatrix{t, Eigen::MatrixXd{}};
  auto scratch = Eigen::MatrixXd{};
  matrix_exponential_into(q, t, result.p, scratch);
  return result;
}

auto matrix_exponential_into(const RateMatrix& q, double t, Eigen::MatrixXd& out, Eigen::MatrixXd& scratch) -> void {
  if (!(t >= 0.0)) { throw std::invalid_argument("matrix_exponential: t must be non-negative"); }
  auto s = q.states();
  if (t == 0.0) {
    out.setIdentity(s, s);
    return;
  }

  auto& cache = *q.cache_;
  std::call_once(cache.once, [&] { fill_exponential_cache(q, cache); });
  if (cache.symmetric) {
    scratch.resize(s, s);
    for (auto j = 0; j < s; ++j) { scratch.col(j) = cache.left.col(j) * std::exp(cache.eigenvalues[j] * t); }
    out.resize(s, s);
    out.noalias() = scratch * cache.right;
  } else {
    out = (q.q() * t).exp();
  }
  out = out.cwiseMax(0.0);
}

auto kernel_power_times_vector(const UniformizedKernel& kernel, int m, const Eigen::VectorXd& v)
    -> Eigen::VectorXd {
  if (m < 0) { throw std::invalid_argument("kernel_power_times_vector: m must be non-negative"); }
  if (v.size() != kernel.states()) {
    throw std::invalid_argument(fmt::format("kernel_power_times_vector: vector length {} does not match {} states",
                                            v.size(), kernel.states()));
  }
  auto current = v;
  auto next = Eigen::VectorXd(v.size());
  for (auto j = 0; j < m; ++j) {
    kernel.multiply(current, next);
    current.swap(next);
  }
  return current;
}

}  // namespace stochmap
