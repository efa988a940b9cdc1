#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stochmap/tree.hpp"

namespace stochmap {

// Per row, the sorted off-diagonal columns that may hold a nonzero rate.
using SparsityPattern = std::vector<std::vector<int>>;

namespace detail {
struct ExponentialCache;
}

// P(t) = exp(Qt). Rows sum to one; tiny negative entries are clamped to zero.
struct TransitionMatrix {
  double elapsed = 0.0;
  Eigen::MatrixXd p;
};

// CTMC generator Q together with the root distribution pi.
//
// The diagonal is always recomputed from the off-diagonal entries, so rows sum
// to zero to rounding. Immutable; copies share the write-once
// eigendecomposition cache used by matrix_exponential.
class RateMatrix {
 public:
  RateMatrix(Eigen::MatrixXd q, Eigen::VectorXd root_distribution,
             std::optional<SparsityPattern> pattern = std::nullopt);

  // Root distribution set to the stationary distribution of q.
  static auto with_stationary_root(Eigen::MatrixXd q, std::optional<SparsityPattern> pattern = std::nullopt)
      -> RateMatrix;

  auto states() const -> int { return static_cast<int>(q_.rows()); }
  auto q() const -> const Eigen::MatrixXd& { return q_; }
  auto operator()(int from, int to) const -> double { return q_(from, to); }
  auto exit_rate(int state) const -> double { return -q_(state, state); }
  auto max_exit_rate() const -> double;
  auto root_distribution() const -> const Eigen::VectorXd& { return pi_; }
  auto pattern() const -> const std::optional<SparsityPattern>& { return pattern_; }

  // c * Q, same root distribution and pattern.
  auto scaled(double c) const -> RateMatrix;

 private:
  Eigen::MatrixXd q_;
  Eigen::VectorXd pi_;
  std::optional<SparsityPattern> pattern_;
  std::shared_ptr<detail::ExponentialCache> cache_;

  friend auto matrix_exponential_into(const RateMatrix& q, double t, Eigen::MatrixXd& out, Eigen::MatrixXd& scratch)
      -> void;
  friend auto uses_eigen_exponential(const RateMatrix& q) -> bool;
};

enum class KernelStorage { automatic, dense, sparse };

// Dominating rate omega and the row-stochastic matrix B = I + Q/omega.
//
// Sparse storage keeps B in compressed-row form so mat-vec products cost
// O(nnz) instead of O(s^2). The dense copy of B is always available.
class UniformizedKernel {
 public:
  UniformizedKernel(const RateMatrix& q, double omega, KernelStorage storage);

  auto omega() const -> double { return omega_; }
  auto states() const -> int { return static_cast<int>(b_.rows()); }
  auto is_sparse() const -> bool { return sparse_; }
  auto b() const -> const Eigen::MatrixXd& { return b_; }
  auto b(int from, int to) const -> double { return b_(from, to); }
  auto rate_matrix() const -> const RateMatrix& { return source_; }
  auto nonzeros() const -> std::size_t { return values_.size(); }

  // Structurally nonzero entries of row `from` of B (diagonal included).
  auto row_columns(int from) const -> std::span<const int> {
    return {cols_.data() + row_ptr_[from], cols_.data() + row_ptr_[from + 1]};
  }
  auto row_values(int from) const -> std::span<const double> {
    return {values_.data() + row_ptr_[from], values_.data() + row_ptr_[from + 1]};
  }

  // out = B * in
  auto multiply(const Eigen::VectorXd& in, Eigen::VectorXd& out) const -> void;
  // out = B^T * in, i.e. the row vector in^T B
  auto multiply_transpose(const Eigen::VectorXd& in, Eigen::VectorXd& out) const -> void;

 private:
  RateMatrix source_;
  double omega_;
  bool sparse_;
  Eigen::MatrixXd b_;
  std::vector<int> row_ptr_;
  std::vector<int> cols_;
  std::vector<double> values_;
};

// Builders ------------------------------------------------------------------

// q_kh = rate for every k != h; uniform root distribution.
auto build_equal_rates(int states, double rate = 1.0) -> RateMatrix;

// Birth-death chain: q_{k,k+1} = birth, q_{k,k-1} = death, pattern recorded.
// Root distribution is the stationary distribution.
auto build_tridiagonal(int states, double birth = 1.0, double death = 1.0) -> RateMatrix;

// GY94 codon model over the 61 sense codons (see codon.hpp for the order).
auto build_gy94(double kappa, double omega, std::span<const double> codon_frequencies) -> RateMatrix;

// Plain text: first token s, then s rows of s reals. Alternatively a PAML-style
// lower-triangle exchangeability block followed by s frequencies, with or
// without a leading s; the layout is detected from the number of values.
// Parsing stops at the first non-numeric token.
auto load_rate_file(const std::string& path) -> RateMatrix;
auto parse_rate_text(const std::string& text) -> RateMatrix;
auto write_rate_file(const RateMatrix& q, const std::string& path) -> void;

// Operations ------------------------------------------------------------------

// pi with pi Q = 0 and sum(pi) = 1. Throws for reducible Q.
auto stationary_distribution(const RateMatrix& q) -> Eigen::VectorXd;

// (sum of branch lengths) * sum_k pi_k |q_kk| with pi stationary.
auto expected_transitions(const RateMatrix& q, const Phylogeny& tree) -> double;

// c * Q with c chosen so expected_transitions(c * Q, tree) == target.
auto scale_to_expected_transitions(const RateMatrix& q, const Phylogeny& tree, double target) -> RateMatrix;

// Omega = multiplier * max_k |q_kk|. When Q has no exit rate at all (s = 1 or
// Q = 0) the multiplier is used as the absolute rate.
auto uniformize(const RateMatrix& q, double multiplier, KernelStorage storage = KernelStorage::automatic)
    -> UniformizedKernel;
auto uniformize_absolute(const RateMatrix& q, double omega, KernelStorage storage = KernelStorage::automatic)
    -> UniformizedKernel;

auto matrix_exponential(const RateMatrix& q, double t) -> TransitionMatrix;
// Same, writing exp(Qt) into `out`; `scratch` is workspace. No allocation once
// both are sized.
auto matrix_exponential_into(const RateMatrix& q, double t, Eigen::MatrixXd& out, Eigen::MatrixXd& scratch) -> void;

// True when matrix_exponential goes through the cached symmetric
// eigendecomposition (Q reversible with strictly positive pi).
auto uses_eigen_exponential(const RateMatrix& q) -> bool;

// B^m v by m successive products.
auto kernel_power_times_vector(const UniformizedKernel& kernel, int m, const Eigen::VectorXd& v)
    -> Eigen::VectorXd;

}  // namespace stochmap
