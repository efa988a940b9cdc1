#include "stochmap/codon.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace stochmap {

namespace {

// Standard code, first/second/third position each in T, C, A, G order.
constexpr std::string_view k_code_tcag = "FFLLSSSSYY**CC*WLLLLPPPPHHQQRRRRIIIMTTTTNNKKSSRRVVVVAAAADDEEGGGG";

auto tcag_index(char base) -> int {
  switch (base) {
    case 'T': return 0;
    case 'C': return 1;
    case 'A': return 2;
    case 'G': return 3;
    default: return -1;
  }
}

auto acgt_index(char base) -> int {
  switch (base) {
    case 'A': return 0;
    case 'C': return 1;
    case 'G': return 2;
    case 'T': return 3;
    default: return -1;
  }
}

}  // namespace

auto translate_codon(std::string_view codon) -> char {
  if (codon.size() != 3) { return '?'; }
  auto i = tcag_index(codon[0]);
  auto j = tcag_index(codon[1]);
  auto k = tcag_index(codon[2]);
  if (i < 0 || j < 0 || k < 0) { return '?'; }
  return k_code_tcag[16 * i + 4 * j + k];
}

auto sense_codons() -> const std::vector<std::string>& {
  static const auto codons = [] {
    auto out = std::vector<std::string>{};
    constexpr auto bases = std::string_view{"ACGT"};
    for (auto a : bases) {
      for (auto b : bases) {
        for (auto c : bases) {
          auto codon = std::string{a, b, c};
          if (translate_codon(codon) != '*') { out.push_back(codon); }
        }
      }
    }
    return out;
  }();
  return codons;
}

auto sense_codon_index(std::string_view codon) -> int {
  const auto& codons = sense_codons();
  for (auto i = 0; i < static_cast<int>(codons.size()); ++i) {
    if (codons[i] == codon) { return i; }
  }
  return -1;
}

auto is_transition(char from, char to) -> bool {
  auto purine = [](char c) { return c == 'A' || c == 'G'; };
  auto pyrimidine = [](char c) { return c == 'C' || c == 'T'; };
  return from != to && ((purine(from) && purine(to)) || (pyrimidine(from) && pyrimidine(to)));
}

auto codon_frequencies_from_nucleotides(std::span<const double, 4> nucleotide_frequencies)
    -> std::vector<double> {
  auto out = std::vector<double>{};
  auto total = 0.0;
  for (const auto& codon : sense_codons()) {
    auto f = 1.0;
    for (auto c : codon) { f *= nucleotide_frequencies[acgt_index(c)]; }
    out.push_back(f);
    total += f;
  }
  if (!(total > 0.0)) { throw std::invalid_argument("codon frequencies: nucleotide frequencies sum to zero"); }
  for (auto& f : out) { f /= total; }
  return out;
}

auto load_codon_frequencies(const std::string& path) -> std::vector<double> {
  auto in = std::ifstream{path};
  if (!in) { throw std::runtime_error(fmt::format("cannot open codon frequency file '{}'", path)); }
  auto out = std::vector<double>(k_sense_codons, -1.0);
  auto plain = std::vector<double>{};
  auto token = std::string{};
  auto pending_codon = -1;
  while (in >> token) {
    if (token.size() == 3 && acgt_index(token[0]) >= 0 && acgt_index(token[1]) >= 0 && acgt_index(token[2]) >= 0) {
      pending_codon = sense_codon_index(token);
      if (pending_codon < 0) {
        throw std::runtime_error(fmt::format("codon frequency file: '{}' is not a sense codon", token));
      }
      continue;
    }
    auto value = std::stod(token);
    if (pending_codon >= 0) {
      out[pending_codon] = value;
      pending_codon = -1;
    } else {
      plain.push_back(value);
    }
  }
  if (!plain.empty()) {
    if (plain.size() != k_sense_codons) {
      throw std::runtime_error(
          fmt::format("codon frequency file: expected {} values, found {}", k_sense_codons, plain.size()));
    }
    out = plain;
  }
  auto total = 0.0;
  for (auto f : out) {
    if (f < 0.0) { throw std::runtime_error("codon frequency file: missing or negative frequency"); }
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw std::runtime_error(fmt::format("codon frequency file: frequencies sum to {}, not 1", total));
  }
  for (auto& f : out) { f /= total; }
  return out;
}

}  // namespace stochmap
