#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stochmap {

inline constexpr int k_sense_codons = 61;

// The 61 sense codons of the standard nuclear code in lexicographic order over
// A < C < G < T, stop codons (TAA, TAG, TGA) removed. This order is the state
// order of build_gy94 and of codon frequency files.
auto sense_codons() -> const std::vector<std::string>&;

// One-letter amino acid for a codon under the standard code, '*' for stops.
auto translate_codon(std::string_view codon) -> char;

// Index in sense_codons(), or -1 for stop codons and malformed input.
auto sense_codon_index(std::string_view codon) -> int;

// A<->G and C<->T are transitions; every other change is a transversion.
auto is_transition(char from, char to) -> bool;

// Codon frequencies proportional to the product of per-position nucleotide
// frequencies (order A, C, G, T), renormalized over sense codons.
auto codon_frequencies_from_nucleotides(std::span<const double, 4> nucleotide_frequencies)
    -> std::vector<double>;

// Reads 61 whitespace-separated frequencies (sense-codon order) or 61 lines of
// "CODON frequency". Values are renormalized if they sum to within 1e-6 of 1.
auto load_codon_frequencies(const std::string& path) -> std::vector<double>;

}  // namespace stochmap
