#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "compass/core/error.hpp"

namespace compass {

// 20 canonical residues plus 'X' (unknown / padding). 'X' is always the
// last index and embeds to the zero vector in every provider.
inline constexpr std::string_view kAminoAcids = "ACDEFGHIKLMNPQRSTVWY";
inline constexpr char kPadResidue = 'X';
inline constexpr std::size_t kAlphabetSize = 21;  // 20 residues + X
inline constexpr std::size_t kPadIndex = 20;

inline bool is_standard_residue(char c) { return kAminoAcids.find(c) != std::string_view::npos; }
inline bool is_valid_residue(char c) { return c == kPadResidue || is_standard_residue(c); }

inline std::size_t residue_index(char c) {
  if (c == kPadResidue) return kPadIndex;
  auto pos = kAminoAcids.find(c);
  if (pos == std::string_view::npos) throw DataError(std::string("invalid residue letter '") + c + "'");
  return pos;
}

inline char residue_letter(std::size_t idx) {
  if (idx == kPadIndex) return kPadResidue;
  if (idx >= kAminoAcids.size()) throw DataError("residue index out of range");
  return kAminoAcids[idx];
}

inline std::vector<std::size_t> encode_sequence(const std::string& seq) {
  std::vector<std::size_t> ids;
  ids.reserve(seq.size());
  for (char c : seq) ids.push_back(residue_index(c));
  return ids;
}

// Per-residue descriptors: molecular weight, isoelectric point,
// hydropathy (Kyte-Doolittle), polarity (Grantham). Order follows
// kAminoAcids.
inline const std::array<std::array<double, 4>, 20>& physchem_raw() {
  static const std::array<std::array<double, 4>, 20> table = {{
      {89.09, 6.00, 1.8, 8.1},    // A
      {121.16, 5.07, 2.5, 5.5},   // C
      {133.10, 2.77, -3.5, 13.0}, // D
      {147.13, 3.22, -3.5, 12.3}, // E
      {165.19, 5.48, 2.8, 5.2},   // F
      {75.07, 5.97, -0.4, 9.0},   // G
      {155.16, 7.59, -3.2, 10.4}, // H
      {131.17, 6.02, 4.5, 5.2},   // I
      {146.19, 9.74, -3.9, 11.3}, // K
      {131.17, 5.98, 3.8, 4.9},   // L
      {149.21, 5.74, 1.9, 5.7},   // M
      {132.12, 5.41, -3.5, 11.6}, // N
      {115.13, 6.30, -1.6, 8.0},  // P
      {146.15, 5.65, -3.5, 10.5}, // Q
      {174.20, 10.76, -4.5, 10.5},// R
      {105.09, 5.68, -0.8, 9.2},  // S
      {119.12, 5.60, -0.7, 8.6},  // T
      {117.15, 5.96, 4.2, 5.9},   // V
      {204.23, 5.89, -0.9, 5.4},  // W
      {181.19, 5.66, -1.3, 6.2},  // Y
  }};
  return table;
}

// Column-wise z-scores of the raw table over the 20 residues. The pad
// residue maps to the zero vector by convention.
inline const std::array<std::array<double, 4>, 21>& physchem_normalized() {
  static const std::array<std::array<double, 4>, 21> table = [] {
    const auto& raw = physchem_raw();
    std::array<std::array<double, 4>, 21> out{};
    for (std::size_t col = 0; col < 4; ++col) {
      double mean = 0.0;
      for (const auto& row : raw) mean += row[col];
      mean /= 20.0;
      double var = 0.0;
      for (const auto& row : raw) var += (row[col] - mean) * (row[col] - mean);
      const double sd = std::sqrt(var / 20.0);
      for (std::size_t i = 0; i < 20; ++i) out[i][col] = (raw[i][col] - mean) / sd;
    }
    out[kPadIndex] = {0.0, 0.0, 0.0, 0.0};
    return out;
  }();
  return table;
}

}  // namespace compass
