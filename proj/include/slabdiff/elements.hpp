#pragma once

#include "slabdiff/common.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <string_view>

namespace slabdiff {

namespace detail {

inline constexpr std::array<std::string_view, 119> kSymbols = {
    "X",  "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na",
    "Mg", "Al", "Si", "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",
    "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br",
    "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag",
    "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr",
    "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu",
    "Hf", "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi",
    "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",  "Np", "Pu", "Am",
    "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh",
    "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

// Single-bond covalent radii (Cordero et al. 2008), as distributed with the
// usual atomistic toolkits. Indexed by atomic number; defined through Cm.
inline constexpr std::array<double, 97> kCovalentRadii = {
    0.00, 0.31, 0.28, 1.28, 0.96, 0.84, 0.76, 0.71, 0.66, 0.57, 0.58, 1.66,
    1.41, 1.21, 1.11, 1.07, 1.05, 1.02, 1.06, 2.03, 1.76, 1.70, 1.60, 1.53,
    1.39, 1.39, 1.32, 1.26, 1.24, 1.32, 1.22, 1.22, 1.20, 1.19, 1.20, 1.20,
    1.16, 2.20, 1.95, 1.90, 1.75, 1.64, 1.54, 1.47, 1.46, 1.42, 1.39, 1.45,
    1.44, 1.42, 1.39, 1.39, 1.38, 1.39, 1.40, 2.44, 2.15, 2.07, 2.04, 2.03,
    2.01, 1.99, 1.98, 1.98, 1.96, 1.94, 1.92, 1.92, 1.89, 1.90, 1.87, 1.87,
    1.75, 1.70, 1.62, 1.51, 1.44, 1.41, 1.36, 1.36, 1.32, 1.45, 1.46, 1.48,
    1.40, 1.50, 1.50, 2.60, 2.21, 2.15, 2.06, 2.00, 1.96, 1.90, 1.87, 1.80,
    1.69};

}  // namespace detail

inline constexpr int kMaxAtomicNumber = 118;

inline std::string symbol_for(int z) {
  if (z < 1 || z > kMaxAtomicNumber)
    throw UnknownSpecies("atomic number out of range: " + std::to_string(z));
  return std::string(detail::kSymbols[static_cast<size_t>(z)]);
}

inline int atomic_number_for(std::string_view symbol) {
  auto it = std::find(detail::kSymbols.begin() + 1, detail::kSymbols.end(), symbol);
  if (it == detail::kSymbols.end())
    throw UnknownSpecies("unknown element symbol: " + std::string(symbol));
  return static_cast<int>(it - detail::kSymbols.begin());
}

inline double covalent_radius(int z) {
  if (z < 1 || z >= static_cast<int>(detail::kCovalentRadii.size()))
    throw UnknownSpecies("no covalent radius for atomic number " + std::to_string(z));
  return detail::kCovalentRadii[static_cast<size_t>(z)];
}

}  // namespace slabdiff
