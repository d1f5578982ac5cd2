#pragma once

#include "slabdiff/lattice.hpp"

#include <cmath>
#include <vector>

namespace slabdiff {

/// Directed edge i -> j under periodic image `shift` (integer lattice
/// coefficients applied to atom j). delta = x_j + shift . basis - x_i.
struct NeighborEdge {
  int i = 0;
  int j = 0;
  Eigen::Vector3i shift = Eigen::Vector3i::Zero();
  Vec3 delta = Vec3::Zero();
  double dist = 0.0;
};

namespace detail {

/// Perpendicular width of the cell along lattice axis k: |det| / area of the
/// face spanned by the other two vectors. Bounds how many image shifts a
/// given cutoff can reach.
inline double perpendicular_width(const Mat3& basis, int k) {
  const Vec3 a = basis.row((k + 1) % 3);
  const Vec3 b = basis.row((k + 2) % 3);
  const double face = a.cross(b).norm();
  return std::abs(basis.determinant()) / face;
}

}  // namespace detail

/// All directed pairs with periodic distance <= cutoff, including self-pairs
/// through nonzero image shifts. The shift range extends automatically when
/// the cutoff exceeds half a cell width. Edge order is deterministic:
/// lexicographic in (i, j, shift).
inline std::vector<NeighborEdge> neighbor_list(const Positions& positions,
                                               const LatticeCell& cell, double cutoff) {
  if (!(cutoff > 0.0)) throw ContractViolation("neighbor_list: cutoff must be positive");
  const int n = static_cast<int>(positions.rows());
  Eigen::Vector3i reach = Eigen::Vector3i::Zero();
  for (int k = 0; k < 3; ++k) {
    if (!cell.pbc()[k]) continue;
    const double width = detail::perpendicular_width(cell.basis(), k);
    reach[k] = std::max(1, static_cast<int>(std::ceil(cutoff / width)));
  }

  // Positions are not required to lie inside the cell, so center each pair's
  // shift scan on the rounded fractional offset; reach then only has to cover
  // the cutoff itself.
  Eigen::Matrix<double, Eigen::Dynamic, 3> frac(n, 3);
  for (int i = 0; i < n; ++i)
    frac.row(i) = cell.to_fractional(positions.row(i).transpose()).transpose();

  std::vector<NeighborEdge> edges;
  edges.reserve(static_cast<size_t>(n) * 16);
  const double cut2 = cutoff * cutoff;
  for (int i = 0; i < n; ++i) {
    const Vec3 xi = positions.row(i);
    for (int j = 0; j < n; ++j) {
      const Vec3 xj = positions.row(j);
      Eigen::Vector3i base = Eigen::Vector3i::Zero();
      for (int k = 0; k < 3; ++k)
        if (cell.pbc()[k]) base[k] = -static_cast<int>(std::lround(frac(j, k) - frac(i, k)));
      for (int sa = base[0] - reach[0]; sa <= base[0] + reach[0]; ++sa) {
        for (int sb = base[1] - reach[1]; sb <= base[1] + reach[1]; ++sb) {
          for (int sc = base[2] - reach[2]; sc <= base[2] + reach[2]; ++sc) {
            if (i == j && sa == 0 && sb == 0 && sc == 0) continue;
            const Vec3 shift_cart = cell.basis().row(0) * sa + cell.basis().row(1) * sb +
                                    cell.basis().row(2) * sc;
            const Vec3 delta = xj + shift_cart - xi;
            const double d2 = delta.squaredNorm();
            if (d2 > cut2) continue;
            NeighborEdge e;
            e.i = i;
            e.j = j;
            e.shift = Eigen::Vector3i(sa, sb, sc);
            e.delta = delta;
            e.dist = std::sqrt(d2);
            edges.push_back(e);
          }
        }
      }
    }
  }
  return edges;
}

inline std::vector<NeighborEdge> neighbor_list(const AdslabSystem& system, double cutoff) {
  return neighbor_list(system.positions, system.cell, cutoff);
}

}  // namespace slabdiff
