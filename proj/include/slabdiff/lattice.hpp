#pragma once

#include "slabdiff/common.hpp"
#include "slabdiff/so3.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace slabdiff {

enum class AtomTag : int { FixedSlab = 0, FreeSlab = 1, Adsorbate = 2 };

/// Bitmask selecting atom roles.
enum class TagMask : unsigned {
  None = 0,
  FixedSlab = 1u << 0,
  FreeSlab = 1u << 1,
  Adsorbate = 1u << 2,
  Slab = FixedSlab | FreeSlab,
  Any = FixedSlab | FreeSlab | Adsorbate,
};

inline TagMask operator|(TagMask a, TagMask b) {
  return static_cast<TagMask>(static_cast<unsigned>(a) | static_cast<unsigned>(b));
}

inline bool matches(TagMask mask, AtomTag tag) {
  return (static_cast<unsigned>(mask) & (1u << static_cast<int>(tag))) != 0;
}

/// Periodic cell. Basis rows are the lattice vectors in Angstrom; slabs are
/// periodic in-plane and aperiodic along the surface normal (pbc = T,T,F).
/// For slab cells the third lattice vector must lie along global z and the
/// in-plane vectors must have no z component, so that fractional in-plane
/// moves never change the height of an atom.
class LatticeCell {
 public:
  LatticeCell() : LatticeCell(Mat3::Identity() * 10.0, {true, true, false}) {}

  LatticeCell(const Mat3& basis, std::array<bool, 3> pbc)
      : basis_(basis), pbc_(pbc) {
    const double det = basis_.determinant();
    if (std::abs(det) <= 1e-10)
      throw SingularCell("cell volume " + std::to_string(det) + " below threshold");
    if (!pbc_[2]) {
      const double a3 = basis_.row(2).norm();
      if (basis_.row(2).head<2>().norm() > 1e-8 * a3 || basis_(2, 2) <= 0.0)
        throw Error("slab cell: third lattice vector must lie along +z");
      if (std::abs(basis_(0, 2)) > 1e-8 * basis_.row(0).norm() ||
          std::abs(basis_(1, 2)) > 1e-8 * basis_.row(1).norm())
        throw Error("slab cell: in-plane lattice vectors must have no z component");
    }
    inv_transposed_ = basis_.transpose().inverse();
  }

  const Mat3& basis() const { return basis_; }
  const std::array<bool, 3>& pbc() const { return pbc_; }

  /// x = f1 a1 + f2 a2 + f3 a3.
  Vec3 to_cartesian(const Vec3& frac) const { return basis_.transpose() * frac; }

  Vec3 to_fractional(const Vec3& cart) const { return inv_transposed_ * cart; }

  /// d(fractional)/d(cartesian), i.e. the matrix applied by to_fractional.
  const Mat3& frac_jacobian() const { return inv_transposed_; }

  /// Cartesian displacement of an in-plane fractional translation.
  Vec3 in_plane_cartesian(const Vec2& frac) const {
    return frac.x() * basis_.row(0).transpose() + frac.y() * basis_.row(1).transpose();
  }

  /// Shortest periodic image of a Cartesian displacement. Only periodic axes
  /// are wrapped; for slabs the z component passes through unchanged.
  Vec3 minimum_image(const Vec3& dx) const {
    Vec3 f = to_fractional(dx);
    for (int a = 0; a < 3; ++a)
      if (pbc_[a]) f[a] -= std::round(f[a]);
    Vec3 best = to_cartesian(f);
    double best2 = best.squaredNorm();
    // Rounded fractional components need not minimize the Cartesian norm in
    // skewed cells; scan the surrounding shifts.
    const int s0 = pbc_[0] ? 1 : 0, s1 = pbc_[1] ? 1 : 0, s2 = pbc_[2] ? 1 : 0;
    for (int i = -s0; i <= s0; ++i)
      for (int j = -s1; j <= s1; ++j)
        for (int k = -s2; k <= s2; ++k) {
          if (i == 0 && j == 0 && k == 0) continue;
          const Vec3 cand = to_cartesian(f + Vec3(i, j, k));
          const double n2 = cand.squaredNorm();
          if (n2 < best2) {
            best2 = n2;
            best = cand;
          }
        }
    return best;
  }

 private:
  Mat3 basis_;
  std::array<bool, 3> pbc_;
  Mat3 inv_transposed_;
};

/// Wrap fractional coordinates to [0, 1).
inline double wrap_unit(double f) {
  if (std::isnan(f)) throw InvalidCoordinate("NaN fractional coordinate");
  double w = f - std::floor(f);
  if (w >= 1.0) w -= 1.0;  // guards f = -1e-17 rounding to 1.0
  return w;
}

inline Vec2 wrap_fractional(const Vec2& f) {
  return Vec2(wrap_unit(f.x()), wrap_unit(f.y()));
}

/// In-plane translation (Cartesian Angstrom) plus a rigid rotation (Euler
/// vector, radian). These two are the diffused variables.
struct Pose {
  Vec2 translation = Vec2::Zero();  // Cartesian in-plane displacement / site
  Vec3 rotation = Vec3::Zero();     // Euler vector, |w| <= pi canonical
};

/// Adsorbate + slab configuration: the object that is diffused and relaxed.
struct AdslabSystem {
  Positions positions;        // N x 3, Cartesian Angstrom
  std::vector<int> species;   // atomic numbers
  std::vector<AtomTag> tags;  // role per atom
  LatticeCell cell;

  Eigen::Index size() const { return positions.rows(); }

  void validate() const {
    const auto n = size();
    if (n == 0) throw ContractViolation("empty system");
    if (static_cast<Eigen::Index>(species.size()) != n ||
        static_cast<Eigen::Index>(tags.size()) != n)
      throw ContractViolation("positions/species/tags length mismatch");
    bool has_adsorbate = false, has_slab = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (species[i] < 1 || species[i] > kMaxAtomicNumber)
        throw ContractViolation("atomic number out of range at index " + std::to_string(i));
      if (tags[i] == AtomTag::Adsorbate) has_adsorbate = true;
      else has_slab = true;
    }
    if (!has_adsorbate) throw ContractViolation("system has no adsorbate atoms");
    if (!has_slab) throw ContractViolation("system has no slab atoms");
    if (!positions.allFinite()) throw ContractViolation("non-finite position");
  }

  std::vector<Eigen::Index> indices(TagMask mask) const {
    std::vector<Eigen::Index> out;
    for (Eigen::Index i = 0; i < size(); ++i)
      if (matches(mask, tags[i])) out.push_back(i);
    return out;
  }
};

/// Unweighted positional mean over the selected roles.
inline Vec3 center_of_mass(const AdslabSystem& sys, TagMask mask) {
  Vec3 sum = Vec3::Zero();
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < sys.size(); ++i) {
    if (matches(mask, sys.tags[i])) {
      sum += sys.positions.row(i).transpose();
      ++count;
    }
  }
  if (count == 0) throw EmptySelection("no atoms match the requested tags");
  return sum / static_cast<double>(count);
}

/// Rotate the adsorbate about its center of mass by the pose's Euler vector,
/// then translate it in-plane by the pose's Cartesian translation. The new
/// center of mass is wrapped into the cell; individual atoms keep their rigid
/// offsets and may protrude across the periodic seam. Slab atoms are
/// untouched, and the translation never changes the center-of-mass height.
inline AdslabSystem apply_rigid_pose(const AdslabSystem& sys, const Pose& delta) {
  AdslabSystem out = sys;
  const Vec3 com = center_of_mass(sys, TagMask::Adsorbate);
  const Mat3 rot = rotation_from_euler(delta.rotation);
  const Vec3 shift(delta.translation.x(), delta.translation.y(), 0.0);

  const Vec3 new_com = com + shift;
  const Vec3 frac = sys.cell.to_fractional(new_com);
  // Wrap as an exact integer lattice shift so the height never drifts.
  const auto lattice_steps = [](double f) {
    return static_cast<double>(std::llround(wrap_unit(f) - f));
  };
  const Vec2 wrap_shift(lattice_steps(frac.x()), lattice_steps(frac.y()));
  const Vec3 wrapped_com = new_com + sys.cell.in_plane_cartesian(wrap_shift);

  for (Eigen::Index i = 0; i < sys.size(); ++i) {
    if (sys.tags[i] != AtomTag::Adsorbate) continue;
    const Vec3 offset = rot * (sys.positions.row(i).transpose() - com);
    out.positions.row(i) = (wrapped_com + offset).transpose();
  }
  return out;
}

}  // namespace slabdiff
