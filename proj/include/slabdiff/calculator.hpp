#pragma once

#include "slabdiff/elements.hpp"
#include "slabdiff/neighbor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace slabdiff {

struct EnergyForces {
  double energy = 0.0;  // eV
  Positions forces;     // eV/Angstrom, one row per atom (fixed atoms included)
};

/// Energy/force model behind a common interface. evaluate() must return
/// analytic forces equal to -dE/dx; implementations are pure and safe to
/// share across threads.
class Calculator {
 public:
  virtual ~Calculator() = default;
  virtual EnergyForces evaluate(const AdslabSystem& system) const = 0;
  virtual std::string name() const = 0;
};

/// E_total - E_slab - E_adsorbate, all from the same calculator.
inline double adsorption_energy(double e_total, double e_slab, double e_adsorbate) {
  return e_total - e_slab - e_adsorbate;
}

/// Subsystem with only the atoms matching the mask (for the reference terms
/// of the adsorption energy). Tags and species follow the selection.
inline AdslabSystem subsystem(const AdslabSystem& system, TagMask mask) {
  const auto idx = system.indices(mask);
  if (idx.empty()) throw EmptySelection("subsystem: no atoms match the mask");
  AdslabSystem out;
  out.cell = system.cell;
  out.positions.resize(static_cast<Eigen::Index>(idx.size()), 3);
  out.species.reserve(idx.size());
  out.tags.reserve(idx.size());
  for (size_t r = 0; r < idx.size(); ++r) {
    out.positions.row(static_cast<Eigen::Index>(r)) = system.positions.row(idx[r]);
    out.species.push_back(system.species[static_cast<size_t>(idx[r])]);
    out.tags.push_back(system.tags[static_cast<size_t>(idx[r])]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Periodic Lennard-Jones
// ---------------------------------------------------------------------------

struct LjSpecies {
  double epsilon = 0.1;  // eV
  double sigma = 2.5;    // Angstrom
};

/// Pairwise 12-6 potential with Lorentz-Berthelot mixing and a quintic C2
/// switching window on [switch_on * cutoff, cutoff]. The switch leaves the
/// interior of the well untouched, so an isolated dimer minimum stays at
/// exactly 2^(1/6) sigma as long as that radius is inside the window start.
struct LjParams {
  std::map<int, LjSpecies> species;  // atomic number -> parameters
  double cutoff = 8.0;               // Angstrom
  double switch_on = 0.8;            // fraction of cutoff where the taper starts

  void validate() const {
    if (species.empty()) throw ContractViolation("LJ: no species parameters");
    double max_sigma = 0.0;
    for (const auto& [z, p] : species) {
      if (z < 1 || z > kMaxAtomicNumber) throw UnknownSpecies("LJ: bad atomic number");
      if (!(p.epsilon > 0.0) || !(p.sigma > 0.0))
        throw ContractViolation("LJ: epsilon and sigma must be positive");
      max_sigma = std::max(max_sigma, p.sigma);
    }
    if (!(cutoff >= 2.0 * max_sigma))
      throw ContractViolation("LJ: cutoff must be >= 2 sigma for every species");
    if (!(switch_on > 0.0 && switch_on < 1.0))
      throw ContractViolation("LJ: switch_on must be in (0,1)");
  }
};

class LennardJonesPeriodic final : public Calculator {
 public:
  explicit LennardJonesPeriodic(LjParams params) : params_(std::move(params)) {
    params_.validate();
  }

  std::string name() const override { return "LennardJonesPeriodic"; }

  EnergyForces evaluate(const AdslabSystem& system) const override {
    const int n = static_cast<int>(system.size());
    EnergyForces out;
    out.forces = Positions::Zero(n, 3);
    const auto edges = neighbor_list(system.positions, system.cell, params_.cutoff);
    const double r_on = params_.switch_on * params_.cutoff;
    const double r_cut = params_.cutoff;
    for (const auto& e : edges) {
      if (e.dist < 0.1)
        throw NumericalBlowup("overlapping atoms " + std::to_string(e.i) + "," +
                              std::to_string(e.j) + " at r = " + std::to_string(e.dist));
      const auto [eps, sig] = mixed(system.species[static_cast<size_t>(e.i)],
                                    system.species[static_cast<size_t>(e.j)]);
      const double sr6 = std::pow(sig / e.dist, 6);
      const double phi = 4.0 * eps * (sr6 * sr6 - sr6);
      const double dphi = 4.0 * eps * (-12.0 * sr6 * sr6 + 6.0 * sr6) / e.dist;
      double s = 1.0, ds = 0.0;
      if (e.dist > r_on) {
        const double u = (e.dist - r_on) / (r_cut - r_on);
        s = 1.0 + u * u * u * (-10.0 + u * (15.0 - 6.0 * u));
        ds = u * u * (-30.0 + u * (60.0 - 30.0 * u)) / (r_cut - r_on);
      }
      out.energy += 0.5 * phi * s;  // directed edges double-count pairs
      const double dtotal = dphi * s + phi * ds;
      out.forces.row(e.i) += (dtotal / e.dist) * e.delta.transpose();
    }
    return out;
  }

  const LjParams& params() const { return params_; }

 private:
  std::pair<double, double> mixed(int zi, int zj) const {
    const auto it_i = params_.species.find(zi);
    const auto it_j = params_.species.find(zj);
    if (it_i == params_.species.end() || it_j == params_.species.end())
      throw UnknownSpecies("LJ: no parameters for species " +
                           std::to_string(it_i == params_.species.end() ? zi : zj));
    return {std::sqrt(it_i->second.epsilon * it_j->second.epsilon),
            0.5 * (it_i->second.sigma + it_j->second.sigma)};
  }

  LjParams params_;
};

// ---------------------------------------------------------------------------
// Synthetic corrugated adsorption PES
// ---------------------------------------------------------------------------

struct FourierMode {
  Eigen::Vector2i k = Eigen::Vector2i::Zero();  // in-plane wave vector (integer)
  double amplitude = 0.0;                       // dimensionless corrugation weight
  double phase = 0.0;                           // radians
};

/// Closed-form adsorption landscape: per adsorbate atom
///
///   V = corr(x, y) * morse(z),   corr(f) = sum_k A_k cos(2 pi k.f + phi_k)
///
/// plus an orientation term aniso * (1 - cos angle(axis, preferred)) *
/// envelope(z_com). corr must stay strictly positive so the Morse wall stays
/// repulsive everywhere; in-plane minima then sit where corr peaks. Slab
/// atoms contribute nothing and feel no force.
struct SitePesParams {
  std::vector<FourierMode> modes;
  double well_depth = 1.0;  // eV, Morse depth scale D
  double morse_a = 1.2;     // 1/Angstrom
  double z_ref = 0.0;       // slab-top reference height, Angstrom
  double z_eq = 2.0;        // equilibrium height above z_ref, Angstrom
  double aniso = 0.0;       // eV
  Vec3 preferred_dir = Vec3(1, 0, 0);
  double aniso_z_width = 1.0;  // Angstrom
  int axis_atom_a = -1;        // indices into the adsorbate subset ordering
  int axis_atom_b = -1;        // -1 disables the orientation term

  void validate() const {
    if (modes.empty()) throw ContractViolation("PES: no Fourier modes");
    int k_max = 1;
    for (const auto& m : modes) {
      if (!std::isfinite(m.amplitude) || !std::isfinite(m.phase))
        throw ContractViolation("PES: non-finite mode");
      k_max = std::max({k_max, std::abs(m.k.x()), std::abs(m.k.y())});
    }
    // corr is band-limited, so a grid several times finer than the highest
    // mode bounds its true minimum tightly.
    const int grid = std::max(64, 8 * k_max);
    double corr_min = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid; ++i) {
      for (int j = 0; j < grid; ++j) {
        double c = 0.0;
        for (const auto& m : modes)
          c += m.amplitude *
               std::cos(2.0 * kPi * (m.k.x() * static_cast<double>(i) / grid +
                                     m.k.y() * static_cast<double>(j) / grid) +
                        m.phase);
        corr_min = std::min(corr_min, c);
      }
    }
    if (!(corr_min > 1e-3))
      throw ContractViolation("PES: corrugation must stay positive everywhere, grid min " +
                              std::to_string(corr_min));
    if (!(well_depth > 0.0) || !(morse_a > 0.0) || !(aniso_z_width > 0.0))
      throw ContractViolation("PES: scales must be positive");
    if (aniso < 0.0) throw ContractViolation("PES: aniso must be >= 0");
    if (aniso > 0.0 && (axis_atom_a < 0 || axis_atom_b < 0 || axis_atom_a == axis_atom_b))
      throw ContractViolation("PES: orientation term needs two distinct axis atoms");
    if (aniso > 0.0 && preferred_dir.norm() < 1e-12)
      throw ContractViolation("PES: preferred direction must be nonzero");
  }
};

class SyntheticSitePES final : public Calculator {
 public:
  explicit SyntheticSitePES(SitePesParams params) : params_(std::move(params)) {
    params_.validate();
  }

  std::string name() const override { return "SyntheticSitePES"; }

  /// corr at an in-plane Cartesian point (z ignored).
  double corrugation(const AdslabSystem& system, const Vec3& x) const {
    const Vec3 f = system.cell.to_fractional(x);
    double c = 0.0;
    for (const auto& m : params_.modes)
      c += m.amplitude * std::cos(2.0 * kPi * (m.k.x() * f.x() + m.k.y() * f.y()) + m.phase);
    return c;
  }

  double morse(double z) const {
    const double e = std::exp(-params_.morse_a * (z - params_.z_ref - params_.z_eq));
    return params_.well_depth * ((1.0 - e) * (1.0 - e) - 1.0);
  }

  EnergyForces evaluate(const AdslabSystem& system) const override {
    const int n = static_cast<int>(system.size());
    EnergyForces out;
    out.forces = Positions::Zero(n, 3);
    const auto ads = system.indices(TagMask::Adsorbate);
    if (ads.empty()) return out;
    const Mat3& jac = system.cell.frac_jacobian();

    for (const auto ia : ads) {
      const Vec3 x = system.positions.row(ia);
      const Vec3 f = system.cell.to_fractional(x);
      double corr = 0.0;
      Vec3 dcorr = Vec3::Zero();
      for (const auto& m : params_.modes) {
        const double arg = 2.0 * kPi * (m.k.x() * f.x() + m.k.y() * f.y()) + m.phase;
        corr += m.amplitude * std::cos(arg);
        const Vec3 k3(m.k.x(), m.k.y(), 0.0);
        dcorr += -m.amplitude * std::sin(arg) * 2.0 * kPi * (jac.transpose() * k3);
      }
      const double e = std::exp(-params_.morse_a * (x.z() - params_.z_ref - params_.z_eq));
      const double mo = params_.well_depth * ((1.0 - e) * (1.0 - e) - 1.0);
      const double dmo = params_.well_depth * 2.0 * (1.0 - e) * e * params_.morse_a;
      out.energy += corr * mo;
      Vec3 grad = mo * dcorr;
      grad.z() += corr * dmo;
      out.forces.row(ia) -= grad.transpose();
    }

    if (params_.aniso > 0.0 && ads.size() >= 2) {
      const size_t na = static_cast<size_t>(params_.axis_atom_a);
      const size_t nb = static_cast<size_t>(params_.axis_atom_b);
      if (na >= ads.size() || nb >= ads.size())
        throw ContractViolation("PES: axis atom index outside the adsorbate");
      const Vec3 xa = system.positions.row(ads[na]);
      const Vec3 xb = system.positions.row(ads[nb]);
      const Vec3 u = xb - xa;
      const double un = u.norm();
      const Vec3 com = center_of_mass(system, TagMask::Adsorbate);
      const double dz = com.z() - params_.z_ref - params_.z_eq;
      const double env = std::exp(-dz * dz / (2.0 * params_.aniso_z_width * params_.aniso_z_width));
      const double denv = env * (-dz / (params_.aniso_z_width * params_.aniso_z_width));
      const Vec3 p = params_.preferred_dir.normalized();
      if (un > 1e-8) {
        const double cos_t = u.dot(p) / un;
        const Vec3 dcos = p / un - u.dot(p) * u / (un * un * un);
        out.energy += params_.aniso * (1.0 - cos_t) * env;
        out.forces.row(ads[nb]) += (params_.aniso * env) * dcos.transpose();
        out.forces.row(ads[na]) -= (params_.aniso * env) * dcos.transpose();
        const double dz_term = params_.aniso * (1.0 - cos_t) * denv / static_cast<double>(ads.size());
        for (const auto ia : ads) out.forces(ia, 2) -= dz_term;
      }
    }
    return out;
  }

  const SitePesParams& params() const { return params_; }

 private:
  SitePesParams params_;
};

// ---------------------------------------------------------------------------
// Spec + factory
// ---------------------------------------------------------------------------

enum class CalculatorKind { LennardJonesPeriodic, SyntheticSitePES };

struct CalculatorSpec {
  CalculatorKind kind = CalculatorKind::SyntheticSitePES;
  LjParams lj;
  SitePesParams pes;
};

inline std::shared_ptr<Calculator> make_calculator(const CalculatorSpec& spec) {
  switch (spec.kind) {
    case CalculatorKind::LennardJonesPeriodic:
      return std::make_shared<LennardJonesPeriodic>(spec.lj);
    case CalculatorKind::SyntheticSitePES:
      return std::make_shared<SyntheticSitePES>(spec.pes);
  }
  throw ContractViolation("unknown calculator kind");
}

/// Generic metal/adsorbate LJ parameters for tests and examples. Synthetic
/// values, not fitted to any material.
inline LjParams lj_generic_preset() {
  LjParams p;
  p.species[29] = {0.40, 2.34};  // Cu
  p.species[47] = {0.35, 2.65};  // Ag
  p.species[79] = {0.45, 2.63};  // Au
  p.species[8] = {0.12, 2.96};   // O
  p.species[6] = {0.10, 3.40};   // C
  p.species[1] = {0.02, 2.60};   // H
  p.cutoff = 8.0;
  return p;
}

}  // namespace slabdiff
