#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace slabdiff;
using namespace testutil;

namespace {

AdslabSystem free_dimer(int za, int zb, double r) {
  AdslabSystem sys;
  sys.cell = LatticeCell(30.0 * Mat3::Identity(), {false, false, false});
  sys.positions = Positions::Zero(2, 3);
  sys.positions.row(0) = Vec3(10.0, 10.0, 10.0).transpose();
  sys.positions.row(1) = Vec3(10.0 + r, 10.0, 10.0).transpose();
  sys.species = {za, zb};
  sys.tags = {AtomTag::FreeSlab, AtomTag::Adsorbate};
  return sys;
}

double lj_pair_energy(double eps, double sig, double r) {
  const double sr6 = std::pow(sig / r, 6);
  return 4.0 * eps * (sr6 * sr6 - sr6);
}

SitePesParams two_mode_pes(double z_ref) {
  SitePesParams p;
  p.modes.push_back({{0, 0}, 1.0, 0.0});
  p.modes.push_back({{1, 0}, 0.4, 0.0});
  p.modes.push_back({{0, 1}, 0.3, 0.7});
  p.well_depth = 1.2;
  p.morse_a = 1.1;
  p.z_ref = z_ref;
  p.z_eq = 2.0;
  return p;
}

}  // namespace

TEST_CASE("lj dimer reproduces the closed-form pair energy") {
  const LennardJonesPeriodic calc(lj_generic_preset());
  const auto& sp = calc.params().species;

  // inside the untouched window: r < switch_on * cutoff = 6.4
  for (const double r : {2.2, 2.8, 3.5, 5.0}) {
    const double e_cu = calc.evaluate(free_dimer(29, 29, r)).energy;
    CHECK(e_cu == Catch::Approx(lj_pair_energy(0.40, 2.34, r)).epsilon(1e-12));
    // Lorentz-Berthelot mixing for a C-O pair
    const double eps = std::sqrt(sp.at(6).epsilon * sp.at(8).epsilon);
    const double sig = 0.5 * (sp.at(6).sigma + sp.at(8).sigma);
    const double e_co = calc.evaluate(free_dimer(6, 8, r)).energy;
    CHECK(e_co == Catch::Approx(lj_pair_energy(eps, sig, r)).epsilon(1e-12));
  }

  // the analytic minimum: E(2^(1/6) sigma) = -epsilon, zero force
  const double r_star = std::pow(2.0, 1.0 / 6.0) * 2.34;
  const auto at_min = calc.evaluate(free_dimer(29, 29, r_star));
  CHECK(at_min.energy == Catch::Approx(-0.40).epsilon(1e-12));
  CHECK(at_min.forces.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lj switching window tapers smoothly to the cutoff") {
  LjParams params = lj_generic_preset();
  const LennardJonesPeriodic calc(params);
  const double r_on = params.switch_on * params.cutoff;

  // untouched below the window, exactly zero at and beyond the cutoff
  CHECK(calc.evaluate(free_dimer(29, 29, r_on - 1e-9)).energy ==
        Catch::Approx(lj_pair_energy(0.40, 2.34, r_on - 1e-9)).epsilon(1e-9));
  CHECK(calc.evaluate(free_dimer(29, 29, params.cutoff + 1e-6)).energy == 0.0);

  // C1 continuity: energy and its slope stay continuous across both edges
  for (const double r0 : {r_on, params.cutoff - 1e-7}) {
    const double h = 1e-5;
    const double em = calc.evaluate(free_dimer(29, 29, r0 - h)).energy;
    const double e0 = calc.evaluate(free_dimer(29, 29, r0)).energy;
    const double ep = calc.evaluate(free_dimer(29, 29, r0 + h)).energy;
    CHECK(std::abs(ep - 2.0 * e0 + em) < 1e-7);  // no jump in value or slope
  }

  // force equals -dE/dr everywhere inside the window
  for (const double r : {6.5, 7.0, 7.6, 7.95}) {
    const auto ef = calc.evaluate(free_dimer(29, 29, r));
    const double h = 1e-6;
    const double fd = -(calc.evaluate(free_dimer(29, 29, r + h)).energy -
                        calc.evaluate(free_dimer(29, 29, r - h)).energy) /
                      (2.0 * h);
    CHECK(ef.forces(1, 0) == Catch::Approx(fd).margin(1e-8));
  }
}

TEST_CASE("lj forces match central finite differences on a periodic adslab") {
  const LennardJonesPeriodic calc(lj_generic_preset());
  const AdslabSystem sys = tiny_adslab();
  CHECK(max_force_rel_error(calc, sys, 1e-5, 1e-2) < 1e-6);
}

TEST_CASE("lj sums periodic images consistently") {
  const LennardJonesPeriodic calc(lj_generic_preset());
  AdslabSystem sys = tiny_adslab();
  const double e0 = calc.evaluate(sys).energy;

  // translating one atom by a full lattice vector must not change the energy
  AdslabSystem shifted = sys;
  shifted.positions.row(static_cast<Eigen::Index>(sys.size()) - 1) +=
      sys.cell.basis().row(0) + sys.cell.basis().row(1);
  CHECK(calc.evaluate(shifted).energy == Catch::Approx(e0).margin(1e-9));

  // the slab interacts with its own images: removing periodicity changes E
  AdslabSystem open = sys;
  open.cell = LatticeCell(sys.cell.basis(), {false, false, false});
  CHECK(std::abs(calc.evaluate(open).energy - e0) > 1e-3);
}

TEST_CASE("lj rejects overlapping atoms and unknown species") {
  const LennardJonesPeriodic calc(lj_generic_preset());
  CHECK_THROWS_AS(calc.evaluate(free_dimer(29, 29, 0.05)), NumericalBlowup);
  CHECK_THROWS_AS(calc.evaluate(free_dimer(29, 3, 3.0)), UnknownSpecies);
}

TEST_CASE("lj parameter validation") {
  LjParams p = lj_generic_preset();
  p.cutoff = 5.0;  // below 2 * sigma_max = 6.8
  CHECK_THROWS_AS(LennardJonesPeriodic(p), ContractViolation);
  p = lj_generic_preset();
  p.switch_on = 1.0;
  CHECK_THROWS_AS(LennardJonesPeriodic(p), ContractViolation);
  p = lj_generic_preset();
  p.species.clear();
  CHECK_THROWS_AS(LennardJonesPeriodic(p), ContractViolation);
  p = lj_generic_preset();
  p.species[29].epsilon = -0.1;
  CHECK_THROWS_AS(LennardJonesPeriodic(p), ContractViolation);
}

TEST_CASE("site pes separates corrugation and a morse z-profile") {
  const AdslabSystem base = tiny_adslab();
  const double top = base.positions.col(2).maxCoeff();
  const SyntheticSitePES calc(two_mode_pes(top));

  // single adsorbate atom placed at fractional (fx, fy)
  auto at = [&](double fx, double fy, double z) {
    AdslabSystem sys = base;
    const Eigen::Index ia = sys.size() - 2;
    sys.positions.row(ia) = sys.cell.to_cartesian(Vec3(fx, fy, 0.0)).transpose();
    sys.positions(ia, 2) = z;
    // park the second adsorbate atom far above so it contributes ~nothing
    sys.positions(ia + 1, 2) = top + 40.0;
    return sys;
  };

  // corrugation helper matches the mode sum
  for (const auto& [fx, fy] : {std::pair{0.0, 0.0}, {0.3, 0.2}, {0.75, 0.6}}) {
    const AdslabSystem probe = at(fx, fy, top + 2.0);
    const double expected = 1.0 + 0.4 * std::cos(2.0 * kPi * fx) +
                            0.3 * std::cos(2.0 * kPi * fy + 0.7);
    const Vec3 x = probe.positions.row(probe.size() - 2);
    CHECK(calc.corrugation(probe, x) == Catch::Approx(expected).epsilon(1e-12));
  }

  // the z-minimum sits at z_ref + z_eq for every in-plane position
  for (const auto& [fx, fy] : {std::pair{0.1, 0.9}, {0.5, 0.5}, {0.8, 0.25}}) {
    const AdslabSystem probe = at(fx, fy, top + 2.0);
    const auto ef = calc.evaluate(probe);
    CHECK(std::abs(ef.forces(probe.size() - 2, 2)) < 1e-12);
    // value at the bottom of the well: -corr * well_depth (up to the parked atom)
    const Vec3 x = probe.positions.row(probe.size() - 2);
    const double corr = calc.corrugation(probe, x);
    CHECK(ef.energy == Catch::Approx(-corr * 1.2).margin(1e-6));
  }

  // morse helper: -D at the equilibrium height, zero crossing at z_ref
  CHECK(calc.morse(top + 2.0) == Catch::Approx(-1.2).epsilon(1e-14));
  CHECK(calc.morse(top + 60.0) == Catch::Approx(0.0).margin(1e-9));

  // deepest in-plane site is the corrugation peak fx = fy_phase point
  const double e_peak = calc.evaluate(at(0.0, 1.0 - 0.7 / (2.0 * kPi), top + 2.0)).energy;
  const double e_else = calc.evaluate(at(0.4, 0.3, top + 2.0)).energy;
  CHECK(e_peak < e_else - 0.1);
}

TEST_CASE("site pes forces match finite differences, slab feels nothing") {
  const AdslabSystem sys = tiny_adslab();
  const double top = sys.positions.col(2).maxCoeff();

  SitePesParams params = two_mode_pes(top);
  SECTION("plain") {}
  SECTION("with orientation term") {
    params.aniso = 0.3;
    params.axis_atom_a = 0;
    params.axis_atom_b = 1;
    params.preferred_dir = Vec3(1.0, 0.0, 0.0);
    params.aniso_z_width = 1.5;
  }
  const SyntheticSitePES calc(params);
  CHECK(max_force_rel_error(calc, sys, 1e-5, 1e-2) < 1e-6);

  const auto ef = calc.evaluate(sys);
  for (const auto i : sys.indices(TagMask::Slab)) CHECK(ef.forces.row(i).norm() == 0.0);

  // slab-only system has zero energy and forces
  const AdslabSystem slab_only = subsystem(sys, TagMask::Slab);
  const auto ef0 = calc.evaluate(slab_only);
  CHECK(ef0.energy == 0.0);
  CHECK(ef0.forces.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("site pes translation by a lattice vector is invariant") {
  const AdslabSystem sys = tiny_adslab();
  const double top = sys.positions.col(2).maxCoeff();
  const SyntheticSitePES calc(two_mode_pes(top));
  const double e0 = calc.evaluate(sys).energy;

  AdslabSystem shifted = sys;
  for (const auto i : sys.indices(TagMask::Adsorbate))
    shifted.positions.row(i) += 2.0 * sys.cell.basis().row(0) - sys.cell.basis().row(1);
  CHECK(calc.evaluate(shifted).energy == Catch::Approx(e0).margin(1e-10));
}

TEST_CASE("site pes parameter validation") {
  SitePesParams p = two_mode_pes(0.0);
  p.modes.clear();
  CHECK_THROWS_AS(SyntheticSitePES(p), ContractViolation);

  p = two_mode_pes(0.0);
  p.modes[0].amplitude = 0.5;  // mode sum dips below zero
  CHECK_THROWS_AS(SyntheticSitePES(p), ContractViolation);

  p = two_mode_pes(0.0);
  p.well_depth = 0.0;
  CHECK_THROWS_AS(SyntheticSitePES(p), ContractViolation);

  p = two_mode_pes(0.0);
  p.aniso = 0.5;  // missing axis atoms
  CHECK_THROWS_AS(SyntheticSitePES(p), ContractViolation);

  p = two_mode_pes(0.0);
  p.aniso = 0.5;
  p.axis_atom_a = 0;
  p.axis_atom_b = 0;  // not distinct
  CHECK_THROWS_AS(SyntheticSitePES(p), ContractViolation);

  CHECK_NOTHROW(SyntheticSitePES(two_mode_pes(0.0)));
}

TEST_CASE("adsorption energy and subsystem extraction") {
  CHECK(adsorption_energy(-5.0, -3.0, -1.0) == Catch::Approx(-1.0).epsilon(1e-14));

  const AdslabSystem sys = tiny_adslab();
  const AdslabSystem ads = subsystem(sys, TagMask::Adsorbate);
  REQUIRE(ads.size() == 2);
  CHECK(ads.species[0] == 6);
  CHECK(ads.species[1] == 8);
  const AdslabSystem slab = subsystem(sys, TagMask::Slab);
  CHECK(slab.size() == sys.size() - 2);
  CHECK_THROWS_AS(subsystem(slab, TagMask::Adsorbate), EmptySelection);

  // factory dispatch
  CalculatorSpec spec;
  spec.kind = CalculatorKind::LennardJonesPeriodic;
  spec.lj = lj_generic_preset();
  CHECK(make_calculator(spec)->name() == "LennardJonesPeriodic");
  spec.kind = CalculatorKind::SyntheticSitePES;
  spec.pes = two_mode_pes(0.0);
  CHECK(make_calculator(spec)->name() == "SyntheticSitePES");
}
