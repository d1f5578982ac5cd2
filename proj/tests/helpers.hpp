#pragma once

// Shared fixtures and independent numerical oracles for the test suite. The
// oracles deliberately do not reuse library code paths: the series oracle
// runs in long double with compensated summation, forces are checked against
// central finite differences, and reference distributions are integrated
// with adaptive Simpson quadrature.

#include "slabdiff/slabdiff.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

namespace testutil {

using namespace slabdiff;

// ---------------------------------------------------------------------------
// Independent IGSO(3) oracles
// ---------------------------------------------------------------------------

/// Truncated heat-kernel character sum in long double with Kahan
/// compensation. Terms are summed to l_max unconditionally; callers choose
/// l_max large enough for the sigma under test.
inline long double series_f_oracle(long double omega, long double sigma, int l_max = 4000) {
  long double sum = 0.0L, comp = 0.0L;
  const long double half = std::sin(omega / 2.0L);
  for (int l = 0; l <= l_max; ++l) {
    const long double weight =
        (2.0L * l + 1.0L) * std::exp(-static_cast<long double>(l) * (l + 1.0L) * sigma * sigma / 2.0L);
    long double ratio;
    if (std::abs(omega) < 1e-9L)
      ratio = 2.0L * l + 1.0L;
    else
      ratio = std::sin((l + 0.5L) * omega) / half;
    const long double term = weight * ratio - comp;
    const long double t = sum + term;
    comp = (t - sum) - term;
    sum = t;
  }
  return sum;
}

/// Angle density (1 - cos w) / pi * f(w), truncated at zero.
inline long double density_oracle(long double omega, long double sigma) {
  const long double f = series_f_oracle(omega, sigma);
  const long double p = (1.0L - std::cos(omega)) / static_cast<long double>(kPi) * f;
  return p > 0.0L ? p : 0.0L;
}

/// Adaptive Simpson quadrature.
inline long double simpson_recurse(const std::function<long double(long double)>& fn,
                                   long double a, long double b, long double fa,
                                   long double fm, long double fb, long double whole,
                                   long double tol, int depth) {
  const long double m = 0.5L * (a + b);
  const long double lm = 0.5L * (a + m), rm = 0.5L * (m + b);
  const long double flm = fn(lm), frm = fn(rm);
  const long double left = (m - a) / 6.0L * (fa + 4.0L * flm + fm);
  const long double right = (b - m) / 6.0L * (fm + 4.0L * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0L * tol)
    return left + right + (left + right - whole) / 15.0L;
  return simpson_recurse(fn, a, m, fa, flm, fm, left, tol / 2.0L, depth - 1) +
         simpson_recurse(fn, m, b, fm, frm, fb, right, tol / 2.0L, depth - 1);
}

inline long double integrate(const std::function<long double(long double)>& fn, long double a,
                             long double b, long double tol = 1e-12L) {
  const long double m = 0.5L * (a + b);
  const long double fa = fn(a), fm = fn(m), fb = fn(b);
  const long double whole = (b - a) / 6.0L * (fa + 4.0L * fm + fb);
  return simpson_recurse(fn, a, b, fa, fm, fb, whole, tol, 24);
}

/// CDF of the angle density on [0, pi], normalized.
inline double angle_cdf_oracle(double omega, double sigma) {
  const auto p = [sigma](long double w) { return density_oracle(w, sigma); };
  const long double z = integrate(p, 0.0L, static_cast<long double>(kPi));
  const long double c = integrate(p, 0.0L, static_cast<long double>(omega));
  return static_cast<double>(c / z);
}

/// Dense cumulative-Simpson CDF of the angle density, linearly interpolated.
/// Much cheaper than angle_cdf_oracle when evaluated at many points.
inline std::function<double(double)> angle_cdf_grid(double sigma, int n = 4096) {
  auto grid = std::make_shared<std::vector<long double>>(static_cast<size_t>(n) + 1, 0.0L);
  const long double h = static_cast<long double>(kPi) / n;
  long double prev = density_oracle(0.0L, sigma);
  for (int j = 0; j < n; ++j) {
    const long double a = h * j;
    const long double mid = density_oracle(a + 0.5L * h, sigma);
    const long double right = density_oracle(a + h, sigma);
    (*grid)[static_cast<size_t>(j) + 1] =
        (*grid)[static_cast<size_t>(j)] + h / 6.0L * (prev + 4.0L * mid + right);
    prev = right;
  }
  const long double z = grid->back();
  for (auto& c : *grid) c /= z;
  return [grid, h, n](double omega) -> double {
    if (omega <= 0.0) return 0.0;
    if (omega >= kPi) return 1.0;
    const long double x = static_cast<long double>(omega) / h;
    const int j = std::min(static_cast<int>(x), n - 1);
    const long double t = x - j;
    return static_cast<double>((1.0L - t) * (*grid)[static_cast<size_t>(j)] +
                               t * (*grid)[static_cast<size_t>(j) + 1]);
  };
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

/// Kolmogorov-Smirnov distance between samples and an analytic CDF.
inline double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double worst = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const double c = cdf(samples[i]);
    worst = std::max(worst, std::abs(c - static_cast<double>(i) / n));
    worst = std::max(worst, std::abs(static_cast<double>(i + 1) / n - c));
  }
  return worst;
}

/// Chi-square statistic against equal expected counts.
inline double chi_square_uniform(const std::vector<int>& counts, int total) {
  const double expected = static_cast<double>(total) / counts.size();
  double chi = 0.0;
  for (const int c : counts) chi += (c - expected) * (c - expected) / expected;
  return chi;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Max relative force error of a calculator against central differences.
/// Relative to the larger of |analytic| and a floor that keeps near-zero
/// components from dominating.
inline double max_force_rel_error(const Calculator& calc, const AdslabSystem& sys, double h,
                                  double floor_scale) {
  const EnergyForces ref = calc.evaluate(sys);
  double floor = floor_scale;
  for (Eigen::Index i = 0; i < sys.size(); ++i)
    floor = std::max(floor, floor_scale * ref.forces.row(i).norm());
  double worst = 0.0;
  for (Eigen::Index i = 0; i < sys.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      AdslabSystem plus = sys, minus = sys;
      plus.positions(i, c) += h;
      minus.positions(i, c) -= h;
      const double fd = -(calc.evaluate(plus).energy - calc.evaluate(minus).energy) / (2.0 * h);
      const double denom = std::max(std::abs(ref.forces(i, c)), floor);
      worst = std::max(worst, std::abs(fd - ref.forces(i, c)) / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Small systems
// ---------------------------------------------------------------------------

/// Skewed slab cell used across geometry tests.
inline LatticeCell skewed_cell() {
  Mat3 basis;
  basis << 10.0, 0.0, 0.0,
           5.0, 8.66, 0.0,
           0.0, 0.0, 20.0;
  return LatticeCell(basis, {true, true, false});
}

/// 2x2x2 Cu slab plus a CO-like diatomic adsorbate, small enough for brute
///-force checks.
inline AdslabSystem tiny_adslab() {
  SlabSpec spec;
  spec.nx = 2;
  spec.ny = 2;
  spec.n_layers = 2;
  spec.lattice_constant = 2.6;
  spec.cell_height = 24.0;
  AdslabSystem sys = make_slab(spec);
  const double top = sys.positions.col(2).maxCoeff();
  const Eigen::Index n = sys.size();
  sys.positions.conservativeResize(n + 2, 3);
  sys.positions.row(n) = Vec3(1.3, 1.1, top + 2.0).transpose();
  sys.positions.row(n + 1) = Vec3(1.3, 1.1, top + 3.15).transpose();
  sys.species.push_back(6);
  sys.species.push_back(8);
  sys.tags.push_back(AtomTag::Adsorbate);
  sys.tags.push_back(AtomTag::Adsorbate);
  sys.validate();
  return sys;
}

inline AdsorbateTemplate co_template() {
  AdsorbateTemplate t;
  t.positions = Positions::Zero(2, 3);
  t.positions(1, 2) = 1.15;
  t.species = {6, 8};
  return t;
}

inline AdsorbateTemplate o_template() {
  AdsorbateTemplate t;
  t.positions = Positions::Zero(1, 3);
  t.species = {8};
  return t;
}

}  // namespace testutil
