#pragma once

#include "slabdiff/calculator.hpp"

#include <deque>
#include <vector>

namespace slabdiff {

struct RelaxConfig {
  double maxstep = 0.04;    // Angstrom, per-atom displacement cap per iteration
  int memory = 50;          // stored curvature pairs
  double damping = 1.0;     // multiplies the clipped step
  double alpha = 70.0;      // H0 = 1/alpha until curvature information arrives
  double fmax = 0.01;       // eV/Angstrom convergence threshold on free atoms
  int max_iterations = 300;

  void validate() const {
    if (!(maxstep > 0.0 && damping > 0.0 && alpha > 0.0 && fmax > 0.0))
      throw ContractViolation("relax config: scales must be positive");
    if (memory < 1 || max_iterations < 0)
      throw ContractViolation("relax config: memory >= 1, max_iterations >= 0");
  }
};

struct RelaxResult {
  AdslabSystem system;
  double energy = 0.0;
  int n_iterations = 0;
  bool converged = false;
  bool failed = false;  // calculator blowup; system holds the last stable state
  double fmax_final = 0.0;
};

struct RelaxTrace {
  std::vector<double> energies;
  std::vector<double> fmax;
};

/// Two-loop-recursion L-BFGS on the free atoms (everything except
/// FIXED_SLAB). The proposed step is rescaled globally whenever the largest
/// per-atom displacement exceeds maxstep, then multiplied by damping.
/// Curvature pairs with s.y <= 1e-10 are discarded; the base scale H0 tracks
/// the most recent accepted pair (s.y / y.y), and while none has been
/// accepted yet the steepest-descent scale adapts to the energy feedback so
/// concave stretches are crossed instead of crawled. Converged when the
/// largest free-atom force norm is <= fmax.
inline RelaxResult relax(const AdslabSystem& input, const Calculator& calc,
                         const RelaxConfig& config, RelaxTrace* trace = nullptr) {
  config.validate();
  const auto free_idx = input.indices(TagMask::FreeSlab | TagMask::Adsorbate);
  if (free_idx.empty()) throw ContractViolation("relax: no free atoms");
  const int m = static_cast<int>(free_idx.size());

  RelaxResult res;
  res.system = input;

  auto free_forces = [&](const EnergyForces& ef) {
    Eigen::VectorXd f(3 * m);
    for (int a = 0; a < m; ++a) f.segment<3>(3 * a) = ef.forces.row(free_idx[a]).transpose();
    return f;
  };
  auto max_atom_norm = [&](const Eigen::VectorXd& v) {
    double worst = 0.0;
    for (int a = 0; a < m; ++a) worst = std::max(worst, v.segment<3>(3 * a).norm());
    return worst;
  };

  EnergyForces ef;
  try {
    ef = calc.evaluate(res.system);
  } catch (const NumericalBlowup&) {
    res.failed = true;
    return res;
  }
  Eigen::VectorXd f = free_forces(ef);
  res.energy = ef.energy;
  res.fmax_final = max_atom_norm(f);

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  double h_scale = 1.0 / config.alpha;

  while (true) {
    if (trace) {
      trace->energies.push_back(res.energy);
      trace->fmax.push_back(res.fmax_final);
    }
    if (res.fmax_final <= config.fmax) {
      res.converged = true;
      return res;
    }
    if (res.n_iterations >= config.max_iterations) return res;

    // Two-loop recursion on the gradient q = -f.
    Eigen::VectorXd q = -f;
    const int k = static_cast<int>(s_hist.size());
    std::vector<double> a_coef(static_cast<size_t>(k));
    for (int i = k - 1; i >= 0; --i) {
      a_coef[static_cast<size_t>(i)] = rho_hist[i] * s_hist[i].dot(q);
      q -= a_coef[static_cast<size_t>(i)] * y_hist[i];
    }
    Eigen::VectorXd z = h_scale * q;
    for (int i = 0; i < k; ++i) {
      const double b = rho_hist[i] * y_hist[i].dot(z);
      z += s_hist[i] * (a_coef[static_cast<size_t>(i)] - b);
    }
    Eigen::VectorXd dr = -z;  // descent direction scaled by the inverse Hessian

    const double longest = max_atom_norm(dr);
    if (longest > config.maxstep) dr *= config.maxstep / longest;
    dr *= config.damping;

    AdslabSystem trial = res.system;
    for (int a = 0; a < m; ++a)
      trial.positions.row(free_idx[a]) += dr.segment<3>(3 * a).transpose();

    EnergyForces ef_new;
    try {
      ef_new = calc.evaluate(trial);
    } catch (const NumericalBlowup&) {
      res.failed = true;
      return res;  // last stable state
    }
    const Eigen::VectorXd f_new = free_forces(ef_new);

    const Eigen::VectorXd y = f - f_new;  // gradient difference
    const double sy = dr.dot(y);
    if (sy > 1e-10) {
      s_hist.push_back(dr);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > config.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      h_scale = std::clamp(sy / y.squaredNorm(), 1e-4, 1e2);
    } else if (s_hist.empty()) {
      // steepest descent so far; grow the step while it keeps paying off
      h_scale = ef_new.energy < res.energy ? std::min(h_scale * 2.0, 1e2)
                                           : std::max(h_scale * 0.5, 1e-4);
    }

    res.system = std::move(trial);
    res.energy = ef_new.energy;
    f = f_new;
    res.fmax_final = max_atom_norm(f);
    ++res.n_iterations;
  }
}

}  // namespace slabdiff
