#pragma once

#include "slabdiff/schedule.hpp"
#include "slabdiff/score_model.hpp"
#include "slabdiff/so3.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace slabdiff {

enum class SamplerMode { ODE, SDE };

struct SamplerConfig {
  int n_steps = 100;
  SamplerMode mode = SamplerMode::ODE;
  double early_stop_tr = 1e-3;   // Angstrom per step
  double early_stop_rot = 1e-4;  // radians per step
  double interstitial_gap = 2.0; // Angstrom, slab top to lowest adsorbate atom
  std::optional<double> condition;  // E_rel passed to the model (conditional runs)

  void validate() const {
    if (n_steps < 1) throw ContractViolation("sampler: n_steps must be >= 1");
    if (!(early_stop_tr > 0.0) || !(early_stop_rot > 0.0))
      throw ContractViolation("sampler: tolerances must be positive");
  }
};

/// Rigid adsorbate geometry to be placed; positions are an arbitrary
/// reference frame (only shape matters).
struct AdsorbateTemplate {
  Positions positions;
  std::vector<int> species;

  void validate() const {
    if (positions.rows() < 1 || static_cast<size_t>(positions.rows()) != species.size())
      throw ContractViolation("adsorbate template: shape mismatch or empty");
    if (!positions.allFinite()) throw ContractViolation("adsorbate template: non-finite");
  }
};

struct TrajectoryPoint {
  double t = 0.0;
  Vec3 com = Vec3::Zero();
  double step_tr = 0.0;   // Angstrom moved this step
  double step_rot = 0.0;  // radians rotated this step
};

struct SampleResult {
  AdslabSystem system;
  std::vector<TrajectoryPoint> trajectory;
  int n_steps_used = 0;
};

/// Random initial pose: COM uniform over the in-plane torus, orientation from
/// a uniform axis and a uniform angle in [0, pi], and the lowest adsorbate
/// atom placed interstitial_gap above the highest slab atom. Consumes two
/// uniforms (in-plane), a unit vector, and one uniform (angle), in that
/// order.
inline AdslabSystem init_placement(const AdslabSystem& slab, const AdsorbateTemplate& adsorbate,
                                   double interstitial_gap, Rng& rng) {
  adsorbate.validate();
  if (slab.indices(TagMask::Slab).empty())
    throw ContractViolation("init_placement: slab has no surface atoms");
  if (!slab.indices(TagMask::Adsorbate).empty())
    throw ContractViolation("init_placement: slab already carries an adsorbate");

  const Vec2 frac(rng.uniform(), rng.uniform());
  const Vec3 axis = rng.unit_vector();
  const double angle = kPi * rng.uniform();
  const Mat3 rot = rotation_from_euler(angle * axis);

  const Eigen::Index na = adsorbate.positions.rows();
  Vec3 com_ref = Vec3::Zero();
  for (Eigen::Index i = 0; i < na; ++i) com_ref += adsorbate.positions.row(i).transpose();
  com_ref /= static_cast<double>(na);

  Positions rotated(na, 3);
  double z_min = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < na; ++i) {
    const Vec3 off = rot * (adsorbate.positions.row(i).transpose() - com_ref);
    rotated.row(i) = off.transpose();
    z_min = std::min(z_min, off.z());
  }

  double slab_top = -std::numeric_limits<double>::infinity();
  for (const auto i : slab.indices(TagMask::Slab))
    slab_top = std::max(slab_top, slab.positions(i, 2));

  Vec3 com = slab.cell.in_plane_cartesian(frac);
  com.z() = slab_top + interstitial_gap - z_min;  // lowest atom at top + gap

  AdslabSystem out;
  out.cell = slab.cell;
  const Eigen::Index ns = slab.size();
  out.positions.resize(ns + na, 3);
  out.positions.topRows(ns) = slab.positions;
  out.species = slab.species;
  out.tags = slab.tags;
  for (Eigen::Index i = 0; i < na; ++i) {
    out.positions.row(ns + i) = (com + rotated.row(i).transpose()).transpose();
    out.species.push_back(adsorbate.species[static_cast<size_t>(i)]);
    out.tags.push_back(AtomTag::Adsorbate);
  }
  out.validate();
  return out;
}

struct ReverseStepResult {
  AdslabSystem system;
  double step_tr = 0.0;
  double step_rot = 0.0;
};

/// One reverse-diffusion update at time t over an interval dt. ODE mode:
/// delta = 1/2 g^2 s dt per channel. SDE mode adds g sqrt(dt) noise, Gaussian
/// in-plane and an IGSO3 draw at the matching scale for rotations (the table
/// clamps scales below its sigma grid).
inline ReverseStepResult reverse_step(const AdslabSystem& system, double t, double dt,
                                      const ScoreModel& model, const NoiseSchedule& schedule,
                                      const IgSo3Table& table, const SamplerConfig& config,
                                      Rng& rng) {
  config.validate();
  ScoreModelInput input;
  input.system = system;
  input.tr_sigma = sigma_at(schedule, t, NoiseChannel::Translation);
  input.rot_sigma = sigma_at(schedule, t, NoiseChannel::Rotation);
  input.condition = config.condition;
  const ScoreModelOutput score = model.forward(input);
  if (!score.tr_vec.allFinite() || !score.rot_vec.allFinite())
    throw NumericalBlowup("reverse_step: non-finite score at t = " + std::to_string(t));

  const double g2_tr = g_squared_at(schedule, t, NoiseChannel::Translation);
  const double g2_rot = g_squared_at(schedule, t, NoiseChannel::Rotation);

  Vec2 dtr;
  Vec3 drot;
  if (config.mode == SamplerMode::ODE) {
    dtr = 0.5 * g2_tr * dt * score.tr_vec;
    drot = 0.5 * g2_rot * dt * score.rot_vec;
  } else {
    dtr = g2_tr * dt * score.tr_vec +
          std::sqrt(g2_tr * dt) * Vec2(rng.gaussian(), rng.gaussian());
    const Vec3 rot_noise = sample_rotation(table, std::sqrt(g2_rot * dt), rng);
    drot = g2_rot * dt * score.rot_vec + rot_noise;
  }

  ReverseStepResult out;
  out.system = apply_rigid_pose(system, Pose{dtr, drot});
  out.step_tr = dtr.norm();
  out.step_rot = drot.norm();
  return out;
}

/// Reverse diffusion from an already-placed system. Steps the grid
/// t_k = 1 - k/n with dt = 1/n, stopping early once both channels move less
/// than their tolerance in a step.
inline SampleResult run_reverse(const AdslabSystem& placed, const ScoreModel& model,
                                const NoiseSchedule& schedule, const IgSo3Table& table,
                                const SamplerConfig& config, Rng& rng) {
  config.validate();
  SampleResult res;
  res.system = placed;
  const double dt = 1.0 / config.n_steps;
  for (int k = 0; k < config.n_steps; ++k) {
    const double t = 1.0 - static_cast<double>(k) / config.n_steps;
    const ReverseStepResult step =
        reverse_step(res.system, t, dt, model, schedule, table, config, rng);
    res.system = std::move(step.system);
    ++res.n_steps_used;
    TrajectoryPoint p;
    p.t = t;
    p.com = center_of_mass(res.system, TagMask::Adsorbate);
    p.step_tr = step.step_tr;
    p.step_rot = step.step_rot;
    res.trajectory.push_back(p);
    if (step.step_tr < config.early_stop_tr && step.step_rot < config.early_stop_rot) break;
  }
  return res;
}

/// init_placement followed by run_reverse.
inline SampleResult sample_pose(const AdslabSystem& slab, const AdsorbateTemplate& adsorbate,
                                const ScoreModel& model, const NoiseSchedule& schedule,
                                const IgSo3Table& table, const SamplerConfig& config, Rng& rng) {
  const AdslabSystem placed = init_placement(slab, adsorbate, config.interstitial_gap, rng);
  return run_reverse(placed, model, schedule, table, config, rng);
}

/// Line-oriented trajectory dump: one step per line,
/// "k t com_x com_y com_z step_tr step_rot".
inline std::string format_trajectory(const std::vector<TrajectoryPoint>& traj) {
  std::string out = "# step t com_x com_y com_z step_tr step_rot\n";
  char buf[256];
  for (size_t k = 0; k < traj.size(); ++k) {
    const auto& p = traj[k];
    std::snprintf(buf, sizeof(buf), "%zu %.12g %.12g %.12g %.12g %.12g %.12g\n", k, p.t,
                  p.com.x(), p.com.y(), p.com.z(), p.step_tr, p.step_rot);
    out += buf;
  }
  return out;
}

}  // namespace slabdiff
