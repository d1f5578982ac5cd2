#pragma once

#include "slabdiff/igso3.hpp"
#include "slabdiff/lattice.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace slabdiff {

enum class NoiseChannel { Translation, Rotation };
enum class ConditionMode { Unconditional, Conditional };

/// Geometric noise schedule sigma(t) = sigma_min^(1-t) * sigma_max^t for the
/// translation (Angstrom) and rotation (radian) channels.
struct NoiseSchedule {
  double tr_sigma_min = 0.1;
  double tr_sigma_max = 10.0;
  double rot_sigma_min = 0.01;
  double rot_sigma_max = 1.55;

  void validate() const {
    if (!(tr_sigma_min > 0.0 && tr_sigma_min < tr_sigma_max))
      throw InvalidSigma("translation schedule needs 0 < min < max");
    if (!(rot_sigma_min > 0.0 && rot_sigma_min < rot_sigma_max))
      throw InvalidSigma("rotation schedule needs 0 < min < max");
  }
};

/// sigma at diffusion time t; t outside [0,1] clamps and reports via flag.
inline double sigma_at(const NoiseSchedule& s, double t, NoiseChannel channel,
                       bool* clamped = nullptr) {
  s.validate();
  if (clamped) *clamped = (t < 0.0 || t > 1.0);
  t = std::clamp(t, 0.0, 1.0);
  const double lo = channel == NoiseChannel::Translation ? s.tr_sigma_min : s.rot_sigma_min;
  const double hi = channel == NoiseChannel::Translation ? s.tr_sigma_max : s.rot_sigma_max;
  return std::exp((1.0 - t) * std::log(lo) + t * std::log(hi));
}

/// Diffusion coefficient g^2(t) = d sigma^2/dt = 2 sigma^2(t) ln(max/min)
/// for the variance-exploding forward process.
inline double g_squared_at(const NoiseSchedule& s, double t, NoiseChannel channel) {
  const double sigma = sigma_at(s, t, channel);
  const double lo = channel == NoiseChannel::Translation ? s.tr_sigma_min : s.rot_sigma_min;
  const double hi = channel == NoiseChannel::Translation ? s.tr_sigma_max : s.rot_sigma_max;
  return 2.0 * sigma * sigma * std::log(hi / lo);
}

/// One labeled configuration: the system at an optimized pose plus its energy
/// relative to the per-system minimum, E_rel = E_min - E_i <= 0 (0 marks the
/// global minimum). relative_energy is absent for unlabeled data.
struct TrainingSample {
  AdslabSystem system;
  std::optional<double> relative_energy;
  double weight = 1.0;

  void validate() const {
    system.validate();
    if (relative_energy && *relative_energy > 1e-9)
      throw ContractViolation("relative_energy must be <= 0");
  }
};

struct ScoreTarget {
  Vec2 tr_score = Vec2::Zero();   // 1/Angstrom
  Vec3 rot_score = Vec3::Zero();  // 1/radian
  double tr_sigma = 0.0;
  double rot_sigma = 0.0;
  double t = 0.0;
};

struct PerturbResult {
  AdslabSystem system;  // sample.system with the noise pose applied
  ScoreTarget target;
  Vec2 tr_delta = Vec2::Zero();
  Vec3 rot_delta = Vec3::Zero();
};

/// Deterministic core of forward_perturb for a known noise draw.
inline PerturbResult perturb_with(const TrainingSample& sample, double t,
                                  const NoiseSchedule& schedule, const IgSo3Table& table,
                                  const Vec2& tr_delta, const Vec3& rot_delta) {
  sample.validate();
  const double tr_sigma = sigma_at(schedule, t, NoiseChannel::Translation);
  const double rot_sigma = sigma_at(schedule, t, NoiseChannel::Rotation);
  PerturbResult out;
  out.system = apply_rigid_pose(sample.system, Pose{tr_delta, rot_delta});
  out.tr_delta = tr_delta;
  out.rot_delta = rot_delta;
  out.target.tr_score = -tr_delta / (tr_sigma * tr_sigma);
  out.target.rot_score = rotation_score(table, rot_delta, rot_sigma);
  out.target.tr_sigma = tr_sigma;
  out.target.rot_sigma = rot_sigma;
  out.target.t = t;
  return out;
}

/// Forward noising at time t: translation ~ N(0, sigma_tr^2 I2) in Cartesian
/// in-plane coordinates, rotation ~ IGSO3(sigma_rot). Consumes two gaussians
/// then one rotation draw from rng, in that order.
inline PerturbResult forward_perturb(const TrainingSample& sample, double t,
                                     const NoiseSchedule& schedule, const IgSo3Table& table,
                                     Rng& rng) {
  const double tr_sigma = sigma_at(schedule, t, NoiseChannel::Translation);
  const double rot_sigma = sigma_at(schedule, t, NoiseChannel::Rotation);
  const Vec2 tr_delta(tr_sigma * rng.gaussian(), tr_sigma * rng.gaussian());
  const Vec3 rot_delta = sample_rotation(table, rot_sigma, rng);
  return perturb_with(sample, t, schedule, table, tr_delta, rot_delta);
}

struct ScorePrediction {
  Vec2 tr_vec = Vec2::Zero();
  Vec3 rot_vec = Vec3::Zero();
};

/// Per-sample denoising loss: sigma_tr^2 |dtr|^2 + lambda_rot |drot|^2 with
/// lambda_rot = 1 / E[|rot score|^2] read from the kernel table row.
inline double dsm_loss_single(const ScorePrediction& pred, const ScoreTarget& target,
                              const IgSo3Table& table) {
  const Vec2 dtr = pred.tr_vec - target.tr_score;
  const Vec3 drot = pred.rot_vec - target.rot_score;
  const double tr_w = target.tr_sigma * target.tr_sigma;
  const double rot_w = table.rot_loss_weight(target.rot_sigma);
  return tr_w * dtr.squaredNorm() + rot_w * drot.squaredNorm();
}

/// Batch-mean denoising loss. Sizes must agree.
inline double dsm_loss(const std::vector<ScorePrediction>& preds,
                       const std::vector<ScoreTarget>& targets, const IgSo3Table& table) {
  if (preds.size() != targets.size() || preds.empty())
    throw ContractViolation("dsm_loss: prediction/target batch mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) acc += dsm_loss_single(preds[i], targets[i], table);
  return acc / static_cast<double>(preds.size());
}

/// Conditioning input handed to the score model: absent in unconditional
/// mode, E_rel (eV) in conditional mode.
inline std::optional<double> condition_value(const TrainingSample& sample, ConditionMode mode) {
  if (mode == ConditionMode::Unconditional) return std::nullopt;
  if (!sample.relative_energy)
    throw MissingCondition("conditional mode requires relative_energy on every sample");
  return sample.relative_energy;
}

}  // namespace slabdiff
