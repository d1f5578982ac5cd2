#pragma once

#include "slabdiff/sampler.hpp"
#include "slabdiff/schedule.hpp"
#include "slabdiff/score_model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace slabdiff {

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Decoupled-weight-decay Adam on a flat parameter vector, with serializable
/// moments for bit-deterministic resume.
class AdamW {
 public:
  AdamW(Eigen::Index n, AdamWConfig config = {}) : config_(config) {
    m_ = Eigen::VectorXd::Zero(n);
    v_ = Eigen::VectorXd::Zero(n);
  }

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw ContractViolation("AdamW: size mismatch");
    ++t_;
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
    v_ = config_.beta2 * v_.array().matrix() +
         (1.0 - config_.beta2) * grad.array().square().matrix();
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    params -= lr * config_.weight_decay * params;  // decoupled decay
    params -= (lr / bc1) *
              (m_.array() / ((v_.array() / bc2).sqrt() + config_.eps)).matrix();
  }

  int64_t steps_taken() const { return t_; }

  void serialize(std::ostream& os) const {
    const uint64_t n = static_cast<uint64_t>(m_.size());
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
    os.write(reinterpret_cast<const char*>(m_.data()),
             static_cast<std::streamsize>(m_.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(v_.data()),
             static_cast<std::streamsize>(v_.size() * sizeof(double)));
  }

  void deserialize(std::istream& is) {
    uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    // the constructor fixed the dimension; a mismatch means a foreign blob
    if (!is || n != static_cast<uint64_t>(m_.size()))
      throw Error("optimizer state does not match this parameter count");
    is.read(reinterpret_cast<char*>(&t_), sizeof(t_));
    is.read(reinterpret_cast<char*>(m_.data()),
            static_cast<std::streamsize>(m_.size() * sizeof(double)));
    is.read(reinterpret_cast<char*>(v_.data()),
            static_cast<std::streamsize>(v_.size() * sizeof(double)));
    if (!is) throw Error("truncated optimizer state");
  }

 private:
  AdamWConfig config_;
  Eigen::VectorXd m_, v_;
  int64_t t_ = 0;
};

/// Linear warmup to lr_peak, then cosine decay to zero over the remainder.
inline double cosine_lr(int step, int total_steps, int warmup_steps, double lr_peak) {
  if (warmup_steps > 0 && step < warmup_steps)
    return lr_peak * static_cast<double>(step + 1) / warmup_steps;
  const double span = std::max(1, total_steps - warmup_steps);
  const double tau = std::min(1.0, static_cast<double>(step - warmup_steps) / span);
  return lr_peak * 0.5 * (1.0 + std::cos(kPi * tau));
}

// ---------------------------------------------------------------------------
// Dataset selection
// ---------------------------------------------------------------------------

/// All labeled placements of one system, sorted by construction; exactly one
/// sample carries relative_energy == 0.
struct SystemDataset {
  std::vector<TrainingSample> samples;
};

/// Conditional training consumes every placement; unconditional training
/// consumes only the lowest-energy (E_rel = 0) placement per system.
inline std::vector<const TrainingSample*> select_training_samples(
    const std::vector<SystemDataset>& dataset, ConditionMode mode) {
  std::vector<const TrainingSample*> out;
  for (const auto& sys : dataset) {
    if (sys.samples.empty()) continue;
    if (mode == ConditionMode::Conditional) {
      for (const auto& s : sys.samples) out.push_back(&s);
    } else {
      const TrainingSample* best = &sys.samples.front();
      for (const auto& s : sys.samples) {
        const double er = s.relative_energy.value_or(0.0);
        if (er > best->relative_energy.value_or(0.0)) best = &s;
      }
      out.push_back(best);
    }
  }
  if (out.empty()) throw InsufficientData("no training samples selected");
  return out;
}

// ---------------------------------------------------------------------------
// Loss + gradient over a prepared batch
// ---------------------------------------------------------------------------

struct PreparedBatch {
  std::vector<ScoreModelInput> inputs;
  std::vector<ScoreTarget> targets;
  std::vector<double> weights;  // importance factors, all 1.0 by default
};

/// Draw perturbations for a batch of samples at times ts. Deterministic given
/// the rng state; conditioning follows the mode.
inline PreparedBatch prepare_batch(const std::vector<const TrainingSample*>& pool,
                                   const std::vector<size_t>& indices,
                                   const std::vector<double>& ts, const NoiseSchedule& schedule,
                                   const IgSo3Table& table, ConditionMode mode, Rng& rng) {
  if (indices.size() != ts.size() || indices.empty())
    throw ContractViolation("prepare_batch: index/time mismatch");
  PreparedBatch batch;
  for (size_t b = 0; b < indices.size(); ++b) {
    const TrainingSample& sample = *pool.at(indices[b]);
    const PerturbResult pr = forward_perturb(sample, ts[b], schedule, table, rng);
    ScoreModelInput input;
    input.system = pr.system;
    input.tr_sigma = pr.target.tr_sigma;
    input.rot_sigma = pr.target.rot_sigma;
    input.condition = condition_value(sample, mode);
    batch.inputs.push_back(std::move(input));
    batch.targets.push_back(pr.target);
    batch.weights.push_back(sample.weight);
  }
  return batch;
}

/// Weighted-mean denoising loss over the batch and its exact parameter
/// gradient, accumulated into grad (which must be zero-initialized).
inline double loss_and_gradient(const ReferenceNet& net, const PreparedBatch& batch,
                                const IgSo3Table& table, ReferenceNet::Weights& grad,
                                int64_t batch_id = -1) {
  if (batch.inputs.size() != batch.targets.size() || batch.inputs.empty())
    throw ContractViolation("loss_and_gradient: malformed batch");
  double wsum = 0.0;
  for (const double w : batch.weights) wsum += w;
  if (!(wsum > 0.0)) throw ContractViolation("loss_and_gradient: zero total weight");

  double loss = 0.0;
  for (size_t b = 0; b < batch.inputs.size(); ++b) {
    ReferenceNet::ForwardCache cache;
    const ScoreModelOutput pred = net.forward_cached(batch.inputs[b], cache);
    const ScoreTarget& tgt = batch.targets[b];
    const double scale = batch.weights[b] / wsum;
    const double tr_w = tgt.tr_sigma * tgt.tr_sigma;
    const double rot_w = table.rot_loss_weight(tgt.rot_sigma);
    const Vec2 dtr = pred.tr_vec - tgt.tr_score;
    const Vec3 drot = pred.rot_vec - tgt.rot_score;
    loss += scale * (tr_w * dtr.squaredNorm() + rot_w * drot.squaredNorm());
    const Vec2 d_tr_vec = scale * 2.0 * tr_w * dtr;
    const Vec3 d_rot_vec = scale * 2.0 * rot_w * drot;
    net.backward(cache, d_tr_vec, d_rot_vec, grad, batch.inputs[b].system);
  }
  if (!std::isfinite(loss))
    throw GradientOverflow("non-finite loss in batch " + std::to_string(batch_id));
  const Eigen::VectorXd flat = ReferenceNet::flatten(grad);
  if (!flat.allFinite())
    throw GradientOverflow("non-finite gradient in batch " + std::to_string(batch_id));
  return loss;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Everything needed to continue training deterministically: parameters,
/// optimizer moments, step counter, and both rng streams. Captured before any
/// best-validation restoration, so resuming continues the raw trajectory.
struct TrainState {
  int step = 0;
  Eigen::VectorXd params;
  std::string adam_blob;
  std::string rng_batch_state;
  std::string rng_noise_state;
};

struct TrainConfig {
  ConditionMode mode = ConditionMode::Unconditional;
  int n_steps = 1500;
  int total_steps = 0;  // LR-schedule horizon; 0 means n_steps (set when stopping early)
  int batch_size = 8;
  double lr_peak = 1e-3;
  int warmup_steps = 100;
  double weight_decay = 1e-4;
  uint64_t seed = 0;
  int eval_every = 100;      // validation cadence (steps)
  double val_fraction = 0.1; // systems held out for validation

  void validate() const {
    if (n_steps < 1 || batch_size < 1) throw ContractViolation("train: steps/batch >= 1");
    if (!(lr_peak > 0.0)) throw ContractViolation("train: lr_peak must be positive");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
      throw ContractViolation("train: val_fraction in [0,1)");
  }
};

struct TrainLogRow {
  int step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  double final_loss = 0.0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool aborted = false;  // NaN loss; net holds the last good parameters
  std::vector<TrainLogRow> history;
};

namespace detail {

inline size_t draw_index(Rng& rng, size_t n) {
  return std::min(n - 1, static_cast<size_t>(rng.uniform() * static_cast<double>(n)));
}

}  // namespace detail

/// Deterministic validation loss: the same held-out samples perturbed with
/// the same draws on every call (fresh fixed-seed stream).
inline double validation_loss(const ReferenceNet& net,
                              const std::vector<const TrainingSample*>& val_pool,
                              const NoiseSchedule& schedule, const IgSo3Table& table,
                              ConditionMode mode, uint64_t seed) {
  Rng rng = Rng::stream(seed, "train-val");
  std::vector<size_t> idx;
  std::vector<double> ts;
  for (size_t i = 0; i < val_pool.size(); ++i) {
    idx.push_back(i);
    ts.push_back(rng.uniform());
  }
  const PreparedBatch batch = prepare_batch(val_pool, idx, ts, schedule, table, mode, rng);
  double loss = 0.0;
  for (size_t b = 0; b < batch.inputs.size(); ++b) {
    const ScoreModelOutput pred = net.forward(batch.inputs[b]);
    ScorePrediction p;
    p.tr_vec = pred.tr_vec;
    p.rot_vec = pred.rot_vec;
    loss += dsm_loss_single(p, batch.targets[b], table);
  }
  return loss / static_cast<double>(batch.inputs.size());
}

/// Denoising score-matching training. Splits the dataset by system into
/// train/validation, samples t uniformly, and keeps the parameters with the
/// best validation loss (restored into net before returning). On a non-finite
/// loss the last finite parameters are kept and `aborted` is set. Pass
/// `resume` to continue a saved run; pass `final_state` to capture the raw
/// end-of-run state for a later resume.
inline TrainResult train(ReferenceNet& net, const std::vector<SystemDataset>& dataset,
                         const NoiseSchedule& schedule, const IgSo3Table& table,
                         const TrainConfig& config, const TrainState* resume = nullptr,
                         TrainState* final_state = nullptr) {
  config.validate();
  schedule.validate();

  const size_t n_val_systems = static_cast<size_t>(
      std::floor(config.val_fraction * static_cast<double>(dataset.size())));
  std::vector<SystemDataset> train_set(dataset.begin(),
                                       dataset.end() - static_cast<long>(n_val_systems));
  std::vector<SystemDataset> val_set(dataset.end() - static_cast<long>(n_val_systems),
                                     dataset.end());
  const auto train_pool = select_training_samples(train_set, config.mode);
  const auto val_pool = n_val_systems > 0 ? select_training_samples(val_set, config.mode)
                                          : std::vector<const TrainingSample*>{};

  Rng rng_batch = Rng::stream(config.seed, "train-batch");
  Rng rng_noise = Rng::stream(config.seed, "train-noise");
  AdamWConfig adam_config;
  adam_config.weight_decay = config.weight_decay;
  AdamW adam(net.n_params(), adam_config);
  Eigen::VectorXd params = ReferenceNet::flatten(net.weights());
  int start_step = 0;

  if (resume) {
    params = resume->params;
    ReferenceNet::unflatten(params, net.weights());
    std::istringstream is(resume->adam_blob);
    adam.deserialize(is);
    rng_batch = Rng::deserialize(resume->rng_batch_state);
    rng_noise = Rng::deserialize(resume->rng_noise_state);
    start_step = resume->step;
  }

  TrainResult result;
  Eigen::VectorXd best_params = params;

  for (int step = start_step; step < config.n_steps; ++step) {
    std::vector<size_t> idx(static_cast<size_t>(config.batch_size));
    std::vector<double> ts(static_cast<size_t>(config.batch_size));
    for (int b = 0; b < config.batch_size; ++b) {
      idx[static_cast<size_t>(b)] = detail::draw_index(rng_batch, train_pool.size());
      ts[static_cast<size_t>(b)] = rng_batch.uniform();
    }

    double loss = 0.0;
    ReferenceNet::Weights grad = net.zero_like();
    try {
      const PreparedBatch batch =
          prepare_batch(train_pool, idx, ts, schedule, table, config.mode, rng_noise);
      loss = loss_and_gradient(net, batch, table, grad, step);
    } catch (const GradientOverflow&) {
      result.aborted = true;
      break;
    }

    const int horizon = config.total_steps > 0 ? config.total_steps : config.n_steps;
    const double lr = cosine_lr(step, horizon, config.warmup_steps, config.lr_peak);
    adam.step(params, ReferenceNet::flatten(grad), lr);
    ReferenceNet::unflatten(params, net.weights());
    result.final_loss = loss;

    TrainLogRow row;
    row.step = step;
    row.loss = loss;
    row.lr = lr;
    const bool eval_now = !val_pool.empty() && ((step + 1) % config.eval_every == 0 ||
                                                step + 1 == config.n_steps);
    if (eval_now) {
      row.val_loss =
          validation_loss(net, val_pool, schedule, table, config.mode, config.seed);
      if (row.val_loss < result.best_val_loss) {
        result.best_val_loss = row.val_loss;
        best_params = params;
      }
    }
    result.history.push_back(row);
  }

  if (final_state) {
    final_state->step = config.n_steps;
    final_state->params = params;
    std::ostringstream os;
    adam.serialize(os);
    final_state->adam_blob = os.str();
    final_state->rng_batch_state = rng_batch.serialize();
    final_state->rng_noise_state = rng_noise.serialize();
  }

  if (!val_pool.empty() && std::isfinite(result.best_val_loss))
    ReferenceNet::unflatten(best_params, net.weights());
  return result;
}

/// Tabular text dump of the training history ("step loss lr val_loss").
inline std::string format_history(const std::vector<TrainLogRow>& history) {
  std::ostringstream os;
  os << "# step loss lr val_loss\n";
  for (const auto& row : history) {
    os << row.step << ' ' << row.loss << ' ' << row.lr << ' ';
    if (std::isfinite(row.val_loss))
      os << row.val_loss;
    else
      os << "nan";
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Train-state persistence
// ---------------------------------------------------------------------------

inline void save_train_state(const std::string& path, const TrainState& state) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open train state for writing: " + path);
  const char magic[12] = {'S', 'L', 'A', 'B', 'D', 'I', 'F', 'F', '-', 'T', 'R', 'N'};
  os.write(magic, sizeof(magic));
  const uint64_t step = static_cast<uint64_t>(state.step);
  os.write(reinterpret_cast<const char*>(&step), sizeof(step));
  const uint64_t np = static_cast<uint64_t>(state.params.size());
  os.write(reinterpret_cast<const char*>(&np), sizeof(np));
  os.write(reinterpret_cast<const char*>(state.params.data()),
           static_cast<std::streamsize>(state.params.size() * sizeof(double)));
  auto write_blob = [&](const std::string& blob) {
    const uint64_t n = blob.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  };
  write_blob(state.adam_blob);
  write_blob(state.rng_batch_state);
  write_blob(state.rng_noise_state);
  if (!os) throw Error("short write to train state: " + path);
}

inline TrainState load_train_state(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open train state: " + path);
  char magic[12];
  is.read(magic, sizeof(magic));
  static const char expect[12] = {'S', 'L', 'A', 'B', 'D', 'I', 'F', 'F', '-', 'T', 'R', 'N'};
  if (!is || std::memcmp(magic, expect, sizeof(magic)) != 0)
    throw Error("not a train state file: " + path);
  TrainState state;
  uint64_t step = 0, np = 0;
  is.read(reinterpret_cast<char*>(&step), sizeof(step));
  is.read(reinterpret_cast<char*>(&np), sizeof(np));
  state.step = static_cast<int>(step);
  state.params.resize(static_cast<Eigen::Index>(np));
  is.read(reinterpret_cast<char*>(state.params.data()),
          static_cast<std::streamsize>(np * sizeof(double)));
  auto read_blob = [&](std::string& blob) {
    uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    blob.resize(n);
    is.read(blob.data(), static_cast<std::streamsize>(n));
  };
  read_blob(state.adam_blob);
  read_blob(state.rng_batch_state);
  read_blob(state.rng_noise_state);
  if (!is) throw Error("truncated train state: " + path);
  return state;
}

}  // namespace slabdiff
