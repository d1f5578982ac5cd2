#pragma once

#include "slabdiff/benchmark.hpp"
#include "slabdiff/igso3.hpp"
#include "slabdiff/sampler.hpp"
#include "slabdiff/score_model.hpp"
#include "slabdiff/training.hpp"

#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace slabdiff {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// JSON helpers: every object is key-checked so config typos fail loudly
// ---------------------------------------------------------------------------

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok) throw ParseError(where + ": unknown key \"" + key + "\"");
  }
}

template <typename T>
T get_or(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Per-struct serialization
// ---------------------------------------------------------------------------

inline json to_json(const NoiseSchedule& s) {
  return {{"tr_sigma_min", s.tr_sigma_min},
          {"tr_sigma_max", s.tr_sigma_max},
          {"rot_sigma_min", s.rot_sigma_min},
          {"rot_sigma_max", s.rot_sigma_max}};
}

inline NoiseSchedule schedule_from_json(const json& j) {
  detail::check_keys(j, {"tr_sigma_min", "tr_sigma_max", "rot_sigma_min", "rot_sigma_max"},
                     "schedule");
  NoiseSchedule s;
  s.tr_sigma_min = detail::get_or(j, "tr_sigma_min", s.tr_sigma_min);
  s.tr_sigma_max = detail::get_or(j, "tr_sigma_max", s.tr_sigma_max);
  s.rot_sigma_min = detail::get_or(j, "rot_sigma_min", s.rot_sigma_min);
  s.rot_sigma_max = detail::get_or(j, "rot_sigma_max", s.rot_sigma_max);
  s.validate();
  return s;
}

inline json to_json(const IgSo3BuildParams& p) {
  return {{"sigma_min", p.sigma_min},
          {"sigma_max", p.sigma_max},
          {"n_sigma", p.n_sigma},
          {"n_omega", p.n_omega},
          {"l_max", p.l_max}};
}

inline IgSo3BuildParams kernel_from_json(const json& j) {
  detail::check_keys(j, {"sigma_min", "sigma_max", "n_sigma", "n_omega", "l_max"}, "kernel");
  IgSo3BuildParams p;
  p.sigma_min = detail::get_or(j, "sigma_min", p.sigma_min);
  p.sigma_max = detail::get_or(j, "sigma_max", p.sigma_max);
  p.n_sigma = detail::get_or(j, "n_sigma", p.n_sigma);
  p.n_omega = detail::get_or(j, "n_omega", p.n_omega);
  p.l_max = detail::get_or(j, "l_max", p.l_max);
  return p;
}

inline json to_json(const SamplerConfig& s) {
  json j{{"n_steps", s.n_steps},
         {"mode", s.mode == SamplerMode::ODE ? "ode" : "sde"},
         {"early_stop_tr", s.early_stop_tr},
         {"early_stop_rot", s.early_stop_rot},
         {"interstitial_gap", s.interstitial_gap}};
  j["condition"] = s.condition ? json(*s.condition) : json(nullptr);
  return j;
}

inline SamplerConfig sampler_from_json(const json& j) {
  detail::check_keys(
      j, {"n_steps", "mode", "early_stop_tr", "early_stop_rot", "interstitial_gap", "condition"},
      "sampler");
  SamplerConfig s;
  s.n_steps = detail::get_or(j, "n_steps", s.n_steps);
  const std::string mode = detail::get_or<std::string>(j, "mode", "ode");
  if (mode == "ode")
    s.mode = SamplerMode::ODE;
  else if (mode == "sde")
    s.mode = SamplerMode::SDE;
  else
    throw ParseError("sampler.mode must be \"ode\" or \"sde\"");
  s.early_stop_tr = detail::get_or(j, "early_stop_tr", s.early_stop_tr);
  s.early_stop_rot = detail::get_or(j, "early_stop_rot", s.early_stop_rot);
  s.interstitial_gap = detail::get_or(j, "interstitial_gap", s.interstitial_gap);
  if (j.contains("condition") && !j.at("condition").is_null())
    s.condition = j.at("condition").get<double>();
  s.validate();
  return s;
}

inline json to_json(const RelaxConfig& r) {
  return {{"maxstep", r.maxstep},   {"memory", r.memory},
          {"damping", r.damping},   {"alpha", r.alpha},
          {"fmax", r.fmax},         {"max_iterations", r.max_iterations}};
}

inline RelaxConfig relax_from_json(const json& j) {
  detail::check_keys(j, {"maxstep", "memory", "damping", "alpha", "fmax", "max_iterations"},
                     "relax");
  RelaxConfig r;
  r.maxstep = detail::get_or(j, "maxstep", r.maxstep);
  r.memory = detail::get_or(j, "memory", r.memory);
  r.damping = detail::get_or(j, "damping", r.damping);
  r.alpha = detail::get_or(j, "alpha", r.alpha);
  r.fmax = detail::get_or(j, "fmax", r.fmax);
  r.max_iterations = detail::get_or(j, "max_iterations", r.max_iterations);
  r.validate();
  return r;
}

inline json to_json(const AnomalyThresholds& a) {
  return {{"desorb_distance", a.desorb_distance},
          {"recon_displacement", a.recon_displacement},
          {"intercal_depth", a.intercal_depth},
          {"layer_tol", a.layer_tol},
          {"bond_scale", a.bond_scale}};
}

inline AnomalyThresholds anomaly_from_json(const json& j) {
  detail::check_keys(
      j, {"desorb_distance", "recon_displacement", "intercal_depth", "layer_tol", "bond_scale"},
      "anomaly");
  AnomalyThresholds a;
  a.desorb_distance = detail::get_or(j, "desorb_distance", a.desorb_distance);
  a.recon_displacement = detail::get_or(j, "recon_displacement", a.recon_displacement);
  a.intercal_depth = detail::get_or(j, "intercal_depth", a.intercal_depth);
  a.layer_tol = detail::get_or(j, "layer_tol", a.layer_tol);
  a.bond_scale = detail::get_or(j, "bond_scale", a.bond_scale);
  a.validate();
  return a;
}

inline json to_json(const ReferenceNetHyper& h) {
  return {{"cutoff", h.cutoff},
          {"n_rbf", h.n_rbf},
          {"hidden_dim", h.hidden_dim},
          {"n_message_rounds", h.n_message_rounds},
          {"n_freq", h.n_freq}};
}

inline ReferenceNetHyper model_from_json(const json& j) {
  detail::check_keys(j, {"cutoff", "n_rbf", "hidden_dim", "n_message_rounds", "n_freq"}, "model");
  ReferenceNetHyper h;
  h.cutoff = detail::get_or(j, "cutoff", h.cutoff);
  h.n_rbf = detail::get_or(j, "n_rbf", h.n_rbf);
  h.hidden_dim = detail::get_or(j, "hidden_dim", h.hidden_dim);
  h.n_message_rounds = detail::get_or(j, "n_message_rounds", h.n_message_rounds);
  h.n_freq = detail::get_or(j, "n_freq", h.n_freq);
  h.validate();
  return h;
}

inline json to_json(const TrainConfig& t) {
  return {{"mode", t.mode == ConditionMode::Conditional ? "conditional" : "unconditional"},
          {"n_steps", t.n_steps},
          {"total_steps", t.total_steps},
          {"batch_size", t.batch_size},
          {"lr_peak", t.lr_peak},
          {"warmup_steps", t.warmup_steps},
          {"weight_decay", t.weight_decay},
          {"seed", t.seed},
          {"eval_every", t.eval_every},
          {"val_fraction", t.val_fraction}};
}

inline TrainConfig training_from_json(const json& j) {
  detail::check_keys(j,
                     {"mode", "n_steps", "total_steps", "batch_size", "lr_peak", "warmup_steps",
                      "weight_decay", "seed", "eval_every", "val_fraction"},
                     "training");
  TrainConfig t;
  const std::string mode = detail::get_or<std::string>(j, "mode", "unconditional");
  if (mode == "conditional")
    t.mode = ConditionMode::Conditional;
  else if (mode == "unconditional")
    t.mode = ConditionMode::Unconditional;
  else
    throw ParseError("training.mode must be \"conditional\" or \"unconditional\"");
  t.n_steps = detail::get_or(j, "n_steps", t.n_steps);
  t.total_steps = detail::get_or(j, "total_steps", t.total_steps);
  t.batch_size = detail::get_or(j, "batch_size", t.batch_size);
  t.lr_peak = detail::get_or(j, "lr_peak", t.lr_peak);
  t.warmup_steps = detail::get_or(j, "warmup_steps", t.warmup_steps);
  t.weight_decay = detail::get_or(j, "weight_decay", t.weight_decay);
  t.seed = detail::get_or(j, "seed", t.seed);
  t.eval_every = detail::get_or(j, "eval_every", t.eval_every);
  t.val_fraction = detail::get_or(j, "val_fraction", t.val_fraction);
  t.validate();
  return t;
}

inline json to_json(const SitePesParams& p) {
  json modes = json::array();
  for (const auto& m : p.modes)
    modes.push_back({{"k", {m.k.x(), m.k.y()}}, {"amplitude", m.amplitude}, {"phase", m.phase}});
  return {{"modes", modes},
          {"well_depth", p.well_depth},
          {"morse_a", p.morse_a},
          {"z_ref", p.z_ref},
          {"z_eq", p.z_eq},
          {"aniso", p.aniso},
          {"preferred_dir", {p.preferred_dir.x(), p.preferred_dir.y(), p.preferred_dir.z()}},
          {"aniso_z_width", p.aniso_z_width},
          {"axis_atom_a", p.axis_atom_a},
          {"axis_atom_b", p.axis_atom_b}};
}

inline SitePesParams pes_from_json(const json& j) {
  detail::check_keys(j,
                     {"modes", "well_depth", "morse_a", "z_ref", "z_eq", "aniso", "preferred_dir",
                      "aniso_z_width", "axis_atom_a", "axis_atom_b"},
                     "calculator.pes");
  SitePesParams p;
  p.modes.clear();
  if (j.contains("modes")) {
    for (const auto& jm : j.at("modes")) {
      detail::check_keys(jm, {"k", "amplitude", "phase"}, "calculator.pes.modes[]");
      FourierMode m;
      const auto k = jm.at("k");
      if (!k.is_array() || k.size() != 2) throw ParseError("pes mode k must be [kx, ky]");
      m.k = Eigen::Vector2i(k.at(0).get<int>(), k.at(1).get<int>());
      m.amplitude = jm.at("amplitude").get<double>();
      m.phase = detail::get_or(jm, "phase", 0.0);
      p.modes.push_back(m);
    }
  }
  p.well_depth = detail::get_or(j, "well_depth", p.well_depth);
  p.morse_a = detail::get_or(j, "morse_a", p.morse_a);
  p.z_ref = detail::get_or(j, "z_ref", p.z_ref);
  p.z_eq = detail::get_or(j, "z_eq", p.z_eq);
  p.aniso = detail::get_or(j, "aniso", p.aniso);
  if (j.contains("preferred_dir")) {
    const auto d = j.at("preferred_dir");
    if (!d.is_array() || d.size() != 3) throw ParseError("pes preferred_dir must be [x, y, z]");
    p.preferred_dir = Vec3(d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>());
  }
  p.aniso_z_width = detail::get_or(j, "aniso_z_width", p.aniso_z_width);
  p.axis_atom_a = detail::get_or(j, "axis_atom_a", p.axis_atom_a);
  p.axis_atom_b = detail::get_or(j, "axis_atom_b", p.axis_atom_b);
  return p;  // validated on calculator construction
}

inline json to_json(const LjParams& p) {
  json species = json::object();
  for (const auto& [z, sp] : p.species)
    species[std::to_string(z)] = {{"epsilon", sp.epsilon}, {"sigma", sp.sigma}};
  return {{"species", species}, {"cutoff", p.cutoff}, {"switch_on", p.switch_on}};
}

inline LjParams lj_from_json(const json& j) {
  detail::check_keys(j, {"species", "cutoff", "switch_on"}, "calculator.lj");
  LjParams p = lj_generic_preset();
  if (j.contains("species")) {
    p.species.clear();
    for (const auto& [key, val] : j.at("species").items()) {
      detail::check_keys(val, {"epsilon", "sigma"}, "calculator.lj.species");
      int z = 0;
      try {
        z = std::stoi(key);
      } catch (const std::exception&) {
        throw ParseError("lj species key must be an atomic number, got \"" + key + "\"");
      }
      p.species[z] = {val.at("epsilon").get<double>(), val.at("sigma").get<double>()};
    }
  }
  p.cutoff = detail::get_or(j, "cutoff", p.cutoff);
  p.switch_on = detail::get_or(j, "switch_on", p.switch_on);
  return p;  // validated on calculator construction
}

inline json to_json(const CalculatorSpec& c) {
  json j;
  j["kind"] = c.kind == CalculatorKind::LennardJonesPeriodic ? "lj" : "site_pes";
  if (c.kind == CalculatorKind::LennardJonesPeriodic)
    j["lj"] = to_json(c.lj);
  else
    j["pes"] = to_json(c.pes);
  return j;
}

inline CalculatorSpec calculator_from_json(const json& j) {
  detail::check_keys(j, {"kind", "lj", "pes"}, "calculator");
  CalculatorSpec c;
  const std::string kind = detail::get_or<std::string>(j, "kind", "site_pes");
  if (kind == "lj")
    c.kind = CalculatorKind::LennardJonesPeriodic;
  else if (kind == "site_pes")
    c.kind = CalculatorKind::SyntheticSitePES;
  else
    throw ParseError("calculator.kind must be \"lj\" or \"site_pes\"");
  if (j.contains("lj")) c.lj = lj_from_json(j.at("lj"));
  if (j.contains("pes")) c.pes = pes_from_json(j.at("pes"));
  return c;
}

inline json to_json(const SlabSpec& s) {
  return {{"lattice_constant", s.lattice_constant},
          {"skew", s.skew},
          {"nx", s.nx},
          {"ny", s.ny},
          {"n_layers", s.n_layers},
          {"layer_spacing", s.layer_spacing},
          {"z0", s.z0},
          {"cell_height", s.cell_height},
          {"species", s.species}};
}

inline SlabSpec slab_from_json(const json& j) {
  detail::check_keys(j,
                     {"lattice_constant", "skew", "nx", "ny", "n_layers", "layer_spacing", "z0",
                      "cell_height", "species"},
                     "benchmark.slab");
  SlabSpec s;
  s.lattice_constant = detail::get_or(j, "lattice_constant", s.lattice_constant);
  s.skew = detail::get_or(j, "skew", s.skew);
  s.nx = detail::get_or(j, "nx", s.nx);
  s.ny = detail::get_or(j, "ny", s.ny);
  s.n_layers = detail::get_or(j, "n_layers", s.n_layers);
  s.layer_spacing = detail::get_or(j, "layer_spacing", s.layer_spacing);
  s.z0 = detail::get_or(j, "z0", s.z0);
  s.cell_height = detail::get_or(j, "cell_height", s.cell_height);
  s.species = detail::get_or(j, "species", s.species);
  s.validate();
  return s;
}

inline json to_json(const OracleConfig& o) {
  return {{"grid", o.grid},
          {"orientations", o.orientations},
          {"dedupe_distance", o.dedupe_distance},
          {"threads", o.threads}};
}

inline OracleConfig oracle_from_json(const json& j) {
  detail::check_keys(j, {"grid", "orientations", "dedupe_distance", "threads"},
                     "benchmark.oracle");
  OracleConfig o;
  o.grid = detail::get_or(j, "grid", o.grid);
  o.orientations = detail::get_or(j, "orientations", o.orientations);
  o.dedupe_distance = detail::get_or(j, "dedupe_distance", o.dedupe_distance);
  o.threads = detail::get_or(j, "threads", o.threads);
  return o;
}

inline json to_json(const BenchmarkGenConfig& b) {
  return {{"n_systems", b.n_systems},
          {"n_ood", b.n_ood},
          {"k_placements", b.k_placements},
          {"n_wells", b.n_wells},
          {"bump_power", b.bump_power},
          {"base_corrugation", b.base_corrugation},
          {"slab", to_json(b.slab)},
          {"oracle", to_json(b.oracle)},
          {"interstitial_gap", b.interstitial_gap},
          {"seed", b.seed},
          {"min_local_minima", b.min_local_minima},
          {"max_retries", b.max_retries}};
}

inline BenchmarkGenConfig benchmark_from_json(const json& j) {
  detail::check_keys(j,
                     {"n_systems", "n_ood", "k_placements", "n_wells", "bump_power",
                      "base_corrugation", "slab", "oracle", "interstitial_gap", "seed",
                      "min_local_minima", "max_retries"},
                     "benchmark");
  BenchmarkGenConfig b;
  b.n_systems = detail::get_or(j, "n_systems", b.n_systems);
  b.n_ood = detail::get_or(j, "n_ood", b.n_ood);
  b.k_placements = detail::get_or(j, "k_placements", b.k_placements);
  b.n_wells = detail::get_or(j, "n_wells", b.n_wells);
  b.bump_power = detail::get_or(j, "bump_power", b.bump_power);
  b.base_corrugation = detail::get_or(j, "base_corrugation", b.base_corrugation);
  if (j.contains("slab")) b.slab = slab_from_json(j.at("slab"));
  if (j.contains("oracle")) b.oracle = oracle_from_json(j.at("oracle"));
  b.interstitial_gap = detail::get_or(j, "interstitial_gap", b.interstitial_gap);
  b.seed = detail::get_or(j, "seed", b.seed);
  b.min_local_minima = detail::get_or(j, "min_local_minima", b.min_local_minima);
  b.max_retries = detail::get_or(j, "max_retries", b.max_retries);
  b.validate();
  return b;
}

// ---------------------------------------------------------------------------
// Top-level run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
  NoiseSchedule schedule;
  IgSo3BuildParams kernel;
  ReferenceNetHyper model;
  SamplerConfig sampler;
  RelaxConfig relax;
  AnomalyThresholds anomaly;
  TrainConfig training;
  BenchmarkGenConfig benchmark;
  CalculatorSpec calculator;
  std::string out_dir = "runs";
  uint64_t seed = 0;
};

inline json to_json(const RunConfig& c) {
  return {{"schedule", to_json(c.schedule)},
          {"kernel", to_json(c.kernel)},
          {"model", to_json(c.model)},
          {"sampler", to_json(c.sampler)},
          {"relax", to_json(c.relax)},
          {"anomaly", to_json(c.anomaly)},
          {"training", to_json(c.training)},
          {"benchmark", to_json(c.benchmark)},
          {"calculator", to_json(c.calculator)},
          {"out_dir", c.out_dir},
          {"seed", c.seed}};
}

inline RunConfig run_config_from_json(const json& j) {
  detail::check_keys(j,
                     {"schedule", "kernel", "model", "sampler", "relax", "anomaly", "training",
                      "benchmark", "calculator", "out_dir", "seed"},
                     "config");
  RunConfig c;
  if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
  if (j.contains("kernel")) c.kernel = kernel_from_json(j.at("kernel"));
  if (j.contains("model")) c.model = model_from_json(j.at("model"));
  if (j.contains("sampler")) c.sampler = sampler_from_json(j.at("sampler"));
  if (j.contains("relax")) c.relax = relax_from_json(j.at("relax"));
  if (j.contains("anomaly")) c.anomaly = anomaly_from_json(j.at("anomaly"));
  if (j.contains("training")) c.training = training_from_json(j.at("training"));
  if (j.contains("benchmark")) c.benchmark = benchmark_from_json(j.at("benchmark"));
  if (j.contains("calculator")) c.calculator = calculator_from_json(j.at("calculator"));
  c.out_dir = detail::get_or(j, "out_dir", c.out_dir);
  c.seed = detail::get_or(j, "seed", c.seed);
  return c;
}

/// Parse a config file. I/O and JSON syntax problems surface as ParseError;
/// contract violations from the embedded validate() calls pass through.
inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

/// FNV-1a over the canonical (sorted-key) serialization.
inline std::string config_hash(const RunConfig& config) {
  const std::string dump = to_json(config).dump();
  uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Provenance sidecar written before a run starts: anyone holding the output
/// directory can see what produced it.
struct RunManifest {
  std::string config_hash;
  std::string created;
  uint64_t seed = 0;
  std::string command;
  std::map<std::string, std::string> outputs;  // stage name -> relative path

  json to_json() const {
    return {{"config_hash", config_hash},
            {"created", created},
            {"seed", seed},
            {"command", command},
            {"outputs", outputs}};
  }

  static RunManifest from_json(const json& j) {
    detail::check_keys(j, {"config_hash", "created", "seed", "command", "outputs"}, "manifest");
    RunManifest m;
    m.config_hash = detail::get_or<std::string>(j, "config_hash", "");
    m.created = detail::get_or<std::string>(j, "created", "");
    m.seed = detail::get_or<uint64_t>(j, "seed", 0);
    m.command = detail::get_or<std::string>(j, "command", "");
    if (j.contains("outputs"))
      m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    return m;
  }
};

inline void write_manifest(const RunManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path);
  out << m.to_json().dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Evaluation record persistence (one JSON object per line)
// ---------------------------------------------------------------------------

inline json to_json(const EvalRecord& r) {
  return {{"system_id", r.system_id},
          {"method", method_name(r.method)},
          {"site_index", r.site_index},
          {"predicted_energy", r.predicted_energy},
          {"desorption", r.report.desorption},
          {"dissociation", r.report.dissociation},
          {"reconstruction", r.report.reconstruction},
          {"intercalation", r.report.intercalation},
          {"success_dft_style", r.success_dft_style},
          {"success_distance", r.success_distance},
          {"success_mlff", r.success_mlff},
          {"below_oracle", r.below_oracle},
          {"proposed_site", {r.proposed_site.x(), r.proposed_site.y()}},
          {"site", {r.site.x(), r.site.y()}},
          {"relax_converged", r.relax_converged},
          {"relax_iterations", r.relax_iterations}};
}

inline EvalRecord record_from_json(const json& j) {
  EvalRecord r;
  r.system_id = j.at("system_id").get<std::string>();
  const std::string method = j.at("method").get<std::string>();
  if (method == "diffusion")
    r.method = PlacementMethod::Diffusion;
  else if (method == "random_baseline")
    r.method = PlacementMethod::RandomBaseline;
  else
    throw ParseError("record: unknown method \"" + method + "\"");
  r.site_index = j.at("site_index").get<int>();
  r.predicted_energy = j.at("predicted_energy").get<double>();
  r.report.desorption = j.at("desorption").get<bool>();
  r.report.dissociation = j.at("dissociation").get<bool>();
  r.report.reconstruction = j.at("reconstruction").get<bool>();
  r.report.intercalation = j.at("intercalation").get<bool>();
  r.success_dft_style = j.at("success_dft_style").get<bool>();
  r.success_distance = j.at("success_distance").get<bool>();
  r.success_mlff = j.at("success_mlff").get<bool>();
  r.below_oracle = detail::get_or(j, "below_oracle", false);
  r.proposed_site = Vec2(j.at("proposed_site").at(0).get<double>(),
                         j.at("proposed_site").at(1).get<double>());
  r.site = Vec2(j.at("site").at(0).get<double>(), j.at("site").at(1).get<double>());
  r.relax_converged = j.at("relax_converged").get<bool>();
  r.relax_iterations = j.at("relax_iterations").get<int>();
  return r;
}

inline std::string format_records(const std::vector<EvalRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) out << to_json(r).dump() << "\n";
  return out.str();
}

inline std::vector<EvalRecord> parse_records(std::istream& in) {
  std::vector<EvalRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(std::string("records: ") + e.what(), line_no, 1);
    }
  }
  return out;
}

inline json to_json(const ProtocolSummary& s) {
  return {{"method", method_name(s.method)},
          {"nsites", s.nsites},
          {"n_systems", s.n_systems},
          {"success_rate_dft", s.success_rate_dft},
          {"success_rate_mlff", s.success_rate_mlff},
          {"success_rate_distance", s.success_rate_distance},
          {"anomaly_rate", s.anomaly_rate},
          {"oracle_violations", s.oracle_violations}};
}

// ---------------------------------------------------------------------------
// Benchmark persistence: lets generate / train / evaluate run as separate
// processes
// ---------------------------------------------------------------------------

inline json to_json(const AdslabSystem& s) {
  json positions = json::array();
  for (Eigen::Index i = 0; i < s.size(); ++i)
    positions.push_back({s.positions(i, 0), s.positions(i, 1), s.positions(i, 2)});
  json basis = json::array();
  for (int r = 0; r < 3; ++r)
    basis.push_back({s.cell.basis()(r, 0), s.cell.basis()(r, 1), s.cell.basis()(r, 2)});
  std::vector<int> tags;
  for (const auto t : s.tags) tags.push_back(static_cast<int>(t));
  return {{"basis", basis},
          {"pbc", {s.cell.pbc()[0], s.cell.pbc()[1], s.cell.pbc()[2]}},
          {"species", s.species},
          {"tags", tags},
          {"positions", positions}};
}

inline AdslabSystem system_from_json(const json& j) {
  detail::check_keys(j, {"basis", "pbc", "species", "tags", "positions"}, "system");
  AdslabSystem s;
  Mat3 basis;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) basis(r, c) = j.at("basis").at(r).at(c).get<double>();
  const auto& pbc = j.at("pbc");
  s.cell = LatticeCell(basis, {pbc.at(0).get<bool>(), pbc.at(1).get<bool>(),
                               pbc.at(2).get<bool>()});
  s.species = j.at("species").get<std::vector<int>>();
  const auto tags = j.at("tags").get<std::vector<int>>();
  for (const int t : tags) {
    if (t < 0 || t > 2) throw ParseError("system: tag out of range");
    s.tags.push_back(static_cast<AtomTag>(t));
  }
  const auto& pos = j.at("positions");
  s.positions.resize(static_cast<Eigen::Index>(pos.size()), 3);
  for (size_t i = 0; i < pos.size(); ++i)
    for (int c = 0; c < 3; ++c)
      s.positions(static_cast<Eigen::Index>(i), c) = pos.at(i).at(c).get<double>();
  if (s.species.size() != pos.size() || s.tags.size() != pos.size())
    throw ParseError("system: field lengths disagree");
  return s;
}

inline json to_json(const Pose& p) {
  return {{"translation", {p.translation.x(), p.translation.y()}},
          {"rotation", {p.rotation.x(), p.rotation.y(), p.rotation.z()}}};
}

inline Pose pose_from_json(const json& j) {
  Pose p;
  p.translation = Vec2(j.at("translation").at(0).get<double>(),
                       j.at("translation").at(1).get<double>());
  p.rotation = Vec3(j.at("rotation").at(0).get<double>(), j.at("rotation").at(1).get<double>(),
                    j.at("rotation").at(2).get<double>());
  return p;
}

inline json to_json(const BenchmarkSystem& b) {
  json minima = json::array();
  for (const auto& [pose, energy] : b.local_minima)
    minima.push_back({{"pose", to_json(pose)}, {"energy", energy}});
  json wells = json::array();
  for (const auto& w : b.well_centers) wells.push_back({w.x(), w.y()});
  json dataset = json::array();
  for (const auto& ts : b.dataset.samples) {
    json sample{{"system", to_json(ts.system)}, {"weight", ts.weight}};
    sample["relative_energy"] =
        ts.relative_energy ? json(*ts.relative_energy) : json(nullptr);
    dataset.push_back(sample);
  }
  json ads_positions = json::array();
  for (Eigen::Index i = 0; i < b.adsorbate.positions.rows(); ++i)
    ads_positions.push_back({b.adsorbate.positions(i, 0), b.adsorbate.positions(i, 1),
                             b.adsorbate.positions(i, 2)});
  return {{"id", b.id},
          {"slab", to_json(b.slab)},
          {"adsorbate", {{"positions", ads_positions}, {"species", b.adsorbate.species}}},
          {"calculator", to_json(b.calc)},
          {"oracle_pose", to_json(b.oracle_pose)},
          {"oracle_min_energy", b.oracle_min_energy},
          {"local_minima", minima},
          {"well_centers", wells},
          {"dataset", dataset},
          {"dataset_min_energy", b.dataset_min_energy}};
}

inline BenchmarkSystem benchmark_system_from_json(const json& j) {
  detail::check_keys(j,
                     {"id", "slab", "adsorbate", "calculator", "oracle_pose",
                      "oracle_min_energy", "local_minima", "well_centers", "dataset",
                      "dataset_min_energy"},
                     "benchmark system");
  BenchmarkSystem b;
  b.id = j.at("id").get<std::string>();
  b.slab = system_from_json(j.at("slab"));
  const auto& ads = j.at("adsorbate");
  const auto& ap = ads.at("positions");
  b.adsorbate.positions.resize(static_cast<Eigen::Index>(ap.size()), 3);
  for (size_t i = 0; i < ap.size(); ++i)
    for (int c = 0; c < 3; ++c)
      b.adsorbate.positions(static_cast<Eigen::Index>(i), c) = ap.at(i).at(c).get<double>();
  b.adsorbate.species = ads.at("species").get<std::vector<int>>();
  b.calc = calculator_from_json(j.at("calculator"));
  b.oracle_pose = pose_from_json(j.at("oracle_pose"));
  b.oracle_min_energy = j.at("oracle_min_energy").get<double>();
  for (const auto& m : j.at("local_minima"))
    b.local_minima.emplace_back(pose_from_json(m.at("pose")), m.at("energy").get<double>());
  for (const auto& w : j.at("well_centers"))
    b.well_centers.emplace_back(w.at(0).get<double>(), w.at(1).get<double>());
  for (const auto& s : j.at("dataset")) {
    TrainingSample ts;
    ts.system = system_from_json(s.at("system"));
    ts.weight = detail::get_or(s, "weight", 1.0);
    if (!s.at("relative_energy").is_null())
      ts.relative_energy = s.at("relative_energy").get<double>();
    b.dataset.samples.push_back(std::move(ts));
  }
  b.dataset_min_energy = j.at("dataset_min_energy").get<double>();
  return b;
}

inline void save_benchmark(const BenchmarkSet& set, const std::string& path) {
  json j;
  j["id_split"] = json::array();
  for (const auto& s : set.id_split) j["id_split"].push_back(to_json(s));
  j["ood_split"] = json::array();
  for (const auto& s : set.ood_split) j["ood_split"].push_back(to_json(s));
  j["log"] = set.log;
  j["relaxations_total"] = set.relaxations_total;
  j["relaxations_converged"] = set.relaxations_converged;
  std::ofstream out(path);
  if (!out) throw Error("cannot write benchmark file " + path);
  out << j.dump() << "\n";
}

inline BenchmarkSet load_benchmark(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open benchmark file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("benchmark JSON: ") + e.what());
  }
  BenchmarkSet set;
  for (const auto& s : j.at("id_split")) set.id_split.push_back(benchmark_system_from_json(s));
  for (const auto& s : j.at("ood_split")) set.ood_split.push_back(benchmark_system_from_json(s));
  set.log = detail::get_or(j, "log", std::vector<std::string>{});
  set.relaxations_total = detail::get_or(j, "relaxations_total", 0);
  set.relaxations_converged = detail::get_or(j, "relaxations_converged", 0);
  return set;
}

}  // namespace slabdiff
