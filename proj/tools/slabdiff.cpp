// Command-line front end: benchmark generation, oracle checks, training,
// sampling, relaxation, and protocol evaluation, all driven by one JSON
// configuration. Exit codes: 0 success, 2 configuration error, 3 runtime
// failure (partial outputs are left in place).

#include "slabdiff/slabdiff.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace slabdiff;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Session {
  RunConfig config;
  fs::path out;
  uint64_t seed = 0;
};

uint64_t stage_seed(const Session& s, uint64_t stage_specific) {
  return stage_specific != 0 ? stage_specific : s.seed;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

/// Manifest goes to disk before the stage runs, so even an interrupted run
/// leaves a record of what was attempted.
void emit_manifest(const Session& s, const std::string& command,
                   const std::map<std::string, std::string>& outputs) {
  RunManifest m;
  m.config_hash = config_hash(s.config);
  m.created = utc_timestamp();
  m.seed = s.seed;
  m.command = command;
  m.outputs = outputs;
  write_manifest(m, (s.out / ("manifest-" + command + ".json")).string());
}

IgSo3Table load_kernel(const Session& s) {
  return IgSo3Table::build_or_load(s.config.kernel, (s.out / "kernel_cache.bin").string());
}

AdsorbateTemplate template_from_file(const std::string& path) {
  std::vector<std::string> warnings;
  const AdslabSystem mol = parse_structure_file(path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << path << ": " << w << "\n";
  AdsorbateTemplate tmpl;
  tmpl.positions = mol.positions;
  tmpl.species = mol.species;
  tmpl.validate();
  return tmpl;
}

// ---------------------------------------------------------------------------

int cmd_benchmark(const Session& s) {
  emit_manifest(s, "benchmark", {{"benchmark", "benchmark.json"}});
  BenchmarkGenConfig gen = s.config.benchmark;
  gen.seed = stage_seed(s, gen.seed);
  gen.relax = s.config.relax;
  const BenchmarkSet set = generate_benchmark(gen);
  save_benchmark(set, (s.out / "benchmark.json").string());
  for (const auto& line : set.log) std::cerr << "note: " << line << "\n";
  std::cout << "systems: " << set.id_split.size() << " in-distribution, "
            << set.ood_split.size() << " out-of-distribution\n";
  size_t total_minima = 0;
  for (const auto& sys : set.id_split) total_minima += sys.local_minima.size();
  if (!set.id_split.empty())
    std::cout << "mean local minima per system: "
              << static_cast<double>(total_minima) / set.id_split.size() << "\n";
  if (set.relaxations_total > 0)
    std::cout << "dataset relaxations converged: " << set.relaxations_converged << "/"
              << set.relaxations_total << "\n";
  std::cout << "wrote " << (s.out / "benchmark.json").string() << "\n";
  return kExitOk;
}

int cmd_oracle(const Session& s, const std::string& benchmark_path, int grid, int orientations) {
  emit_manifest(s, "oracle", {{"oracle_check", "oracle_check.json"}});
  const BenchmarkSet set = load_benchmark(benchmark_path);
  json rows = json::array();
  for (const auto& sys : set.id_split) {
    OracleConfig oc = s.config.benchmark.oracle;
    if (grid > 0) oc.grid = grid;
    if (orientations > 0) oc.orientations = orientations;
    oc.relax = s.config.relax;
    oc.interstitial_gap = s.config.benchmark.interstitial_gap;
    const auto calc = make_calculator(sys.calc);
    const OracleResult res = oracle_minimum(sys.slab, sys.adsorbate, *calc, oc);
    const double de = std::abs(res.energy - sys.oracle_min_energy);
    const double dx = detail::wrapped_inplane_distance(
        Vec2(res.pose.translation.x(), res.pose.translation.y()),
        Vec2(sys.oracle_pose.translation.x(), sys.oracle_pose.translation.y()), sys.slab.cell);
    rows.push_back({{"id", sys.id},
                    {"energy", res.energy},
                    {"stored_energy", sys.oracle_min_energy},
                    {"abs_energy_delta", de},
                    {"site_distance", dx},
                    {"local_minima", res.local_minima.size()}});
    std::cout << sys.id << ": E = " << res.energy << " eV, |dE| = " << de
              << " eV, site shift = " << dx << " A, " << res.local_minima.size()
              << " minima\n";
  }
  write_text(s.out / "oracle_check.json", rows.dump(2) + "\n");
  return kExitOk;
}

int cmd_train(const Session& s, const std::string& benchmark_path, const std::string& resume) {
  emit_manifest(s, "train",
                {{"checkpoint", "model.bin"},
                 {"history", "train_history.tsv"},
                 {"state", "train_state.bin"}});
  const BenchmarkSet set = load_benchmark(benchmark_path);
  if (set.id_split.empty()) throw InsufficientData("benchmark has no systems");
  std::vector<SystemDataset> dataset;
  for (const auto& sys : set.id_split) dataset.push_back(sys.dataset);

  TrainConfig tc = s.config.training;
  tc.seed = stage_seed(s, tc.seed);

  ReferenceNet net(s.config.model, tc.seed);
  const IgSo3Table table = load_kernel(s);

  TrainState resumed;
  const TrainState* resume_ptr = nullptr;
  if (!resume.empty()) {
    resumed = load_train_state(resume);
    resume_ptr = &resumed;
    std::cout << "resuming from step " << resumed.step << "\n";
  }
  TrainState final_state;
  const TrainResult result = train(net, dataset, s.config.schedule, table, tc, resume_ptr,
                                   &final_state);

  ReferenceNet::CheckpointMeta meta;
  meta.schedule = s.config.schedule;
  meta.seed = tc.seed;
  net.save_checkpoint((s.out / "model.bin").string(), meta);
  write_text(s.out / "train_history.tsv", format_history(result.history));
  save_train_state((s.out / "train_state.bin").string(), final_state);

  std::cout << "final loss " << result.final_loss << ", best validation loss "
            << result.best_val_loss << "\n";
  if (result.aborted) {
    std::cerr << "error: training aborted on non-finite loss or gradient\n";
    return kExitRuntime;
  }
  std::cout << "wrote " << (s.out / "model.bin").string() << "\n";
  return kExitOk;
}

int cmd_sample(const Session& s, const std::string& slab_path, const std::string& ads_path,
               const std::string& checkpoint, int n_samples) {
  emit_manifest(s, "sample", {{"samples", "samples/"}});
  std::vector<std::string> warnings;
  const AdslabSystem slab = parse_structure_file(slab_path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << slab_path << ": " << w << "\n";
  for (const auto t : slab.tags)
    if (t == AtomTag::Adsorbate)
      throw ContractViolation("slab file already contains adsorbate-tagged atoms");
  const AdsorbateTemplate tmpl = template_from_file(ads_path);

  auto [net, meta] = ReferenceNet::load_checkpoint(checkpoint);
  const IgSo3Table table = load_kernel(s);
  fs::create_directories(s.out / "samples");

  for (int i = 0; i < n_samples; ++i) {
    Rng rng = Rng::stream(s.seed, "cli-sample", static_cast<uint64_t>(i));
    const SampleResult res = sample_pose(slab, tmpl, net, meta.schedule, table,
                                         s.config.sampler, rng);
    const fs::path structure = s.out / "samples" / ("sample_" + std::to_string(i) + ".xyz");
    std::ofstream xyz(structure);
    if (!xyz) throw Error("cannot write " + structure.string());
    write_structure(xyz, res.system);
    write_text(s.out / "samples" / ("trajectory_" + std::to_string(i) + ".tsv"),
               format_trajectory(res.trajectory));
    const Vec3 com = center_of_mass(res.system, TagMask::Adsorbate);
    std::cout << "sample " << i << ": com = (" << com.x() << ", " << com.y() << ", " << com.z()
              << "), steps used = " << res.n_steps_used << "\n";
  }
  return kExitOk;
}

int cmd_relax(const Session& s, const std::string& in_path) {
  emit_manifest(s, "relax", {{"relaxed", "relaxed.xyz"}});
  std::vector<std::string> warnings;
  const AdslabSystem initial = parse_structure_file(in_path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << in_path << ": " << w << "\n";
  initial.validate();
  const auto calc = make_calculator(s.config.calculator);
  const RelaxResult res = relax(initial, *calc, s.config.relax);
  if (res.failed) {
    std::cerr << "error: relaxation failed (calculator blow-up)\n";
    return kExitRuntime;
  }
  std::ofstream xyz(s.out / "relaxed.xyz");
  if (!xyz) throw Error("cannot write relaxed.xyz");
  write_structure(xyz, res.system);

  const AnomalyReport report = classify(initial, res.system, s.config.anomaly);
  std::cout << "energy " << res.energy << " eV after " << res.n_iterations
            << " iterations, fmax " << res.fmax_final << " eV/A, "
            << (res.converged ? "converged" : "not converged") << "\n";
  std::cout << "anomalies:" << (report.any() ? "" : " none");
  if (report.desorption) std::cout << " desorption";
  if (report.dissociation) std::cout << " dissociation";
  if (report.reconstruction) std::cout << " reconstruction";
  if (report.intercalation) std::cout << " intercalation";
  std::cout << "\n";
  return kExitOk;
}

int cmd_evaluate(const Session& s, const std::string& benchmark_path,
                 const std::string& checkpoint, std::vector<int> nsites,
                 const std::string& method_filter, const std::string& split) {
  emit_manifest(s, "evaluate", {{"records", "records.jsonl"}, {"summary", "summary.json"}});
  const BenchmarkSet set = load_benchmark(benchmark_path);
  const std::vector<BenchmarkSystem>& systems =
      split == "ood" ? set.ood_split : set.id_split;
  if (systems.empty()) throw InsufficientData("benchmark split \"" + split + "\" is empty");
  if (nsites.empty()) nsites = {1, 5};
  const int max_sites = *std::max_element(nsites.begin(), nsites.end());

  const bool want_diffusion = method_filter == "both" || method_filter == "diffusion";
  const bool want_random = method_filter == "both" || method_filter == "random";
  if (!want_diffusion && !want_random)
    throw ContractViolation("method must be both, diffusion, or random");

  ProtocolConfig pc;
  pc.schedule = s.config.schedule;
  pc.sampler = s.config.sampler;
  pc.relax = s.config.relax;
  pc.anomaly = s.config.anomaly;
  pc.seed = s.seed;

  std::optional<std::pair<ReferenceNet, ReferenceNet::CheckpointMeta>> loaded;
  std::optional<IgSo3Table> table;
  if (want_diffusion) {
    loaded = ReferenceNet::load_checkpoint(checkpoint);
    pc.model = &loaded->first;
    pc.schedule = loaded->second.schedule;
    table = load_kernel(s);
    pc.table = &*table;
  }

  std::vector<EvalRecord> records;
  json summaries = json::array();
  for (const bool diffusion : {true, false}) {
    if (diffusion && !want_diffusion) continue;
    if (!diffusion && !want_random) continue;
    const PlacementMethod method =
        diffusion ? PlacementMethod::Diffusion : PlacementMethod::RandomBaseline;
    const ProtocolResult res = run_protocol(systems, method, max_sites, pc);
    records.insert(records.end(), res.records.begin(), res.records.end());
    for (const int n : nsites) {
      const ProtocolSummary sum = aggregate_records(res.records, method, n);
      summaries.push_back(to_json(sum));
      std::printf("%-16s nsites=%-3d success_dft=%.3f success_mlff=%.3f dist=%.3f anomaly=%.3f\n",
                  method_name(method).c_str(), n, sum.success_rate_dft, sum.success_rate_mlff,
                  sum.success_rate_distance, sum.anomaly_rate);
      if (sum.oracle_violations > 0)
        std::cerr << "warning: " << sum.oracle_violations
                  << " relaxed energies fell below the oracle minimum\n";
    }
    if (max_sites >= 2) {
      const double div = mean_proposed_diversity(res.records, method, systems);
      std::printf("%-16s proposed-site diversity %.3f A\n", method_name(method).c_str(), div);
    }
  }
  write_text(s.out / "records.jsonl", format_records(records));
  write_text(s.out / "summary.json", summaries.dump(2) + "\n");
  std::cout << "wrote " << (s.out / "records.jsonl").string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional pose diffusion for periodic adsorbate placement"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::string out_override;
  uint64_t seed_override = 0;
  bool print_config = false;
  app.add_option("--config", config_path, "JSON run configuration file");
  auto* seed_opt = app.add_option("--seed", seed_override, "Override the configured seed");
  app.add_option("--out", out_override, "Override the configured output directory");
  app.add_flag("--print-config", print_config, "Print the effective configuration and exit");

  auto* c_bench = app.add_subcommand("benchmark", "Generate the synthetic placement benchmark");

  std::string benchmark_path;
  int oracle_grid = 0, oracle_orient = 0;
  auto* c_oracle = app.add_subcommand("oracle", "Recompute dense-grid oracle minima");
  c_oracle->add_option("--benchmark", benchmark_path, "Benchmark file to check");
  c_oracle->add_option("--grid", oracle_grid, "Override grid resolution");
  c_oracle->add_option("--orientations", oracle_orient, "Override orientation samples");

  std::string resume_path;
  auto* c_train = app.add_subcommand("train", "Train the score model on a benchmark dataset");
  c_train->add_option("--benchmark", benchmark_path, "Benchmark file with datasets");
  c_train->add_option("--resume", resume_path, "Continue from a saved optimizer state");

  std::string slab_path, ads_path, checkpoint_path;
  int n_samples = 1;
  auto* c_sample = app.add_subcommand("sample", "Run reverse diffusion on a slab + adsorbate");
  c_sample->add_option("--slab", slab_path, "Extended-XYZ slab file")->required();
  c_sample->add_option("--adsorbate", ads_path, "Extended-XYZ adsorbate file")->required();
  c_sample->add_option("--checkpoint", checkpoint_path, "Score-model checkpoint");
  c_sample->add_option("--n", n_samples, "Number of samples");

  std::string relax_in;
  auto* c_relax = app.add_subcommand("relax", "Locally relax a structure");
  c_relax->add_option("--in", relax_in, "Extended-XYZ structure")->required();

  std::vector<int> nsites;
  std::string method_filter = "both", split = "id";
  auto* c_eval = app.add_subcommand("evaluate", "Run the placement protocol on a benchmark");
  c_eval->add_option("--benchmark", benchmark_path, "Benchmark file");
  c_eval->add_option("--checkpoint", checkpoint_path, "Score-model checkpoint");
  c_eval->add_option("--nsites", nsites, "Site budgets to aggregate at");
  c_eval->add_option("--method", method_filter, "both, diffusion, or random");
  c_eval->add_option("--split", split, "id or ood");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  Session session;
  try {
    if (!config_path.empty()) session.config = load_run_config(config_path);
    if (*seed_opt) session.config.seed = seed_override;
    if (!out_override.empty()) session.config.out_dir = out_override;
    session.seed = session.config.seed;
    session.out = session.config.out_dir;
  } catch (const std::exception& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  }

  if (print_config) {
    std::cout << to_json(session.config).dump(2) << "\n";
    return kExitOk;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << "configuration error: a subcommand is required (see --help)\n";
    return kExitConfig;
  }

  if (benchmark_path.empty()) benchmark_path = (session.out / "benchmark.json").string();
  if (checkpoint_path.empty()) checkpoint_path = (session.out / "model.bin").string();

  try {
    std::error_code ec;
    fs::create_directories(session.out, ec);
    if (ec) throw Error("cannot create output directory " + session.out.string());

    if (c_bench->parsed()) return cmd_benchmark(session);
    if (c_oracle->parsed())
      return cmd_oracle(session, benchmark_path, oracle_grid, oracle_orient);
    if (c_train->parsed()) return cmd_train(session, benchmark_path, resume_path);
    if (c_sample->parsed())
      return cmd_sample(session, slab_path, ads_path, checkpoint_path, n_samples);
    if (c_relax->parsed()) return cmd_relax(session, relax_in);
    if (c_eval->parsed())
      return cmd_evaluate(session, benchmark_path, checkpoint_path, nsites, method_filter,
                          split);
    std::cerr << "configuration error: unknown subcommand\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
