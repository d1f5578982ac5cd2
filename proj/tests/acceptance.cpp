// End-to-end acceptance gate. Each criterion prints exactly one line,
// [PASS] or [FAIL], with the measured quantities and its runtime; the
// process exits nonzero when any criterion fails. Later criteria reuse the
// benchmark and the trained models from earlier ones, so the order matters.

#include "helpers.hpp"

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

using namespace slabdiff;
using Clock = std::chrono::steady_clock;

namespace {

std::string fmt(const char* f, ...) {
  char buf[768];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

int failures = 0;

template <typename Body>
void criterion(const char* name, Body&& body) {
  const auto t0 = Clock::now();
  bool ok = false;
  std::string detail;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    ok = false;
    detail = fmt("exception: %s", e.what());
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  std::printf("[%s] %s | %s (%.1fs)\n", ok ? "PASS" : "FAIL", name, detail.c_str(), secs);
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(const Clock::time_point& t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

AdslabSystem nudged_co_adslab() {
  AdslabSystem sys = testutil::tiny_adslab();
  const Eigen::Index n = sys.size();
  sys.positions(n - 2, 0) += 0.37;
  sys.positions(n - 1, 0) += 0.37;
  sys.positions(n - 1, 1) += 0.21;
  return sys;
}

AdslabSystem permuted(const AdslabSystem& sys, const std::vector<Eigen::Index>& perm) {
  AdslabSystem out;
  out.cell = sys.cell;
  out.positions.resize(sys.size(), 3);
  out.species.resize(static_cast<size_t>(sys.size()));
  out.tags.resize(static_cast<size_t>(sys.size()));
  for (Eigen::Index i = 0; i < sys.size(); ++i) {
    const auto p = static_cast<size_t>(perm[static_cast<size_t>(i)]);
    out.positions.row(static_cast<Eigen::Index>(p)) = sys.positions.row(i);
    out.species[p] = sys.species[static_cast<size_t>(i)];
    out.tags[p] = sys.tags[static_cast<size_t>(i)];
  }
  return out;
}

}  // namespace

int main() {
  const NoiseSchedule schedule;  // production defaults

  // Kernel table shared by the sampling/training criteria; covers the full
  // rotation schedule range.
  IgSo3BuildParams pipe_bp;
  pipe_bp.sigma_min = 0.005;
  pipe_bp.sigma_max = 2.0;
  pipe_bp.n_sigma = 256;
  pipe_bp.n_omega = 2048;
  const IgSo3Table pipe_table = IgSo3Table::build(pipe_bp);

  // ---------------------------------------------------------------- AC-1
  criterion("AC-1 kernel angle sampling matches the integrated law", [&](std::string& d) {
    const auto t0 = Clock::now();
    IgSo3BuildParams bp;
    bp.sigma_min = 0.05;
    bp.sigma_max = 1.6;
    bp.n_sigma = 2048;
    bp.n_omega = 4096;
    const IgSo3Table table = IgSo3Table::build(bp);

    const double sigmas[] = {0.1, 0.5, 1.0, 1.5};
    double worst = 0.0;
    d = "ks";
    for (int i = 0; i < 4; ++i) {
      const auto cdf = testutil::angle_cdf_grid(sigmas[i]);
      Rng rng = Rng::stream(2024, "acceptance-ks", static_cast<uint64_t>(i));
      std::vector<double> samples(100000);
      for (auto& v : samples) v = table.sample_angle(sigmas[i], rng.uniform());
      const double ks = testutil::ks_statistic(samples, cdf);
      worst = std::max(worst, ks);
      d += fmt("(%.1f)=%.4f ", sigmas[i], ks);
    }
    const double secs = seconds_since(t0);
    d += fmt("worst=%.4f limit 0.01", worst);
    return worst < 0.01 && secs < 120.0;
  });

  // ---------------------------------------------------------------- AC-2
  criterion("AC-2 angle score matches d/dw log f; translation target analytic",
            [&](std::string& d) {
    const auto t0 = Clock::now();
    // The series in double precision carries ~1e-16 absolute truncation
    // noise, so log f is only finite-differentiable while f stays above that
    // floor: for sigma = 0.1 that limits the sweep to w <= 6 sigma.
    struct Range { double sigma, omega_max; };
    const Range ranges[] = {{0.5, 3.0}, {1.0, 3.0}, {1.5, 3.0}, {0.1, 0.6}};
    const double h = 1e-4;
    double worst = 0.0;
    for (const auto& r : ranges) {
      for (double w = 0.1; w <= r.omega_max + 1e-9; w += 0.005) {
        const double an = angle_score(w, r.sigma);
        const double fd = (std::log(series_f(w + h, r.sigma, 2000)) -
                           std::log(series_f(w - h, r.sigma, 2000))) /
                          (2.0 * h);
        worst = std::max(worst, std::abs(an - fd) / std::max(std::abs(fd), 1e-12));
      }
    }

    // the training target for translation is the exact Gaussian score
    TrainingSample sample;
    sample.system = testutil::tiny_adslab();
    sample.relative_energy = -0.2;
    double tr_dev = 0.0;
    for (const double t : {0.15, 0.5, 0.85}) {
      Rng rng = Rng::stream(5, "acceptance-tr", static_cast<uint64_t>(t * 100));
      const PerturbResult pr = forward_perturb(sample, t, schedule, pipe_table, rng);
      const Vec2 expected = -pr.tr_delta / (pr.target.tr_sigma * pr.target.tr_sigma);
      tr_dev = std::max(tr_dev, (expected - pr.target.tr_score).cwiseAbs().maxCoeff());
    }
    const double secs = seconds_since(t0);
    d = fmt("score rel err=%.2e limit 1e-4; tr target dev=%.1e", worst, tr_dev);
    return worst < 1e-4 && tr_dev == 0.0 && secs < 60.0;
  });

  // ---------------------------------------------------------------- AC-3
  criterion("AC-3 net parameter gradients and calculator forces match FD",
            [&](std::string& d) {
    const auto t0 = Clock::now();
    ReferenceNetHyper hyper;
    hyper.cutoff = 4.0;
    hyper.n_rbf = 8;
    hyper.hidden_dim = 16;
    hyper.n_message_rounds = 2;
    hyper.n_freq = 2;
    ReferenceNet net(hyper, 23);

    ScoreModelInput in;
    in.system = nudged_co_adslab();
    in.tr_sigma = 1.3;
    in.rot_sigma = 0.4;
    in.condition = -0.25;

    const Vec2 c_tr(0.7, -0.4);
    const Vec3 c_rot(0.3, 0.9, -0.5);
    ReferenceNet::ForwardCache cache;
    net.forward_cached(in, cache);
    ReferenceNet::Weights grad = net.zero_like();
    net.backward(cache, c_tr, c_rot, grad, in.system);
    const Eigen::VectorXd g_an = ReferenceNet::flatten(grad);
    const Eigen::VectorXd theta0 = ReferenceNet::flatten(net.weights());

    const double h = 1e-5;
    const double gmax = g_an.cwiseAbs().maxCoeff();
    double worst_net = 0.0;
    Eigen::VectorXd th = theta0;
    for (Eigen::Index k = 0; k < theta0.size(); ++k) {
      th[k] = theta0[k] + h;
      ReferenceNet::unflatten(th, net.weights());
      const auto op = net.forward(in);
      th[k] = theta0[k] - h;
      ReferenceNet::unflatten(th, net.weights());
      const auto om = net.forward(in);
      th[k] = theta0[k];
      const double fd = (c_tr.dot(op.tr_vec) + c_rot.dot(op.rot_vec) - c_tr.dot(om.tr_vec) -
                         c_rot.dot(om.rot_vec)) /
                        (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(g_an[k]), 1e-6 * gmax});
      worst_net = std::max(worst_net, std::abs(fd - g_an[k]) / denom);
    }
    ReferenceNet::unflatten(theta0, net.weights());

    const LennardJonesPeriodic lj(lj_generic_preset());
    const AdslabSystem sys = testutil::tiny_adslab();
    const double lj_err = testutil::max_force_rel_error(lj, sys, 1e-5, 1e-2);

    SitePesParams pes;
    pes.modes = {{Eigen::Vector2i(0, 0), 1.0, 0.0},
                 {Eigen::Vector2i(1, 0), 0.4, 0.0},
                 {Eigen::Vector2i(0, 1), 0.3, 0.7}};
    pes.well_depth = 1.2;
    pes.morse_a = 1.1;
    pes.z_ref = sys.positions.col(2).maxCoeff();
    pes.z_eq = 2.0;
    pes.aniso = 0.3;
    pes.axis_atom_a = 0;
    pes.axis_atom_b = 1;
    pes.preferred_dir = Vec3(1.0, 0.0, 0.0);
    pes.aniso_z_width = 1.5;
    const SyntheticSitePES site(pes);
    const double pes_err = testutil::max_force_rel_error(site, sys, 1e-5, 1e-2);

    const double secs = seconds_since(t0);
    d = fmt("net=%.2e (%lld params, limit 1e-4); lj=%.2e pes=%.2e (limit 1e-6)", worst_net,
            static_cast<long long>(theta0.size()), lj_err, pes_err);
    return worst_net < 1e-4 && lj_err < 1e-6 && pes_err < 1e-6 && secs < 300.0;
  });

  // ---------------------------------------------------------------- AC-4
  criterion("AC-4 trained sampler recovers the single-well minimum", [&](std::string& d) {
    const auto t0 = Clock::now();
    BenchmarkGenConfig gen;
    gen.n_systems = 1;
    gen.k_placements = 8;
    gen.n_wells = 1;
    gen.min_local_minima = 1;
    gen.max_retries = 5;
    gen.slab.nx = 4;
    gen.slab.ny = 4;
    gen.oracle.grid = 8;
    gen.oracle.orientations = 1;
    gen.seed = 91;
    const BenchmarkSystem sys = generate_system(gen, "well-0", 0, false, nullptr, nullptr,
                                                nullptr);

    ReferenceNetHyper hyper;
    hyper.cutoff = 5.0;
    hyper.n_rbf = 12;
    hyper.hidden_dim = 32;
    hyper.n_message_rounds = 2;
    hyper.n_freq = 3;
    ReferenceNet net(hyper, 1001);

    TrainConfig tc;
    tc.mode = ConditionMode::Unconditional;
    tc.n_steps = 8000;
    tc.batch_size = 8;
    tc.lr_peak = 1e-3;
    tc.warmup_steps = 100;
    tc.val_fraction = 0.0;
    tc.eval_every = 250;
    tc.seed = 2002;
    const TrainResult tr = train(net, {sys.dataset}, schedule, pipe_table, tc);

    SamplerConfig sc;  // ODE, 100 steps
    int hits = 0;
    double worst_d = 0.0;
    for (int s = 0; s < 50; ++s) {
      Rng rng = Rng::stream(3003, "well-sample", static_cast<uint64_t>(s));
      const SampleResult res =
          sample_pose(sys.slab, sys.adsorbate, net, schedule, pipe_table, sc, rng);
      const Vec3 com = center_of_mass(res.system, TagMask::Adsorbate);
      const double dist = detail::wrapped_inplane_distance(
          Vec2(com.x(), com.y()), sys.oracle_pose.translation, sys.slab.cell);
      hits += dist <= 0.5 ? 1 : 0;
      worst_d = std::max(worst_d, dist);
    }
    const double secs = seconds_since(t0);
    d = fmt("%d/50 within 0.5 A (need 40); final loss %.3f; worst dist %.2f A", hits,
            tr.final_loss, worst_d);
    return hits >= 40 && !tr.aborted && secs < 1800.0;
  });

  // Benchmark + two trained models shared by AC-5..AC-8.
  BenchmarkSet bench;
  std::optional<ReferenceNet> cond_net, uncond_net;
  ProtocolResult diff10, rand10, uncond1;

  criterion("AC-5 diffusion beats random at one site; random grows with sites",
            [&](std::string& d) {
    const auto t0 = Clock::now();
    BenchmarkGenConfig gen;
    gen.n_systems = 20;
    gen.n_ood = 0;
    gen.k_placements = 20;
    gen.n_wells = 6;
    gen.min_local_minima = 5;
    gen.max_retries = 8;
    gen.slab.nx = 5;
    gen.slab.ny = 5;
    gen.oracle.grid = 10;
    gen.oracle.orientations = 1;
    gen.seed = 7001;
    bench = generate_benchmark(gen);

    std::vector<SystemDataset> pool;
    for (const auto& s : bench.id_split) pool.push_back(s.dataset);

    ReferenceNetHyper hyper;
    hyper.cutoff = 5.0;
    hyper.n_rbf = 16;
    hyper.hidden_dim = 48;
    hyper.n_message_rounds = 2;
    hyper.n_freq = 3;
    cond_net.emplace(hyper, 11);
    uncond_net.emplace(hyper, 22);

    TrainConfig tc;
    tc.mode = ConditionMode::Conditional;
    tc.n_steps = 12000;
    tc.batch_size = 8;
    tc.lr_peak = 1e-3;
    tc.warmup_steps = 150;
    tc.val_fraction = 0.1;
    tc.eval_every = 250;
    tc.seed = 33;
    const TrainResult tc_res = train(*cond_net, pool, schedule, pipe_table, tc);

    TrainConfig tu = tc;
    tu.mode = ConditionMode::Unconditional;
    tu.seed = 44;
    const TrainResult tu_res = train(*uncond_net, pool, schedule, pipe_table, tu);
    if (tc_res.aborted || tu_res.aborted) {
      d = "training aborted on a non-finite loss";
      return false;
    }

    ProtocolConfig pc;
    pc.model = &*cond_net;
    pc.schedule = schedule;
    pc.table = &pipe_table;
    pc.sampler.condition = 0.0;  // ask for the lowest-energy placement
    pc.seed = 55;
    diff10 = run_protocol(bench.id_split, PlacementMethod::Diffusion, 10, pc);
    rand10 = run_protocol(bench.id_split, PlacementMethod::RandomBaseline, 10, pc);

    ProtocolConfig pu = pc;
    pu.model = &*uncond_net;
    pu.sampler.condition.reset();
    uncond1 = run_protocol(bench.id_split, PlacementMethod::Diffusion, 1, pu);

    const double diff1 =
        aggregate_records(diff10.records, PlacementMethod::Diffusion, 1).success_rate_dft;
    const double rand1 =
        aggregate_records(rand10.records, PlacementMethod::RandomBaseline, 1).success_rate_dft;
    bool monotone = true;
    double prev = -1.0;
    std::string curve;
    for (const int n : {1, 2, 3, 5, 10}) {
      const double v =
          aggregate_records(rand10.records, PlacementMethod::RandomBaseline, n).success_rate_dft;
      monotone = monotone && v >= prev;
      prev = v;
      curve += fmt("%.2f ", v);
    }
    const double secs = seconds_since(t0);
    d = fmt("diffusion@1=%.2f random@1=%.2f; random curve %s", diff1, rand1, curve.c_str());
    return diff1 > rand1 && monotone && secs < 3600.0;
  });

  // ---------------------------------------------------------------- AC-6
  criterion("AC-6 conditional training is not beaten by unconditional", [&](std::string& d) {
    if (!cond_net || !uncond_net) {
      d = "prerequisite benchmark run missing";
      return false;
    }
    const ProtocolSummary c1 = aggregate_records(diff10.records, PlacementMethod::Diffusion, 1);
    const ProtocolSummary u1 = uncond1.summary;
    const int cond_n = static_cast<int>(std::lround(c1.success_rate_dft * c1.n_systems));
    const int unc_n = static_cast<int>(std::lround(u1.success_rate_dft * u1.n_systems));
    d = fmt("conditional %d/%d vs unconditional %d/%d systems", cond_n, c1.n_systems, unc_n,
            u1.n_systems);
    return cond_n >= unc_n - 1;  // equality band of one system
  });

  // ---------------------------------------------------------------- AC-7
  criterion("AC-7 diffusion proposals are less spread than random ones", [&](std::string& d) {
    if (diff10.records.empty() || rand10.records.empty()) {
      d = "prerequisite benchmark run missing";
      return false;
    }
    const double div_d =
        mean_proposed_diversity(diff10.records, PlacementMethod::Diffusion, bench.id_split);
    const double div_r =
        mean_proposed_diversity(rand10.records, PlacementMethod::RandomBaseline, bench.id_split);
    d = fmt("diffusion %.2f A < random %.2f A", div_d, div_r);
    return div_d < div_r;
  });

  // ---------------------------------------------------------------- AC-8
  criterion("AC-8 relaxer hits the dimer bond length and converges broadly",
            [&](std::string& d) {
    AdslabSystem dimer;
    dimer.cell = LatticeCell(40.0 * Mat3::Identity(), {false, false, false});
    dimer.positions = Positions::Zero(2, 3);
    dimer.positions.row(0) = Vec3(10.0, 10.0, 10.0).transpose();
    dimer.positions.row(1) = Vec3(13.2, 10.0, 10.0).transpose();
    dimer.species = {29, 29};
    dimer.tags = {AtomTag::FreeSlab, AtomTag::Adsorbate};

    const LennardJonesPeriodic lj(lj_generic_preset());
    RelaxConfig rc;
    rc.fmax = 1e-3;
    const RelaxResult rr = relax(dimer, lj, rc);
    const double bond = (rr.system.positions.row(1) - rr.system.positions.row(0)).norm();
    const double target = std::pow(2.0, 1.0 / 6.0) * 2.34;
    const bool dimer_ok = rr.converged && std::abs(bond - target) < 1e-3;

    long total = bench.relaxations_total;
    long conv = bench.relaxations_converged;
    for (const auto* res : {&diff10, &rand10, &uncond1}) {
      for (const auto& rec : res->records) {
        ++total;
        conv += rec.relax_converged ? 1 : 0;
      }
    }
    const double rate = total > 0 ? static_cast<double>(conv) / static_cast<double>(total) : 0.0;
    d = fmt("dimer |r-2^(1/6)s|=%.1e A; %ld/%ld relaxations converged (%.1f%%)",
            std::abs(bond - target), conv, total, 100.0 * rate);
    return dimer_ok && total > 0 && rate >= 0.95;
  });

  // ---------------------------------------------------------------- AC-9
  criterion("AC-9 symmetry invariances and ODE determinism hold", [&](std::string& d) {
    ReferenceNetHyper hyper;
    hyper.cutoff = 4.0;
    hyper.n_rbf = 8;
    hyper.hidden_dim = 16;
    hyper.n_message_rounds = 2;
    hyper.n_freq = 2;
    const ReferenceNet net(hyper, 7);

    ScoreModelInput in;
    in.system = nudged_co_adslab();
    in.tr_sigma = 1.3;
    in.rot_sigma = 0.4;
    in.condition = -0.25;
    const auto ref = net.forward(in);

    // lattice translation of the adsorbate alone
    ScoreModelInput shifted = in;
    for (const auto i : in.system.indices(TagMask::Adsorbate))
      shifted.system.positions.row(i) +=
          in.system.cell.basis().row(0) + 2.0 * in.system.cell.basis().row(1);
    const auto a = net.forward(shifted);
    const double lat_dev =
        std::max((a.tr_vec - ref.tr_vec).norm(), (a.rot_vec - ref.rot_vec).norm());

    // global z-rotation
    const double phi = 0.83;
    Mat3 rz;
    rz << std::cos(phi), -std::sin(phi), 0.0,
          std::sin(phi),  std::cos(phi), 0.0,
          0.0,            0.0,           1.0;
    ScoreModelInput rotated = in;
    rotated.system.cell = LatticeCell(in.system.cell.basis() * rz.transpose(),
                                      in.system.cell.pbc());
    rotated.system.positions = in.system.positions * rz.transpose();
    const auto b = net.forward(rotated);
    const Vec2 want_tr(std::cos(phi) * ref.tr_vec.x() - std::sin(phi) * ref.tr_vec.y(),
                       std::sin(phi) * ref.tr_vec.x() + std::cos(phi) * ref.tr_vec.y());
    const double rot_dev =
        std::max((b.tr_vec - want_tr).norm(), (b.rot_vec - rz * ref.rot_vec).norm());

    // atom relabeling
    Rng prng = Rng::stream(3, "acceptance-perm");
    std::vector<Eigen::Index> perm(static_cast<size_t>(in.system.size()));
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<Eigen::Index>(i);
    for (size_t k = perm.size(); k > 1; --k)
      std::swap(perm[k - 1], perm[static_cast<size_t>(prng.uniform() * static_cast<double>(k))]);
    ScoreModelInput shuffled = in;
    shuffled.system = permuted(in.system, perm);
    const auto c = net.forward(shuffled);
    const double perm_dev =
        std::max((c.tr_vec - ref.tr_vec).norm(), (c.rot_vec - ref.rot_vec).norm());

    // bit-identical ODE sampling under a replayed stream
    SlabSpec spec;
    spec.nx = 4;
    spec.ny = 4;
    const AdslabSystem slab = make_slab(spec);
    SamplerConfig sc;
    Rng r1 = Rng::stream(99, "acceptance-det");
    Rng r2 = Rng::stream(99, "acceptance-det");
    const SampleResult s1 =
        sample_pose(slab, testutil::co_template(), net, schedule, pipe_table, sc, r1);
    const SampleResult s2 =
        sample_pose(slab, testutil::co_template(), net, schedule, pipe_table, sc, r2);
    const double det_dev = (s1.system.positions - s2.system.positions).cwiseAbs().maxCoeff();

    d = fmt("lattice=%.1e (1e-8) rot=%.1e (1e-6) perm=%.1e (1e-10) ode dev=%.1f", lat_dev,
            rot_dev, perm_dev, det_dev);
    return lat_dev < 1e-8 && rot_dev < 1e-6 && perm_dev < 1e-10 && det_dev == 0.0 &&
           s1.n_steps_used == s2.n_steps_used;
  });

  // ---------------------------------------------------------------- AC-10
  criterion("AC-10 success metrics implement their stated semantics", [&](std::string& d) {
    AnomalyReport clean;
    AnomalyReport dirty;
    dirty.desorption = true;

    bool ok = true;
    const double ref = -1.05;
    ok = ok && success_dft_style(ref - 0.2, ref, clean);           // below
    ok = ok && success_dft_style(ref + 0.1 - 1e-9, ref, clean);    // within the band
    ok = ok && !success_dft_style(ref + 0.1 + 1e-9, ref, clean);   // past the band
    ok = ok && !success_dft_style(ref - 0.2, ref, dirty);          // anomaly vetoes
    ok = ok && !success_dft_style(ref + 0.05, ref, dirty);
    ok = ok && !success_dft_style(ref + 0.2, ref, dirty);

    SlabSpec spec;
    spec.nx = 4;
    spec.ny = 4;
    spec.lattice_constant = 2.5;  // 10 x 10 cell
    const LatticeCell cell = make_slab(spec).cell;
    const Vec2 oracle(2.0, 3.0);
    ok = ok && success_distance(Vec2(2.999, 3.0), oracle, cell);    // 0.999 A
    ok = ok && !success_distance(Vec2(3.001, 3.0), oracle, cell);   // 1.001 A
    ok = ok && success_distance(Vec2(2.999 + 10.0, 3.0), oracle, cell);  // shifted image
    ok = ok && !success_distance(Vec2(2.0, 3.0 + 5.0), oracle, cell);    // half a cell away

    d = ok ? "dft-style and distance truth tables exact" : "truth table mismatch";
    return ok;
  });

  std::printf("%s: %d of 10 criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED",
              failures);
  return failures == 0 ? 0 : 1;
}
