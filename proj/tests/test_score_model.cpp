#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <numeric>

using namespace slabdiff;
using namespace testutil;

namespace {

ReferenceNetHyper small_hyper() {
  ReferenceNetHyper h;
  h.cutoff = 4.0;
  h.n_rbf = 8;
  h.hidden_dim = 16;
  h.n_message_rounds = 2;
  h.n_freq = 2;
  return h;
}

ScoreModelInput co_input(double tr_sigma = 1.3, double rot_sigma = 0.4) {
  ScoreModelInput in;
  in.system = tiny_adslab();
  // nudge the adsorbate off the symmetric site so outputs are generic
  const Eigen::Index n = in.system.size();
  in.system.positions(n - 2, 0) += 0.37;
  in.system.positions(n - 1, 0) += 0.37;
  in.system.positions(n - 1, 1) += 0.21;
  in.tr_sigma = tr_sigma;
  in.rot_sigma = rot_sigma;
  in.condition = -0.25;
  return in;
}

AdslabSystem permuted(const AdslabSystem& sys, const std::vector<Eigen::Index>& perm) {
  AdslabSystem out;
  out.cell = sys.cell;
  out.positions.resize(sys.size(), 3);
  out.species.resize(static_cast<size_t>(sys.size()));
  out.tags.resize(static_cast<size_t>(sys.size()));
  for (Eigen::Index i = 0; i < sys.size(); ++i) {
    out.positions.row(perm[static_cast<size_t>(i)]) = sys.positions.row(i);
    out.species[static_cast<size_t>(perm[static_cast<size_t>(i)])] =
        sys.species[static_cast<size_t>(i)];
    out.tags[static_cast<size_t>(perm[static_cast<size_t>(i)])] =
        sys.tags[static_cast<size_t>(i)];
  }
  return out;
}

}  // namespace

TEST_CASE("forward passes are bit-deterministic") {
  const ReferenceNet net(small_hyper(), 17);
  const ScoreModelInput in = co_input();
  const auto a = net.forward(in);
  const auto b = net.forward(in);
  CHECK(a.tr_vec == b.tr_vec);
  CHECK(a.rot_vec == b.rot_vec);

  ReferenceNet::ForwardCache cache;
  const auto c = net.forward_cached(in, cache);
  CHECK(a.tr_vec == c.tr_vec);
  CHECK(a.rot_vec == c.rot_vec);

  // a different seed gives different weights and different outputs
  const ReferenceNet other(small_hyper(), 18);
  const auto d = other.forward(in);
  CHECK((a.tr_vec - d.tr_vec).norm() > 1e-8);
}

TEST_CASE("outputs are invariant under atom permutation") {
  const ReferenceNet net(small_hyper(), 17);
  const ScoreModelInput in = co_input();
  const auto ref = net.forward(in);

  Rng rng = Rng::stream(3, "perm");
  std::vector<Eigen::Index> perm(static_cast<size_t>(in.system.size()));
  std::iota(perm.begin(), perm.end(), 0);
  for (size_t k = perm.size(); k > 1; --k)
    std::swap(perm[k - 1], perm[static_cast<size_t>(rng.uniform() * static_cast<double>(k))]);

  ScoreModelInput shuffled = in;
  shuffled.system = permuted(in.system, perm);
  const auto out = net.forward(shuffled);
  CHECK((out.tr_vec - ref.tr_vec).norm() < 1e-10);
  CHECK((out.rot_vec - ref.rot_vec).norm() < 1e-10);
}

TEST_CASE("outputs rotate with a global z-rotation") {
  const ReferenceNet net(small_hyper(), 17);
  const ScoreModelInput in = co_input();
  const auto ref = net.forward(in);

  const double phi = 0.83;
  Mat3 rz;
  rz << std::cos(phi), -std::sin(phi), 0.0,
        std::sin(phi),  std::cos(phi), 0.0,
        0.0,            0.0,           1.0;

  ScoreModelInput rotated = in;
  rotated.system.cell = LatticeCell(in.system.cell.basis() * rz.transpose(),
                                    in.system.cell.pbc());
  rotated.system.positions = in.system.positions * rz.transpose();
  const auto out = net.forward(rotated);

  const Vec2 expected_tr(std::cos(phi) * ref.tr_vec.x() - std::sin(phi) * ref.tr_vec.y(),
                         std::sin(phi) * ref.tr_vec.x() + std::cos(phi) * ref.tr_vec.y());
  const Vec3 expected_rot = rz * ref.rot_vec;
  CHECK((out.tr_vec - expected_tr).norm() < 1e-6);
  CHECK((out.rot_vec - expected_rot).norm() < 1e-6);
}

TEST_CASE("outputs are invariant under lattice translations") {
  const ReferenceNet net(small_hyper(), 17);
  const ScoreModelInput in = co_input();
  const auto ref = net.forward(in);

  // shift only the adsorbate by a lattice vector
  ScoreModelInput ads_shift = in;
  for (const auto i : in.system.indices(TagMask::Adsorbate))
    ads_shift.system.positions.row(i) +=
        in.system.cell.basis().row(0) + 2.0 * in.system.cell.basis().row(1);
  const auto a = net.forward(ads_shift);
  CHECK((a.tr_vec - ref.tr_vec).norm() < 1e-8);
  CHECK((a.rot_vec - ref.rot_vec).norm() < 1e-8);

  // shift the whole structure by a lattice vector
  ScoreModelInput all_shift = in;
  all_shift.system.positions.rowwise() -= in.system.cell.basis().row(1);
  const auto b = net.forward(all_shift);
  CHECK((b.tr_vec - ref.tr_vec).norm() < 1e-8);
  CHECK((b.rot_vec - ref.rot_vec).norm() < 1e-8);
}

TEST_CASE("hand-written gradients match central finite differences") {
  ReferenceNet net(small_hyper(), 23);
  const ScoreModelInput in = co_input();

  // fixed linear read-out makes the upstream gradient a constant
  const Vec2 c_tr(0.7, -0.4);
  const Vec3 c_rot(0.3, 0.9, -0.5);

  ReferenceNet::ForwardCache cache;
  net.forward_cached(in, cache);
  ReferenceNet::Weights grad = net.zero_like();
  net.backward(cache, c_tr, c_rot, grad, in.system);
  const Eigen::VectorXd g_an = ReferenceNet::flatten(grad);

  const Eigen::VectorXd theta0 = ReferenceNet::flatten(net.weights());
  auto loss_at = [&](const Eigen::VectorXd& th) {
    ReferenceNet::unflatten(th, net.weights());
    const auto out = net.forward(in);
    return c_tr.dot(out.tr_vec) + c_rot.dot(out.rot_vec);
  };

  const double h = 1e-5;
  const double gmax = g_an.cwiseAbs().maxCoeff();
  REQUIRE(gmax > 1e-6);
  double worst = 0.0;
  Eigen::VectorXd th = theta0;
  for (Eigen::Index k = 0; k < theta0.size(); ++k) {
    th[k] = theta0[k] + h;
    const double lp = loss_at(th);
    th[k] = theta0[k] - h;
    const double lm = loss_at(th);
    th[k] = theta0[k];
    const double fd = (lp - lm) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(g_an[k]), 1e-6 * gmax});
    worst = std::max(worst, std::abs(fd - g_an[k]) / denom);
  }
  ReferenceNet::unflatten(theta0, net.weights());
  INFO("params = " << theta0.size() << ", worst rel err = " << worst);
  CHECK(worst < 1e-4);

  // backward accumulates into a running sum
  ReferenceNet::Weights grad2 = net.zero_like();
  net.backward(cache, c_tr, c_rot, grad2, in.system);
  net.backward(cache, c_tr, c_rot, grad2, in.system);
  CHECK((ReferenceNet::flatten(grad2) - 2.0 * g_an).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("parameter flattening round trips") {
  ReferenceNet net(small_hyper(), 5);
  const Eigen::VectorXd flat = ReferenceNet::flatten(net.weights());
  CHECK(flat.size() == net.n_params());

  ReferenceNet other(small_hyper(), 6);
  REQUIRE((ReferenceNet::flatten(other.weights()) - flat).cwiseAbs().maxCoeff() > 0.0);
  ReferenceNet::unflatten(flat, other.weights());
  CHECK((ReferenceNet::flatten(other.weights()) - flat).cwiseAbs().maxCoeff() == 0.0);

  Eigen::VectorXd wrong(flat.size() + 1);
  wrong.setZero();
  CHECK_THROWS_AS(ReferenceNet::unflatten(wrong, other.weights()), ContractViolation);
}

TEST_CASE("checkpoints restore weights bit-exactly") {
  const ReferenceNet net(small_hyper(), 99);
  ReferenceNet::CheckpointMeta meta;
  meta.schedule.tr_sigma_min = 0.2;
  meta.schedule.tr_sigma_max = 7.0;
  meta.schedule.rot_sigma_min = 0.02;
  meta.schedule.rot_sigma_max = 1.4;
  meta.seed = 424242;

  const std::string path =
      (std::filesystem::temp_directory_path() / "refnet_test.ckpt").string();
  net.save_checkpoint(path, meta);
  auto [loaded, loaded_meta] = ReferenceNet::load_checkpoint(path);

  CHECK(loaded.hyper() == net.hyper());
  CHECK(loaded_meta.seed == 424242);
  CHECK(loaded_meta.schedule.tr_sigma_max == 7.0);
  CHECK(loaded_meta.schedule.rot_sigma_min == 0.02);
  CHECK((ReferenceNet::flatten(loaded.weights()) - ReferenceNet::flatten(net.weights()))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  const ScoreModelInput in = co_input();
  const auto a = net.forward(in);
  const auto b = loaded.forward(in);
  CHECK(a.tr_vec == b.tr_vec);
  CHECK(a.rot_vec == b.rot_vec);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(ReferenceNet::load_checkpoint("/nonexistent/no.ckpt"), Error);
}

TEST_CASE("conditioning feeds the node features") {
  const ReferenceNet net(small_hyper(), 41);
  ScoreModelInput in = co_input();

  // absent condition and an explicit zero are the same network input
  in.condition = std::nullopt;
  const auto none = net.forward(in);
  in.condition = 0.0;
  const auto zero = net.forward(in);
  CHECK(none.tr_vec == zero.tr_vec);
  CHECK(none.rot_vec == zero.rot_vec);

  in.condition = -0.5;
  const auto cond = net.forward(in);
  CHECK((cond.tr_vec - none.tr_vec).norm() > 1e-10);

  // sigma channels feed it too
  ScoreModelInput hot = co_input(5.0, 1.2);
  hot.condition = std::nullopt;
  ScoreModelInput cold = co_input(0.2, 0.05);
  cold.condition = std::nullopt;
  const auto a = net.forward(hot);
  const auto b = net.forward(cold);
  CHECK((a.tr_vec - b.tr_vec).norm() > 1e-10);
}

TEST_CASE("species outside the table share the fallback slot") {
  const ReferenceNet net(small_hyper(), 3);
  CHECK(net.species_slot(6) == 6);
  CHECK(net.species_slot(118) == 118);
  CHECK(net.species_slot(200) == 0);
  CHECK(net.species_slot(-4) == 0);
}

TEST_CASE("input validation rejects bad sigmas") {
  const ReferenceNet net(small_hyper(), 3);
  ScoreModelInput in = co_input();
  in.tr_sigma = 0.0;
  CHECK_THROWS_AS(net.forward(in), InvalidSigma);
  in = co_input();
  in.rot_sigma = -1.0;
  CHECK_THROWS_AS(net.forward(in), InvalidSigma);

  ReferenceNetHyper bad = small_hyper();
  bad.n_rbf = 1;
  CHECK_THROWS_AS(ReferenceNet(bad, 1), ContractViolation);
}
