#pragma once

#include "slabdiff/neighbor.hpp"
#include "slabdiff/schedule.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace slabdiff {

struct ScoreModelInput {
  AdslabSystem system;  // perturbed pose
  double tr_sigma = 1.0;
  double rot_sigma = 1.0;
  std::optional<double> condition;  // E_rel in eV; absent in unconditional mode

  void validate() const {
    system.validate();
    if (!(tr_sigma > 0.0) || !(rot_sigma > 0.0))
      throw InvalidSigma("score model input: sigmas must be positive");
  }
};

using ScoreModelOutput = ScorePrediction;

/// Interface every score model implements. forward must be deterministic and
/// pure for fixed parameters.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual ScoreModelOutput forward(const ScoreModelInput& input) const = 0;
};

struct ReferenceNetHyper {
  double cutoff = 6.0;  // Angstrom
  int n_rbf = 32;
  int hidden_dim = 64;
  int n_message_rounds = 3;
  int n_freq = 4;  // sinusoidal frequencies per sigma channel

  int cond_dim() const { return 4 * n_freq + 1; }

  void validate() const {
    if (!(cutoff > 0.0)) throw ContractViolation("net: cutoff must be positive");
    if (n_rbf < 2 || hidden_dim < 1 || n_message_rounds < 1 || n_freq < 1)
      throw ContractViolation("net: bad architecture sizes");
  }

  bool operator==(const ReferenceNetHyper&) const = default;
};

namespace detail {

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

}  // namespace detail

/// Invariant-feature message-passing score network. Node features start from
/// species + tag embeddings plus a conditioning projection (sinusoidal
/// embeddings of log sigma for both channels and the E_rel scalar). Each
/// round passes SiLU messages weighted by Gaussian radial basis features of
/// the edge length and applies a residual update. Heads emit per-adsorbate
/// vectors as direction sums over edges, averaged over adsorbate atoms; the
/// translation head is projected in-plane. Outputs are divided by the channel
/// sigma so the network regresses an O(1) quantity across noise levels.
///
/// All orderings (edges, atoms) are deterministic, so forward passes are
/// bit-reproducible. Gradients are hand-written reverse mode.
class ReferenceNet final : public ScoreModel {
 public:
  struct RoundWeights {
    Eigen::MatrixXd w_src, w_dst;  // H x H
    Eigen::MatrixXd w_edge;        // H x R
    Eigen::VectorXd b_msg;         // H
    Eigen::MatrixXd w_self, w_agg; // H x H
    Eigen::VectorXd b_upd;         // H
  };
  struct HeadWeights {
    Eigen::MatrixXd w_a, w_b;  // H x H
    Eigen::MatrixXd w_e;       // H x R
    Eigen::VectorXd b;         // H
    Eigen::VectorXd u;         // H (scalar read-out)
  };
  struct Weights {
    Eigen::MatrixXd emb_species;  // (kMaxAtomicNumber+1) x H, row 0 = unknown fallback
    Eigen::MatrixXd emb_tag;      // 3 x H
    Eigen::MatrixXd w_cond;       // H x C
    std::vector<RoundWeights> rounds;
    HeadWeights head_tr, head_rot;
  };

  ReferenceNet(const ReferenceNetHyper& hyper, uint64_t seed) : hyper_(hyper) {
    hyper_.validate();
    init_weights(seed);
  }

  const ReferenceNetHyper& hyper() const { return hyper_; }
  Weights& weights() { return w_; }
  const Weights& weights() const { return w_; }

  // -- forward ---------------------------------------------------------------

  struct ForwardCache {
    std::vector<NeighborEdge> edges;
    Eigen::MatrixXd rbf;  // E x R
    Eigen::VectorXd cond_raw;
    std::vector<Eigen::Index> ads;
    std::vector<int> head_edges;  // edge ids with source atom in the adsorbate
    Eigen::MatrixXd h0;
    std::vector<Eigen::MatrixXd> h_in, pre, agg, upre;  // per round
    Eigen::MatrixXd h_final;
    struct HeadCache {
      Eigen::MatrixXd hpre, hact;  // |head_edges| x H
      Eigen::VectorXd w;           // |head_edges|
      Vec3 raw = Vec3::Zero();     // mean direction-sum vector
    } tr, rot;
    double tr_sigma = 1.0, rot_sigma = 1.0;
  };

  ScoreModelOutput forward(const ScoreModelInput& input) const override {
    ForwardCache cache;
    return forward_cached(input, cache);
  }

  ScoreModelOutput forward_cached(const ScoreModelInput& input, ForwardCache& c) const {
    input.validate();
    const auto& sys = input.system;
    const int n = static_cast<int>(sys.size());
    const int H = hyper_.hidden_dim;

    c.edges = neighbor_list(sys, hyper_.cutoff);
    const int E = static_cast<int>(c.edges.size());
    c.rbf.resize(E, hyper_.n_rbf);
    for (int e = 0; e < E; ++e) c.rbf.row(e) = rbf_features(c.edges[static_cast<size_t>(e)].dist);
    c.cond_raw = condition_features(input.tr_sigma, input.rot_sigma, input.condition);
    c.ads = sys.indices(TagMask::Adsorbate);
    c.head_edges.clear();
    {
      std::vector<char> is_ads(static_cast<size_t>(n), 0);
      for (const auto a : c.ads) is_ads[static_cast<size_t>(a)] = 1;
      for (int e = 0; e < E; ++e)
        if (is_ads[static_cast<size_t>(c.edges[static_cast<size_t>(e)].i)])
          c.head_edges.push_back(e);
    }
    c.tr_sigma = input.tr_sigma;
    c.rot_sigma = input.rot_sigma;

    // Initial node features.
    const Eigen::VectorXd cond_vec = w_.w_cond * c.cond_raw;
    c.h0.resize(n, H);
    for (int i = 0; i < n; ++i) {
      const int slot = species_slot(sys.species[static_cast<size_t>(i)]);
      c.h0.row(i) = w_.emb_species.row(slot) +
                    w_.emb_tag.row(static_cast<int>(sys.tags[static_cast<size_t>(i)])) +
                    cond_vec.transpose();
    }

    // Message rounds.
    const int rounds = hyper_.n_message_rounds;
    c.h_in.assign(static_cast<size_t>(rounds), {});
    c.pre.assign(static_cast<size_t>(rounds), {});
    c.agg.assign(static_cast<size_t>(rounds), {});
    c.upre.assign(static_cast<size_t>(rounds), {});
    Eigen::MatrixXd h = c.h0;
    for (int r = 0; r < rounds; ++r) {
      const auto& rw = w_.rounds[static_cast<size_t>(r)];
      c.h_in[static_cast<size_t>(r)] = h;
      const Eigen::MatrixXd p_src = h * rw.w_src.transpose();
      const Eigen::MatrixXd p_dst = h * rw.w_dst.transpose();
      Eigen::MatrixXd& pre = c.pre[static_cast<size_t>(r)];
      pre.resize(E, H);
      Eigen::MatrixXd& agg = c.agg[static_cast<size_t>(r)];
      agg = Eigen::MatrixXd::Zero(n, H);
      for (int e = 0; e < E; ++e) {
        const auto& edge = c.edges[static_cast<size_t>(e)];
        pre.row(e) = p_src.row(edge.i) + p_dst.row(edge.j) +
                     (rw.w_edge * c.rbf.row(e).transpose()).transpose() + rw.b_msg.transpose();
        agg.row(edge.i) += pre.row(e).unaryExpr([](double x) { return detail::silu(x); });
      }
      Eigen::MatrixXd& upre = c.upre[static_cast<size_t>(r)];
      upre = h * rw.w_self.transpose() + agg * rw.w_agg.transpose();
      upre.rowwise() += rw.b_upd.transpose();
      h += upre.unaryExpr([](double x) { return detail::silu(x); });
    }
    c.h_final = h;

    run_head(w_.head_tr, c, c.tr);
    run_head(w_.head_rot, c, c.rot);

    ScoreModelOutput out;
    out.tr_vec = Vec2(c.tr.raw.x(), c.tr.raw.y()) / input.tr_sigma;
    out.rot_vec = c.rot.raw / input.rot_sigma;
    if (!out.tr_vec.allFinite() || !out.rot_vec.allFinite())
      throw NumericalBlowup("score network produced a non-finite output");
    return out;
  }

  // -- backward --------------------------------------------------------------

  /// Accumulate d(loss)/d(params) into grad given the upstream gradients with
  /// respect to the two output vectors. grad must be zero-initialized (or
  /// hold a running sum) with the same shapes as weights().
  void backward(const ForwardCache& c, const Vec2& d_tr_vec, const Vec3& d_rot_vec,
                Weights& grad, const AdslabSystem& sys) const {
    const int n = static_cast<int>(sys.size());
    const int H = hyper_.hidden_dim;
    const int rounds = hyper_.n_message_rounds;

    Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(n, H);
    const Vec3 d_raw_tr(d_tr_vec.x() / c.tr_sigma, d_tr_vec.y() / c.tr_sigma, 0.0);
    const Vec3 d_raw_rot = d_rot_vec / c.rot_sigma;
    backward_head(w_.head_tr, c, c.tr, d_raw_tr, grad.head_tr, dh);
    backward_head(w_.head_rot, c, c.rot, d_raw_rot, grad.head_rot, dh);

    for (int r = rounds - 1; r >= 0; --r) {
      const auto& rw = w_.rounds[static_cast<size_t>(r)];
      auto& gw = grad.rounds[static_cast<size_t>(r)];
      const Eigen::MatrixXd& h_in = c.h_in[static_cast<size_t>(r)];
      const Eigen::MatrixXd& upre = c.upre[static_cast<size_t>(r)];
      const Eigen::MatrixXd& agg = c.agg[static_cast<size_t>(r)];
      const Eigen::MatrixXd& pre = c.pre[static_cast<size_t>(r)];

      // h_out = h_in + silu(upre); dh currently holds d h_out.
      const Eigen::MatrixXd dupre =
          dh.cwiseProduct(upre.unaryExpr([](double x) { return detail::silu_grad(x); }));
      gw.w_self += dupre.transpose() * h_in;
      gw.w_agg += dupre.transpose() * agg;
      gw.b_upd += dupre.colwise().sum().transpose();
      Eigen::MatrixXd dagg = dupre * rw.w_agg;
      dh += dupre * rw.w_self;  // dh now d h_in (residual path included)

      const int E = static_cast<int>(c.edges.size());
      Eigen::MatrixXd dp_src = Eigen::MatrixXd::Zero(n, H);
      Eigen::MatrixXd dp_dst = Eigen::MatrixXd::Zero(n, H);
      for (int e = 0; e < E; ++e) {
        const auto& edge = c.edges[static_cast<size_t>(e)];
        const Eigen::RowVectorXd dmsg = dagg.row(edge.i);
        const Eigen::RowVectorXd dpre = dmsg.cwiseProduct(
            pre.row(e).unaryExpr([](double x) { return detail::silu_grad(x); }));
        dp_src.row(edge.i) += dpre;
        dp_dst.row(edge.j) += dpre;
        gw.w_edge += dpre.transpose() * c.rbf.row(e);
        gw.b_msg += dpre.transpose();
      }
      gw.w_src += dp_src.transpose() * h_in;
      gw.w_dst += dp_dst.transpose() * h_in;
      dh += dp_src * rw.w_src + dp_dst * rw.w_dst;
    }

    // Initial features.
    Eigen::VectorXd dcond_vec = Eigen::VectorXd::Zero(H);
    for (int i = 0; i < n; ++i) {
      const int slot = species_slot(sys.species[static_cast<size_t>(i)]);
      grad.emb_species.row(slot) += dh.row(i);
      grad.emb_tag.row(static_cast<int>(sys.tags[static_cast<size_t>(i)])) += dh.row(i);
      dcond_vec += dh.row(i).transpose();
    }
    grad.w_cond += dcond_vec * c.cond_raw.transpose();
  }

  // -- parameter plumbing ------------------------------------------------------

  Weights zero_like() const {
    Weights g;
    g.emb_species = Eigen::MatrixXd::Zero(w_.emb_species.rows(), w_.emb_species.cols());
    g.emb_tag = Eigen::MatrixXd::Zero(w_.emb_tag.rows(), w_.emb_tag.cols());
    g.w_cond = Eigen::MatrixXd::Zero(w_.w_cond.rows(), w_.w_cond.cols());
    g.rounds.resize(w_.rounds.size());
    for (size_t r = 0; r < w_.rounds.size(); ++r) {
      const auto& s = w_.rounds[r];
      auto& d = g.rounds[r];
      d.w_src = Eigen::MatrixXd::Zero(s.w_src.rows(), s.w_src.cols());
      d.w_dst = Eigen::MatrixXd::Zero(s.w_dst.rows(), s.w_dst.cols());
      d.w_edge = Eigen::MatrixXd::Zero(s.w_edge.rows(), s.w_edge.cols());
      d.b_msg = Eigen::VectorXd::Zero(s.b_msg.size());
      d.w_self = Eigen::MatrixXd::Zero(s.w_self.rows(), s.w_self.cols());
      d.w_agg = Eigen::MatrixXd::Zero(s.w_agg.rows(), s.w_agg.cols());
      d.b_upd = Eigen::VectorXd::Zero(s.b_upd.size());
    }
    auto zero_head = [](const HeadWeights& s) {
      HeadWeights d;
      d.w_a = Eigen::MatrixXd::Zero(s.w_a.rows(), s.w_a.cols());
      d.w_b = Eigen::MatrixXd::Zero(s.w_b.rows(), s.w_b.cols());
      d.w_e = Eigen::MatrixXd::Zero(s.w_e.rows(), s.w_e.cols());
      d.b = Eigen::VectorXd::Zero(s.b.size());
      d.u = Eigen::VectorXd::Zero(s.u.size());
      return d;
    };
    g.head_tr = zero_head(w_.head_tr);
    g.head_rot = zero_head(w_.head_rot);
    return g;
  }

  /// Stable parameter order: embeddings, conditioning, rounds, heads. Each
  /// tensor contributes its Eigen storage order (column-major).
  static void visit(Weights& w, const std::function<void(Eigen::Map<Eigen::VectorXd>)>& fn) {
    auto emit = [&](Eigen::MatrixXd& m) {
      fn(Eigen::Map<Eigen::VectorXd>(m.data(), m.size()));
    };
    auto emit_v = [&](Eigen::VectorXd& v) {
      fn(Eigen::Map<Eigen::VectorXd>(v.data(), v.size()));
    };
    emit(w.emb_species);
    emit(w.emb_tag);
    emit(w.w_cond);
    for (auto& r : w.rounds) {
      emit(r.w_src);
      emit(r.w_dst);
      emit(r.w_edge);
      emit_v(r.b_msg);
      emit(r.w_self);
      emit(r.w_agg);
      emit_v(r.b_upd);
    }
    for (HeadWeights* h : {&w.head_tr, &w.head_rot}) {
      emit(h->w_a);
      emit(h->w_b);
      emit(h->w_e);
      emit_v(h->b);
      emit_v(h->u);
    }
  }

  static Eigen::Index count_params(const Weights& w) {
    Eigen::Index total = 0;
    visit(const_cast<Weights&>(w),
          [&](Eigen::Map<Eigen::VectorXd> seg) { total += seg.size(); });
    return total;
  }

  Eigen::Index n_params() const { return count_params(w_); }

  static Eigen::VectorXd flatten(const Weights& w) {
    Eigen::VectorXd out(count_params(w));
    Eigen::Index at = 0;
    visit(const_cast<Weights&>(w), [&](Eigen::Map<Eigen::VectorXd> seg) {
      out.segment(at, seg.size()) = seg;
      at += seg.size();
    });
    return out;
  }

  static void unflatten(const Eigen::VectorXd& flat, Weights& w) {
    if (flat.size() != count_params(w))
      throw ContractViolation("unflatten: parameter count mismatch");
    Eigen::Index at = 0;
    visit(w, [&](Eigen::Map<Eigen::VectorXd> seg) {
      seg = flat.segment(at, seg.size());
      at += seg.size();
    });
  }

  // -- feature builders --------------------------------------------------------

  Eigen::RowVectorXd rbf_features(double dist) const {
    const int R = hyper_.n_rbf;
    Eigen::RowVectorXd out(R);
    const double spacing = hyper_.cutoff / (R - 1);
    const double gamma = 1.0 / (2.0 * spacing * spacing);
    const double env =
        dist < hyper_.cutoff ? 0.5 * (std::cos(kPi * dist / hyper_.cutoff) + 1.0) : 0.0;
    for (int k = 0; k < R; ++k) {
      const double d = dist - k * spacing;
      out[k] = std::exp(-gamma * d * d) * env;
    }
    return out;
  }

  Eigen::VectorXd condition_features(double tr_sigma, double rot_sigma,
                                     const std::optional<double>& condition) const {
    Eigen::VectorXd out(hyper_.cond_dim());
    int at = 0;
    for (const double ls : {std::log(tr_sigma), std::log(rot_sigma)}) {
      for (int f = 0; f < hyper_.n_freq; ++f) {
        const double w = 0.25 * std::pow(2.0, f);
        out[at++] = std::sin(w * ls);
        out[at++] = std::cos(w * ls);
      }
    }
    out[at++] = condition.value_or(0.0);  // E_rel scaled by 1 eV
    return out;
  }

  int species_slot(int z) const {
    if (z >= 1 && z <= kMaxAtomicNumber) return z;
    if (!warned_unknown_.count(z)) {
      warned_unknown_.insert(z);
      std::cerr << "warning: unknown species " << z << ", using shared fallback embedding\n";
    }
    return 0;
  }

  // -- checkpoint ---------------------------------------------------------------

  struct CheckpointMeta {
    NoiseSchedule schedule;
    uint64_t seed = 0;
  };

  void save_checkpoint(const std::string& path, const CheckpointMeta& meta) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open checkpoint for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    const uint32_t version = 1;
    write_pod(os, version);
    write_pod(os, hyper_.cutoff);
    write_pod(os, static_cast<uint64_t>(hyper_.n_rbf));
    write_pod(os, static_cast<uint64_t>(hyper_.hidden_dim));
    write_pod(os, static_cast<uint64_t>(hyper_.n_message_rounds));
    write_pod(os, static_cast<uint64_t>(hyper_.n_freq));
    write_pod(os, meta.schedule.tr_sigma_min);
    write_pod(os, meta.schedule.tr_sigma_max);
    write_pod(os, meta.schedule.rot_sigma_min);
    write_pod(os, meta.schedule.rot_sigma_max);
    write_pod(os, meta.seed);
    const Eigen::VectorXd flat = flatten(w_);
    write_pod(os, static_cast<uint64_t>(flat.size()));
    os.write(reinterpret_cast<const char*>(flat.data()),
             static_cast<std::streamsize>(flat.size() * sizeof(double)));
    if (!os) throw Error("short write to checkpoint: " + path);
  }

  static std::pair<ReferenceNet, CheckpointMeta> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open checkpoint: " + path);
    char magic[sizeof(kMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
      throw Error("not a model checkpoint: " + path);
    uint32_t version = 0;
    read_pod(is, version);
    if (version != 1) throw Error("unsupported checkpoint version");
    ReferenceNetHyper hyper;
    uint64_t v = 0;
    read_pod(is, hyper.cutoff);
    read_pod(is, v);
    hyper.n_rbf = static_cast<int>(v);
    read_pod(is, v);
    hyper.hidden_dim = static_cast<int>(v);
    read_pod(is, v);
    hyper.n_message_rounds = static_cast<int>(v);
    read_pod(is, v);
    hyper.n_freq = static_cast<int>(v);
    CheckpointMeta meta;
    read_pod(is, meta.schedule.tr_sigma_min);
    read_pod(is, meta.schedule.tr_sigma_max);
    read_pod(is, meta.schedule.rot_sigma_min);
    read_pod(is, meta.schedule.rot_sigma_max);
    read_pod(is, meta.seed);
    uint64_t n = 0;
    read_pod(is, n);
    Eigen::VectorXd flat(static_cast<Eigen::Index>(n));
    is.read(reinterpret_cast<char*>(flat.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw Error("truncated checkpoint: " + path);
    ReferenceNet net(hyper, 0);
    unflatten(flat, net.w_);
    return {std::move(net), meta};
  }

 private:
  static constexpr char kMagic[12] = {'S', 'L', 'A', 'B', 'D', 'I', 'F', 'F', '-', 'N', 'E', 'T'};

  template <class T>
  static void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  template <class T>
  static void read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
  }

  void run_head(const HeadWeights& hw, ForwardCache& c, ForwardCache::HeadCache& out) const {
    const int H = hyper_.hidden_dim;
    const int ne = static_cast<int>(c.head_edges.size());
    out.hpre.resize(ne, H);
    out.hact.resize(ne, H);
    out.w.resize(ne);
    std::vector<Vec3> v(c.ads.size(), Vec3::Zero());
    // Map full atom index -> position within the adsorbate list.
    std::vector<int> ads_pos;
    {
      int max_idx = 0;
      for (const auto a : c.ads) max_idx = std::max(max_idx, static_cast<int>(a));
      ads_pos.assign(static_cast<size_t>(max_idx + 1), -1);
      for (size_t k = 0; k < c.ads.size(); ++k)
        ads_pos[static_cast<size_t>(c.ads[k])] = static_cast<int>(k);
    }
    for (int t = 0; t < ne; ++t) {
      const int e = c.head_edges[static_cast<size_t>(t)];
      const auto& edge = c.edges[static_cast<size_t>(e)];
      out.hpre.row(t) = (hw.w_a * c.h_final.row(edge.i).transpose() +
                         hw.w_b * c.h_final.row(edge.j).transpose() +
                         hw.w_e * c.rbf.row(e).transpose() + hw.b)
                            .transpose();
      out.hact.row(t) =
          out.hpre.row(t).unaryExpr([](double x) { return detail::silu(x); });
      out.w[t] = out.hact.row(t) * hw.u;
      const Vec3 unit = edge.delta / edge.dist;
      v[static_cast<size_t>(ads_pos[static_cast<size_t>(edge.i)])] += out.w[t] * unit;
    }
    out.raw = Vec3::Zero();
    for (const auto& vi : v) out.raw += vi;
    out.raw /= static_cast<double>(c.ads.size());
  }

  void backward_head(const HeadWeights& hw, const ForwardCache& c,
                     const ForwardCache::HeadCache& hc, const Vec3& d_raw, HeadWeights& gw,
                     Eigen::MatrixXd& dh) const {
    const int ne = static_cast<int>(c.head_edges.size());
    const double inv_na = 1.0 / static_cast<double>(c.ads.size());
    for (int t = 0; t < ne; ++t) {
      const int e = c.head_edges[static_cast<size_t>(t)];
      const auto& edge = c.edges[static_cast<size_t>(e)];
      const Vec3 unit = edge.delta / edge.dist;
      const double dw = d_raw.dot(unit) * inv_na;  // d loss / d w_t
      gw.u += dw * hc.hact.row(t).transpose();
      const Eigen::VectorXd dact = dw * hw.u;
      const Eigen::VectorXd dpre = dact.cwiseProduct(
          hc.hpre.row(t).transpose().unaryExpr([](double x) { return detail::silu_grad(x); }));
      gw.w_a += dpre * c.h_final.row(edge.i);
      gw.w_b += dpre * c.h_final.row(edge.j);
      gw.w_e += dpre * c.rbf.row(e);
      gw.b += dpre;
      dh.row(edge.i) += (hw.w_a.transpose() * dpre).transpose();
      dh.row(edge.j) += (hw.w_b.transpose() * dpre).transpose();
    }
  }

  void init_weights(uint64_t seed) {
    const int H = hyper_.hidden_dim;
    const int R = hyper_.n_rbf;
    Rng rng = Rng::stream(seed, "net-init");
    auto fill = [&](Eigen::MatrixXd& m, int rows, int cols, double scale) {
      m.resize(rows, cols);
      for (Eigen::Index q = 0; q < m.size(); ++q) m.data()[q] = scale * rng.gaussian();
    };
    auto fill_v = [&](Eigen::VectorXd& v, int size) { v = Eigen::VectorXd::Zero(size); };
    fill(w_.emb_species, kMaxAtomicNumber + 1, H, 0.3);
    fill(w_.emb_tag, 3, H, 0.3);
    fill(w_.w_cond, H, hyper_.cond_dim(), 1.0 / std::sqrt(static_cast<double>(hyper_.cond_dim())));
    w_.rounds.resize(static_cast<size_t>(hyper_.n_message_rounds));
    const double sh = 1.0 / std::sqrt(static_cast<double>(H));
    const double sr = 1.0 / std::sqrt(static_cast<double>(R));
    for (auto& r : w_.rounds) {
      fill(r.w_src, H, H, sh);
      fill(r.w_dst, H, H, sh);
      fill(r.w_edge, H, R, sr);
      fill_v(r.b_msg, H);
      fill(r.w_self, H, H, sh);
      fill(r.w_agg, H, H, 0.25 * sh);  // tame the aggregated-message scale
      fill_v(r.b_upd, H);
    }
    for (HeadWeights* hd : {&w_.head_tr, &w_.head_rot}) {
      fill(hd->w_a, H, H, sh);
      fill(hd->w_b, H, H, sh);
      fill(hd->w_e, H, R, sr);
      fill_v(hd->b, H);
      hd->u.resize(H);
      for (Eigen::Index q = 0; q < H; ++q) hd->u[q] = 0.1 * sh * rng.gaussian();
    }
  }

  ReferenceNetHyper hyper_;
  Weights w_;
  mutable std::set<int> warned_unknown_;
};

}  // namespace slabdiff
