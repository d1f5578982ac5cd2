#pragma once

#include "slabdiff/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace slabdiff {

// Isotropic Gaussian on SO(3), parameterized by the rotation angle omega of
// the axis-angle form. The angle density is
//
//   p(omega) = (1 - cos omega) / pi * f(omega)
//   f(omega) = sum_l (2l+1) exp(-l(l+1) sigma^2 / 2) sin((l+1/2) omega) / sin(omega/2)
//
// following the standard heat-kernel convention (the series ratio tends to
// 2l+1 as omega -> 0). Score and sampling work off precomputed grids; direct
// series evaluation is kept for table construction and verification.

namespace igso3 {

struct SeriesValue {
  double f = 0.0;   // f(omega)
  double df = 0.0;  // d/d omega f(omega)
};

/// Truncated series for f and its omega-derivative, with early termination
/// once the decay envelope drops below 1e-16 of the partial sum.
inline SeriesValue series_f_df(double omega, double sigma, int l_max) {
  if (sigma <= 0.0) throw InvalidSigma("sigma must be positive");
  if (l_max < 1) throw InvalidSigma("l_max must be >= 1");
  const double half = 0.5 * omega;
  const double sin_half = std::sin(half);
  const double cos_half = std::cos(half);
  const bool at_origin = std::abs(omega) < 1e-9;
  const double inv_sin = at_origin ? 0.0 : 1.0 / sin_half;
  const double inv_sin2 = inv_sin * inv_sin;

  SeriesValue out;
  for (int l = 0; l <= l_max; ++l) {
    const double weight = (2.0 * l + 1.0) * std::exp(-0.5 * l * (l + 1.0) * sigma * sigma);
    double ratio, dratio;
    if (at_origin) {
      ratio = 2.0 * l + 1.0;  // lim sin((l+1/2)w)/sin(w/2)
      dratio = 0.0;           // f is even in omega
    } else {
      const double lh = l + 0.5;
      const double s = std::sin(lh * omega);
      const double c = std::cos(lh * omega);
      ratio = s * inv_sin;
      dratio = (lh * c * sin_half - 0.5 * cos_half * s) * inv_sin2;
    }
    out.f += weight * ratio;
    out.df += weight * dratio;
    if (l >= 2) {
      const double envelope = weight * (2.0 * l + 3.0) * std::max(inv_sin2, 1.0);
      if (envelope < 1e-16 * std::max(std::abs(out.f), 1e-280)) break;
    }
  }
  return out;
}

}  // namespace igso3

inline double series_f(double omega, double sigma, int l_max) {
  return igso3::series_f_df(omega, sigma, l_max).f;
}

/// Angle density p(omega); clamped at zero where series truncation noise
/// would make it negative.
inline double density_p(double omega, double sigma, int l_max = 2000) {
  const double f = series_f(omega, sigma, l_max);
  return std::max(0.0, (1.0 - std::cos(omega)) / kPi * f);
}

/// d/d omega log f(omega; sigma), by term-by-term differentiation.
inline double angle_score(double omega, double sigma, int l_max = 2000) {
  const auto v = igso3::series_f_df(omega, sigma, l_max);
  return v.df / v.f;
}

struct IgSo3BuildParams {
  double sigma_min = 0.01;
  double sigma_max = 1.55;
  int n_sigma = 256;
  int n_omega = 2048;
  int l_max = 2000;

  bool operator==(const IgSo3BuildParams&) const = default;
};

/// Precomputed density/score/CDF grids over (sigma, omega). Sigma rows are
/// geometric and selected by nearest log-sigma; omega is linearly
/// interpolated. Immutable once built; safe to share across threads.
class IgSo3Table {
 public:
  static IgSo3Table build(const IgSo3BuildParams& params) {
    if (!(params.sigma_min > 0.0) || !(params.sigma_min < params.sigma_max))
      throw TableBuildError("need 0 < sigma_min < sigma_max");
    if (params.n_sigma < 64 || params.n_omega < 64)
      throw TableBuildError("need at least 64 grid points per axis");
    if (params.l_max < 1) throw TableBuildError("l_max must be >= 1");

    IgSo3Table t;
    t.params_ = params;
    const int ns = params.n_sigma, no = params.n_omega;
    t.sigma_grid_.resize(ns);
    t.omega_grid_.resize(no);
    t.log_f_.resize(ns, no);
    t.score_.resize(ns, no);
    t.cdf_.resize(ns, no);
    t.score_sq_mean_.resize(ns);

    const double log_lo = std::log(params.sigma_min);
    const double log_hi = std::log(params.sigma_max);
    for (int i = 0; i < ns; ++i)
      t.sigma_grid_[i] = std::exp(log_lo + (log_hi - log_lo) * i / (ns - 1));
    for (int j = 0; j < no; ++j)
      t.omega_grid_[j] = kPi * (j + 1) / no;  // (0, pi], endpoints excluded below

    std::vector<double> f_row(no), df_row(no), p_row(no);
    for (int i = 0; i < ns; ++i) {
      const double sigma = t.sigma_grid_[i];
      double row_max = 0.0;
      for (int j = 0; j < no; ++j) {
        const auto v = igso3::series_f_df(t.omega_grid_[j], sigma, params.l_max);
        f_row[j] = v.f;
        df_row[j] = v.df;
        row_max = std::max(row_max, v.f);
      }
      if (!(row_max > 0.0))
        throw TableBuildError("series vanished for sigma = " + std::to_string(sigma));
      // Truncation noise in the far tail can push f below zero; floor it
      // relative to the row maximum so log and score stay finite. The floored
      // region carries ~1e-14 of the probability mass.
      const double floor = 1e-14 * row_max;
      double cdf_acc = 0.0;
      double prev_p = 0.0, prev_w = 0.0;
      for (int j = 0; j < no; ++j) {
        const double fc = std::max(f_row[j], floor);
        t.log_f_(i, j) = std::log(fc);
        t.score_(i, j) = df_row[j] / fc;
        p_row[j] = (1.0 - std::cos(t.omega_grid_[j])) / kPi * std::max(f_row[j], 0.0);
        cdf_acc += 0.5 * (prev_p + p_row[j]) * (t.omega_grid_[j] - prev_w);
        t.cdf_(i, j) = cdf_acc;
        prev_p = p_row[j];
        prev_w = t.omega_grid_[j];
        if (!std::isfinite(t.score_(i, j)) || !std::isfinite(t.log_f_(i, j)))
          throw TableBuildError("non-finite table entry");
      }
      const double total = t.cdf_(i, no - 1);
      if (!(total > 0.0)) throw TableBuildError("zero density mass in row");
      double sq_acc = 0.0;
      prev_w = 0.0;
      double prev_g = 0.0;
      for (int j = 0; j < no; ++j) {
        t.cdf_(i, j) /= total;
        const double g = p_row[j] * t.score_(i, j) * t.score_(i, j);
        sq_acc += 0.5 * (prev_g + g) * (t.omega_grid_[j] - prev_w);
        prev_g = g;
        prev_w = t.omega_grid_[j];
      }
      t.score_sq_mean_[i] = sq_acc / total;
    }
    return t;
  }

  const IgSo3BuildParams& params() const { return params_; }
  const std::vector<double>& sigma_grid() const { return sigma_grid_; }
  const std::vector<double>& omega_grid() const { return omega_grid_; }

  /// Nearest row in log sigma; clamps outside the grid.
  int sigma_row(double sigma, bool* clamped = nullptr) const {
    if (clamped) *clamped = false;
    if (sigma <= sigma_grid_.front()) {
      if (clamped && sigma < sigma_grid_.front()) *clamped = true;
      return 0;
    }
    if (sigma >= sigma_grid_.back()) {
      if (clamped && sigma > sigma_grid_.back()) *clamped = true;
      return params_.n_sigma - 1;
    }
    const double step = (std::log(sigma_grid_.back()) - std::log(sigma_grid_.front())) /
                        (params_.n_sigma - 1);
    const int row = static_cast<int>(std::lround((std::log(sigma) - std::log(sigma_grid_.front())) / step));
    return std::clamp(row, 0, params_.n_sigma - 1);
  }

  /// Interpolated d/d omega log f. Omega outside (0, pi) clamps to the grid
  /// edge and reports via the flag.
  double score_at(double omega, double sigma, bool* clamped = nullptr) const {
    const int i = sigma_row(sigma, clamped);
    bool edge = false;
    const double v = interp_row(score_, i, omega, &edge);
    if (clamped && edge) *clamped = true;
    return v;
  }

  double log_f_at(double omega, double sigma) const {
    const int i = sigma_row(sigma);
    return interp_row(log_f_, i, omega, nullptr);
  }

  double density_at(double omega, double sigma) const {
    if (omega <= 0.0) return 0.0;
    const int i = sigma_row(sigma);
    // Linear interpolation of p itself, anchored at p(0) = 0.
    const int no = params_.n_omega;
    const double w0 = omega_grid_.front();
    auto p_at = [&](int j) {
      return (1.0 - std::cos(omega_grid_[j])) / kPi * std::exp(log_f_(i, j));
    };
    if (omega <= w0) return p_at(0) * (omega / w0);
    if (omega >= omega_grid_.back()) return p_at(no - 1);
    const int j = static_cast<int>((omega - w0) / (kPi / no));
    const int j1 = std::min(j + 1, no - 1);
    const double t = (omega - omega_grid_[j]) / (omega_grid_[j1] - omega_grid_[j]);
    return (1.0 - t) * p_at(j) + t * p_at(j1);
  }

  /// Inverse-CDF draw of the rotation angle for quantile u in [0,1).
  double sample_angle(double sigma, double u, bool* clamped = nullptr) const {
    const int i = sigma_row(sigma, clamped);
    u = std::clamp(u, 0.0, 1.0);
    const auto row_begin = cdf_.row(i);
    // Virtual anchor (omega=0, cdf=0) in front of the grid.
    int lo = -1, hi = params_.n_omega - 1;
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      if (cdf_(i, mid) < u) lo = mid;
      else hi = mid;
    }
    const double c0 = (lo < 0) ? 0.0 : cdf_(i, lo);
    const double w0 = (lo < 0) ? 0.0 : omega_grid_[lo];
    const double c1 = cdf_(i, hi);
    const double w1 = omega_grid_[hi];
    if (c1 <= c0) return w1;
    (void)row_begin;
    return w0 + (w1 - w0) * (u - c0) / (c1 - c0);
  }

  /// Mean squared score magnitude under p(omega), per sigma row. The inverse
  /// is the rotation-channel loss weight.
  double score_sq_mean(double sigma) const { return score_sq_mean_[sigma_row(sigma)]; }
  double rot_loss_weight(double sigma) const { return 1.0 / score_sq_mean(sigma); }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open table cache for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    const uint32_t version = 1;
    write_pod(os, version);
    write_pod(os, params_.sigma_min);
    write_pod(os, params_.sigma_max);
    write_pod(os, static_cast<uint64_t>(params_.n_sigma));
    write_pod(os, static_cast<uint64_t>(params_.n_omega));
    write_pod(os, static_cast<uint64_t>(params_.l_max));
    write_vec(os, sigma_grid_);
    write_vec(os, omega_grid_);
    write_mat(os, log_f_);
    write_mat(os, score_);
    write_mat(os, cdf_);
    write_vec(os, score_sq_mean_);
    if (!os) throw Error("short write to table cache: " + path);
  }

  static IgSo3Table load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open table cache: " + path);
    char magic[sizeof(kMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
      throw Error("not an IGSO3 table cache: " + path);
    uint32_t version = 0;
    read_pod(is, version);
    if (version != 1) throw Error("unsupported table cache version");
    IgSo3Table t;
    uint64_t ns = 0, no = 0, lm = 0;
    read_pod(is, t.params_.sigma_min);
    read_pod(is, t.params_.sigma_max);
    read_pod(is, ns);
    read_pod(is, no);
    read_pod(is, lm);
    t.params_.n_sigma = static_cast<int>(ns);
    t.params_.n_omega = static_cast<int>(no);
    t.params_.l_max = static_cast<int>(lm);
    read_vec(is, t.sigma_grid_, ns);
    read_vec(is, t.omega_grid_, no);
    read_mat(is, t.log_f_, ns, no);
    read_mat(is, t.score_, ns, no);
    read_mat(is, t.cdf_, ns, no);
    read_vec(is, t.score_sq_mean_, ns);
    if (!is) throw Error("truncated table cache: " + path);
    return t;
  }

  /// Load from cache when present and parameter-compatible, else build and
  /// (best effort) populate the cache.
  static IgSo3Table build_or_load(const IgSo3BuildParams& params, const std::string& cache_path) {
    if (!cache_path.empty()) {
      std::ifstream probe(cache_path, std::ios::binary);
      if (probe.good()) {
        try {
          IgSo3Table t = load(cache_path);
          if (t.params_ == params) return t;
        } catch (const Error&) {
          // fall through to rebuild
        }
      }
    }
    IgSo3Table t = build(params);
    if (!cache_path.empty()) {
      try {
        t.save(cache_path);
      } catch (const Error&) {
      }
    }
    return t;
  }

  bool grids_equal(const IgSo3Table& other) const {
    return params_ == other.params_ && sigma_grid_ == other.sigma_grid_ &&
           omega_grid_ == other.omega_grid_ && log_f_ == other.log_f_ &&
           score_ == other.score_ && cdf_ == other.cdf_ &&
           score_sq_mean_ == other.score_sq_mean_;
  }

 private:
  IgSo3Table() = default;

  static constexpr char kMagic[14] = {'S', 'L', 'A', 'B', 'D', 'I', 'F', 'F',
                                      '-', 'I', 'G', 'S', 'O', '3'};

  double interp_row(const Eigen::MatrixXd& grid, int i, double omega, bool* edge) const {
    const int no = params_.n_omega;
    const double w0 = omega_grid_.front();
    const double wn = omega_grid_.back();
    if (omega <= w0) {
      if (edge) *edge = (omega < w0);
      return grid(i, 0);
    }
    if (omega >= wn) {
      if (edge) *edge = (omega > wn);
      return grid(i, no - 1);
    }
    const int j = std::min(static_cast<int>((omega - w0) / (kPi / no)), no - 2);
    const double t = (omega - omega_grid_[j]) / (omega_grid_[j + 1] - omega_grid_[j]);
    return (1.0 - t) * grid(i, j) + t * grid(i, j + 1);
  }

  template <class T>
  static void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  template <class T>
  static void read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
  }
  static void write_vec(std::ostream& os, const std::vector<double>& v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  static void read_vec(std::istream& is, std::vector<double>& v, uint64_t n) {
    v.resize(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  }
  static void write_mat(std::ostream& os, const Eigen::MatrixXd& m) {
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(static_cast<size_t>(m.size()) * sizeof(double)));
  }
  static void read_mat(std::istream& is, Eigen::MatrixXd& m, uint64_t rows, uint64_t cols) {
    m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(static_cast<size_t>(m.size()) * sizeof(double)));
  }

  IgSo3BuildParams params_;
  std::vector<double> sigma_grid_;
  std::vector<double> omega_grid_;
  Eigen::MatrixXd log_f_;
  Eigen::MatrixXd score_;
  Eigen::MatrixXd cdf_;
  std::vector<double> score_sq_mean_;
};

/// Draw an Euler vector from IGSO3(sigma): axis uniform on the sphere, angle
/// by inverse-CDF interpolation. Consumes three uniforms (two for the axis,
/// one for the angle) in that order.
inline Vec3 sample_rotation(const IgSo3Table& table, double sigma, Rng& rng,
                            bool* clamped = nullptr) {
  const Vec3 axis = rng.unit_vector();
  const double u = rng.uniform();
  const double omega = table.sample_angle(sigma, u, clamped);
  return omega * axis;
}

/// Tangent-space score of the rotation kernel at Euler vector delta:
/// (d/d omega log f)(|delta|; sigma) * delta / |delta|. Zero at delta = 0.
inline Vec3 rotation_score(const IgSo3Table& table, const Vec3& delta, double sigma) {
  const double omega = delta.norm();
  if (omega < 1e-12) return Vec3::Zero();
  return table.score_at(omega, sigma) * (delta / omega);
}

}  // namespace slabdiff
