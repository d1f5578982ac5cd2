#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace slabdiff {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

inline constexpr double kPi = 3.14159265358979323846;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingularCell : Error { using Error::Error; };
struct InvalidCoordinate : Error { using Error::Error; };
struct EmptySelection : Error { using Error::Error; };
struct InvalidSigma : Error { using Error::Error; };
struct TableBuildError : Error { using Error::Error; };
struct ContractViolation : Error { using Error::Error; };
struct MissingCondition : Error { using Error::Error; };
struct UnknownSpecies : Error { using Error::Error; };
struct NumericalBlowup : Error { using Error::Error; };
struct GradientOverflow : Error { using Error::Error; };
struct InsufficientData : Error { using Error::Error; };
struct MissingLattice : Error { using Error::Error; };

struct ParseError : Error {
  int line = 0;
  int col = 0;
  explicit ParseError(const std::string& msg) : Error(msg) {}
  ParseError(const std::string& msg, int line_, int col_)
      : Error(msg + " (line " + std::to_string(line_) + ", col " + std::to_string(col_) + ")"),
        line(line_), col(col_) {}
};

namespace detail {

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Deterministic random stream. All randomness in the library flows through
/// named sub-streams derived from a single run seed, so every stage is
/// reproducible independently of the others.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  /// Sub-stream addressed by (seed, name, index). Distinct names or indices
  /// give statistically independent streams.
  static Rng stream(uint64_t seed, std::string_view name, uint64_t index = 0) {
    uint64_t state = seed ^ detail::fnv1a(name);
    state ^= 0x6a09e667f3bcc909ULL * (index + 1);
    uint64_t s0 = detail::splitmix64(state);
    uint64_t s1 = detail::splitmix64(state);
    return Rng(s0 ^ (s1 << 1));
  }

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller. Consumes exactly two uniforms per call;
  /// no cached spare, so call order fully determines the sequence.
  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  /// Uniform direction on the unit sphere.
  Vec3 unit_vector() {
    const double z = uniform(-1.0, 1.0);
    const double phi = uniform(0.0, 2.0 * kPi);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return Vec3(r * std::cos(phi), r * std::sin(phi), z);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  static Rng deserialize(const std::string& text) {
    Rng r(0);
    std::istringstream is(text);
    is >> r.engine_;
    if (!is) throw Error("bad rng state string");
    return r;
  }

 private:
  std::mt19937_64 engine_;
};

/// Deterministic parallel loop: the index space is split into contiguous
/// blocks, one worker per block, and every index writes only its own
/// preallocated slot, so results are identical for any thread count.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  if (n <= 0) return;
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const int block = (n + threads - 1) / threads;
  for (int w = 0; w < threads; ++w) {
    const int lo = w * block;
    const int hi = std::min(n, lo + block);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace slabdiff
