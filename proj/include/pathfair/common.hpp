#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace pathfair {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexList = std::vector<Index>;

/// Probability clipping applied to every model output.
inline constexpr double kProbClip = 1e-6;

enum class ErrorKind {
  config,
  manifest,
  parse,
  coding,
  data,
  infeasible_split,
  schema_mismatch,
  degenerate_fit,
  divergence,
  training,
  estimation,
  bootstrap,
};

/// Library error. `kind` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

std::string_view to_string(ErrorKind kind);

/// 0 success, 2 config, 3 data, 4 estimation, 5 training.
int exit_code_for(ErrorKind kind);

// ---------------------------------------------------------------------------
// Seeds and random streams

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ (a + 0x632be59bd9b4e019ULL)) ^
                    (b + 0x85157af5ULL));
}

/// Seed for a named pipeline stage.
std::uint64_t stage_seed(std::uint64_t master, std::string_view stage);

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(seed, a, b));
}

/// Uniform double in [0, 1) with 53 random bits, stable across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal by Box-Muller on `uniform01`; consumes two draws.
double standard_normal(Rng& rng);

/// Fisher-Yates shuffle driven by `uniform01`.
void shuffle(IndexList& values, Rng& rng);

/// Draw in [0, n).
inline Index uniform_index(Rng& rng, Index n) {
  return std::min<Index>(n - 1, static_cast<Index>(uniform01(rng) * static_cast<double>(n)));
}

// ---------------------------------------------------------------------------
// Threading

/// Worker cap shared by all parallel loops. Results never depend on it.
void set_max_threads(int threads);
int max_threads();

/// Runs fn(i) for i in [0, n). Each index is processed exactly once; the first
/// exception thrown by any worker is rethrown after all workers join.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(max_threads()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr failure;
  auto work = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= n || failure) return;
        i = next++;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Small numeric helpers

inline double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double clip(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Linear-interpolated quantile (type 7) of an unsorted sample.
double quantile(std::vector<double> values, double q);

double mean(std::span<const double> values);

/// Rows of `m` at `rows`, in order.
Matrix take_rows(const Matrix& m, std::span<const Index> rows);
Vector take(const Vector& v, std::span<const Index> rows);
Matrix take_cols(const Matrix& m, std::span<const Index> cols);
/// Columns centred and scaled to unit population sd (sd below 1e-12 left unscaled).
Matrix standardize_columns(const Matrix& m);

/// Hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

/// Shortest round-trip decimal representation, used in all text outputs.
std::string format_double(double v);

}  // namespace pathfair
