#include "pathfair/common.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <numbers>

namespace pathfair {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config error";
    case ErrorKind::manifest: return "manifest error";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::coding: return "coding error";
    case ErrorKind::data: return "data error";
    case ErrorKind::infeasible_split: return "infeasible split";
    case ErrorKind::schema_mismatch: return "schema mismatch";
    case ErrorKind::degenerate_fit: return "degenerate fit";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::training: return "training failure";
    case ErrorKind::estimation: return "estimation failure";
    case ErrorKind::bootstrap: return "bootstrap instability";
  }
  return "error";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::manifest:
    case ErrorKind::parse:
    case ErrorKind::coding:
    case ErrorKind::data:
    case ErrorKind::infeasible_split:
    case ErrorKind::schema_mismatch: return 3;
    case ErrorKind::estimation:
    case ErrorKind::bootstrap: return 4;
    case ErrorKind::degenerate_fit:
    case ErrorKind::divergence:
    case ErrorKind::training: return 5;
  }
  return 1;
}

std::uint64_t stage_seed(std::uint64_t master, std::string_view stage) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : stage) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return derive_seed(master, h);
}

double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void shuffle(IndexList& values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, static_cast<Index>(i)));
    std::swap(values[i - 1], values[j]);
  }
}

namespace {
std::atomic<int> g_max_threads{1};
}

void set_max_threads(int threads) { g_max_threads = std::max(1, threads); }
int max_threads() { return g_max_threads.load(); }

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double mean(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v;
  return values.empty() ? std::nan("") : s / static_cast<double>(values.size());
}

Matrix take_rows(const Matrix& m, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (Index c = 0; c < m.cols(); ++c)
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r), c) = m(rows[r], c);
  return out;
}

Vector take(const Vector& v, std::span<const Index> rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r)) = v(rows[r]);
  return out;
}

Matrix take_cols(const Matrix& m, std::span<const Index> cols) {
  Matrix out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(c)) = m.col(cols[c]);
  return out;
}

Matrix standardize_columns(const Matrix& m) {
  Matrix out = m;
  for (Index j = 0; j < m.cols(); ++j) {
    const double mu = m.col(j).mean();
    double sd = std::sqrt((m.col(j).array() - mu).square().mean());
    if (sd < 1e-12) sd = 1.0;
    out.col(j) = (m.col(j).array() - mu) / sd;
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace pathfair
