#pragma once

#include "pathfair/common.hpp"
#include "pathfair/linear_model.hpp"
#include "pathfair/sfm_data.hpp"
#include "pathfair/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>

namespace testing {

using namespace pathfair;

/// |analytic - central difference| / max(|analytic|, |numeric|), in the 2-norm.
inline double gradient_relative_error(const std::function<double(const Vector&, Vector*)>& f,
                                      const Vector& theta) {
  Vector analytic;
  f(theta, &analytic);
  Vector numeric(theta.size());
  Vector t = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(theta(i)));
    t(i) = theta(i) + h;
    const double up = f(t, nullptr);
    t(i) = theta(i) - h;
    const double down = f(t, nullptr);
    t(i) = theta(i);
    numeric(i) = (up - down) / (2.0 * h);
  }
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
  return (analytic - numeric).norm() / scale;
}

inline Vector random_vector(Index n, Rng& rng, double sd = 1.0) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = sd * standard_normal(rng);
  return v;
}

inline Matrix random_matrix(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = standard_normal(rng);
  return m;
}

/// Small synthetic world with every field explicit.
inline ScmSpec small_spec(std::uint64_t seed, Index dim_z = 3, Index dim_w = 6) {
  ScmSpec s;
  s.dim_z = dim_z;
  s.dim_w = dim_w;
  s.hidden_width = 16;
  s.seed = seed;
  return s;
}

inline SfmDataset sample_dataset(const ScmSpec& spec, Index n, std::uint64_t stream = 1) {
  return observational_dataset(sample_panel(init_scm(spec), n, stream));
}

/// Unique scratch directory under the build tree, emptied on construction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("pathfair_test_" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testing
