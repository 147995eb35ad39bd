#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "safesig/types.hpp"

namespace safesig::landscape {

// Two orthonormal directions spanning the probed plane.
struct DirectionPair {
  Vector v1;
  Vector v2;
};

// F(alpha, beta | u) = f(u + alpha v1 + beta v2) sampled on a rectangle.
// Cells where f returned a non-finite value are recorded as poisoned and
// hold NaN instead of aborting the sweep.
struct LandscapeGrid {
  std::vector<double> alphas;  // strictly increasing, contains 0
  std::vector<double> betas;
  Matrix values;               // |alphas| x |betas|
  std::uint64_t seed = 0;
  double center_value = 0.0;
  std::vector<std::pair<int, int>> poisoned;
};

struct ZooConfig {
  double mu = 1e-2;     // smoothing radius, > 0
  int samples = 16;     // P >= 1
  std::uint64_t seed = 0;
};

struct ZooEstimate {
  Vector gradient;
  double norm = 0.0;
};

// Gaussian draws orthonormalized by Gram-Schmidt; deterministic per seed.
DirectionPair sample_direction_pair(Eigen::Index dim, std::uint64_t seed);

// Adds coeff * v to every row of E (the row-wise broadcast operator).
Matrix broadcast_perturb(const Matrix& embedding, const Vector& v, double coeff);

using ScalarField = std::function<double(const Vector&)>;

// Exactly |alphas| * |betas| evaluations of f; the (0,0) cell is f(u).
LandscapeGrid evaluate_grid(const ScalarField& f, const Vector& center, const DirectionPair& pair,
                            std::vector<double> alphas, std::vector<double> betas,
                            std::uint64_t seed = 0);

// Forward-difference sphere-sampling estimator:
//   g = (1/P) sum_p (d / mu) [f(u + mu u_p) - f(u)] u_p,  u_p ~ Unif(S^{d-1}).
// Exactly P + 1 evaluations of f; directions are pre-drawn from the seed.
ZooEstimate zoo_gradient(const ScalarField& f, const Vector& at, const ZooConfig& cfg);

// Same estimator with the base value supplied by the caller (P evaluations).
ZooEstimate zoo_gradient_with_base(const ScalarField& f, const Vector& at, double base_value,
                                   const ZooConfig& cfg);

// View a loss over embedding matrices as a scalar field over broadcast
// offsets, suitable for evaluate_grid / zoo_gradient with center 0.
ScalarField broadcast_offset_field(const Matrix& embedding,
                                   std::function<double(const Matrix&)> loss);

std::string grid_to_csv(const LandscapeGrid& grid);
void write_grid_csv(const LandscapeGrid& grid, const std::filesystem::path& path);

// Deterministic SVG raster; the color-scale min/max is recorded in the
// file's <desc> metadata.
std::string grid_to_svg(const LandscapeGrid& grid);
void write_heatmap(const LandscapeGrid& grid, const std::filesystem::path& path);

}  // namespace safesig::landscape
