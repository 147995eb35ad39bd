#include "safesig/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "safesig/rng.hpp"

namespace safesig::landscape {
namespace {

constexpr std::uint64_t kDirectionTag = 0xD12EC7;
constexpr std::uint64_t kZooTag = 0x200D12;

void check_axis(const std::vector<double>& axis, const char* name) {
  if (axis.empty()) throw ConfigError(std::string("grid axis ") + name + " is empty");
  bool has_zero = false;
  for (std::size_t i = 0; i < axis.size(); ++i) {
    if (axis[i] == 0.0) has_zero = true;
    if (i > 0 && !(axis[i] > axis[i - 1]))
      throw ConfigError(std::string("grid axis ") + name + " must be strictly increasing");
  }
  if (!has_zero) throw ConfigError(std::string("grid axis ") + name + " must contain 0");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

DirectionPair sample_direction_pair(Eigen::Index dim, std::uint64_t seed) {
  if (dim < 2) throw ConfigError("direction pair needs dimension >= 2");
  rng::Stream stream(rng::derive(seed, kDirectionTag));
  Vector v1 = stream.sphere_vector(dim);
  for (;;) {
    Vector g = stream.gaussian_vector(dim);
    Vector w = g - g.dot(v1) * v1;
    if (w.norm() < 1e-6) continue;
    w -= w.dot(v1) * v1;  // second Gram-Schmidt pass tightens orthogonality
    return {v1, w.normalized()};
  }
}

Matrix broadcast_perturb(const Matrix& embedding, const Vector& v, double coeff) {
  if (v.size() != embedding.cols())
    throw DataError("broadcast_perturb: direction dimension mismatch");
  return embedding.rowwise() + (coeff * v).transpose();
}

LandscapeGrid evaluate_grid(const ScalarField& f, const Vector& center, const DirectionPair& pair,
                            std::vector<double> alphas, std::vector<double> betas,
                            std::uint64_t seed) {
  check_axis(alphas, "alphas");
  check_axis(betas, "betas");
  if (pair.v1.size() != center.size() || pair.v2.size() != center.size())
    throw DataError("evaluate_grid: direction dimension mismatch");

  LandscapeGrid grid;
  grid.alphas = std::move(alphas);
  grid.betas = std::move(betas);
  grid.seed = seed;
  grid.values.resize(static_cast<Eigen::Index>(grid.alphas.size()),
                     static_cast<Eigen::Index>(grid.betas.size()));

  for (std::size_t i = 0; i < grid.alphas.size(); ++i) {
    for (std::size_t j = 0; j < grid.betas.size(); ++j) {
      const Vector point = center + grid.alphas[i] * pair.v1 + grid.betas[j] * pair.v2;
      const double value = f(point);
      if (std::isfinite(value)) {
        grid.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value;
      } else {
        grid.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            std::numeric_limits<double>::quiet_NaN();
        grid.poisoned.emplace_back(static_cast<int>(i), static_cast<int>(j));
      }
      if (grid.alphas[i] == 0.0 && grid.betas[j] == 0.0)
        grid.center_value = grid.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  return grid;
}

ZooEstimate zoo_gradient_with_base(const ScalarField& f, const Vector& at, double base_value,
                                   const ZooConfig& cfg) {
  if (!(cfg.mu > 0.0) || !std::isfinite(cfg.mu))
    throw ConfigError("zoo_gradient: smoothing mu must be finite and positive");
  if (cfg.samples < 1) throw ConfigError("zoo_gradient: sample count must be >= 1");
  if (!std::isfinite(base_value)) throw DataError("zoo_gradient: non-finite value at base point");

  const Eigen::Index d = at.size();
  rng::Stream stream(rng::derive(cfg.seed, kZooTag));
  std::vector<Vector> directions;
  directions.reserve(static_cast<std::size_t>(cfg.samples));
  for (int p = 0; p < cfg.samples; ++p) directions.push_back(stream.sphere_vector(d));

  Vector grad = Vector::Zero(d);
  for (const auto& u : directions) {
    const double probe = f(at + cfg.mu * u);
    if (!std::isfinite(probe)) throw DataError("zoo_gradient: non-finite value at probe point");
    grad += (probe - base_value) * u;
  }
  grad *= static_cast<double>(d) / (cfg.mu * static_cast<double>(cfg.samples));
  return {grad, grad.norm()};
}

ZooEstimate zoo_gradient(const ScalarField& f, const Vector& at, const ZooConfig& cfg) {
  if (!(cfg.mu > 0.0) || !std::isfinite(cfg.mu))
    throw ConfigError("zoo_gradient: smoothing mu must be finite and positive");
  return zoo_gradient_with_base(f, at, f(at), cfg);
}

ScalarField broadcast_offset_field(const Matrix& embedding,
                                   std::function<double(const Matrix&)> loss) {
  return [embedding, loss = std::move(loss)](const Vector& w) {
    return loss(broadcast_perturb(embedding, w, 1.0));
  };
}

std::string grid_to_csv(const LandscapeGrid& grid) {
  std::string out = "alpha\\beta";
  for (double b : grid.betas) out += "," + fmt(b);
  out += "\n";
  for (std::size_t i = 0; i < grid.alphas.size(); ++i) {
    out += fmt(grid.alphas[i]);
    for (std::size_t j = 0; j < grid.betas.size(); ++j)
      out += "," + fmt(grid.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    out += "\n";
  }
  return out;
}

void write_grid_csv(const LandscapeGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write grid CSV: " + path.string());
  out << grid_to_csv(grid);
}

std::string grid_to_svg(const LandscapeGrid& grid) {
  const int cell = 16;
  const auto rows = static_cast<int>(grid.alphas.size());
  const auto cols = static_cast<int>(grid.betas.size());

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < grid.values.rows(); ++i)
    for (Eigen::Index j = 0; j < grid.values.cols(); ++j) {
      const double v = grid.values(i, j);
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  if (!std::isfinite(lo)) lo = hi = 0.0;

  std::string svg;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\">\n",
                cols * cell, rows * cell);
  svg += buf;
  svg += "<desc>scale_min=" + fmt(lo) + " scale_max=" + fmt(hi) + "</desc>\n";
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double v = grid.values(i, j);
      int r = 128, g = 128, b = 128;  // poisoned cells render gray
      if (std::isfinite(v)) {
        const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
        r = static_cast<int>(std::lround(68.0 + t * (253.0 - 68.0)));
        g = static_cast<int>(std::lround(1.0 + t * (231.0 - 1.0)));
        b = static_cast<int>(std::lround(84.0 + t * (37.0 - 84.0)));
      }
      std::snprintf(buf, sizeof(buf),
                    "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"rgb(%d,%d,%d)\"/>\n",
                    j * cell, i * cell, cell, cell, r, g, b);
      svg += buf;
    }
  }
  svg += "</svg>\n";
  return svg;
}

void write_heatmap(const LandscapeGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write heatmap: " + path.string());
  out << grid_to_svg(grid);
}

}  // namespace safesig::landscape
