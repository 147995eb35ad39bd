#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "safesig/landscape.hpp"
#include "safesig/rng.hpp"

using namespace safesig;
using namespace safesig::landscape;

TEST_CASE("direction pairs are orthonormal and deterministic") {
  for (std::uint64_t seed : {0ULL, 1ULL, 17ULL, 999ULL}) {
    const auto pair = sample_direction_pair(2, seed);
    CHECK(std::abs(pair.v1.norm() - 1.0) < 1e-12);
    CHECK(std::abs(pair.v2.norm() - 1.0) < 1e-12);
    CHECK(std::abs(pair.v1.dot(pair.v2)) < 1e-12);
  }
  const auto a = sample_direction_pair(8, 5);
  const auto b = sample_direction_pair(8, 5);
  CHECK(a.v1 == b.v1);
  CHECK(a.v2 == b.v2);
  CHECK_THROWS_AS(sample_direction_pair(1, 0), ConfigError);
}

TEST_CASE("direction coordinates average out over many seeds") {
  const Eigen::Index d = 1000;
  Vector mean = Vector::Zero(d);
  for (std::uint64_t seed = 0; seed < 100; ++seed)
    mean += sample_direction_pair(d, seed).v1;
  mean /= 100.0;
  CHECK(mean.cwiseAbs().maxCoeff() < 0.15);
}

TEST_CASE("broadcast perturbation shifts every row") {
  SUBCASE("zero matrix") {
    Vector v(2);
    v << 1, 1;
    const Matrix out = broadcast_perturb(Matrix::Zero(2, 2), v, 2.0);
    CHECK(out(0, 0) == 2.0);
    CHECK(out(0, 1) == 2.0);
    CHECK(out(1, 0) == 2.0);
    CHECK(out(1, 1) == 2.0);
  }
  SUBCASE("zero coefficient is the identity") {
    rng::Stream s(3);
    Matrix e(3, 4);
    for (Eigen::Index i = 0; i < 3; ++i)
      for (Eigen::Index j = 0; j < 4; ++j) e(i, j) = s.next_gaussian();
    const Matrix out = broadcast_perturb(e, s.gaussian_vector(4), 0.0);
    CHECK((out - e).norm() == 0.0);
  }
  SUBCASE("applying c then -c round-trips") {
    rng::Stream s(4);
    Matrix e(3, 4);
    for (Eigen::Index i = 0; i < 3; ++i)
      for (Eigen::Index j = 0; j < 4; ++j) e(i, j) = s.next_gaussian();
    const Vector v = s.gaussian_vector(4);
    const Matrix back = broadcast_perturb(broadcast_perturb(e, v, 1.7), v, -1.7);
    CHECK((back - e).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(broadcast_perturb(Matrix::Zero(2, 2), Vector::Ones(3), 1.0), DataError);
  }
}

TEST_CASE("grid identity, constants, and the quadratic closed form") {
  const auto pair = sample_direction_pair(6, 42);
  const Vector u = Vector::LinSpaced(6, -1.0, 1.0);

  SUBCASE("center cell equals f(u) exactly") {
    ScalarField f = [](const Vector& w) { return w.squaredNorm() + std::sin(w[0]); };
    const auto grid = evaluate_grid(f, u, pair, {-1, 0, 1}, {-2, 0, 2});
    CHECK(grid.center_value == f(u));
    CHECK(grid.values(1, 1) == f(u));
  }
  SUBCASE("constant function fills the grid") {
    const auto grid = evaluate_grid([](const Vector&) { return 3.5; }, u, pair, {-1, 0, 1},
                                    {-1, 0, 1});
    CHECK((grid.values.array() == 3.5).all());
  }
  SUBCASE("quadratic landscape through orthonormal directions is alpha^2 + beta^2") {
    std::vector<double> axis;
    for (int i = -10; i <= 10; ++i) axis.push_back(i);
    const auto grid = evaluate_grid([](const Vector& w) { return w.squaredNorm(); },
                                    Vector::Zero(6), pair, axis, axis);
    for (std::size_t i = 0; i < axis.size(); ++i)
      for (std::size_t j = 0; j < axis.size(); ++j) {
        const double expect = axis[i] * axis[i] + axis[j] * axis[j];
        CHECK(std::abs(grid.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                       expect) < 1e-10);
      }
  }
}

TEST_CASE("grid symmetry for even functions") {
  const auto pair = sample_direction_pair(5, 7);
  const Vector u = Vector::Ones(5);
  ScalarField f = [&](const Vector& w) { return (w - u).squaredNorm(); };  // even about u
  std::vector<double> axis = {-3, -1, 0, 1, 3};
  const auto grid = evaluate_grid(f, u, pair, axis, axis);
  const auto n = static_cast<Eigen::Index>(axis.size());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      CHECK(std::abs(grid.values(i, j) - grid.values(n - 1 - i, n - 1 - j)) < 1e-12);
}

TEST_CASE("grid records poisoned cells instead of aborting") {
  const auto pair = sample_direction_pair(3, 1);
  ScalarField f = [](const Vector& w) {
    return w[0] > 0.5 ? std::numeric_limits<double>::quiet_NaN() : w[0];
  };
  const auto grid = evaluate_grid(f, Vector::Zero(3), pair, {-1, 0, 1}, {0.0});
  int nan_cells = 0;
  for (Eigen::Index i = 0; i < grid.values.rows(); ++i)
    if (std::isnan(grid.values(i, 0))) ++nan_cells;
  CHECK(nan_cells == static_cast<int>(grid.poisoned.size()));
}

TEST_CASE("grid axes must be increasing and contain zero") {
  const auto pair = sample_direction_pair(3, 1);
  ScalarField f = [](const Vector& w) { return w[0]; };
  CHECK_THROWS_AS(evaluate_grid(f, Vector::Zero(3), pair, {1, 0}, {0.0}), ConfigError);
  CHECK_THROWS_AS(evaluate_grid(f, Vector::Zero(3), pair, {-1, 1}, {0.0}), ConfigError);
}

TEST_CASE("evaluation count contracts") {
  const auto pair = sample_direction_pair(4, 9);
  int grid_calls = 0;
  ScalarField counted = [&](const Vector& w) {
    ++grid_calls;
    return w.norm();
  };
  (void)evaluate_grid(counted, Vector::Zero(4), pair, {-1, 0, 1}, {-1, 0, 1, 2});
  CHECK(grid_calls == 12);

  int zoo_calls = 0;
  ScalarField zoo_counted = [&](const Vector& w) {
    ++zoo_calls;
    return w.squaredNorm();
  };
  (void)zoo_gradient(zoo_counted, Vector::Ones(4), {1e-3, 25, 3});
  CHECK(zoo_calls == 26);
}

TEST_CASE("zoo gradient of a constant is exactly zero") {
  const auto est = zoo_gradient([](const Vector&) { return 2.0; }, Vector::Ones(5), {1e-3, 40, 1});
  CHECK(est.norm == 0.0);
  CHECK(est.gradient.isZero(0.0));
}

TEST_CASE("zoo gradient recovers a linear functional") {
  Vector a(2);
  a << 3, 4;
  ScalarField f = [&](const Vector& w) { return a.dot(w); };
  const auto est = zoo_gradient(f, Vector::Zero(2), {1e-4, 20000, 7});
  CHECK((est.gradient - a).norm() / a.norm() < 0.05);
  CHECK(est.norm == doctest::Approx(5.0).epsilon(0.05));
}

TEST_CASE("zoo gradient matches the analytic quadratic gradient") {
  // f(w) = ||w||^2 / 2 at u = e1: the gradient is u itself, norm 1.
  ScalarField f = [](const Vector& w) { return 0.5 * w.squaredNorm(); };
  const auto est = zoo_gradient(f, Vector::Unit(8, 0), {1e-4, 50000, 11});
  CHECK(std::abs(est.norm - 1.0) < 0.05);
}

TEST_CASE("zoo error decreases with the sample budget") {
  Vector a(8);
  a << 1, -2, 0.5, 3, -1, 0.25, 2, -0.5;
  ScalarField f = [&](const Vector& w) { return a.dot(w); };
  double prev_err = 1e9;
  for (int budget : {100, 1000, 10000}) {
    double err = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto est = zoo_gradient(f, Vector::Zero(8), {1e-4, budget, seed});
      err += (est.gradient - a).norm() / a.norm();
    }
    err /= 20.0;
    CHECK(err < prev_err);
    prev_err = err;
  }
}

TEST_CASE("zoo propagates non-finite evaluations as errors") {
  ScalarField f = [](const Vector& w) {
    return w.isZero(0.0) ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(zoo_gradient(f, Vector::Zero(3), {1e-2, 4, 0}), DataError);
  CHECK_THROWS_AS(zoo_gradient([](const Vector&) { return 1.0; }, Vector::Zero(3), {-1.0, 4, 0}),
                  ConfigError);
}

TEST_CASE("broadcast offset field composes with matrix losses") {
  Matrix e(2, 3);
  e << 1, 0, 0, 0, 1, 0;
  auto field = broadcast_offset_field(e, [](const Matrix& m) { return m.sum(); });
  Vector w(3);
  w << 0.5, 0.5, 0.5;
  CHECK(field(Vector::Zero(3)) == doctest::Approx(2.0));
  CHECK(field(w) == doctest::Approx(2.0 + 2 * 1.5));
}

TEST_CASE("grid CSV layout and heatmap determinism") {
  const auto pair = sample_direction_pair(3, 2);
  const auto grid = evaluate_grid([](const Vector& w) { return w[0]; }, Vector::Zero(3), pair,
                                  {-1, 0}, {0.0, 1.0});
  const auto csv = grid_to_csv(grid);
  CHECK(csv.rfind("alpha\\beta,0,1\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  const auto svg1 = grid_to_svg(grid);
  const auto svg2 = grid_to_svg(grid);
  CHECK(svg1 == svg2);
  CHECK(svg1.find("scale_min=") != std::string::npos);
  CHECK(svg1.find("<rect") != std::string::npos);

  // A constant grid renders as a single color.
  const auto flat = evaluate_grid([](const Vector&) { return 1.0; }, Vector::Zero(3), pair,
                                  {-1, 0}, {0.0, 1.0});
  const auto svg = grid_to_svg(flat);
  const auto first = svg.find("fill=\"rgb(");
  const auto color = svg.substr(first, svg.find(')', first) - first + 1);
  std::size_t pos = 0;
  int count = 0;
  while ((pos = svg.find(color, pos)) != std::string::npos) {
    ++count;
    pos += color.size();
  }
  CHECK(count == 4);
}
