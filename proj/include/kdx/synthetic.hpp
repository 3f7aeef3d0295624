// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kdx/dataset.hpp"

namespace kdx {

enum class SimulationKind { gaussian_xor, spiral, circle, sinewave, polynomial, trunk };

const char* simulation_kind_name(SimulationKind kind) noexcept;
SimulationKind parse_simulation_kind(const std::string& name);

struct SimulationSpec {
  SimulationKind kind = SimulationKind::gaussian_xor;
  std::size_t n = 1000;
  std::size_t dimension = 2;  // trunk only
  int class_count = 2;        // spiral only
  double turns = 2.5;         // spiral only
  std::uint64_t seed = 0;

  bool operator==(const SimulationSpec&) const = default;
};

/// Class 0 from Gaussians at (0.5, 0.5) and (-0.5, -0.5), class 1 from
/// (0.5, -0.5) and (-0.5, 0.5); isotropic std 0.25; labels ~ Bernoulli(1/2).
Dataset gen_xor(std::size_t n, std::uint64_t seed);

/// Class counts ~ multinomial(n, 1/K). Class k takes sorted r ~ U[0, 1] paired
/// with angles evenly spaced on [4 pi k t / K, 4 pi (k + 1) t / K], plus
/// N(0, 0.09) angle noise.
Dataset gen_spiral(std::size_t n, int class_count, double turns, std::uint64_t seed);

/// Radius 0.75 (class 0) or 1 (class 1) plus N(0, 0.01) noise, uniform angle.
Dataset gen_circle(std::size_t n, std::uint64_t seed);

/// x ~ U[-1, 1]; y = cos(pi x) (class 0) or sin(pi x) (class 1) plus N(0, 0.01).
Dataset gen_sinewave(std::size_t n, std::uint64_t seed);

/// x ~ U[-1, 1]; y = x (class 0) or x^3 (class 1) plus N(0, 0.01).
Dataset gen_polynomial(std::size_t n, std::uint64_t seed);

/// N(+mu, I) for class 0 and N(-mu, I) for class 1, mu_i = (1 / i)^(1/2).
Dataset gen_trunk(std::size_t n, std::size_t dim, std::uint64_t seed);

std::vector<double> trunk_mean(std::size_t dim);

Dataset generate(const SimulationSpec& spec);

inline constexpr double kXorStd = 0.25;
inline constexpr double kSpiralAngleVariance = 0.09;
inline constexpr double kCircleRadiusVariance = 0.01;
inline constexpr double kWaveVariance = 0.01;

bool has_analytic_posterior(SimulationKind kind) noexcept;

/// Exact Bayes posterior of the generator (gaussian_xor and trunk only).
std::vector<double> true_posterior(const SimulationSpec& spec, std::span<const double> x);

/// Ground-truth posterior, analytic where a closed form exists, otherwise a
/// Monte Carlo estimate: `draws` labeled generator samples binned on a grid
/// over [-extent, extent]^2 and smoothed with a Gaussian filter. Outside the
/// grid, or where no class has mass, the generator priors are returned.
class PosteriorOracle {
 public:
  static PosteriorOracle analytic(const SimulationSpec& spec);
  static PosteriorOracle numeric(const SimulationSpec& spec, std::size_t draws = 1'000'000,
                                 std::uint64_t seed = 0);

  std::vector<double> operator()(std::span<const double> x) const;
  bool is_numeric() const noexcept { return numeric_; }

 private:
  SimulationSpec spec_;
  bool numeric_ = false;
  std::size_t grid_ = 0;
  double extent_ = 0.0;
  std::vector<double> density_;  // class-major, grid_ x grid_ per class
};

/// `count` points uniform on the sphere of `radius` in R^d (row-major).
std::vector<double> sample_hypersphere(std::size_t dim, double radius, std::size_t count,
                                       std::uint64_t seed);

struct NormalizedDataset {
  Dataset data;
  double scale = 1.0;
};

/// Divides every row by the maximum row l2 norm.
NormalizedDataset normalize_max_l2(const Dataset& data);

}  // namespace kdx
