// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kdx/dataset.hpp"
#include "kdx/kernel.hpp"
#include "kdx/signature.hpp"

namespace kdx {

enum class DistanceMode { euclidean, geodesic };

const char* distance_mode_name(DistanceMode mode) noexcept;
DistanceMode parse_distance_mode(const std::string& name);

struct GaussianFit {
  std::vector<double> center;
  std::vector<double> variance;  // diagonal
};

/// Weighted maximum likelihood diagonal Gaussian:
///   center      = sum_i w_i x_i / sum_i w_i
///   variance[j] = (sum_i w_i (x_ij - center_j)^2 + lambda) / sum_i w_i
/// `points` is row-major with `dim` columns.
GaussianFit weighted_mle_gaussian(std::span<const double> points, std::size_t dim,
                                  std::span<const double> weights, double lambda);

struct PolytopeModel {
  std::vector<double> center;
  std::vector<double> variance;
  std::vector<double> weighted_class_counts;
  MembershipSignature representative;
  std::size_t member_count = 0;
  double total_weight = 0.0;  // sum of per-sample weights used in the fit
};

/// A fitted kernel density forest or network over the populated polytopes of
/// its parent learner. The bias b is kept as log(b) so that tiny defaults
/// such as exp(-10^sqrt(d)) stay representable.
struct KdxModel {
  std::vector<PolytopeModel> polytopes;
  std::vector<double> class_priors;
  std::vector<double> class_weight_totals;
  double log_bias = 0.0;
  double lambda = 1e-6;
  std::size_t sample_count = 0;
  std::size_t input_dim = 0;
  DistanceMode distance_mode = DistanceMode::euclidean;

  int class_count() const noexcept { return static_cast<int>(class_priors.size()); }
  double bias() const;
  /// log of the additive density floor b / ln(n).
  double log_density_floor() const;
};

/// Default bias exponent: log b = -10^sqrt(d).
double default_log_bias(std::size_t dim);

struct KdxParams {
  double lambda = 1e-6;
  std::optional<double> log_bias;  // defaults to default_log_bias(d)
  DistanceMode distance_mode = DistanceMode::euclidean;
};

/// Fits one Gaussian per populated polytope using per-sample weights
/// w[r, polytope(i)] and accumulates w~_ry = sum_s w_rs n_sy.
KdxModel fit_kdx(const Dataset& data, const PolytopeGrouping& grouping,
                 const WeightMatrix& weights, const KdxParams& params);

struct PosteriorResult {
  std::vector<double> posteriors;
  int predicted_class = 0;
  std::size_t selected_polytope = 0;
  std::vector<double> class_conditional_densities;  // f^_y = f~_y + b / ln n
};

/// Distance from x to polytope r: Euclidean distance to its center, or
/// 1 - K(signature, representative) in geodesic mode.
double polytope_distance(const KdxModel& model, std::span<const double> x, std::size_t r,
                         const MembershipSignature* signature = nullptr);

/// Nearest polytope. Geodesic ties fall back to Euclidean distance, then to
/// the lowest id.
std::size_t select_polytope(const KdxModel& model, std::span<const double> x,
                            const MembershipSignature* signature = nullptr);

/// f~_y(x) = (w~_ry / w~_y) G(x; mu_r, Sigma_r) at the nearest polytope r.
std::vector<double> class_conditional_density(const KdxModel& model, std::span<const double> x,
                                              const MembershipSignature* signature = nullptr);

PosteriorResult posterior(const KdxModel& model, std::span<const double> x,
                          const MembershipSignature* signature = nullptr);

/// log G(x; center, diag(variance)).
double log_gaussian_density(std::span<const double> x, std::span<const double> center,
                            std::span<const double> variance);

}  // namespace kdx
