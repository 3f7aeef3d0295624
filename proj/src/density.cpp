// SPDX-License-Identifier: Apache-2.0
#include "kdx/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kdx/error.hpp"
#include "parallel.hpp"

namespace kdx {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

void check_query(const KdxModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim) {
    fail(ErrorCode::invalid_input, "point has dimension " + std::to_string(x.size()) +
                                       ", model expects " + std::to_string(model.input_dim));
  }
  for (double v : x) require(std::isfinite(v), "point has a non-finite coordinate");
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

}  // namespace

const char* distance_mode_name(DistanceMode mode) noexcept {
  return mode == DistanceMode::euclidean ? "euclidean" : "geodesic";
}

DistanceMode parse_distance_mode(const std::string& name) {
  if (name == "euclidean") return DistanceMode::euclidean;
  if (name == "geodesic") return DistanceMode::geodesic;
  fail(ErrorCode::invalid_input, "unknown distance mode '" + name + "'");
}

GaussianFit weighted_mle_gaussian(std::span<const double> points, std::size_t dim,
                                  std::span<const double> weights, double lambda) {
  require(dim >= 1, "Gaussian dimension must be positive");
  require(points.size() == weights.size() * dim, "points and weights disagree in count");
  require(lambda > 0.0, "lambda must be positive");
  double total = 0.0;
  for (double w : weights) {
    require(w >= 0.0 && std::isfinite(w), "weights must be finite and non-negative");
    total += w;
  }
  require(total > 0.0, "weights sum to zero");

  GaussianFit fit;
  fit.center.assign(dim, 0.0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) fit.center[j] += weights[i] * points[i * dim + j];
  }
  for (auto& c : fit.center) c /= total;
  fit.variance.assign(dim, lambda);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double diff = points[i * dim + j] - fit.center[j];
      fit.variance[j] += weights[i] * diff * diff;
    }
  }
  for (auto& v : fit.variance) v /= total;
  return fit;
}

double KdxModel::bias() const { return std::exp(log_bias); }

double KdxModel::log_density_floor() const {
  return log_bias - std::log(std::log(static_cast<double>(sample_count)));
}

double default_log_bias(std::size_t dim) {
  return -std::pow(10.0, std::sqrt(static_cast<double>(dim)));
}

KdxModel fit_kdx(const Dataset& data, const PolytopeGrouping& grouping,
                 const WeightMatrix& weights, const KdxParams& params) {
  data.validate();
  require(data.rows >= 2, "fitting needs at least two samples");
  require(params.lambda > 0.0, "lambda must be positive");
  require(grouping.polytope_ids.size() == data.rows, "grouping does not match the dataset");
  const std::size_t p = grouping.populated_count();
  require(weights.entries.size == p, "weight matrix does not match the polytope count");
  const std::size_t d = data.cols;
  const auto classes = static_cast<std::size_t>(data.class_count);

  // Per-polytope sufficient statistics: member count, class counts, mean and
  // within-polytope scatter.
  std::vector<double> counts(p, 0.0), class_counts(p * classes, 0.0);
  std::vector<double> means(p * d, 0.0), scatter(p * d, 0.0);
  for (std::size_t i = 0; i < data.rows; ++i) {
    const std::size_t s = grouping.polytope_ids[i];
    counts[s] += 1.0;
    class_counts[s * classes + static_cast<std::size_t>(data.labels[i])] += 1.0;
    auto x = data.row(i);
    for (std::size_t j = 0; j < d; ++j) means[s * d + j] += x[j];
  }
  for (std::size_t s = 0; s < p; ++s) {
    for (std::size_t j = 0; j < d; ++j) means[s * d + j] /= counts[s];
  }
  for (std::size_t i = 0; i < data.rows; ++i) {
    const std::size_t s = grouping.polytope_ids[i];
    auto x = data.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x[j] - means[s * d + j];
      scatter[s * d + j] += diff * diff;
    }
  }

  KdxModel model;
  model.lambda = params.lambda;
  model.log_bias = params.log_bias.value_or(default_log_bias(d));
  require(std::isfinite(model.log_bias), "log bias must be finite");
  model.sample_count = data.rows;
  model.input_dim = d;
  model.distance_mode = params.distance_mode;
  model.class_priors = class_priors(data);
  model.polytopes.resize(p);

  detail::parallel_for(p, [&](std::size_t r) {
    auto cols = weights.entries.row_columns(r);
    auto vals = weights.entries.row_values(r);
    PolytopeModel& poly = model.polytopes[r];
    poly.representative = grouping.representatives[r];
    poly.member_count = static_cast<std::size_t>(counts[r]);
    poly.weighted_class_counts.assign(classes, 0.0);
    poly.center.assign(d, 0.0);
    double total = 0.0;
    for (std::size_t e = 0; e < cols.size(); ++e) {
      const std::size_t s = cols[e];
      const double w = vals[e];
      total += w * counts[s];
      for (std::size_t y = 0; y < classes; ++y) {
        poly.weighted_class_counts[y] += w * class_counts[s * classes + y];
      }
      for (std::size_t j = 0; j < d; ++j) poly.center[j] += w * counts[s] * means[s * d + j];
    }
    require(total > 0.0, "polytope " + std::to_string(r) + " has zero total weight");
    for (auto& c : poly.center) c /= total;
    // Pooled scatter about the weighted center: within-polytope scatter plus
    // the between-polytope term n_s (m_s - mu)^2.
    poly.variance.assign(d, params.lambda);
    for (std::size_t e = 0; e < cols.size(); ++e) {
      const std::size_t s = cols[e];
      const double w = vals[e];
      for (std::size_t j = 0; j < d; ++j) {
        const double shift = means[s * d + j] - poly.center[j];
        poly.variance[j] += w * (scatter[s * d + j] + counts[s] * shift * shift);
      }
    }
    for (auto& v : poly.variance) v /= total;
    poly.total_weight = total;
  });

  model.class_weight_totals.assign(classes, 0.0);
  for (const auto& poly : model.polytopes) {
    for (std::size_t y = 0; y < classes; ++y) {
      model.class_weight_totals[y] += poly.weighted_class_counts[y];
    }
  }
  return model;
}

double log_gaussian_density(std::span<const double> x, std::span<const double> center,
                            std::span<const double> variance) {
  constexpr double log_two_pi = 1.8378770664093454836;  // ln(2 pi)
  double log_density = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double diff = x[j] - center[j];
    log_density -= 0.5 * (log_two_pi + std::log(variance[j]) + diff * diff / variance[j]);
  }
  return log_density;
}

double polytope_distance(const KdxModel& model, std::span<const double> x, std::size_t r,
                         const MembershipSignature* signature) {
  check_query(model, x);
  require(r < model.polytopes.size(), "polytope index out of range");
  if (model.distance_mode == DistanceMode::euclidean) {
    return std::sqrt(squared_distance(x, model.polytopes[r].center));
  }
  require(signature != nullptr, "geodesic distance needs the query point's signature");
  return geodesic_distance(*signature, model.polytopes[r].representative);
}

std::size_t select_polytope(const KdxModel& model, std::span<const double> x,
                            const MembershipSignature* signature) {
  check_query(model, x);
  require(!model.polytopes.empty(), "model has no polytopes");
  std::size_t best = 0;
  double best_sq = std::numeric_limits<double>::infinity();
  if (model.distance_mode == DistanceMode::euclidean) {
    for (std::size_t r = 0; r < model.polytopes.size(); ++r) {
      const double sq = squared_distance(x, model.polytopes[r].center);
      if (sq < best_sq) {
        best_sq = sq;
        best = r;
      }
    }
    return best;
  }
  require(signature != nullptr, "geodesic distance needs the query point's signature");
  double best_kernel = -1.0;
  for (std::size_t r = 0; r < model.polytopes.size(); ++r) {
    const double k = signature_kernel(*signature, model.polytopes[r].representative);
    if (k < best_kernel) continue;
    const double sq = squared_distance(x, model.polytopes[r].center);
    if (k > best_kernel || sq < best_sq) {
      best_kernel = k;
      best_sq = sq;
      best = r;
    }
  }
  return best;
}

namespace {

struct LogDensities {
  std::size_t polytope = 0;
  std::vector<double> log_tilde;  // log f~_y
};

LogDensities log_class_densities(const KdxModel& model, std::span<const double> x,
                                 const MembershipSignature* signature) {
  LogDensities out;
  out.polytope = select_polytope(model, x, signature);
  const auto& poly = model.polytopes[out.polytope];
  const double log_g = log_gaussian_density(x, poly.center, poly.variance);
  out.log_tilde.assign(model.class_priors.size(), kNegInf);
  for (std::size_t y = 0; y < out.log_tilde.size(); ++y) {
    const double num = poly.weighted_class_counts[y];
    const double den = model.class_weight_totals[y];
    if (num > 0.0 && den > 0.0) out.log_tilde[y] = std::log(num) - std::log(den) + log_g;
  }
  return out;
}

}  // namespace

std::vector<double> class_conditional_density(const KdxModel& model, std::span<const double> x,
                                              const MembershipSignature* signature) {
  auto logs = log_class_densities(model, x, signature);
  std::vector<double> out(logs.log_tilde.size());
  for (std::size_t y = 0; y < out.size(); ++y) out[y] = std::exp(logs.log_tilde[y]);
  return out;
}

PosteriorResult posterior(const KdxModel& model, std::span<const double> x,
                          const MembershipSignature* signature) {
  auto logs = log_class_densities(model, x, signature);
  const double floor = model.log_density_floor();
  const std::size_t classes = logs.log_tilde.size();
  PosteriorResult result;
  result.selected_polytope = logs.polytope;
  result.class_conditional_densities.resize(classes);
  std::vector<double> log_joint(classes, kNegInf);
  double hi = kNegInf;
  for (std::size_t y = 0; y < classes; ++y) {
    const double log_hat = log_add_exp(logs.log_tilde[y], floor);
    result.class_conditional_densities[y] = std::exp(log_hat);
    if (model.class_priors[y] > 0.0) log_joint[y] = log_hat + std::log(model.class_priors[y]);
    hi = std::max(hi, log_joint[y]);
  }
  result.posteriors.resize(classes);
  double total = 0.0;
  for (std::size_t y = 0; y < classes; ++y) {
    result.posteriors[y] = log_joint[y] == kNegInf ? 0.0 : std::exp(log_joint[y] - hi);
    total += result.posteriors[y];
  }
  for (auto& g : result.posteriors) g /= total;
  result.predicted_class = static_cast<int>(
      std::max_element(result.posteriors.begin(), result.posteriors.end()) -
      result.posteriors.begin());
  return result;
}

}  // namespace kdx
