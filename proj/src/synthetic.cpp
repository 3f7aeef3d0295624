// SPDX-License-Identifier: Apache-2.0
#include "kdx/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "kdx/error.hpp"
#include "kdx/rng.hpp"

namespace kdx {

namespace {

constexpr double kPi = std::numbers::pi;

// Row-shuffles a freshly generated dataset so classes are interleaved.
Dataset finish(std::vector<double> features, std::vector<int> labels, std::size_t cols,
               int classes, Rng& rng) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  Dataset raw;
  raw.features = std::move(features);
  raw.labels = std::move(labels);
  raw.rows = n;
  raw.cols = cols;
  raw.class_count = classes;
  Dataset out = subset(raw, order);
  out.validate();
  return out;
}

int coin(Rng& rng) { return std::bernoulli_distribution(0.5)(rng) ? 1 : 0; }

}  // namespace

const char* simulation_kind_name(SimulationKind kind) noexcept {
  switch (kind) {
    case SimulationKind::gaussian_xor: return "xor";
    case SimulationKind::spiral: return "spiral";
    case SimulationKind::circle: return "circle";
    case SimulationKind::sinewave: return "sinewave";
    case SimulationKind::polynomial: return "polynomial";
    case SimulationKind::trunk: return "trunk";
  }
  return "unknown";
}

SimulationKind parse_simulation_kind(const std::string& name) {
  for (auto kind : {SimulationKind::gaussian_xor, SimulationKind::spiral, SimulationKind::circle,
                    SimulationKind::sinewave, SimulationKind::polynomial, SimulationKind::trunk}) {
    if (name == simulation_kind_name(kind)) return kind;
  }
  fail(ErrorCode::invalid_input, "unknown simulation kind '" + name + "'");
}

Dataset gen_xor(std::size_t n, std::uint64_t seed) {
  require(n >= 2, "xor needs n >= 2");
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, kXorStd);
  std::vector<double> features;
  std::vector<int> labels;
  features.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = coin(rng);
    const double sign = coin(rng) == 0 ? 1.0 : -1.0;
    const double cx = 0.5 * sign;
    const double cy = label == 0 ? 0.5 * sign : -0.5 * sign;
    features.push_back(cx + noise(rng));
    features.push_back(cy + noise(rng));
    labels.push_back(label);
  }
  return finish(std::move(features), std::move(labels), 2, 2, rng);
}

Dataset gen_spiral(std::size_t n, int class_count, double turns, std::uint64_t seed) {
  require(class_count >= 2, "spiral needs at least two classes");
  require(n >= static_cast<std::size_t>(class_count), "spiral needs n >= class count");
  require(turns > 0.0, "spiral turns must be positive");
  Rng rng(seed);
  std::uniform_int_distribution<int> pick(0, class_count - 1);
  std::vector<std::size_t> per_class(static_cast<std::size_t>(class_count), 0);
  for (std::size_t i = 0; i < n; ++i) ++per_class[static_cast<std::size_t>(pick(rng))];

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> angle_noise(0.0, std::sqrt(kSpiralAngleVariance));
  const double span = 4.0 * kPi * turns / static_cast<double>(class_count);
  std::vector<double> features;
  std::vector<int> labels;
  features.reserve(2 * n);
  for (int k = 0; k < class_count; ++k) {
    const std::size_t m = per_class[static_cast<std::size_t>(k)];
    std::vector<double> radii(m);
    for (auto& r : radii) r = unit(rng);
    std::sort(radii.begin(), radii.end());
    const double start = span * k;
    for (std::size_t i = 0; i < m; ++i) {
      const double frac = m > 1 ? static_cast<double>(i) / static_cast<double>(m - 1) : 0.0;
      const double theta = start + span * frac + angle_noise(rng);
      features.push_back(radii[i] * std::cos(theta));
      features.push_back(radii[i] * std::sin(theta));
      labels.push_back(k);
    }
  }
  return finish(std::move(features), std::move(labels), 2, class_count, rng);
}

Dataset gen_circle(std::size_t n, std::uint64_t seed) {
  require(n >= 2, "circle needs n >= 2");
  Rng rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
  std::normal_distribution<double> noise(0.0, std::sqrt(kCircleRadiusVariance));
  std::vector<double> features;
  std::vector<int> labels;
  features.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = coin(rng);
    const double r = (label == 0 ? 0.75 : 1.0) + noise(rng);
    const double theta = angle(rng);
    features.push_back(r * std::cos(theta));
    features.push_back(r * std::sin(theta));
    labels.push_back(label);
  }
  return finish(std::move(features), std::move(labels), 2, 2, rng);
}

namespace {

template <typename Curve0, typename Curve1>
Dataset gen_curves(std::size_t n, std::uint64_t seed, Curve0 curve0, Curve1 curve1) {
  require(n >= 2, "curve simulations need n >= 2");
  Rng rng(seed);
  std::uniform_real_distribution<double> xs(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, std::sqrt(kWaveVariance));
  std::vector<double> features;
  std::vector<int> labels;
  features.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = coin(rng);
    const double x = xs(rng);
    features.push_back(x);
    features.push_back((label == 0 ? curve0(x) : curve1(x)) + noise(rng));
    labels.push_back(label);
  }
  return finish(std::move(features), std::move(labels), 2, 2, rng);
}

}  // namespace

Dataset gen_sinewave(std::size_t n, std::uint64_t seed) {
  return gen_curves(
      n, seed, [](double x) { return std::cos(kPi * x); },
      [](double x) { return std::sin(kPi * x); });
}

Dataset gen_polynomial(std::size_t n, std::uint64_t seed) {
  return gen_curves(
      n, seed, [](double x) { return x; }, [](double x) { return x * x * x; });
}

std::vector<double> trunk_mean(std::size_t dim) {
  std::vector<double> mu(dim);
  for (std::size_t i = 0; i < dim; ++i) mu[i] = std::sqrt(1.0 / static_cast<double>(i + 1));
  return mu;
}

Dataset gen_trunk(std::size_t n, std::size_t dim, std::uint64_t seed) {
  require(n >= 2, "trunk needs n >= 2");
  require(dim >= 1, "trunk needs d >= 1");
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto mu = trunk_mean(dim);
  std::vector<double> features;
  std::vector<int> labels;
  features.reserve(dim * n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = coin(rng);
    const double sign = label == 0 ? 1.0 : -1.0;
    for (std::size_t j = 0; j < dim; ++j) features.push_back(sign * mu[j] + noise(rng));
    labels.push_back(label);
  }
  return finish(std::move(features), std::move(labels), dim, 2, rng);
}

Dataset generate(const SimulationSpec& spec) {
  switch (spec.kind) {
    case SimulationKind::gaussian_xor: return gen_xor(spec.n, spec.seed);
    case SimulationKind::spiral: return gen_spiral(spec.n, spec.class_count, spec.turns, spec.seed);
    case SimulationKind::circle: return gen_circle(spec.n, spec.seed);
    case SimulationKind::sinewave: return gen_sinewave(spec.n, spec.seed);
    case SimulationKind::polynomial: return gen_polynomial(spec.n, spec.seed);
    case SimulationKind::trunk: return gen_trunk(spec.n, spec.dimension, spec.seed);
  }
  fail(ErrorCode::invalid_input, "unknown simulation kind");
}

bool has_analytic_posterior(SimulationKind kind) noexcept {
  return kind == SimulationKind::gaussian_xor || kind == SimulationKind::trunk;
}

namespace {

std::size_t simulation_dim(const SimulationSpec& spec) {
  return spec.kind == SimulationKind::trunk ? spec.dimension : 2;
}

int simulation_classes(const SimulationSpec& spec) {
  return spec.kind == SimulationKind::spiral ? spec.class_count : 2;
}

}  // namespace

std::vector<double> true_posterior(const SimulationSpec& spec, std::span<const double> x) {
  require(has_analytic_posterior(spec.kind),
          std::string("no closed-form posterior for ") + simulation_kind_name(spec.kind));
  require(x.size() == simulation_dim(spec), "point dimension does not match the simulation");
  if (spec.kind == SimulationKind::trunk) {
    const auto mu = trunk_mean(spec.dimension);
    double dot = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) dot += mu[j] * x[j];
    // log N(x; mu, I) - log N(x; -mu, I) = 2 mu.x
    const double p0 = 1.0 / (1.0 + std::exp(-2.0 * dot));
    return {p0, 1.0 - p0};
  }
  auto log_kernel = [&](double cx, double cy) {
    const double dx = x[0] - cx, dy = x[1] - cy;
    return -(dx * dx + dy * dy) / (2.0 * kXorStd * kXorStd);
  };
  auto log_mix = [](double a, double b) {
    const double hi = std::max(a, b);
    return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
  };
  const double l0 = log_mix(log_kernel(0.5, 0.5), log_kernel(-0.5, -0.5));
  const double l1 = log_mix(log_kernel(0.5, -0.5), log_kernel(-0.5, 0.5));
  const double p0 = 1.0 / (1.0 + std::exp(l1 - l0));
  return {p0, 1.0 - p0};
}

PosteriorOracle PosteriorOracle::analytic(const SimulationSpec& spec) {
  require(has_analytic_posterior(spec.kind),
          std::string("no closed-form posterior for ") + simulation_kind_name(spec.kind));
  PosteriorOracle oracle;
  oracle.spec_ = spec;
  return oracle;
}

PosteriorOracle PosteriorOracle::numeric(const SimulationSpec& spec, std::size_t draws,
                                         std::uint64_t seed) {
  require(draws >= 10'000, "numeric posterior oracle needs at least 10^4 draws");
  require(simulation_dim(spec) == 2, "numeric posterior oracle supports 2-D simulations only");
  PosteriorOracle oracle;
  oracle.spec_ = spec;
  oracle.numeric_ = true;
  oracle.grid_ = 200;
  oracle.extent_ = 2.0;
  const std::size_t g = oracle.grid_;
  const auto classes = static_cast<std::size_t>(simulation_classes(spec));

  SimulationSpec draw_spec = spec;
  draw_spec.n = draws;
  draw_spec.seed = seed;
  const Dataset sample = generate(draw_spec);
  std::vector<double> hist(classes * g * g, 0.0);
  const double cell = 2.0 * oracle.extent_ / static_cast<double>(g);
  for (std::size_t i = 0; i < sample.rows; ++i) {
    auto p = sample.row(i);
    const double u = (p[0] + oracle.extent_) / cell;
    const double v = (p[1] + oracle.extent_) / cell;
    if (u < 0.0 || v < 0.0 || u >= static_cast<double>(g) || v >= static_cast<double>(g)) continue;
    const auto iu = static_cast<std::size_t>(u), iv = static_cast<std::size_t>(v);
    hist[static_cast<std::size_t>(sample.labels[i]) * g * g + iu * g + iv] += 1.0;
  }

  // Separable Gaussian blur, sigma = 1.5 cells, truncated at 4 sigma.
  constexpr double sigma = 1.5;
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
    taps[static_cast<std::size_t>(t + radius)] = std::exp(-0.5 * (t * t) / (sigma * sigma));
  }
  const auto gi = static_cast<std::ptrdiff_t>(g);
  std::vector<double> tmp(g * g);
  for (std::size_t k = 0; k < classes; ++k) {
    double* plane = hist.data() + k * g * g;
    for (std::ptrdiff_t a = 0; a < gi; ++a) {
      for (std::ptrdiff_t b = 0; b < gi; ++b) {
        double s = 0.0;
        for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
          const auto bb = b + t;
          if (bb >= 0 && bb < gi) s += taps[static_cast<std::size_t>(t + radius)] * plane[a * gi + bb];
        }
        tmp[static_cast<std::size_t>(a * gi + b)] = s;
      }
    }
    for (std::ptrdiff_t a = 0; a < gi; ++a) {
      for (std::ptrdiff_t b = 0; b < gi; ++b) {
        double s = 0.0;
        for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
          const auto aa = a + t;
          if (aa >= 0 && aa < gi) s += taps[static_cast<std::size_t>(t + radius)] * tmp[static_cast<std::size_t>(aa * gi + b)];
        }
        plane[a * gi + b] = s;
      }
    }
  }
  oracle.density_ = std::move(hist);
  return oracle;
}

std::vector<double> PosteriorOracle::operator()(std::span<const double> x) const {
  if (!numeric_) return true_posterior(spec_, x);
  require(x.size() == 2, "numeric posterior oracle expects 2-D points");
  const auto classes = static_cast<std::size_t>(simulation_classes(spec_));
  std::vector<double> uniform(classes, 1.0 / static_cast<double>(classes));
  const double cell = 2.0 * extent_ / static_cast<double>(grid_);
  const double u = (x[0] + extent_) / cell;
  const double v = (x[1] + extent_) / cell;
  if (!(u >= 0.0 && v >= 0.0 && u < static_cast<double>(grid_) && v < static_cast<double>(grid_))) {
    return uniform;
  }
  const auto idx = static_cast<std::size_t>(u) * grid_ + static_cast<std::size_t>(v);
  std::vector<double> post(classes);
  double total = 0.0;
  for (std::size_t k = 0; k < classes; ++k) {
    post[k] = density_[k * grid_ * grid_ + idx];
    total += post[k];
  }
  if (total <= 0.0) return uniform;
  for (auto& p : post) p /= total;
  return post;
}

std::vector<double> sample_hypersphere(std::size_t dim, double radius, std::size_t count,
                                       std::uint64_t seed) {
  require(dim >= 1, "hypersphere dimension must be positive");
  require(radius > 0.0 && std::isfinite(radius), "hypersphere radius must be positive");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> points(dim * count);
  for (std::size_t i = 0; i < count; ++i) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        points[i * dim + j] = normal(rng);
        norm += points[i * dim + j] * points[i * dim + j];
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < dim; ++j) points[i * dim + j] *= radius / norm;
  }
  return points;
}

NormalizedDataset normalize_max_l2(const Dataset& data) {
  double max_norm = 0.0;
  for (std::size_t i = 0; i < data.rows; ++i) {
    double sq = 0.0;
    for (double v : data.row(i)) sq += v * v;
    max_norm = std::max(max_norm, std::sqrt(sq));
  }
  require(max_norm > 0.0, "cannot normalize: every point is zero");
  NormalizedDataset out{data, max_norm};
  for (auto& v : out.data.features) v /= max_norm;
  return out;
}

}  // namespace kdx
