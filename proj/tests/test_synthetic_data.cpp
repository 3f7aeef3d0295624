// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "kdx/error.hpp"
#include "kdx/rng.hpp"
#include "kdx/synthetic.hpp"

using namespace kdx;

namespace {

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t count = 0;
};

template <class F>
Moments moments(const Dataset& data, int label, F value) {
  Moments m;
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < data.rows; ++i) {
    if (data.labels[i] != label) continue;
    const double v = value(data.row(i));
    sum += v;
    sq += v * v;
    ++m.count;
  }
  m.mean = sum / static_cast<double>(m.count);
  m.variance = sq / static_cast<double>(m.count) - m.mean * m.mean;
  return m;
}

void check_balanced(const Dataset& data, int classes) {
  const double n = static_cast<double>(data.rows), p = 1.0 / classes;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (auto c : class_counts(data)) CHECK(std::abs(static_cast<double>(c) - n * p) <= 5 * sigma);
}

}  // namespace

TEST_SUITE("generators") {
  TEST_CASE("xor components sit at the corners with std 0.25") {
    const Dataset data = gen_xor(100000, 1);
    CHECK(kXorStd == 0.25);
    // Fold each class onto one corner: class 0 by the sign of x0 + x1,
    // class 1 by the sign of x0 - x1.
    auto fold0 = [](std::span<const double> x) { return x[0] + x[1] >= 0 ? 1.0 : -1.0; };
    auto fold1 = [](std::span<const double> x) { return x[0] - x[1] >= 0 ? 1.0 : -1.0; };
    const auto c0x = moments(data, 0, [&](auto x) { return fold0(x) * x[0]; });
    const auto c0y = moments(data, 0, [&](auto x) { return fold0(x) * x[1]; });
    const auto c1x = moments(data, 1, [&](auto x) { return fold1(x) * x[0]; });
    const auto c1y = moments(data, 1, [&](auto x) { return fold1(x) * x[1]; });
    CHECK(std::abs(c0x.mean - 0.5) < 0.01);
    CHECK(std::abs(c0y.mean - 0.5) < 0.01);
    CHECK(std::abs(c1x.mean - 0.5) < 0.01);
    CHECK(std::abs(c1y.mean + 0.5) < 0.01);
    CHECK(std::abs(std::sqrt(c0x.variance) - 0.25) < 0.01);
    check_balanced(data, 2);
  }

  TEST_CASE("xor label counts at n = 1000") {
    const Dataset data = gen_xor(1000, 2);
    const auto counts = class_counts(data);
    CHECK(std::abs(static_cast<double>(counts[0]) - 500.0) <= 3 * std::sqrt(250.0));
  }

  TEST_CASE("spiral radii lie in the unit disk and classes balance") {
    const Dataset data = gen_spiral(20000, 2, 2.5, 3);
    CHECK(kSpiralAngleVariance == 0.09);
    for (std::size_t i = 0; i < data.rows; ++i) {
      CHECK(std::hypot(data.row(i)[0], data.row(i)[1]) <= 1.0 + 1e-12);
    }
    check_balanced(data, 2);
    check_balanced(gen_spiral(20000, 3, 2.5, 4), 3);
  }

  TEST_CASE("circle radii") {
    const Dataset data = gen_circle(100000, 5);
    auto radius = [](auto x) { return std::hypot(x[0], x[1]); };
    const auto inner = moments(data, 0, radius), outer = moments(data, 1, radius);
    CHECK(std::abs(inner.mean - 0.75) < 0.005);
    CHECK(std::abs(outer.mean - 1.0) < 0.005);
    CHECK(std::abs(inner.variance - 0.01) < 0.0005);
    check_balanced(data, 2);
  }

  TEST_CASE("sinewave and polynomial curves with y noise 0.01") {
    const Dataset sine = gen_sinewave(100000, 6);
    const auto res0 = moments(sine, 0, [](auto x) { return x[1] - std::cos(std::numbers::pi * x[0]); });
    const auto res1 = moments(sine, 1, [](auto x) { return x[1] - std::sin(std::numbers::pi * x[0]); });
    CHECK(std::abs(res0.mean) < 0.005);
    CHECK(std::abs(res1.mean) < 0.005);
    CHECK(std::abs(res0.variance - 0.01) < 0.0005);
    for (std::size_t i = 0; i < sine.rows; ++i) CHECK(std::abs(sine.row(i)[0]) <= 1.0);

    // Near x = 0 the class-0 curve is centered at cos(0) = 1.
    double sum = 0;
    int count = 0;
    for (std::size_t i = 0; i < sine.rows; ++i) {
      if (sine.labels[i] == 0 && std::abs(sine.row(i)[0]) < 0.02) {
        sum += sine.row(i)[1];
        ++count;
      }
    }
    CHECK(std::abs(sum / count - 1.0) < 0.01);

    const Dataset poly = gen_polynomial(100000, 7);
    const auto p0 = moments(poly, 0, [](auto x) { return x[1] - x[0]; });
    const auto p1 = moments(poly, 1, [](auto x) { return x[1] - x[0] * x[0] * x[0]; });
    CHECK(std::abs(p0.mean) < 0.005);
    CHECK(std::abs(p1.mean) < 0.005);
    CHECK(std::abs(p1.variance - 0.01) < 0.0005);
  }

  TEST_CASE("trunk means, unit covariance and Bayes error") {
    const auto mu = trunk_mean(3);
    CHECK(mu[0] == 1.0);
    CHECK(mu[1] == doctest::Approx(0.7071).epsilon(1e-4));
    CHECK(mu[2] == doctest::Approx(0.5774).epsilon(1e-4));

    const Dataset data = gen_trunk(100000, 3, 8);
    for (std::size_t j = 0; j < 3; ++j) {
      const auto c0 = moments(data, 0, [j](auto x) { return x[j]; });
      const auto c1 = moments(data, 1, [j](auto x) { return x[j]; });
      CHECK(std::abs(c0.mean - mu[j]) < 0.02);
      CHECK(std::abs(c1.mean + mu[j]) < 0.02);
      CHECK(std::abs(c0.variance - 1.0) < 0.03);
    }

    const Dataset line = gen_trunk(100000, 1, 9);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < line.rows; ++i) wrong += (line.row(i)[0] >= 0 ? 0 : 1) != line.labels[i];
    const double phi_minus_one = 0.5 * std::erfc(1.0 / std::sqrt(2.0));
    CHECK(std::abs(static_cast<double>(wrong) / 1e5 - phi_minus_one) < 0.01);
  }

  TEST_CASE("generators are deterministic per seed") {
    CHECK(gen_xor(500, 4) == gen_xor(500, 4));
    CHECK_FALSE(gen_xor(500, 4) == gen_xor(500, 5));
    SimulationSpec spec;
    spec.kind = SimulationKind::spiral;
    spec.n = 300;
    spec.seed = 11;
    CHECK(generate(spec) == gen_spiral(300, 2, 2.5, 11));
  }

  TEST_CASE("bad arguments are rejected") {
    CHECK_THROWS_AS(gen_xor(1, 0), Error);
    CHECK_THROWS_AS(gen_spiral(100, 1, 2.5, 0), Error);
    CHECK_THROWS_AS(gen_spiral(100, 2, 0.0, 0), Error);
    CHECK_THROWS_AS(gen_trunk(100, 0, 0), Error);
    CHECK_THROWS_AS(parse_simulation_kind("moons"), Error);
  }
}

TEST_SUITE("true posterior") {
  TEST_CASE("closed-form values") {
    SimulationSpec xor_spec;
    const std::vector<double> origin{0.0, 0.0};
    const auto at_origin = true_posterior(xor_spec, origin);
    CHECK(at_origin[0] == doctest::Approx(0.5).epsilon(1e-12));

    SimulationSpec trunk;
    trunk.kind = SimulationKind::trunk;
    trunk.dimension = 1;
    const std::vector<double> zero{0.0}, one{1.0};
    CHECK(true_posterior(trunk, zero)[0] == doctest::Approx(0.5).epsilon(1e-12));
    // Class 0 carries the +mu mean.
    CHECK(true_posterior(trunk, one)[0] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
    CHECK(true_posterior(trunk, one)[0] == doctest::Approx(0.8808).epsilon(1e-4));
  }

  TEST_CASE("normalization and label-swap symmetry") {
    SimulationSpec xor_spec;
    SimulationSpec trunk;
    trunk.kind = SimulationKind::trunk;
    trunk.dimension = 4;
    Rng rng(10);
    std::normal_distribution<double> g;
    for (int i = 0; i < 200; ++i) {
      const std::vector<double> x{g(rng), g(rng)}, flipped{-x[0], x[1]};
      const auto p = true_posterior(xor_spec, x), q = true_posterior(xor_spec, flipped);
      CHECK(std::abs(p[0] + p[1] - 1.0) <= 1e-9);
      CHECK(p[0] == doctest::Approx(q[1]).epsilon(1e-9));

      std::vector<double> t(4), nt(4);
      for (std::size_t j = 0; j < 4; ++j) nt[j] = -(t[j] = g(rng));
      const auto a = true_posterior(trunk, t), b = true_posterior(trunk, nt);
      CHECK(std::abs(a[0] + a[1] - 1.0) <= 1e-9);
      CHECK(a[0] == doctest::Approx(b[1]).epsilon(1e-9));
    }
  }

  TEST_CASE("analytic mode is limited to xor and trunk") {
    SimulationSpec spec;
    spec.kind = SimulationKind::circle;
    const std::vector<double> x{0.0, 0.0};
    CHECK_FALSE(has_analytic_posterior(spec.kind));
    CHECK_THROWS_AS(true_posterior(spec, x), Error);
  }

  TEST_CASE("numeric oracle tracks the analytic xor posterior") {
    SimulationSpec spec;
    const auto numeric = PosteriorOracle::numeric(spec, 400000, 3);
    const auto analytic = PosteriorOracle::analytic(spec);
    CHECK(numeric.is_numeric());
    const Dataset probe = gen_xor(2000, 77);
    double total = 0.0;
    for (std::size_t i = 0; i < probe.rows; ++i) {
      const auto a = analytic(probe.row(i)), b = numeric(probe.row(i));
      CHECK(std::abs(b[0] + b[1] - 1.0) <= 1e-9);
      total += std::abs(a[0] - b[0]);
    }
    CHECK(total / static_cast<double>(probe.rows) < 0.05);
  }

  TEST_CASE("numeric oracle needs enough draws and 2-D data") {
    SimulationSpec spec;
    CHECK_THROWS_AS(PosteriorOracle::numeric(spec, 9999), Error);
    spec.kind = SimulationKind::trunk;
    spec.dimension = 3;
    CHECK_THROWS_AS(PosteriorOracle::numeric(spec, 20000), Error);
  }
}

TEST_SUITE("hypersphere and normalization") {
  TEST_CASE("points lie on the sphere and are isotropic") {
    const auto pts = sample_hypersphere(5, 20.0, 1000, 1);
    REQUIRE(pts.size() == 5000);
    for (std::size_t i = 0; i < 1000; ++i) {
      double sq = 0;
      for (std::size_t j = 0; j < 5; ++j) sq += pts[i * 5 + j] * pts[i * 5 + j];
      CHECK(std::abs(std::sqrt(sq) - 20.0) <= 1e-9);
    }
    const auto circle = sample_hypersphere(2, 1.0, 100000, 2);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < 100000; ++i) {
      mx += circle[2 * i];
      my += circle[2 * i + 1];
    }
    CHECK(std::hypot(mx, my) / 1e5 < 0.02);
    CHECK_THROWS_AS(sample_hypersphere(2, 0.0, 10, 0), Error);
  }

  TEST_CASE("max-l2 scaling") {
    const auto out = normalize_max_l2(make_dataset({3, 4, 0, 1}, {0, 1}, 2));
    CHECK(out.scale == 5.0);
    CHECK(out.data.features == std::vector<double>{0.6, 0.8, 0.0, 0.2});

    const Dataset unit = make_dataset({1, 0, 0, 0.5}, {0, 1}, 2);
    const auto same = normalize_max_l2(unit);
    CHECK(same.scale == 1.0);
    CHECK(same.data.features == unit.features);

    CHECK_THROWS_AS(normalize_max_l2(make_dataset({0, 0, 0, 0}, {0, 1}, 2)), Error);
  }
}
