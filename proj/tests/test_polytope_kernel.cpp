// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "kdx/error.hpp"
#include "kdx/forest.hpp"
#include "kdx/kernel.hpp"
#include "kdx/relu_net.hpp"
#include "kdx/rng.hpp"
#include "kdx/synthetic.hpp"

using namespace kdx;

namespace {

MembershipSignature leaves(std::vector<std::uint32_t> ids) {
  MembershipSignature sig;
  sig.kind = SignatureKind::forest;
  sig.leaves = std::move(ids);
  return sig;
}

MembershipSignature bits(std::vector<std::vector<std::uint8_t>> layers) {
  MembershipSignature sig;
  sig.kind = SignatureKind::net;
  sig.activations = std::move(layers);
  return sig;
}

// Walks every activation path (one node per layer) and counts the paths whose
// activation modes agree in both signatures.
std::uint64_t enumerate_agreeing_paths(const MembershipSignature& a, const MembershipSignature& b,
                                       std::size_t layer = 0) {
  if (layer == a.activations.size()) return 1;
  std::uint64_t count = 0;
  for (std::size_t node = 0; node < a.activations[layer].size(); ++node) {
    if (a.activations[layer][node] == b.activations[layer][node]) {
      count += enumerate_agreeing_paths(a, b, layer + 1);
    }
  }
  return count;
}

std::uint64_t enumerate_paths(const MembershipSignature& a) {
  std::uint64_t total = 1;
  for (const auto& layer : a.activations) total *= layer.size();
  return total;
}

}  // namespace

TEST_SUITE("forest kernel") {
  TEST_CASE("identical signatures over 500 trees give 1") {
    const auto sig = leaves(std::vector<std::uint32_t>(500, 3));
    CHECK(forest_kernel(sig, sig) == 1.0);
  }

  TEST_CASE("one shared leaf out of two trees gives 0.5") {
    CHECK(forest_kernel(leaves({4, 7}), leaves({4, 9})) == 0.5);
    CHECK(leaf_matches(leaves({4, 7}), leaves({4, 9})) == 1);
  }

  TEST_CASE("disjoint leaves give 0") {
    CHECK(forest_kernel(leaves({1, 2, 3}), leaves({4, 5, 6})) == 0.0);
  }

  TEST_CASE("mismatched lengths and kinds are rejected") {
    CHECK_THROWS_AS(forest_kernel(leaves({1, 2}), leaves({1})), Error);
    CHECK_THROWS_AS(signature_kernel(leaves({1}), bits({{1}})), Error);
  }
}

TEST_SUITE("net kernel") {
  TEST_CASE("identical signatures give 1") {
    const auto sig = bits({{1, 0, 1}, {0, 1}});
    CHECK(net_kernel(sig, sig) == 1.0);
  }

  TEST_CASE("widths (2,2) with agreements (2,1) give 0.5") {
    const auto a = bits({{1, 0}, {1, 0}});
    const auto b = bits({{1, 0}, {1, 1}});
    CHECK(net_kernel(a, b) == 0.5);
    CHECK(enumerate_agreeing_paths(a, b) == 2);
    CHECK(enumerate_paths(a) == 4);
  }

  TEST_CASE("widths (3,2) with agreements (2,1) give 1/3") {
    const auto a = bits({{1, 0, 1}, {1, 0}});
    const auto b = bits({{1, 0, 0}, {1, 1}});
    CHECK(net_kernel(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    const auto exact = net_path_agreement(a, b);
    CHECK(exact.agreeing == 2);
    CHECK(exact.total == 6);
    CHECK(enumerate_agreeing_paths(a, b) == 2);
  }

  TEST_CASE("product form equals path enumeration on random tiny nets") {
    Rng rng(99);
    std::uniform_int_distribution<int> width(1, 2);
    std::bernoulli_distribution bit(0.5);
    for (int trial = 0; trial < 200; ++trial) {
      const int layers = 1 + trial % 3;
      std::vector<std::size_t> widths;
      std::size_t hidden_total = 0;
      for (int l = 0; l < layers && hidden_total < 4; ++l) {
        widths.push_back(std::min<std::size_t>(width(rng), 4 - hidden_total));
        hidden_total += widths.back();
      }
      std::vector<std::vector<std::uint8_t>> la, lb;
      for (auto w : widths) {
        la.emplace_back();
        lb.emplace_back();
        for (std::size_t j = 0; j < w; ++j) {
          la.back().push_back(bit(rng));
          lb.back().push_back(bit(rng));
        }
      }
      const auto a = bits(la), b = bits(lb);
      const auto exact = net_path_agreement(a, b);
      CHECK(exact.agreeing == enumerate_agreeing_paths(a, b));
      CHECK(exact.total == enumerate_paths(a));
    }
  }

  TEST_CASE("mismatched architecture is rejected") {
    CHECK_THROWS_AS(net_kernel(bits({{1, 0}}), bits({{1, 0, 1}})), Error);
    CHECK_THROWS_AS(net_kernel(bits({{1}}), bits({{1}, {0}})), Error);
  }
}

TEST_SUITE("geodesic distance") {
  TEST_CASE("identical signatures are at distance 0") {
    CHECK(geodesic_distance(leaves({1, 2}), leaves({1, 2})) == 0.0);
  }

  TEST_CASE("kernel 0.25 gives distance 0.75") {
    CHECK(geodesic_distance(leaves({1, 2, 3, 4}), leaves({1, 0, 0, 0})) == 0.75);
    const auto exact = exact_geodesic_distance(leaves({1, 2, 3, 4}), leaves({1, 0, 0, 0}));
    CHECK(exact.numerator == 3);
    CHECK(exact.denominator == 4);
  }

  TEST_CASE("metric axioms hold exactly on a trained forest") {
    const Dataset data = gen_xor(300, 8);
    ForestConfig config;
    config.tree_count = 10;
    const ForestModel model = train_forest(data, config, 4);
    std::vector<MembershipSignature> sigs;
    for (std::size_t i = 0; i < data.rows; ++i) sigs.push_back(forest_signature(model, data.row(i)));
    const auto grouping = group_polytopes(sigs);
    const auto& reps = grouping.representatives;
    const std::size_t p = std::min<std::size_t>(reps.size(), 25);
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = 0; b < p; ++b) {
        const auto ab = exact_geodesic_distance(reps[a], reps[b]);
        const auto ba = exact_geodesic_distance(reps[b], reps[a]);
        CHECK(ab.numerator == ba.numerator);
        CHECK((ab.numerator == 0) == (a == b));
        for (std::size_t c = 0; c < p; ++c) {
          const auto bc = exact_geodesic_distance(reps[b], reps[c]);
          const auto ac = exact_geodesic_distance(reps[a], reps[c]);
          // Common denominator T: compare numerators.
          CHECK(ac.numerator <= ab.numerator + bc.numerator);
        }
      }
    }
  }
}

TEST_SUITE("grouping") {
  TEST_CASE("all identical gives one polytope") {
    std::vector<MembershipSignature> sigs(5, leaves({1, 1}));
    CHECK(group_polytopes(sigs).populated_count() == 1);
  }

  TEST_CASE("all distinct gives n polytopes") {
    std::vector<MembershipSignature> sigs{leaves({1}), leaves({2}), leaves({3})};
    CHECK(group_polytopes(sigs).populated_count() == 3);
  }

  TEST_CASE("(A, B, A) gives ids (0, 1, 0)") {
    std::vector<MembershipSignature> sigs{leaves({1, 5}), leaves({2, 5}), leaves({1, 5})};
    const auto g = group_polytopes(sigs);
    CHECK(g.polytope_ids == std::vector<std::uint32_t>{0, 1, 0});
    CHECK(g.populated_count() == 2);
    CHECK(g.members() == std::vector<std::vector<std::size_t>>{{0, 2}, {1}});
  }

  TEST_CASE("heterogeneous kinds are rejected") {
    std::vector<MembershipSignature> sigs{leaves({1}), bits({{1}})};
    CHECK_THROWS_AS(group_polytopes(sigs), Error);
  }

  TEST_CASE("equal ids exactly where the kernel is 1") {
    const Dataset data = gen_xor(200, 3);
    const ReluNetModel net = init_relu_net(2, 2, {3, 2}, 5);
    std::vector<MembershipSignature> sigs;
    for (std::size_t i = 0; i < data.rows; ++i) sigs.push_back(net_signature(net, data.row(i)));
    const auto g = group_polytopes(sigs);
    for (std::size_t i = 0; i < 60; ++i) {
      for (std::size_t j = 0; j < 60; ++j) {
        CHECK((g.polytope_ids[i] == g.polytope_ids[j]) == (net_kernel(sigs[i], sigs[j]) == 1.0));
      }
    }
  }

  TEST_CASE("kernel matrix stores the diagonal and matches direct evaluation") {
    std::vector<MembershipSignature> sigs{leaves({1, 1}), leaves({1, 2}), leaves({3, 4})};
    const auto g = group_polytopes(sigs);
    const auto m = polytope_kernel_matrix(g);
    CHECK(m.size == 3);
    CHECK(m.at(0, 0) == 1.0);
    CHECK(m.at(0, 1) == 0.5);
    CHECK(m.at(1, 0) == 0.5);
    CHECK(m.at(0, 2) == 0.0);
    CHECK(m.nonzeros() == 5);
  }
}

TEST_SUITE("weights") {
  TEST_CASE("kernel 1 gives weight 1 for any n and k") {
    for (std::size_t n : {2u, 10u, 1000u, 1000000u}) {
      for (double k : {1e-3, 0.5, 1.0, 7.0}) CHECK(exponentiate_weight(1.0, n, k) == 1.0);
    }
  }

  TEST_CASE("0.5 at k = 1 and n = e^2 gives 0.25") {
    // n is integral here; e^2 itself is checked on the closed form.
    const auto n = static_cast<std::size_t>(std::round(std::exp(2.0)));
    CHECK(exponentiate_weight(0.5, n, 1.0) == doctest::Approx(std::pow(0.5, std::log(7.0))));
    CHECK(std::pow(0.5, std::log(std::exp(2.0))) == doctest::Approx(0.25).epsilon(1e-14));
  }

  TEST_CASE("weight strictly decreases as n doubles from 1e2 to 1e6") {
    for (double kernel : {0.1, 0.5, 0.9, 0.999}) {
      double prev = exponentiate_weight(kernel, 100, 1.0);
      for (std::size_t n = 200; n <= 1000000; n *= 2) {
        const double w = exponentiate_weight(kernel, n, 1.0);
        CHECK(w < prev);
        prev = w;
      }
    }
    CHECK(exponentiate_weight(0.5, 1000000, 1.0) < exponentiate_weight(0.5, 1000, 1.0));
  }

  TEST_CASE("n < 2 or k <= 0 is rejected") {
    CHECK_THROWS_AS(exponentiate_weight(0.5, 1, 1.0), Error);
    CHECK_THROWS_AS(exponentiate_weight(0.5, 10, 0.0), Error);
  }

  TEST_CASE("matrix exponentiation is entrywise") {
    std::vector<MembershipSignature> sigs{leaves({1, 1}), leaves({1, 2})};
    const auto m = polytope_kernel_matrix(group_polytopes(sigs));
    const auto w = exponentiate_weights(m, 100, 0.5);
    CHECK(w.entries.at(0, 0) == 1.0);
    CHECK(w.entries.at(0, 1) == doctest::Approx(std::pow(0.5, 0.5 * std::log(100.0))));
  }

  TEST_CASE("weights export as a dense csv") {
    std::vector<MembershipSignature> sigs{leaves({1, 1}), leaves({1, 2}), leaves({3, 3})};
    const auto w = exponentiate_weights(polytope_kernel_matrix(group_polytopes(sigs)), 10, 1.0);
    const auto path = std::filesystem::temp_directory_path() / "kdx_weights_test.csv";
    write_weights_csv(w, path);
    std::ifstream in(path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines >= 3);
    std::filesystem::remove(path);
  }
}

TEST_SUITE("grid selection") {
  TEST_CASE("single candidate is returned") {
    const std::vector<double> grid{0.3};
    CHECK(select_grid_k(grid, [](double) { return 1.0; }) == 0.3);
  }

  TEST_CASE("strictly lower hold-out error wins") {
    const std::vector<double> grid{1e-3, 1e-2, 1e-1, 1.0};
    CHECK(select_grid_k(grid, [](double k) { return k == 1e-1 ? 0.1 : 0.2; }) == 1e-1);
  }

  TEST_CASE("ties go to the smaller k") {
    const std::vector<double> grid{1.0, 1e-1, 1e-2};
    CHECK(select_grid_k(grid, [](double k) { return k < 0.5 ? 0.1 : 0.3; }) == 1e-2);
  }

  TEST_CASE("empty grid is rejected") {
    const std::vector<double> grid;
    CHECK_THROWS_AS(select_grid_k(grid, [](double) { return 0.0; }), Error);
  }

  TEST_CASE("default grid") {
    CHECK(default_k_grid() == std::vector<double>{1e-3, 1e-2, 1e-1, 1.0});
  }
}
