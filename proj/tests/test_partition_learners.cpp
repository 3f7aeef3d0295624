// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "kdx/error.hpp"
#include "kdx/forest.hpp"
#include "kdx/relu_net.hpp"
#include "kdx/rng.hpp"
#include "kdx/synthetic.hpp"

using namespace kdx;

namespace {

int argmax(const std::vector<double>& p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

double forest_train_accuracy(const ForestModel& model, const Dataset& data) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.rows; ++i) {
    hits += argmax(forest_predict_proba(model, data.row(i))) == data.labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(data.rows);
}

double net_train_accuracy(const ReluNetModel& model, const Dataset& data) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.rows; ++i) {
    hits += argmax(net_predict_proba(model, data.row(i))) == data.labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(data.rows);
}

// Reference CART: exhaustive Gini splits over every feature and every
// midpoint, full data, no randomness. Returns its training accuracy.
struct ReferenceCart {
  const Dataset& data;

  static double gini(std::size_t a, std::size_t b) {
    const double n = static_cast<double>(a + b);
    if (n == 0) return 0.0;
    const double pa = static_cast<double>(a) / n, pb = static_cast<double>(b) / n;
    return 1.0 - pa * pa - pb * pb;
  }

  // Number of training points classified correctly by the subtree over idx.
  std::size_t grow(std::vector<std::size_t> idx) const {
    std::size_t ones = 0;
    for (auto i : idx) ones += data.labels[i] == 1;
    const std::size_t zeros = idx.size() - ones;
    if (ones == 0 || zeros == 0) return idx.size();
    double best = gini(zeros, ones) * static_cast<double>(idx.size());
    std::size_t best_feature = 0;
    double best_threshold = 0.0;
    bool found = false;
    for (std::size_t f = 0; f < data.cols; ++f) {
      std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
        return data.row(a)[f] < data.row(b)[f];
      });
      std::size_t left_ones = 0;
      for (std::size_t cut = 1; cut < idx.size(); ++cut) {
        left_ones += data.labels[idx[cut - 1]] == 1;
        const double lo = data.row(idx[cut - 1])[f], hi = data.row(idx[cut])[f];
        if (lo == hi) continue;
        const std::size_t left_zeros = cut - left_ones;
        const double score = gini(left_zeros, left_ones) * static_cast<double>(cut) +
                             gini(zeros - left_zeros, ones - left_ones) *
                                 static_cast<double>(idx.size() - cut);
        if (score < best - 1e-12) {
          best = score;
          best_feature = f;
          best_threshold = 0.5 * (lo + hi);
          found = true;
        }
      }
    }
    if (!found) return std::max(ones, zeros);
    std::vector<std::size_t> left, right;
    for (auto i : idx) (data.row(i)[best_feature] <= best_threshold ? left : right).push_back(i);
    return grow(std::move(left)) + grow(std::move(right));
  }

  double accuracy() const {
    std::vector<std::size_t> all(data.rows);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return static_cast<double>(grow(all)) / static_cast<double>(data.rows);
  }
};

// Logistic regression by full-batch gradient descent (oracle for separable data).
double logistic_accuracy(const Dataset& data) {
  std::vector<double> w(data.cols, 0.0);
  double b = 0.0;
  for (int iter = 0; iter < 2000; ++iter) {
    std::vector<double> gw(data.cols, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < data.rows; ++i) {
      auto x = data.row(i);
      double z = b;
      for (std::size_t j = 0; j < data.cols; ++j) z += w[j] * x[j];
      const double err = 1.0 / (1.0 + std::exp(-z)) - data.labels[i];
      for (std::size_t j = 0; j < data.cols; ++j) gw[j] += err * x[j];
      gb += err;
    }
    for (std::size_t j = 0; j < data.cols; ++j) w[j] -= 0.1 * gw[j] / static_cast<double>(data.rows);
    b -= 0.1 * gb / static_cast<double>(data.rows);
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.rows; ++i) {
    double z = b;
    for (std::size_t j = 0; j < data.cols; ++j) z += w[j] * data.row(i)[j];
    hits += (z >= 0.0 ? 1 : 0) == data.labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(data.rows);
}

Dataset separable_blobs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::vector<double> f;
  std::vector<int> l;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    const double c = y == 0 ? -1.5 : 1.5;
    f.push_back(c + noise(rng));
    f.push_back(c + noise(rng));
    l.push_back(y);
  }
  return make_dataset(std::move(f), std::move(l), 2);
}

DecisionTree stump(double threshold) {
  DecisionTree tree;
  tree.nodes.resize(3);
  tree.nodes[0].feature = 0;
  tree.nodes[0].threshold = threshold;
  tree.nodes[0].left = 1;
  tree.nodes[0].right = 2;
  tree.nodes[1].class_counts = {1, 0};
  tree.nodes[2].class_counts = {0, 1};
  return tree;
}

}  // namespace

TEST_SUITE("forest") {
  TEST_CASE("default hyperparameters are 500 unbounded trees with unit leaves") {
    const ForestConfig config;
    CHECK(config.tree_count == 500);
    CHECK(config.max_depth == 0);
    CHECK(config.min_samples_leaf == 1);
    CHECK(config.bootstrap);
  }

  TEST_CASE("a single tree fits four separable points exactly") {
    const Dataset data = make_dataset({0, 0, 0, 1, 3, 3, 3, 4}, {0, 0, 1, 1}, 2);
    ForestConfig config;
    config.tree_count = 1;
    config.bootstrap = false;
    const ForestModel model = train_forest(data, config, 7);
    CHECK(model.tree_count() == 1);
    CHECK(forest_train_accuracy(model, data) == 1.0);
  }

  TEST_CASE("xor training accuracy matches a reference CART") {
    const Dataset data = gen_xor(1000, 11);
    const double oracle = ReferenceCart{data}.accuracy();
    REQUIRE(oracle >= 0.99);
    ForestConfig config;
    config.tree_count = 100;
    const ForestModel model = train_forest(data, config, 3);
    CHECK(forest_train_accuracy(model, data) >= 0.99);
  }

  TEST_CASE("leaves reached by training points are pure without bootstrap") {
    const Dataset data = gen_xor(300, 5);
    ForestConfig config;
    config.tree_count = 10;
    config.bootstrap = false;
    const ForestModel model = train_forest(data, config, 9);
    for (std::size_t i = 0; i < data.rows; ++i) {
      const auto sig = forest_signature(model, data.row(i));
      REQUIRE(sig.leaves.size() == model.tree_count());
      for (std::size_t t = 0; t < model.tree_count(); ++t) {
        const auto& counts = model.trees[t].nodes[sig.leaves[t]].class_counts;
        CHECK(counts[static_cast<std::size_t>(data.labels[i])] > 0.0);
        CHECK(counts[static_cast<std::size_t>(1 - data.labels[i])] == 0.0);
      }
    }
  }

  TEST_CASE("single-class data gives single-leaf trees") {
    const Dataset data = make_dataset({0, 1, 2, 3, 4, 5}, {0, 0, 0}, 2, 1);
    ForestConfig config;
    config.tree_count = 4;
    const ForestModel model = train_forest(data, config, 1);
    for (const auto& tree : model.trees) CHECK(tree.leaf_count() == 1);
  }

  TEST_CASE("empty data is rejected") {
    Dataset empty;
    try {
      train_forest(empty, ForestConfig{}, 0);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::invalid_input);
    }
  }

  TEST_CASE("stump signatures follow the threshold comparison") {
    ForestModel model;
    model.input_dim = 2;
    model.class_count = 2;
    model.trees = {stump(0.0), stump(0.0)};
    const std::vector<double> x{1.0, 1.0};
    const auto sig = forest_signature(model, x);
    CHECK(sig.leaves == std::vector<std::uint32_t>{2, 2});
    const std::vector<double> on_threshold{0.0, 1.0};
    CHECK(forest_signature(model, on_threshold).leaves == std::vector<std::uint32_t>{1, 1});
  }

  TEST_CASE("signatures reject the wrong dimension") {
    ForestModel model;
    model.input_dim = 2;
    model.class_count = 2;
    model.trees = {stump(0.0)};
    const std::vector<double> x{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(forest_signature(model, x), Error);
  }

  TEST_CASE("training is reproducible per seed and signatures are thread-stable") {
    const Dataset data = gen_xor(400, 2);
    ForestConfig config;
    config.tree_count = 25;
    const ForestModel a = train_forest(data, config, 42);
    const ForestModel b = train_forest(data, config, 42);
    CHECK(a == b);
    const ForestModel c = train_forest(data, config, 43);
    CHECK_FALSE(a == c);

    std::vector<MembershipSignature> serial(data.rows), threaded(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i) serial[i] = forest_signature(a, data.row(i));
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < 4; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < data.rows; i += 4) threaded[i] = forest_signature(a, data.row(i));
      });
    }
    for (auto& t : pool) t.join();
    CHECK(serial == threaded);
  }
}

TEST_SUITE("relu net") {
  TEST_CASE("full-scale preset is 4 x 1000 with Adam at 3e-4") {
    const NetConfig full = NetConfig::full_scale();
    CHECK(full.hidden == std::vector<std::size_t>{1000, 1000, 1000, 1000});
    CHECK(full.learning_rate == doctest::Approx(3e-4));
    const NetConfig desk;
    CHECK(desk.hidden == std::vector<std::size_t>{20, 20});
    CHECK(desk.epochs == 200);
    CHECK(desk.batch_size == 32);
    CHECK(desk.patience == 20);
  }

  TEST_CASE("separable blobs: net matches the logistic-regression oracle") {
    const Dataset data = separable_blobs(200, 4);
    const double oracle = logistic_accuracy(data);
    REQUIRE(oracle >= 0.95);
    NetConfig config;
    config.hidden = {4};
    config.learning_rate = 1e-2;
    TrainingSummary summary;
    const ReluNetModel model = train_relu_net(data, config, 8, &summary);
    CHECK(net_train_accuracy(model, data) >= 0.95);
    CHECK(summary.final_loss < summary.initial_loss);
  }

  TEST_CASE("zero epochs leaves the initialization untouched") {
    const Dataset data = separable_blobs(50, 1);
    NetConfig config;
    config.epochs = 0;
    const ReluNetModel trained = train_relu_net(data, config, 17);
    CHECK(trained == init_relu_net(2, 2, config.hidden, 17));
  }

  TEST_CASE("training is reproducible per seed") {
    const Dataset data = gen_xor(200, 6);
    NetConfig config;
    config.epochs = 5;
    CHECK(train_relu_net(data, config, 5) == train_relu_net(data, config, 5));
  }

  TEST_CASE("divergence names the epoch") {
    const Dataset data = separable_blobs(64, 2);
    NetConfig config;
    config.learning_rate = 1e300;
    config.hidden = {8};
    try {
      train_relu_net(data, config, 3);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::training_failure);
      CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
  }

  TEST_CASE("activation bits follow the sign of the pre-activation") {
    ReluNetModel model;
    DenseLayer hidden;
    hidden.weights = Eigen::MatrixXd{{1.0, 0.0}};
    hidden.bias = Eigen::VectorXd::Zero(1);
    DenseLayer out;
    out.weights = Eigen::MatrixXd::Ones(2, 1);
    out.bias = Eigen::VectorXd::Zero(2);
    model.layers = {hidden, out};
    const std::vector<double> pos{2.0, 5.0}, neg{-2.0, 5.0};
    CHECK(net_signature(model, pos).activations == std::vector<std::vector<std::uint8_t>>{{1}});
    CHECK(net_signature(model, neg).activations == std::vector<std::vector<std::uint8_t>>{{0}});
  }

  TEST_CASE("all-zero weights activate every node") {
    ReluNetModel model = init_relu_net(3, 2, {4, 5}, 1);
    for (auto& layer : model.layers) {
      layer.weights.setZero();
      layer.bias.setZero();
    }
    const std::vector<double> x{-3.0, 0.5, 9.0};
    const auto sig = net_signature(model, x);
    REQUIRE(sig.activations.size() == 2);
    CHECK(sig.activations[0] == std::vector<std::uint8_t>(4, 1));
    CHECK(sig.activations[1] == std::vector<std::uint8_t>(5, 1));
  }

  TEST_CASE("signatures reject the wrong dimension") {
    const ReluNetModel model = init_relu_net(2, 2, {3}, 1);
    const std::vector<double> x{1.0};
    CHECK_THROWS_AS(net_signature(model, x), Error);
  }

  TEST_CASE("signature equality partitions a sample set") {
    const Dataset data = gen_xor(200, 12);
    NetConfig config;
    config.epochs = 3;
    const ReluNetModel model = train_relu_net(data, config, 2);
    std::vector<MembershipSignature> sigs;
    for (std::size_t i = 0; i < data.rows; ++i) sigs.push_back(net_signature(model, data.row(i)));
    for (std::size_t i = 0; i < 40; ++i) {
      CHECK(net_signature(model, data.row(i)) == sigs[i]);
      for (std::size_t j = 0; j < 40; ++j) {
        for (std::size_t k = 0; k < 40; ++k) {
          if (sigs[i] == sigs[j] && sigs[j] == sigs[k]) CHECK(sigs[i] == sigs[k]);
        }
      }
    }
  }
}
