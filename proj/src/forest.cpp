// SPDX-License-Identifier: Apache-2.0
#include "kdx/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "kdx/error.hpp"
#include "kdx/rng.hpp"
#include "parallel.hpp"

namespace kdx {

std::uint32_t DecisionTree::leaf_for(std::span<const double> x) const {
  std::uint32_t node = 0;
  while (!nodes[node].is_leaf()) {
    const auto& n = nodes[node];
    node = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return node;
}

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> level(nodes.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (!nodes[i].is_leaf()) {
      level[nodes[i].left] = level[i] + 1;
      level[nodes[i].right] = level[i] + 1;
    }
  }
  return deepest;
}

namespace {

struct SplitCandidate {
  bool found = false;
  std::int32_t feature = -1;
  double threshold = 0.0;
  double score = -1.0;  // sum_y cL^2 / nL + sum_y cR^2 / nR, larger is better
};

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const ForestConfig& config, std::size_t max_features,
              std::uint64_t seed)
      : data_(data), config_(config), max_features_(max_features), rng_(seed),
        classes_(static_cast<std::size_t>(data.class_count)) {}

  DecisionTree build() {
    std::vector<std::size_t> samples(data_.rows);
    if (config_.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, data_.rows - 1);
      for (auto& s : samples) s = pick(rng_);
    } else {
      std::iota(samples.begin(), samples.end(), std::size_t{0});
    }
    samples_ = std::move(samples);

    DecisionTree tree;
    struct Pending {
      std::uint32_t node;
      std::size_t begin, end, depth;
    };
    tree.nodes.emplace_back();
    std::vector<Pending> stack{{0, 0, samples_.size(), 0}};
    std::vector<std::size_t> features(data_.cols);
    std::iota(features.begin(), features.end(), std::size_t{0});

    while (!stack.empty()) {
      const Pending job = stack.back();
      stack.pop_back();
      std::vector<double> counts(classes_, 0.0);
      for (std::size_t i = job.begin; i < job.end; ++i) {
        counts[static_cast<std::size_t>(data_.labels[samples_[i]])] += 1.0;
      }
      const std::size_t size = job.end - job.begin;
      const bool pure = std::count_if(counts.begin(), counts.end(),
                                      [](double c) { return c > 0.0; }) <= 1;
      const bool depth_capped = config_.max_depth != 0 && job.depth >= config_.max_depth;
      SplitCandidate best;
      if (!pure && !depth_capped && size >= 2 * config_.min_samples_leaf) {
        best = find_split(job.begin, job.end, features);
      }
      if (!best.found) {
        tree.nodes[job.node].class_counts = std::move(counts);
        continue;
      }
      auto mid_it = std::partition(
          samples_.begin() + static_cast<std::ptrdiff_t>(job.begin),
          samples_.begin() + static_cast<std::ptrdiff_t>(job.end), [&](std::size_t s) {
            return data_.features[s * data_.cols + static_cast<std::size_t>(best.feature)] <=
                   best.threshold;
          });
      const auto mid = static_cast<std::size_t>(mid_it - samples_.begin());
      const auto left = static_cast<std::uint32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[job.node];
      node.feature = best.feature;
      node.threshold = best.threshold;
      node.left = left;
      node.right = left + 1;
      stack.push_back({left + 1, mid, job.end, job.depth + 1});
      stack.push_back({left, job.begin, mid, job.depth + 1});
    }
    return tree;
  }

 private:
  SplitCandidate find_split(std::size_t begin, std::size_t end, std::vector<std::size_t>& features) {
    SplitCandidate best;
    // Fisher-Yates over the feature list; constant features do not count
    // toward the max_features budget.
    std::size_t tried = 0;
    for (std::size_t f = 0; f < features.size() && tried < max_features_; ++f) {
      std::uniform_int_distribution<std::size_t> pick(f, features.size() - 1);
      std::swap(features[f], features[pick(rng_)]);
      if (evaluate_feature(features[f], begin, end, best)) ++tried;
    }
    return best;
  }

  // Returns false when the feature is constant on the node.
  bool evaluate_feature(std::size_t feature, std::size_t begin, std::size_t end,
                        SplitCandidate& best) {
    const std::size_t size = end - begin;
    column_.resize(size);
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t s = samples_[begin + i];
      column_[i] = {data_.features[s * data_.cols + feature], data_.labels[s]};
    }
    std::sort(column_.begin(), column_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (column_.front().first == column_.back().first) return false;

    left_.assign(classes_, 0.0);
    right_.assign(classes_, 0.0);
    for (const auto& [v, y] : column_) right_[static_cast<std::size_t>(y)] += 1.0;
    double left_sq = 0.0;
    double right_sq = 0.0;
    for (double c : right_) right_sq += c * c;

    const std::size_t min_leaf = config_.min_samples_leaf;
    for (std::size_t i = 0; i + 1 < size; ++i) {
      const auto y = static_cast<std::size_t>(column_[i].second);
      left_sq += 2.0 * left_[y] + 1.0;
      right_sq -= 2.0 * right_[y] - 1.0;
      left_[y] += 1.0;
      right_[y] -= 1.0;
      const std::size_t n_left = i + 1;
      const std::size_t n_right = size - n_left;
      if (column_[i].first == column_[i + 1].first) continue;
      if (n_left < min_leaf || n_right < min_leaf) continue;
      const double score = left_sq / static_cast<double>(n_left) +
                           right_sq / static_cast<double>(n_right);
      if (!best.found || score > best.score) {
        const double lo = column_[i].first;
        const double hi = column_[i + 1].first;
        double threshold = lo + (hi - lo) / 2.0;
        if (!(threshold >= lo && threshold < hi)) threshold = lo;
        best = {true, static_cast<std::int32_t>(feature), threshold, score};
      }
    }
    return true;
  }

  const Dataset& data_;
  const ForestConfig& config_;
  std::size_t max_features_;
  Rng rng_;
  std::size_t classes_;
  std::vector<std::size_t> samples_;
  std::vector<std::pair<double, int>> column_;
  std::vector<double> left_, right_;
};

void check_point(std::size_t expected_dim, std::span<const double> x) {
  if (x.size() != expected_dim) {
    fail(ErrorCode::invalid_input, "point has dimension " + std::to_string(x.size()) +
                                       ", model expects " + std::to_string(expected_dim));
  }
  for (double v : x) require(std::isfinite(v), "point has a non-finite coordinate");
}

}  // namespace

ForestModel train_forest(const Dataset& data, const ForestConfig& config, std::uint64_t seed) {
  data.validate();
  require(config.tree_count >= 1, "tree_count must be at least 1");
  require(config.min_samples_leaf >= 1, "min_samples_leaf must be at least 1");
  std::size_t max_features = config.max_features;
  if (max_features == 0) {
    max_features = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(data.cols))));
  }
  max_features = std::clamp<std::size_t>(max_features, 1, data.cols);

  ForestModel model;
  model.input_dim = data.cols;
  model.class_count = data.class_count;
  model.seed = seed;
  model.config = config;
  model.trees.resize(config.tree_count);
  detail::parallel_for(config.tree_count, [&](std::size_t t) {
    TreeBuilder builder(data, config, max_features, derive_seed(seed, t));
    model.trees[t] = builder.build();
  });
  return model;
}

MembershipSignature forest_signature(const ForestModel& model, std::span<const double> x) {
  check_point(model.input_dim, x);
  MembershipSignature sig;
  sig.kind = SignatureKind::forest;
  sig.leaves.reserve(model.trees.size());
  for (const auto& tree : model.trees) sig.leaves.push_back(tree.leaf_for(x));
  return sig;
}

std::vector<double> forest_predict_proba(const ForestModel& model, std::span<const double> x) {
  check_point(model.input_dim, x);
  std::vector<double> proba(static_cast<std::size_t>(model.class_count), 0.0);
  for (const auto& tree : model.trees) {
    const auto& counts = tree.nodes[tree.leaf_for(x)].class_counts;
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    if (total <= 0.0) continue;
    for (std::size_t y = 0; y < proba.size(); ++y) proba[y] += counts[y] / total;
  }
  const double norm = std::accumulate(proba.begin(), proba.end(), 0.0);
  for (auto& p : proba) p /= norm;
  return proba;
}

}  // namespace kdx
