// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kdx/dataset.hpp"
#include "kdx/signature.hpp"

namespace kdx {

struct ForestConfig {
  std::size_t tree_count = 500;
  std::size_t max_depth = 0;  // 0 = unbounded
  std::size_t min_samples_leaf = 1;
  std::size_t max_features = 0;  // 0 = floor(sqrt(d))
  bool bootstrap = true;

  bool operator==(const ForestConfig&) const = default;
};

/// Internal nodes send x to `left` when x[feature] <= threshold. Leaves have
/// feature == -1 and carry the class histogram of the samples that built them.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::vector<double> class_counts;

  bool is_leaf() const noexcept { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  /// Node index of the leaf x lands in; doubles as a tree-unique leaf id.
  std::uint32_t leaf_for(std::span<const double> x) const;
  std::size_t leaf_count() const;
  std::size_t depth() const;

  bool operator==(const DecisionTree&) const = default;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  std::size_t input_dim = 0;
  int class_count = 0;
  std::uint64_t seed = 0;
  ForestConfig config;

  std::size_t tree_count() const noexcept { return trees.size(); }
  bool operator==(const ForestModel&) const = default;
};

/// CART with Gini impurity, a bootstrap resample per tree and floor(sqrt(d))
/// candidate features per split. Tree t is grown from derive_seed(seed, t), so
/// the result does not depend on how trees are scheduled across threads.
ForestModel train_forest(const Dataset& data, const ForestConfig& config, std::uint64_t seed);

MembershipSignature forest_signature(const ForestModel& model, std::span<const double> x);

/// Mean over trees of the normalized leaf histogram.
std::vector<double> forest_predict_proba(const ForestModel& model, std::span<const double> x);

}  // namespace kdx
