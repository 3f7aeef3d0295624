// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "kdx/dataset.hpp"
#include "kdx/signature.hpp"

namespace kdx {

/// Mini-batch Adam on softmax cross-entropy. Training stops early once the
/// epoch-mean training loss has not improved by `min_delta` for `patience`
/// epochs (patience 0 disables early stopping).
struct NetConfig {
  std::vector<std::size_t> hidden = {20, 20};
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t patience = 20;
  double min_delta = 1e-4;

  /// 4 hidden layers of 1000 nodes.
  static NetConfig full_scale();

  bool operator==(const NetConfig&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out

  bool operator==(const DenseLayer& other) const {
    return weights == other.weights && bias == other.bias;
  }
};

/// ReLU hidden layers followed by a linear softmax output layer.
struct ReluNetModel {
  std::vector<DenseLayer> layers;
  std::uint64_t seed = 0;

  std::size_t input_dim() const;
  int class_count() const;
  std::vector<std::size_t> hidden_widths() const;

  bool operator==(const ReluNetModel&) const = default;
};

struct TrainingSummary {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t epochs_run = 0;
};

/// He-normal weights, zero biases.
ReluNetModel init_relu_net(std::size_t input_dim, int class_count,
                           const std::vector<std::size_t>& hidden, std::uint64_t seed);

/// Throws training_failure naming the epoch if the loss becomes non-finite.
ReluNetModel train_relu_net(const Dataset& data, const NetConfig& config, std::uint64_t seed,
                            TrainingSummary* summary = nullptr);

MembershipSignature net_signature(const ReluNetModel& model, std::span<const double> x);

std::vector<double> net_predict_proba(const ReluNetModel& model, std::span<const double> x);

/// Mean cross-entropy over the dataset.
double net_loss(const ReluNetModel& model, const Dataset& data);

}  // namespace kdx
