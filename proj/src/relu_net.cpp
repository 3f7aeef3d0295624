// SPDX-License-Identifier: Apache-2.0
#include "kdx/relu_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kdx/error.hpp"
#include "kdx/rng.hpp"

namespace kdx {

NetConfig NetConfig::full_scale() {
  NetConfig config;
  config.hidden = {1000, 1000, 1000, 1000};
  config.learning_rate = 3e-4;
  return config;
}

std::size_t ReluNetModel::input_dim() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weights.cols());
}

int ReluNetModel::class_count() const {
  return layers.empty() ? 0 : static_cast<int>(layers.back().weights.rows());
}

std::vector<std::size_t> ReluNetModel::hidden_widths() const {
  std::vector<std::size_t> widths;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    widths.push_back(static_cast<std::size_t>(layers[l].weights.rows()));
  }
  return widths;
}

ReluNetModel init_relu_net(std::size_t input_dim, int class_count,
                           const std::vector<std::size_t>& hidden, std::uint64_t seed) {
  require(input_dim >= 1, "network input dimension must be positive");
  require(class_count >= 1, "network needs at least one output class");
  require(!hidden.empty(), "network needs at least one hidden layer");
  ReluNetModel model;
  model.seed = seed;
  Rng rng(derive_seed(seed, 0));
  std::size_t fan_in = input_dim;
  std::vector<std::size_t> widths = hidden;
  widths.push_back(static_cast<std::size_t>(class_count));
  for (std::size_t width : widths) {
    require(width >= 1, "hidden layer width must be positive");
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    DenseLayer layer;
    layer.weights.resize(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(fan_in));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = normal(rng);
    }
    layer.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width));
    model.layers.push_back(std::move(layer));
    fan_in = width;
  }
  return model;
}

namespace {

void check_point(const ReluNetModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    fail(ErrorCode::invalid_input, "point has dimension " + std::to_string(x.size()) +
                                       ", network expects " + std::to_string(model.input_dim()));
  }
  for (double v : x) require(std::isfinite(v), "point has a non-finite coordinate");
}

// Column-wise softmax in place; returns per-column log-sum-exp.
Eigen::RowVectorXd softmax_columns(Eigen::MatrixXd& logits) {
  Eigen::RowVectorXd lse(logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    auto col = logits.col(c);
    const double m = col.maxCoeff();
    col = (col.array() - m).exp();
    const double s = col.sum();
    col /= s;
    lse(c) = m + std::log(s);
  }
  return lse;
}

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  std::size_t step = 0;

  explicit AdamState(const ReluNetModel& model) {
    for (const auto& layer : model.layers) {
      mw.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
      vw.push_back(mw.back());
      mb.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
      vb.push_back(mb.back());
    }
  }
};

// One Adam step on the batch given as columns of `x`. Returns the batch mean loss.
double train_batch(ReluNetModel& model, const Eigen::MatrixXd& x, const std::vector<int>& y,
                   const NetConfig& config, AdamState& adam) {
  const std::size_t depth = model.layers.size();
  std::vector<Eigen::MatrixXd> pre(depth), act(depth + 1);
  act[0] = x;
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& layer = model.layers[l];
    pre[l] = (layer.weights * act[l]).colwise() + layer.bias;
    act[l + 1] = l + 1 < depth ? Eigen::MatrixXd(pre[l].cwiseMax(0.0)) : pre[l];
  }
  Eigen::MatrixXd probs = act[depth];
  Eigen::RowVectorXd lse = softmax_columns(probs);
  const auto batch = static_cast<double>(x.cols());
  double loss = 0.0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const auto label = static_cast<Eigen::Index>(y[static_cast<std::size_t>(c)]);
    loss += lse(c) - act[depth](label, c);
  }
  loss /= batch;

  Eigen::MatrixXd delta = probs;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    delta(static_cast<Eigen::Index>(y[static_cast<std::size_t>(c)]), c) -= 1.0;
  }
  delta /= batch;

  ++adam.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(adam.step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(adam.step));
  const double lr = config.learning_rate;
  for (std::size_t l = depth; l-- > 0;) {
    auto& layer = model.layers[l];
    Eigen::MatrixXd grad_w = delta * act[l].transpose();
    Eigen::VectorXd grad_b = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = layer.weights.transpose() * delta;
      delta = back.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
    adam.mw[l] = b1 * adam.mw[l] + (1.0 - b1) * grad_w;
    adam.vw[l] = b2 * adam.vw[l] + (1.0 - b2) * grad_w.cwiseAbs2();
    adam.mb[l] = b1 * adam.mb[l] + (1.0 - b1) * grad_b;
    adam.vb[l] = b2 * adam.vb[l] + (1.0 - b2) * grad_b.cwiseAbs2();
    layer.weights.array() -= lr * (adam.mw[l].array() / correction1) /
                             ((adam.vw[l].array() / correction2).sqrt() + config.epsilon);
    layer.bias.array() -= lr * (adam.mb[l].array() / correction1) /
                          ((adam.vb[l].array() / correction2).sqrt() + config.epsilon);
  }
  return loss;
}

}  // namespace

ReluNetModel train_relu_net(const Dataset& data, const NetConfig& config, std::uint64_t seed,
                            TrainingSummary* summary) {
  data.validate();
  require(config.batch_size >= 1, "batch_size must be positive");
  require(config.learning_rate > 0.0, "learning_rate must be positive");
  ReluNetModel model = init_relu_net(data.cols, data.class_count, config.hidden, seed);

  TrainingSummary local;
  local.initial_loss = net_loss(model, data);
  local.final_loss = local.initial_loss;
  Rng rng(derive_seed(seed, 1));
  AdamState adam(model);
  std::vector<std::size_t> order(data.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  Eigen::MatrixXd x;
  std::vector<int> y;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < data.rows; start += config.batch_size) {
      const std::size_t stop = std::min(data.rows, start + config.batch_size);
      x.resize(static_cast<Eigen::Index>(data.cols), static_cast<Eigen::Index>(stop - start));
      y.resize(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const auto row = data.row(order[i]);
        for (std::size_t j = 0; j < data.cols; ++j) {
          x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i - start)) = row[j];
        }
        y[i - start] = data.labels[order[i]];
      }
      const double loss = train_batch(model, x, y, config, adam);
      if (!std::isfinite(loss)) {
        fail(ErrorCode::training_failure,
             "network training diverged (non-finite loss) at epoch " + std::to_string(epoch + 1));
      }
      epoch_loss += loss * static_cast<double>(stop - start);
    }
    epoch_loss /= static_cast<double>(data.rows);
    local.final_loss = epoch_loss;
    local.epochs_run = epoch + 1;
    if (epoch_loss < best - config.min_delta) {
      best = epoch_loss;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  if (summary != nullptr) *summary = local;
  return model;
}

MembershipSignature net_signature(const ReluNetModel& model, std::span<const double> x) {
  check_point(model, x);
  MembershipSignature sig;
  sig.kind = SignatureKind::net;
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    Eigen::VectorXd z = layer.weights * a + layer.bias;
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(z.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) bits[static_cast<std::size_t>(i)] = z(i) >= 0.0;
    sig.activations.push_back(std::move(bits));
    a = z.cwiseMax(0.0);
  }
  return sig;
}

std::vector<double> net_predict_proba(const ReluNetModel& model, std::span<const double> x) {
  check_point(model, x);
  Eigen::MatrixXd a = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    Eigen::MatrixXd z = (layer.weights * a).colwise() + layer.bias;
    a = l + 1 < model.layers.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  softmax_columns(a);
  return {a.data(), a.data() + a.size()};
}

double net_loss(const ReluNetModel& model, const Dataset& data) {
  constexpr std::size_t chunk = 1024;
  double total = 0.0;
  for (std::size_t start = 0; start < data.rows; start += chunk) {
    const std::size_t stop = std::min(data.rows, start + chunk);
    Eigen::MatrixXd a(static_cast<Eigen::Index>(data.cols), static_cast<Eigen::Index>(stop - start));
    for (std::size_t i = start; i < stop; ++i) {
      const auto row = data.row(i);
      for (std::size_t j = 0; j < data.cols; ++j) {
        a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i - start)) = row[j];
      }
    }
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      const auto& layer = model.layers[l];
      Eigen::MatrixXd z = (layer.weights * a).colwise() + layer.bias;
      a = l + 1 < model.layers.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
    }
    Eigen::MatrixXd logits = a;
    Eigen::RowVectorXd lse = softmax_columns(a);
    for (std::size_t i = start; i < stop; ++i) {
      const auto c = static_cast<Eigen::Index>(i - start);
      total += lse(c) - logits(static_cast<Eigen::Index>(data.labels[i]), c);
    }
  }
  return total / static_cast<double>(data.rows);
}

}  // namespace kdx
