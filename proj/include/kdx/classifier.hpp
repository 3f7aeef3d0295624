// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "kdx/dataset.hpp"
#include "kdx/density.hpp"
#include "kdx/forest.hpp"
#include "kdx/relu_net.hpp"

namespace kdx {

using ParentModel = std::variant<ForestModel, ReluNetModel>;

/// Hold-out score minimized when choosing k from the grid.
enum class KSelection { classification_error, log_loss };

const char* k_selection_name(KSelection selection) noexcept;
KSelection parse_k_selection(const std::string& name);

struct KdxOptions {
  DistanceMode distance_mode = DistanceMode::euclidean;
  double lambda = 1e-6;
  std::optional<double> log_bias;
  std::vector<double> k_grid = default_k_grid();
  KSelection k_selection = KSelection::classification_error;
};

struct BatchPrediction {
  std::vector<double> posteriors;  // rows x class_count, row-major
  std::vector<int> labels;
  std::size_t class_count = 0;
};

/// A parent partition learner together with the kernel density model built
/// over its populated polytopes: KDF for a forest parent, KDN for a ReLU net.
class KdxClassifier {
 public:
  KdxClassifier() = default;
  KdxClassifier(ParentModel parent, KdxModel model, double k);

  /// Groups `fit_data` into polytopes of `parent`, then picks k from
  /// `options.k_grid` by `options.k_selection` on `calibrate` (which may be
  /// null only when the grid has a single candidate).
  static KdxClassifier fit(ParentModel parent, const Dataset& fit_data,
                           const Dataset* calibrate, const KdxOptions& options);

  MembershipSignature signature(std::span<const double> x) const;
  PosteriorResult predict(std::span<const double> x) const;
  BatchPrediction predict_batch(std::span<const double> features, std::size_t rows) const;

  const ParentModel& parent() const noexcept { return parent_; }
  const KdxModel& model() const noexcept { return model_; }
  double selected_k() const noexcept { return k_; }
  bool is_forest() const noexcept { return std::holds_alternative<ForestModel>(parent_); }

 private:
  ParentModel parent_;
  KdxModel model_;
  double k_ = 1.0;
};

MembershipSignature parent_signature(const ParentModel& parent, std::span<const double> x);
std::vector<double> parent_predict_proba(const ParentModel& parent, std::span<const double> x);
std::size_t parent_input_dim(const ParentModel& parent);

/// Parent posteriors for many rows (row-major output, rows x K).
BatchPrediction parent_predict_batch(const ParentModel& parent, std::span<const double> features,
                                     std::size_t rows);

}  // namespace kdx
