// SPDX-License-Identifier: Apache-2.0
#include "kdx/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kdx/error.hpp"
#include "parallel.hpp"

namespace kdx {

MembershipSignature parent_signature(const ParentModel& parent, std::span<const double> x) {
  if (const auto* forest = std::get_if<ForestModel>(&parent)) return forest_signature(*forest, x);
  return net_signature(std::get<ReluNetModel>(parent), x);
}

std::vector<double> parent_predict_proba(const ParentModel& parent, std::span<const double> x) {
  if (const auto* forest = std::get_if<ForestModel>(&parent)) {
    return forest_predict_proba(*forest, x);
  }
  return net_predict_proba(std::get<ReluNetModel>(parent), x);
}

std::size_t parent_input_dim(const ParentModel& parent) {
  if (const auto* forest = std::get_if<ForestModel>(&parent)) return forest->input_dim;
  return std::get<ReluNetModel>(parent).input_dim();
}

namespace {

int parent_class_count(const ParentModel& parent) {
  if (const auto* forest = std::get_if<ForestModel>(&parent)) return forest->class_count;
  return std::get<ReluNetModel>(parent).class_count();
}

template <typename RowFn>
BatchPrediction predict_rows(std::span<const double> features, std::size_t rows, std::size_t dim,
                             std::size_t classes, RowFn&& row_fn) {
  require(features.size() == rows * dim, "feature buffer does not match rows x model dimension");
  BatchPrediction out;
  out.class_count = classes;
  out.posteriors.assign(rows * classes, 0.0);
  out.labels.assign(rows, 0);
  detail::parallel_for(rows, [&](std::size_t i) {
    const auto posteriors = row_fn(features.subspan(i * dim, dim));
    std::size_t best = 0;
    for (std::size_t y = 0; y < classes; ++y) {
      out.posteriors[i * classes + y] = posteriors[y];
      if (posteriors[y] > posteriors[best]) best = y;
    }
    out.labels[i] = static_cast<int>(best);
  });
  return out;
}

}  // namespace

BatchPrediction parent_predict_batch(const ParentModel& parent, std::span<const double> features,
                                     std::size_t rows) {
  return predict_rows(features, rows, parent_input_dim(parent),
                      static_cast<std::size_t>(parent_class_count(parent)),
                      [&](std::span<const double> x) { return parent_predict_proba(parent, x); });
}

const char* k_selection_name(KSelection selection) noexcept {
  return selection == KSelection::log_loss ? "log_loss" : "classification_error";
}

KSelection parse_k_selection(const std::string& name) {
  if (name == "classification_error") return KSelection::classification_error;
  if (name == "log_loss") return KSelection::log_loss;
  fail(ErrorCode::invalid_input,
       "unknown k selection '" + name + "' (expected classification_error or log_loss)");
}

KdxClassifier::KdxClassifier(ParentModel parent, KdxModel model, double k)
    : parent_(std::move(parent)), model_(std::move(model)), k_(k) {
  require(parent_input_dim(parent_) == model_.input_dim,
          "parent and density model disagree on input dimension");
}

KdxClassifier KdxClassifier::fit(ParentModel parent, const Dataset& fit_data,
                                 const Dataset* calibrate, const KdxOptions& options) {
  fit_data.validate();
  require(fit_data.cols == parent_input_dim(parent), "data dimension does not match the parent");
  require(!options.k_grid.empty(), "k grid is empty");
  const bool search = options.k_grid.size() > 1;
  if (search) {
    require(calibrate != nullptr && calibrate->rows > 0,
            "choosing k from a grid needs a non-empty calibration set");
    require(calibrate->cols == fit_data.cols, "calibration data dimension mismatch");
  }

  std::vector<MembershipSignature> signatures(fit_data.rows);
  detail::parallel_for(fit_data.rows, [&](std::size_t i) {
    signatures[i] = parent_signature(parent, fit_data.row(i));
  });
  const PolytopeGrouping grouping = group_polytopes(signatures);
  signatures.clear();
  const PairwiseMatrix kernels = polytope_kernel_matrix(grouping);

  KdxParams params;
  params.lambda = options.lambda;
  params.log_bias = options.log_bias;
  params.distance_mode = options.distance_mode;
  auto fit_for = [&](double k) {
    return fit_kdx(fit_data, grouping, exponentiate_weights(kernels, fit_data.rows, k), params);
  };
  if (!search) return KdxClassifier(std::move(parent), fit_for(options.k_grid.front()),
                                    options.k_grid.front());

  std::vector<MembershipSignature> calib_signatures;
  if (options.distance_mode == DistanceMode::geodesic) {
    calib_signatures.resize(calibrate->rows);
    detail::parallel_for(calibrate->rows, [&](std::size_t i) {
      calib_signatures[i] = parent_signature(parent, calibrate->row(i));
    });
  }
  KdxModel best_model;
  double best_k = 0.0;
  double best_score = std::numeric_limits<double>::infinity();
  const double chosen = select_grid_k(options.k_grid, [&](double k) {
    KdxModel candidate = fit_for(k);
    std::vector<double> loss(calibrate->rows, 0.0);
    detail::parallel_for(calibrate->rows, [&](std::size_t i) {
      const MembershipSignature* sig = calib_signatures.empty() ? nullptr : &calib_signatures[i];
      const PosteriorResult result = posterior(candidate, calibrate->row(i), sig);
      const int label = calibrate->labels[i];
      if (options.k_selection == KSelection::classification_error) {
        loss[i] = result.predicted_class != label ? 1.0 : 0.0;
      } else {
        constexpr double floor = 1e-15;
        loss[i] = -std::log(std::max(result.posteriors[static_cast<std::size_t>(label)], floor));
      }
    });
    double total = 0.0;
    for (double l : loss) total += l;
    const double score = total / static_cast<double>(calibrate->rows);
    if (score < best_score || (score == best_score && k < best_k)) {
      best_score = score;
      best_k = k;
      best_model = std::move(candidate);
    }
    return score;
  });
  return KdxClassifier(std::move(parent), std::move(best_model), chosen);
}

MembershipSignature KdxClassifier::signature(std::span<const double> x) const {
  return parent_signature(parent_, x);
}

PosteriorResult KdxClassifier::predict(std::span<const double> x) const {
  if (model_.distance_mode == DistanceMode::geodesic) {
    const MembershipSignature sig = signature(x);
    return posterior(model_, x, &sig);
  }
  return posterior(model_, x);
}

BatchPrediction KdxClassifier::predict_batch(std::span<const double> features,
                                             std::size_t rows) const {
  return predict_rows(features, rows, model_.input_dim,
                      static_cast<std::size_t>(model_.class_count()),
                      [&](std::span<const double> x) { return predict(x).posteriors; });
}

}  // namespace kdx
