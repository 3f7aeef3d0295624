// SPDX-License-Identifier: Apache-2.0
#include "kdx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kdx/error.hpp"

namespace kdx {

namespace {

// Neumaier compensated sum.
class Accumulator {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

void check_distribution(std::span<const double> p, const char* what) {
  Accumulator total;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      fail(ErrorCode::invalid_input, std::string(what) + " has a negative or non-finite entry");
    }
    total.add(v);
  }
  if (std::abs(total.value() - 1.0) > 1e-6) {
    fail(ErrorCode::invalid_input, std::string(what) + " does not sum to 1");
  }
}

void check_matrix(std::span<const double> m, std::size_t class_count) {
  require(class_count >= 1, "class count must be positive");
  require(m.size() % class_count == 0, "posterior matrix size is not a multiple of the class count");
}

}  // namespace

double hellinger_distance(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size() && !p.empty(), "distributions must have equal nonzero length");
  check_distribution(p, "first distribution");
  check_distribution(q, "second distribution");
  Accumulator sq;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = std::sqrt(p[i]) - std::sqrt(q[i]);
    sq.add(d * d);
  }
  return std::min(1.0, std::sqrt(sq.value() / 2.0));
}

double mean_hellinger_distance(std::span<const double> p, std::span<const double> q,
                               std::size_t class_count) {
  check_matrix(p, class_count);
  require(p.size() == q.size() && !p.empty(), "posterior matrices must have equal nonzero size");
  const std::size_t rows = p.size() / class_count;
  Accumulator total;
  for (std::size_t i = 0; i < rows; ++i) {
    total.add(hellinger_distance(p.subspan(i * class_count, class_count),
                                 q.subspan(i * class_count, class_count)));
  }
  return total.value() / static_cast<double>(rows);
}

double maximum_calibration_error(std::span<const double> confidences,
                                 std::span<const int> correct, std::size_t bins) {
  require(bins >= 1, "bin count must be positive");
  require(confidences.size() == correct.size() && !confidences.empty(),
          "confidences and correctness must have equal nonzero length");
  std::vector<Accumulator> conf_sum(bins), hit_sum(bins);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) fail(ErrorCode::invalid_input, "confidence outside [0, 1]");
    require(correct[i] == 0 || correct[i] == 1, "correctness entries must be 0 or 1");
    auto b = static_cast<std::size_t>(c * static_cast<double>(bins));
    b = std::min(b, bins - 1);
    conf_sum[b].add(c);
    hit_sum[b].add(correct[i]);
    ++count[b];
  }
  double worst = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const double n = static_cast<double>(count[b]);
    worst = std::max(worst, std::abs(hit_sum[b].value() / n - conf_sum[b].value() / n));
  }
  return worst;
}

double ood_calibration_error(std::span<const double> posteriors, std::span<const double> priors) {
  require(!priors.empty(), "priors must be non-empty");
  check_matrix(posteriors, priors.size());
  require(!posteriors.empty(), "posterior matrix is empty");
  const double prior_max = *std::max_element(priors.begin(), priors.end());
  const std::size_t k = priors.size();
  const std::size_t rows = posteriors.size() / k;
  Accumulator total;
  for (std::size_t i = 0; i < rows; ++i) {
    auto row = posteriors.subspan(i * k, k);
    total.add(std::abs(*std::max_element(row.begin(), row.end()) - prior_max));
  }
  return total.value() / static_cast<double>(rows);
}

double mean_max_confidence(std::span<const double> posteriors, std::size_t class_count) {
  check_matrix(posteriors, class_count);
  require(!posteriors.empty(), "posterior matrix is empty");
  const std::size_t rows = posteriors.size() / class_count;
  Accumulator total;
  for (std::size_t i = 0; i < rows; ++i) {
    auto row = posteriors.subspan(i * class_count, class_count);
    total.add(*std::max_element(row.begin(), row.end()));
  }
  return total.value() / static_cast<double>(rows);
}

double improvement(double parent_stat, double method_stat) {
  if (parent_stat == 0.0) {
    fail(ErrorCode::undefined_improvement, "improvement is undefined when the parent statistic is 0");
  }
  return (parent_stat - method_stat) / parent_stat;
}

double classification_error(std::span<const int> predictions, std::span<const int> labels) {
  require(predictions.size() == labels.size() && !labels.empty(),
          "predictions and labels must have equal nonzero length");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) wrong += predictions[i] != labels[i];
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

void max_and_argmax(std::span<const double> posteriors, std::size_t class_count,
                    std::span<double> max_out, std::span<int> argmax_out) {
  check_matrix(posteriors, class_count);
  const std::size_t rows = posteriors.size() / class_count;
  require(max_out.size() == rows && argmax_out.size() == rows, "output spans have the wrong length");
  for (std::size_t i = 0; i < rows; ++i) {
    auto row = posteriors.subspan(i * class_count, class_count);
    const auto it = std::max_element(row.begin(), row.end());
    max_out[i] = *it;
    argmax_out[i] = static_cast<int>(it - row.begin());
  }
}

}  // namespace kdx
