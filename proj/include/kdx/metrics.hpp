// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

namespace kdx {

inline constexpr std::size_t kDefaultCalibrationBins = 15;

/// (1 / sqrt 2) * || sqrt(p) - sqrt(q) ||_2.
double hellinger_distance(std::span<const double> p, std::span<const double> q);

/// Arithmetic mean of the row-wise Hellinger distances of two rows x K matrices.
double mean_hellinger_distance(std::span<const double> p, std::span<const double> q,
                               std::size_t class_count);

/// Maximum calibration error over `bins` equal-width confidence bins.
/// Bins are [i/R, (i+1)/R) except the last, which is closed at 1.
double maximum_calibration_error(std::span<const double> confidences,
                                 std::span<const int> correct,
                                 std::size_t bins = kDefaultCalibrationBins);

/// mean_i | max_y P(y | x_i) - max_y P_Y(y) |, rows x K posteriors.
double ood_calibration_error(std::span<const double> posteriors, std::span<const double> priors);

double mean_max_confidence(std::span<const double> posteriors, std::size_t class_count);

/// (parent - method) / parent. Throws undefined_improvement when parent == 0.
double improvement(double parent_stat, double method_stat);

double classification_error(std::span<const int> predictions, std::span<const int> labels);

/// Row maxima and argmax of a rows x K posterior matrix.
void max_and_argmax(std::span<const double> posteriors, std::size_t class_count,
                    std::span<double> max_out, std::span<int> argmax_out);

}  // namespace kdx
