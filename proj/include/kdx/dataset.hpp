// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace kdx {

/// Feature matrix (row-major, rows x cols) with dense integer class labels.
struct Dataset {
  std::vector<double> features;
  std::vector<int> labels;
  std::size_t rows = 0;
  std::size_t cols = 0;
  int class_count = 0;
  std::vector<std::string> feature_names;

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * cols, cols};
  }

  /// Throws invalid_input unless n >= 1, d >= 1, shapes agree, labels lie in
  /// [0, class_count) and every feature is finite.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

/// Builds and validates a dataset. A negative `class_count` means max(label) + 1.
Dataset make_dataset(std::vector<double> features, std::vector<int> labels,
                     std::size_t cols, int class_count = -1);

Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

/// Empirical class frequencies n_y / n.
std::vector<double> class_priors(const Dataset& data);
std::vector<std::size_t> class_counts(const Dataset& data);

struct DatasetSplit {
  Dataset first;
  Dataset second;
};

/// Shuffles with `seed` and puts round(fraction * n) rows into `first`.
DatasetSplit split_dataset(const Dataset& data, double fraction, std::uint64_t seed);

/// Reads a headered CSV whose last column is an integer label. Distinct label
/// values are mapped in ascending order onto 0..K-1.
Dataset read_csv(const std::filesystem::path& path);
void write_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace kdx
