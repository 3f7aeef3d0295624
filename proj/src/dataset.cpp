// SPDX-License-Identifier: Apache-2.0
#include "kdx/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "kdx/error.hpp"
#include "kdx/rng.hpp"

namespace kdx {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_input: return "invalid_input";
    case ErrorCode::training_failure: return "training_failure";
    case ErrorCode::io: return "io";
    case ErrorCode::config: return "config";
    case ErrorCode::undefined_improvement: return "undefined_improvement";
  }
  return "unknown";
}

void Dataset::validate() const {
  require(rows >= 1, "dataset is empty");
  require(cols >= 1, "dataset has no feature columns");
  require(features.size() == rows * cols, "feature matrix shape does not match rows x cols");
  require(labels.size() == rows, "label count does not match row count");
  require(class_count >= 1, "class_count must be positive");
  for (std::size_t i = 0; i < rows; ++i) {
    if (labels[i] < 0 || labels[i] >= class_count) {
      fail(ErrorCode::invalid_input, "label " + std::to_string(labels[i]) + " at row " +
                                         std::to_string(i) + " outside [0, " +
                                         std::to_string(class_count) + ")");
    }
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!std::isfinite(features[i])) {
      fail(ErrorCode::invalid_input, "non-finite feature at row " + std::to_string(i / cols) +
                                         ", column " + std::to_string(i % cols));
    }
  }
}

Dataset make_dataset(std::vector<double> features, std::vector<int> labels, std::size_t cols,
                     int class_count) {
  require(cols >= 1, "dataset has no feature columns");
  Dataset data;
  data.rows = labels.size();
  data.cols = cols;
  if (class_count < 0) {
    class_count = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  }
  data.class_count = class_count;
  data.features = std::move(features);
  data.labels = std::move(labels);
  data.validate();
  return data;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.cols = data.cols;
  out.class_count = data.class_count;
  out.feature_names = data.feature_names;
  out.rows = indices.size();
  out.features.reserve(indices.size() * data.cols);
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    require(i < data.rows, "subset index out of range");
    auto r = data.row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(data.labels[i]);
  }
  return out;
}

std::vector<std::size_t> class_counts(const Dataset& data) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(data.class_count), 0);
  for (int y : data.labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

std::vector<double> class_priors(const Dataset& data) {
  require(data.rows > 0, "class priors of an empty dataset");
  auto counts = class_counts(data);
  std::vector<double> priors(counts.size());
  for (std::size_t y = 0; y < counts.size(); ++y) {
    priors[y] = static_cast<double>(counts[y]) / static_cast<double>(data.rows);
  }
  return priors;
}

DatasetSplit split_dataset(const Dataset& data, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, "split fraction must lie in (0, 1)");
  std::vector<std::size_t> order(data.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto first_count =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.rows)));
  std::span<const std::size_t> all(order);
  return {subset(data, all.first(first_count)), subset(data, all.subspan(first_count))};
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  for (auto& s : cells) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  }
  return cells;
}

bool parse_double(const std::string& text, double& value) {
  if (text.empty()) return false;
  char* end = nullptr;
  value = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size() && std::isfinite(value);
}

}  // namespace

Dataset read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::io, path.string() + ": missing header row");
  auto header = split_csv_line(line);
  if (header.size() < 2) {
    fail(ErrorCode::invalid_input, path.string() + ": need at least one feature and a label column");
  }
  const std::size_t cols = header.size() - 1;

  std::vector<double> features;
  std::vector<long long> raw_labels;
  std::vector<bool> bad_column(cols, false);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      fail(ErrorCode::invalid_input, path.string() + ":" + std::to_string(line_no) +
                                         ": expected " + std::to_string(header.size()) +
                                         " columns, got " + std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < cols; ++j) {
      double v = 0.0;
      if (!parse_double(cells[j], v)) bad_column[j] = true;
      features.push_back(v);
    }
    double label = 0.0;
    if (!parse_double(cells[cols], label) || label != std::floor(label)) {
      fail(ErrorCode::invalid_input, path.string() + ":" + std::to_string(line_no) +
                                         ": label '" + cells[cols] + "' is not an integer");
    }
    raw_labels.push_back(static_cast<long long>(label));
  }
  std::string offending;
  for (std::size_t j = 0; j < cols; ++j) {
    if (bad_column[j]) offending += (offending.empty() ? "" : ", ") + header[j];
  }
  if (!offending.empty()) {
    fail(ErrorCode::invalid_input,
         path.string() + ": non-numeric feature columns: " + offending);
  }
  if (raw_labels.empty()) fail(ErrorCode::invalid_input, path.string() + ": no data rows");

  std::map<long long, int> mapping;
  for (auto v : raw_labels) mapping.emplace(v, 0);
  int next = 0;
  for (auto& [value, id] : mapping) id = next++;
  std::vector<int> labels;
  labels.reserve(raw_labels.size());
  for (auto v : raw_labels) labels.push_back(mapping.at(v));

  Dataset data = make_dataset(std::move(features), std::move(labels), cols, next);
  data.feature_names.assign(header.begin(), header.end() - 1);
  return data;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  for (std::size_t j = 0; j < data.cols; ++j) {
    if (j < data.feature_names.size()) {
      out << data.feature_names[j];
    } else {
      out << 'x' << j;
    }
    out << ',';
  }
  out << "label\n";
  out.precision(17);
  for (std::size_t i = 0; i < data.rows; ++i) {
    for (double v : data.row(i)) out << v << ',';
    out << data.labels[i] << '\n';
  }
  if (!out) fail(ErrorCode::io, "failed writing " + path.string());
}

}  // namespace kdx
