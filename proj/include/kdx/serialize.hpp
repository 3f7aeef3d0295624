// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "kdx/classifier.hpp"
#include "kdx/forest.hpp"
#include "kdx/relu_net.hpp"

namespace kdx {

/// Models are stored as JSON documents tagged with {"format": "kdx-model",
/// "version": N, "kind": ...}. Doubles are written in shortest round-trip
/// form, so save/load reproduces every weight and threshold bit for bit.
inline constexpr int kModelFormatVersion = 1;

std::string forest_to_json(const ForestModel& model);
ForestModel forest_from_json(const std::string& text);

std::string net_to_json(const ReluNetModel& model);
ReluNetModel net_from_json(const std::string& text);

std::string classifier_to_json(const KdxClassifier& classifier);
KdxClassifier classifier_from_json(const std::string& text);

void save_classifier(const KdxClassifier& classifier, const std::filesystem::path& path);
KdxClassifier load_classifier(const std::filesystem::path& path);

/// Writes `contents` to a sibling temp file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace kdx
