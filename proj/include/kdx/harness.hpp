// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kdx/classifier.hpp"
#include "kdx/density.hpp"
#include "kdx/forest.hpp"
#include "kdx/relu_net.hpp"
#include "kdx/synthetic.hpp"

namespace kdx {

inline constexpr int kReportSchemaVersion = 1;

enum class PosteriorOracleMode { automatic, analytic, numeric, none };

struct ExperimentConfig {
  std::vector<std::string> methods = {"rf", "kdf", "dn", "kdn"};
  DistanceMode distance_mode = DistanceMode::euclidean;
  SimulationSpec simulation;
  std::string csv_path;  // run-tabular only
  std::vector<std::size_t> sample_sizes = {1000};
  std::vector<std::size_t> dimensions;  // run-trunk only
  std::vector<double> ood_radii = {1, 2, 3, 4, 5};
  std::size_t ood_count = 1000;
  std::size_t test_size = 1000;
  double test_fraction = 0.2;  // run-tabular hold-out
  std::size_t repetitions = 5;
  double fit_fraction = 0.9;
  std::vector<double> k_grid = default_k_grid();
  KSelection k_selection = KSelection::classification_error;
  double lambda = 1e-6;
  std::optional<double> log_bias;
  PosteriorOracleMode posterior_oracle = PosteriorOracleMode::automatic;
  std::size_t oracle_draws = 1'000'000;
  ForestConfig forest;
  NetConfig net;
  std::uint64_t seed = 0;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Trunk sweep protocol: n = 5000, OOD radius 20, dimensions (2, 4, 8).
ExperimentConfig trunk_sweep_defaults();

/// Full-scale protocol: 45 repetitions, 500 trees, 4 x 1000 ReLU net.
ExperimentConfig full_scale_preset();

/// Throws config errors for invalid values.
void validate_config(const ExperimentConfig& config);

std::string config_to_json(const ExperimentConfig& config);
/// Unknown keys are rejected. Missing keys keep their values from `base`.
ExperimentConfig config_from_json(const std::string& text, const ExperimentConfig& base = {});

struct ReportRow {
  std::string method;
  std::string distance_mode;
  std::size_t n = 0;
  std::size_t d = 0;
  double radius = 0.0;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  double classification_error = 0.0;
  std::optional<double> hellinger;
  std::optional<double> mce;
  double mean_max_confidence = 0.0;
  std::optional<double> oce;
  std::optional<double> improvement_error;
  std::optional<double> improvement_mce;
  std::optional<double> improvement_oce;
  std::optional<double> selected_k;

  bool operator==(const ReportRow&) const = default;
};

struct SummaryRow {
  std::string method;
  std::size_t n = 0;
  std::size_t d = 0;
  double radius = 0.0;
  std::string metric;
  std::size_t count = 0;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;

  bool operator==(const SummaryRow&) const = default;
};

struct ExperimentReport {
  int schema_version = kReportSchemaVersion;
  std::string software_version;
  std::string experiment;
  ExperimentConfig config;
  std::string seed_rule;
  std::vector<std::uint64_t> seeds;
  std::vector<ReportRow> rows;
  std::vector<SummaryRow> summaries;

  bool operator==(const ExperimentReport&) const = default;
};

ExperimentReport run_simulation_experiment(const ExperimentConfig& config);

/// Sweeps `config.dimensions` on trunk data; see trunk_sweep_defaults().
ExperimentReport run_trunk_sweep(ExperimentConfig config);

ExperimentReport run_tabular_experiment(const std::filesystem::path& csv_path,
                                        ExperimentConfig config);

/// Rows sorted by (method, n, d, radius, repetition); summaries likewise.
void finalize_report(ExperimentReport& report);

/// Linear-interpolation percentile (q in [0, 100]) of unsorted values.
double percentile(std::vector<double> values, double q);

std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const std::string& text);
/// Fixed header, one line per row.
std::string report_to_csv(const ExperimentReport& report);
std::string report_summary_csv(const ExperimentReport& report);

/// `format` is "json" or "csv"; the file is written atomically.
void emit_report(const ExperimentReport& report, const std::string& format,
                 const std::filesystem::path& path);
ExperimentReport read_report(const std::filesystem::path& path);

}  // namespace kdx
