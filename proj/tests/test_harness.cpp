// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "kdx/error.hpp"
#include "kdx/harness.hpp"

using namespace kdx;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig config;
  config.methods = {"rf", "kdf"};
  config.sample_sizes = {200};
  config.repetitions = 2;
  config.ood_count = 50;
  config.test_size = 100;
  config.forest.tree_count = 10;
  config.net.epochs = 5;
  config.seed = 7;
  return config;
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

std::size_t line_count(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

}  // namespace

TEST_SUITE("protocol") {
  TEST_CASE("one row per method, radius and repetition") {
    const auto report = run_simulation_experiment(small_config());
    CHECK(report.rows.size() == 2 * 5 * 2);
    std::set<std::tuple<std::string, double, std::size_t>> cells;
    for (const auto& r : report.rows) {
      cells.emplace(r.method, r.radius, r.repetition);
      CHECK(r.n == 200);
      CHECK(r.d == 2);
      CHECK(r.hellinger.has_value());
      CHECK(r.classification_error >= 0.0);
      CHECK(r.classification_error <= 1.0);
    }
    CHECK(cells.size() == report.rows.size());
    CHECK(report.seeds.size() == 2);
    CHECK(report.schema_version == 1);
    CHECK_FALSE(report.seed_rule.empty());
    CHECK_FALSE(report.software_version.empty());
  }

  TEST_CASE("rows are sorted and summaries are ordered percentiles") {
    const auto report = run_simulation_experiment(small_config());
    for (std::size_t i = 1; i < report.rows.size(); ++i) {
      const auto& a = report.rows[i - 1];
      const auto& b = report.rows[i];
      CHECK(std::tie(a.method, a.n, a.d, a.radius, a.repetition) <
            std::tie(b.method, b.n, b.d, b.radius, b.repetition));
    }
    REQUIRE_FALSE(report.summaries.empty());
    for (const auto& s : report.summaries) {
      CHECK(s.count >= 1);
      CHECK(s.p25 <= s.p50);
      CHECK(s.p50 <= s.p75);
    }
  }

  TEST_CASE("parent rows improve on themselves by zero") {
    const auto report = run_simulation_experiment(small_config());
    for (const auto& r : report.rows) {
      if (r.method != "rf") continue;
      if (r.improvement_error) CHECK(*r.improvement_error == 0.0);
      if (r.improvement_mce) CHECK(*r.improvement_mce == 0.0);
      if (r.improvement_oce) CHECK(*r.improvement_oce == 0.0);
      CHECK_FALSE(r.selected_k.has_value());
    }
    for (const auto& r : report.rows) {
      if (r.method == "kdf") CHECK(r.selected_k.has_value());
    }
  }

  TEST_CASE("same config and seed give identical reports") {
    auto config = small_config();
    config.methods = {"dn", "kdn"};
    config.distance_mode = DistanceMode::geodesic;
    const auto a = run_simulation_experiment(config);
    const auto b = run_simulation_experiment(config);
    CHECK(report_to_json(a) == report_to_json(b));
    config.seed = 8;
    CHECK(report_to_json(run_simulation_experiment(config)) != report_to_json(a));
  }

  TEST_CASE("trunk sweep covers each dimension") {
    const auto defaults = trunk_sweep_defaults();
    CHECK(defaults.sample_sizes == std::vector<std::size_t>{5000});
    CHECK(defaults.ood_radii == std::vector<double>{20.0});
    CHECK(defaults.dimensions == std::vector<std::size_t>{2, 4, 8});

    auto config = small_config();
    config.dimensions = {2, 4, 8};
    config.ood_radii = {20.0};
    config.repetitions = 1;
    const auto report = run_trunk_sweep(config);
    std::set<std::pair<std::string, std::size_t>> cells;
    for (const auto& r : report.rows) cells.emplace(r.method, r.d);
    CHECK(cells.size() == 2 * 3);
    CHECK(report.rows.size() == 2 * 3);
    for (const auto& r : report.rows) CHECK(r.hellinger.has_value());
  }

  TEST_CASE("tabular runs on a csv and omits hellinger") {
    const auto path = std::filesystem::temp_directory_path() / "kdx_harness_tabular.csv";
    write_csv(gen_circle(300, 2), path);
    auto config = small_config();
    config.repetitions = 1;
    const auto report = run_tabular_experiment(path, config);
    std::filesystem::remove(path);
    CHECK(report.experiment == "run-tabular");
    CHECK(report.rows.size() == 2 * 5);
    for (const auto& r : report.rows) {
      CHECK_FALSE(r.hellinger.has_value());
      CHECK(r.n == 240);
      if (r.method == "rf" && r.improvement_error) CHECK(*r.improvement_error == 0.0);
    }
  }

  TEST_CASE("full-scale preset") {
    const auto full = full_scale_preset();
    CHECK(full.repetitions == 45);
    CHECK(full.forest.tree_count == 500);
    CHECK(full.net.hidden == std::vector<std::size_t>(4, 1000));
    CHECK(ExperimentConfig{}.ood_radii == std::vector<double>{1, 2, 3, 4, 5});
    CHECK(ExperimentConfig{}.ood_count == 1000);
    CHECK(ExperimentConfig{}.fit_fraction == 0.9);
  }
}

TEST_SUITE("config") {
  TEST_CASE("json round trip and overlay") {
    auto config = small_config();
    config.log_bias = -3.5;
    config.k_selection = KSelection::log_loss;
    CHECK(config_from_json(config_to_json(config)) == config);
    const auto overlaid = config_from_json(R"({"repetitions": 9})", config);
    CHECK(overlaid.repetitions == 9);
    CHECK(overlaid.forest.tree_count == 10);
  }

  TEST_CASE("unknown keys and bad values are config errors") {
    CHECK(code_of([] { config_from_json(R"({"repetitons": 3})"); }) == ErrorCode::config);
    CHECK(code_of([] { config_from_json(R"({"forest": {"trees": 3}})"); }) == ErrorCode::config);
    CHECK(code_of([] { validate_config(config_from_json(R"({"methods": ["svm"]})")); }) == ErrorCode::config);
    CHECK(code_of([] { validate_config(config_from_json(R"({"repetitions": 0})")); }) == ErrorCode::config);
    CHECK(code_of([] { validate_config(config_from_json(R"({"fit_fraction": 1.0})")); }) == ErrorCode::config);
    CHECK(code_of([] { validate_config(config_from_json(R"({"ood_radii": [3, 1]})")); }) == ErrorCode::config);
    CHECK(code_of([] { config_from_json("{"); }) == ErrorCode::config);
  }

  TEST_CASE("a split too small to fit is a config error") {
    auto config = small_config();
    config.sample_sizes = {2};
    CHECK(code_of([&] { run_simulation_experiment(config); }) == ErrorCode::config);
  }
}

TEST_SUITE("report io") {
  TEST_CASE("json round trips losslessly") {
    const auto report = run_simulation_experiment(small_config());
    CHECK(report_from_json(report_to_json(report)) == report);
    const auto path = std::filesystem::temp_directory_path() / "kdx_report_test.json";
    emit_report(report, "json", path);
    CHECK(read_report(path) == report);
    std::filesystem::remove(path);
  }

  TEST_CASE("csv header is fixed and empty reports are header-only") {
    const std::string header =
        "method,distance_mode,n,d,radius,repetition,seed,classification_error,hellinger,mce,"
        "mean_max_confidence,oce,improvement_error,improvement_mce,improvement_oce,selected_k";
    ExperimentReport empty;
    finalize_report(empty);
    const auto csv = report_to_csv(empty);
    CHECK(first_line(csv) == header);
    CHECK(line_count(csv) == 1);
    CHECK(first_line(report_summary_csv(empty)) == "method,n,d,radius,metric,count,p25,p50,p75");

    const auto report = run_simulation_experiment(small_config());
    const auto full = report_to_csv(report);
    CHECK(first_line(full) == header);
    CHECK(line_count(full) == 1 + report.rows.size());
  }

  TEST_CASE("unknown formats are rejected") {
    ExperimentReport empty;
    CHECK(code_of([&] { emit_report(empty, "xml", "/tmp/kdx_never_written"); }) == ErrorCode::config);
  }

  TEST_CASE("percentiles interpolate linearly") {
    CHECK(percentile({1, 2, 3, 4}, 50) == 2.5);
    CHECK(percentile({1, 2, 3, 4, 5}, 25) == 2.0);
    CHECK(percentile({4, 1, 3, 2}, 75) == 3.25);
    CHECK(percentile({7}, 25) == 7.0);
  }
}
