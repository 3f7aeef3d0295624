// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Talks to the library only through the C API.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kdx/kdx.h"

using nlohmann::json;

namespace {

struct CliFailure {
  std::string code;
  std::string message;
  int exit_code;
};

[[noreturn]] void raise(kdx_status status) {
  throw CliFailure{kdx_status_name(status), kdx_last_error(), static_cast<int>(status)};
}

void check(kdx_status status) {
  if (status != KDX_OK) raise(status);
}

[[noreturn]] void usage_error(const std::string& message) {
  throw CliFailure{"config", message, static_cast<int>(KDX_ERR_CONFIG)};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliFailure{"io", "cannot open '" + path + "'", static_cast<int>(KDX_ERR_IO)};
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json parse_or_fail(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    usage_error(what + " is not valid JSON: " + e.what());
  }
}

// Flags shared by the experiment subcommands. Unset flags leave the config alone.
struct ExperimentFlags {
  std::string config_path;
  bool full_scale = false;
  std::string out;
  std::string format = "json";
  std::string summary_out;

  std::optional<std::string> simulation;
  std::vector<std::size_t> sample_sizes;
  std::vector<std::size_t> dimensions;
  std::optional<std::size_t> dimension;
  std::optional<int> classes;
  std::optional<double> turns;
  std::vector<std::string> methods;
  std::optional<std::string> distance_mode;
  std::vector<double> radii;
  std::optional<std::size_t> ood_count;
  std::optional<std::size_t> test_size;
  std::optional<double> test_fraction;
  std::optional<std::size_t> repetitions;
  std::optional<double> fit_fraction;
  std::vector<double> k_grid;
  std::optional<std::string> k_selection;
  std::optional<double> lambda;
  std::optional<double> log_bias;
  std::optional<std::string> oracle;
  std::optional<std::size_t> oracle_draws;
  std::optional<std::size_t> trees;
  std::optional<std::size_t> max_depth;
  std::vector<std::size_t> hidden;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::string csv;
};

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& f, const std::string& experiment) {
  cmd->add_option("--config", f.config_path, "JSON config file; flags override its values");
  cmd->add_flag("--full-scale", f.full_scale, "Full-scale protocol: 45 repetitions, 500 trees, 4x1000 net");
  cmd->add_option("-o,--out", f.out, "Report output path")->required();
  cmd->add_option("--format", f.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
  cmd->add_option("--summary-out", f.summary_out, "Also write the percentile summary CSV here");
  if (experiment == "run-sim") {
    cmd->add_option("--simulation", f.simulation, "xor | spiral | circle | sinewave | polynomial | trunk");
    cmd->add_option("--n", f.sample_sizes, "Training sample sizes")->delimiter(',');
    cmd->add_option("--dimension", f.dimension, "Trunk dimension");
    cmd->add_option("--classes", f.classes, "Spiral class count");
    cmd->add_option("--turns", f.turns, "Spiral turns");
  }
  if (experiment == "run-trunk") {
    cmd->add_option("--n", f.sample_sizes, "Training sample sizes")->delimiter(',');
    cmd->add_option("--dimensions", f.dimensions, "Trunk dimensions to sweep")->delimiter(',');
  }
  if (experiment == "run-tabular") {
    cmd->add_option("csv", f.csv, "Headered CSV, last column integer label")->required();
    cmd->add_option("--test-fraction", f.test_fraction, "Hold-out fraction for ID metrics");
  } else {
    cmd->add_option("--test-size", f.test_size, "Fresh in-distribution test points");
    cmd->add_option("--oracle", f.oracle, "True posterior source: auto | analytic | numeric | none");
    cmd->add_option("--oracle-draws", f.oracle_draws, "Monte Carlo draws for the numeric oracle");
  }
  cmd->add_option("--methods", f.methods, "Subset of rf,kdf,dn,kdn")->delimiter(',');
  cmd->add_option("--distance-mode", f.distance_mode, "euclidean | geodesic");
  cmd->add_option("--radii", f.radii, "OOD hypersphere radii")->delimiter(',');
  cmd->add_option("--ood-count", f.ood_count, "Points per OOD radius");
  cmd->add_option("--repetitions", f.repetitions, "Repetitions per cell");
  cmd->add_option("--fit-fraction", f.fit_fraction, "Fit share of the fit/calibrate split");
  cmd->add_option("--k-grid", f.k_grid, "Candidate k values")->delimiter(',');
  cmd->add_option("--k-selection", f.k_selection, "Hold-out score for k: classification_error | log_loss");
  cmd->add_option("--lambda", f.lambda, "Covariance regularizer");
  cmd->add_option("--log-bias", f.log_bias, "Natural log of the density bias b");
  cmd->add_option("--trees", f.trees, "Forest size");
  cmd->add_option("--max-depth", f.max_depth, "Tree depth limit (0 = none)");
  cmd->add_option("--hidden", f.hidden, "Hidden layer widths")->delimiter(',');
  cmd->add_option("--epochs", f.epochs, "Network training epochs");
  cmd->add_option("--seed", f.seed, "Master seed");
}

template <typename T>
void put(json& doc, const char* key, const std::optional<T>& value) {
  if (value) doc[key] = *value;
}

template <typename T>
void put(json& doc, const char* key, const std::vector<T>& value) {
  if (!value.empty()) doc[key] = value;
}

json build_config(const std::string& experiment, const ExperimentFlags& f) {
  char* defaults = nullptr;
  check(kdx_config_defaults(experiment.c_str(), f.full_scale ? 1 : 0, &defaults));
  json doc = json::parse(defaults);
  kdx_string_free(defaults);
  if (!f.config_path.empty()) doc.merge_patch(parse_or_fail(slurp(f.config_path), f.config_path));

  json& sim = doc["simulation"];
  put(sim, "kind", f.simulation);
  put(sim, "dimension", f.dimension);
  put(sim, "class_count", f.classes);
  put(sim, "turns", f.turns);
  put(doc, "sample_sizes", f.sample_sizes);
  put(doc, "dimensions", f.dimensions);
  put(doc, "methods", f.methods);
  put(doc, "distance_mode", f.distance_mode);
  put(doc, "ood_radii", f.radii);
  put(doc, "ood_count", f.ood_count);
  put(doc, "test_size", f.test_size);
  put(doc, "test_fraction", f.test_fraction);
  put(doc, "repetitions", f.repetitions);
  put(doc, "fit_fraction", f.fit_fraction);
  put(doc, "k_grid", f.k_grid);
  put(doc, "k_selection", f.k_selection);
  put(doc, "lambda", f.lambda);
  put(doc, "log_bias", f.log_bias);
  put(doc, "posterior_oracle", f.oracle);
  put(doc, "oracle_draws", f.oracle_draws);
  put(doc["forest"], "tree_count", f.trees);
  put(doc["forest"], "max_depth", f.max_depth);
  put(doc["net"], "hidden", f.hidden);
  put(doc["net"], "epochs", f.epochs);
  put(doc, "seed", f.seed);
  if (!f.csv.empty()) doc["csv_path"] = f.csv;
  return doc;
}

void run_experiment(const std::string& experiment, const ExperimentFlags& f) {
  const json config = build_config(experiment, f);
  kdx_report* report = nullptr;
  check(kdx_experiment_run(experiment.c_str(), config.dump().c_str(), &report));
  kdx_status status = kdx_report_write(report, f.format.c_str(), f.out.c_str());
  if (status == KDX_OK && !f.summary_out.empty()) {
    status = kdx_report_write(report, "summary-csv", f.summary_out.c_str());
  }
  const std::size_t rows = kdx_report_row_count(report);
  kdx_report_free(report);
  check(status);
  std::cerr << experiment << ": wrote " << rows << " rows to " << f.out << "\n";
}

void write_predictions(const std::string& path, const std::vector<double>& posteriors,
                       const std::vector<int32_t>& labels, int32_t classes) {
  std::ostringstream out;
  for (int32_t k = 0; k < classes; ++k) out << "p" << k << ",";
  out << "label\n";
  out.precision(17);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (int32_t k = 0; k < classes; ++k) out << posteriors[i * classes + k] << ",";
    out << labels[i] << "\n";
  }
  if (path.empty() || path == "-") {
    std::cout << out.str();
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw CliFailure{"io", "cannot open '" + path + "'", static_cast<int>(KDX_ERR_IO)};
  file << out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel density forests and networks: calibrated posteriors from partition learners"};
  app.set_version_flag("--version", std::string(kdx_version()));
  app.require_subcommand(1);

  ExperimentFlags sim_flags, trunk_flags, tab_flags;
  auto* sim = app.add_subcommand("run-sim", "Simulation study over sample sizes and OOD radii");
  add_experiment_flags(sim, sim_flags, "run-sim");
  auto* trunk = app.add_subcommand("run-trunk", "Trunk dimension sweep");
  add_experiment_flags(trunk, trunk_flags, "run-trunk");
  auto* tab = app.add_subcommand("run-tabular", "Experiment on a local CSV dataset");
  add_experiment_flags(tab, tab_flags, "run-tabular");

  std::string report_in, report_out, report_format = "csv";
  auto* report = app.add_subcommand("report", "Convert a JSON report to CSV or summary CSV");
  report->add_option("input", report_in, "JSON report")->required();
  report->add_option("-o,--out", report_out, "Output path")->required();
  report->add_option("--format", report_format, "json | csv | summary-csv")
      ->check(CLI::IsMember({"json", "csv", "summary-csv"}));

  std::string gen_kind = "xor", gen_out;
  std::size_t gen_n = 1000, gen_dim = 0;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("gen", "Write a simulated dataset as CSV");
  gen->add_option("--kind", gen_kind, "xor | spiral | circle | sinewave | polynomial | trunk");
  gen->add_option("--n", gen_n, "Sample count");
  gen->add_option("--dimension", gen_dim, "Trunk dimension");
  gen->add_option("--seed", gen_seed, "Seed");
  gen->add_option("-o,--out", gen_out, "CSV output path")->required();

  std::string fit_data, fit_out, fit_options;
  std::string fit_learner = "forest";
  auto* fit = app.add_subcommand("fit", "Fit KDF or KDN on a CSV dataset and save the model");
  fit->add_option("data", fit_data, "Training CSV")->required();
  fit->add_option("--learner", fit_learner, "forest | net")->check(CLI::IsMember({"forest", "net"}));
  fit->add_option("--options", fit_options, "JSON options (distance_mode, k_grid, forest, net, ...)");
  fit->add_option("-o,--out", fit_out, "Model output path")->required();

  std::string predict_model, predict_data, predict_out;
  auto* predict = app.add_subcommand("predict", "Posteriors and labels for a CSV dataset");
  predict->add_option("model", predict_model, "Saved model")->required();
  predict->add_option("data", predict_data, "CSV to score (label column is ignored)")->required();
  predict->add_option("-o,--out", predict_out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    json err{{"error", {{"code", "usage"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 2;
  }

  try {
    if (*sim) run_experiment("run-sim", sim_flags);
    if (*trunk) run_experiment("run-trunk", trunk_flags);
    if (*tab) run_experiment("run-tabular", tab_flags);
    if (*report) {
      kdx_report* r = nullptr;
      check(kdx_report_read(report_in.c_str(), &r));
      const kdx_status status = kdx_report_write(r, report_format.c_str(), report_out.c_str());
      kdx_report_free(r);
      check(status);
    }
    if (*gen) {
      kdx_dataset* data = nullptr;
      check(kdx_dataset_generate(gen_kind.c_str(), gen_n, gen_dim, gen_seed, &data));
      const kdx_status status = kdx_dataset_write_csv(data, gen_out.c_str());
      kdx_dataset_free(data);
      check(status);
    }
    if (*fit) {
      json options = fit_options.empty() ? json::object() : parse_or_fail(fit_options, "--options");
      options["learner"] = fit_learner;
      kdx_dataset* data = nullptr;
      check(kdx_dataset_read_csv(fit_data.c_str(), &data));
      kdx_model* model = nullptr;
      kdx_status status = kdx_model_fit(data, options.dump().c_str(), &model);
      kdx_dataset_free(data);
      check(status);
      status = kdx_model_save(model, fit_out.c_str());
      std::cerr << "fit: " << kdx_model_polytopes(model) << " polytopes, k = "
                << kdx_model_selected_k(model) << "\n";
      kdx_model_free(model);
      check(status);
    }
    if (*predict) {
      kdx_model* model = nullptr;
      check(kdx_model_load(predict_model.c_str(), &model));
      kdx_dataset* data = nullptr;
      kdx_status status = kdx_dataset_read_csv(predict_data.c_str(), &data);
      if (status != KDX_OK) {
        kdx_model_free(model);
        raise(status);
      }
      const std::size_t rows = kdx_dataset_rows(data);
      const int32_t classes = kdx_model_classes(model);
      std::vector<double> posteriors(rows * static_cast<std::size_t>(classes));
      std::vector<int32_t> labels(rows);
      status = kdx_model_predict(model, kdx_dataset_features(data), rows, kdx_dataset_cols(data),
                                 posteriors.data(), labels.data());
      kdx_dataset_free(data);
      kdx_model_free(model);
      check(status);
      write_predictions(predict_out, posteriors, labels, classes);
    }
  } catch (const CliFailure& f) {
    json err{{"error", {{"code", f.code}, {"message", f.message}}}};
    std::cerr << err.dump() << "\n";
    return f.exit_code == 0 ? 1 : f.exit_code;
  }
  return 0;
}
