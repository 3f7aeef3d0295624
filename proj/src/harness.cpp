// SPDX-License-Identifier: Apache-2.0
#include "kdx/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "kdx/classifier.hpp"
#include "kdx/error.hpp"
#include "kdx/metrics.hpp"
#include "kdx/rng.hpp"
#include "kdx/serialize.hpp"
#include "parallel.hpp"

namespace kdx {

using nlohmann::json;

namespace {

constexpr const char* kSeedRule =
    "repetition r uses rep_seed = derive_seed(seed, r); sweep cell c within it uses "
    "cell_seed = derive_seed(rep_seed, c); streams of cell_seed: 0 data, 1 fit/calibrate split, "
    "2 forest, 3 network, 4 test draw, 5 tabular hold-out, 10 + i OOD radius i; "
    "derive_seed(b, s) = splitmix64(b + 0x9E3779B97F4A7C15 * (s + 1))";

constexpr std::uint64_t kOracleStream = 0x0AC1E;

const char* oracle_mode_name(PosteriorOracleMode mode) {
  switch (mode) {
    case PosteriorOracleMode::automatic: return "auto";
    case PosteriorOracleMode::analytic: return "analytic";
    case PosteriorOracleMode::numeric: return "numeric";
    case PosteriorOracleMode::none: return "none";
  }
  return "auto";
}

PosteriorOracleMode parse_oracle_mode(const std::string& name) {
  for (auto m : {PosteriorOracleMode::automatic, PosteriorOracleMode::analytic,
                 PosteriorOracleMode::numeric, PosteriorOracleMode::none}) {
    if (name == oracle_mode_name(m)) return m;
  }
  fail(ErrorCode::config, "unknown posterior_oracle '" + name + "'");
}

void config_check(bool ok, const std::string& message) {
  if (!ok) fail(ErrorCode::config, message);
}

bool wants(const ExperimentConfig& config, const char* method) {
  return std::find(config.methods.begin(), config.methods.end(), method) != config.methods.end();
}

std::size_t simulation_dimension(const SimulationSpec& spec) {
  return spec.kind == SimulationKind::trunk ? spec.dimension : 2;
}

void check_split_feasible(std::size_t rows, double fit_fraction) {
  const auto fit = static_cast<std::size_t>(std::llround(fit_fraction * static_cast<double>(rows)));
  config_check(fit >= 2 && rows > fit,
               "n = " + std::to_string(rows) + " is too small for a fit/calibrate split");
}

// ---------------------------------------------------------------------------
// Per-repetition pipeline

struct RepInput {
  Dataset train;                      // normalized
  Dataset test;                       // normalized with the training scale
  std::vector<double> truth;          // test rows x K true posteriors; empty if unavailable
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
};

struct MethodStats {
  double error = 0.0;
  std::optional<double> hellinger;
  double mce = 0.0;
  std::vector<double> mmc;  // per radius
  std::vector<double> oce;  // per radius
  std::optional<double> k;
};

struct OodSet {
  std::vector<double> points;
  std::size_t rows = 0;
};

template <typename Predict>
MethodStats evaluate(Predict&& predict, const RepInput& in, const std::vector<OodSet>& ood,
                     const std::vector<double>& priors) {
  MethodStats stats;
  const BatchPrediction test = predict(std::span<const double>(in.test.features), in.test.rows);
  const std::size_t k = test.class_count;
  stats.error = classification_error(test.labels, in.test.labels);
  if (!in.truth.empty()) stats.hellinger = mean_hellinger_distance(test.posteriors, in.truth, k);
  std::vector<double> conf(in.test.rows);
  std::vector<int> arg(in.test.rows);
  max_and_argmax(test.posteriors, k, conf, arg);
  std::vector<int> correct(in.test.rows);
  for (std::size_t i = 0; i < in.test.rows; ++i) correct[i] = arg[i] == in.test.labels[i];
  stats.mce = maximum_calibration_error(conf, correct);
  for (const auto& set : ood) {
    const BatchPrediction p = predict(std::span<const double>(set.points), set.rows);
    stats.mmc.push_back(mean_max_confidence(p.posteriors, k));
    stats.oce.push_back(ood_calibration_error(p.posteriors, priors));
  }
  return stats;
}

std::optional<double> maybe_improvement(double parent, double method) {
  if (parent == 0.0) return std::nullopt;
  return improvement(parent, method);
}

void append_rows(std::vector<ReportRow>& rows, const ExperimentConfig& config, const RepInput& in,
                 const std::string& method, const MethodStats& stats, const MethodStats& parent) {
  for (std::size_t i = 0; i < config.ood_radii.size(); ++i) {
    ReportRow row;
    row.method = method;
    row.distance_mode = distance_mode_name(config.distance_mode);
    row.n = in.n;
    row.d = in.d;
    row.radius = config.ood_radii[i];
    row.repetition = in.repetition;
    row.seed = in.seed;
    row.classification_error = stats.error;
    row.hellinger = stats.hellinger;
    row.mce = stats.mce;
    row.mean_max_confidence = stats.mmc[i];
    row.oce = stats.oce[i];
    row.improvement_error = maybe_improvement(parent.error, stats.error);
    row.improvement_mce = maybe_improvement(parent.mce, stats.mce);
    row.improvement_oce = maybe_improvement(parent.oce[i], stats.oce[i]);
    row.selected_k = stats.k;
    rows.push_back(std::move(row));
  }
}

std::vector<ReportRow> run_repetition(const ExperimentConfig& config, const RepInput& in) {
  const DatasetSplit split = split_dataset(in.train, config.fit_fraction, derive_seed(in.seed, 1));
  const Dataset& fit = split.first;
  const Dataset& calibrate = split.second;
  const std::vector<double> priors = class_priors(fit);

  std::vector<OodSet> ood;
  for (std::size_t i = 0; i < config.ood_radii.size(); ++i) {
    ood.push_back({sample_hypersphere(in.d, config.ood_radii[i], config.ood_count,
                                      derive_seed(in.seed, 10 + i)),
                   config.ood_count});
  }

  KdxOptions options;
  options.distance_mode = config.distance_mode;
  options.lambda = config.lambda;
  options.log_bias = config.log_bias;
  options.k_grid = config.k_grid;
  options.k_selection = config.k_selection;

  std::vector<ReportRow> rows;
  auto run_family = [&](ParentModel parent, const char* parent_name, const char* kdx_name) {
    auto parent_predict = [&](std::span<const double> x, std::size_t n) {
      return parent_predict_batch(parent, x, n);
    };
    const MethodStats parent_stats = evaluate(parent_predict, in, ood, priors);
    if (wants(config, parent_name)) append_rows(rows, config, in, parent_name, parent_stats, parent_stats);
    if (wants(config, kdx_name)) {
      const KdxClassifier kdx = KdxClassifier::fit(parent, fit, &calibrate, options);
      auto kdx_predict = [&](std::span<const double> x, std::size_t n) {
        return kdx.predict_batch(x, n);
      };
      MethodStats stats = evaluate(kdx_predict, in, ood, priors);
      stats.k = kdx.selected_k();
      append_rows(rows, config, in, kdx_name, stats, parent_stats);
    }
  };

  if (wants(config, "rf") || wants(config, "kdf")) {
    run_family(train_forest(fit, config.forest, derive_seed(in.seed, 2)), "rf", "kdf");
  }
  if (wants(config, "dn") || wants(config, "kdn")) {
    run_family(train_relu_net(fit, config.net, derive_seed(in.seed, 3)), "dn", "kdn");
  }
  return rows;
}

std::optional<PosteriorOracle> build_oracle(const ExperimentConfig& config,
                                            const SimulationSpec& spec) {
  PosteriorOracleMode mode = config.posterior_oracle;
  if (mode == PosteriorOracleMode::automatic) {
    if (has_analytic_posterior(spec.kind)) {
      mode = PosteriorOracleMode::analytic;
    } else if (simulation_dimension(spec) == 2) {
      mode = PosteriorOracleMode::numeric;
    } else {
      mode = PosteriorOracleMode::none;
    }
  }
  switch (mode) {
    case PosteriorOracleMode::analytic: return PosteriorOracle::analytic(spec);
    case PosteriorOracleMode::numeric:
      return PosteriorOracle::numeric(spec, config.oracle_draws,
                                      derive_seed(config.seed, kOracleStream));
    default: return std::nullopt;
  }
}

struct SimCell {
  SimulationSpec spec;
  const PosteriorOracle* oracle = nullptr;
};

ExperimentReport run_simulation_cells(const ExperimentConfig& config, const std::string& name,
                                      const std::vector<SimCell>& cells) {
  const std::size_t reps = config.repetitions;
  std::vector<std::vector<ReportRow>> slots(cells.size() * reps);
  detail::parallel_for(slots.size(), [&](std::size_t task) {
    const std::size_t c = task / reps;
    const std::size_t r = task % reps;
    const SimCell& cell = cells[c];
    RepInput in;
    in.seed = derive_seed(derive_seed(config.seed, r), c);
    in.repetition = r;
    in.n = cell.spec.n;
    in.d = simulation_dimension(cell.spec);

    SimulationSpec train_spec = cell.spec;
    train_spec.seed = derive_seed(in.seed, 0);
    NormalizedDataset normalized = normalize_max_l2(generate(train_spec));
    in.train = std::move(normalized.data);

    SimulationSpec test_spec = cell.spec;
    test_spec.n = config.test_size;
    test_spec.seed = derive_seed(in.seed, 4);
    in.test = generate(test_spec);
    if (cell.oracle != nullptr) {
      const auto k = static_cast<std::size_t>(in.test.class_count);
      in.truth.reserve(in.test.rows * k);
      for (std::size_t i = 0; i < in.test.rows; ++i) {
        const auto p = (*cell.oracle)(in.test.row(i));
        in.truth.insert(in.truth.end(), p.begin(), p.end());
      }
    }
    for (auto& v : in.test.features) v /= normalized.scale;
    slots[task] = run_repetition(config, in);
  });

  ExperimentReport report;
  report.software_version = KDX_VERSION_STRING;
  report.experiment = name;
  report.config = config;
  report.seed_rule = kSeedRule;
  for (std::size_t r = 0; r < reps; ++r) report.seeds.push_back(derive_seed(config.seed, r));
  for (auto& slot : slots) {
    for (auto& row : slot) report.rows.push_back(std::move(row));
  }
  finalize_report(report);
  return report;
}

// ---------------------------------------------------------------------------
// Formatting

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

// Rejects keys outside `allowed`.
void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) fail(ErrorCode::config, where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) known = known || it.key() == key;
    if (!known) fail(ErrorCode::config, "unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read_into(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig trunk_sweep_defaults() {
  ExperimentConfig config;
  config.simulation.kind = SimulationKind::trunk;
  config.sample_sizes = {5000};
  config.dimensions = {2, 4, 8};
  config.ood_radii = {20};
  return config;
}

ExperimentConfig full_scale_preset() {
  ExperimentConfig config;
  config.repetitions = 45;
  config.forest.tree_count = 500;
  config.net = NetConfig::full_scale();
  return config;
}

void validate_config(const ExperimentConfig& config) {
  config_check(!config.methods.empty(), "methods must not be empty");
  std::set<std::string> seen;
  for (const auto& m : config.methods) {
    config_check(m == "rf" || m == "kdf" || m == "dn" || m == "kdn",
                 "unknown method '" + m + "' (expected rf, kdf, dn or kdn)");
    config_check(seen.insert(m).second, "method '" + m + "' listed twice");
  }
  config_check(config.repetitions >= 1, "repetitions must be >= 1");
  config_check(config.fit_fraction > 0.0 && config.fit_fraction < 1.0,
               "fit_fraction must lie in (0, 1)");
  config_check(config.test_fraction > 0.0 && config.test_fraction < 1.0,
               "test_fraction must lie in (0, 1)");
  config_check(!config.ood_radii.empty(), "ood_radii must not be empty");
  for (std::size_t i = 0; i < config.ood_radii.size(); ++i) {
    config_check(config.ood_radii[i] > 0.0 && std::isfinite(config.ood_radii[i]),
                 "ood_radii must be positive");
    config_check(i == 0 || config.ood_radii[i] > config.ood_radii[i - 1],
                 "ood_radii must be strictly ascending");
  }
  config_check(config.ood_count >= 1, "ood_count must be >= 1");
  config_check(config.test_size >= 1, "test_size must be >= 1");
  config_check(!config.k_grid.empty(), "k_grid must not be empty");
  for (double k : config.k_grid) config_check(k > 0.0 && std::isfinite(k), "k_grid values must be positive");
  config_check(config.lambda > 0.0 && std::isfinite(config.lambda), "lambda must be positive");
  config_check(!config.log_bias || std::isfinite(*config.log_bias), "log_bias must be finite");
  config_check(!config.sample_sizes.empty(), "sample_sizes must not be empty");
  for (auto n : config.sample_sizes) check_split_feasible(n, config.fit_fraction);
  for (auto d : config.dimensions) config_check(d >= 1, "dimensions must be >= 1");
  config_check(config.simulation.dimension >= 1, "simulation dimension must be >= 1");
  config_check(config.simulation.class_count >= 2, "simulation class_count must be >= 2");
  config_check(config.simulation.turns > 0.0, "simulation turns must be positive");
  config_check(config.forest.tree_count >= 1, "forest tree_count must be >= 1");
  config_check(config.forest.min_samples_leaf >= 1, "forest min_samples_leaf must be >= 1");
  config_check(!config.net.hidden.empty(), "net hidden layers must not be empty");
  for (auto w : config.net.hidden) config_check(w >= 1, "net hidden widths must be >= 1");
  config_check(config.net.epochs >= 1, "net epochs must be >= 1");
  config_check(config.net.batch_size >= 1, "net batch_size must be >= 1");
  config_check(config.net.learning_rate > 0.0, "net learning_rate must be positive");
  if (config.posterior_oracle == PosteriorOracleMode::numeric) {
    config_check(config.oracle_draws >= 10'000, "oracle_draws must be >= 10000");
  }
}

std::string config_to_json(const ExperimentConfig& c) {
  const auto& s = c.simulation;
  const auto& f = c.forest;
  const auto& n = c.net;
  json doc{{"methods", c.methods},
           {"distance_mode", distance_mode_name(c.distance_mode)},
           {"simulation",
            {{"kind", simulation_kind_name(s.kind)},
             {"n", s.n},
             {"dimension", s.dimension},
             {"class_count", s.class_count},
             {"turns", s.turns},
             {"seed", s.seed}}},
           {"csv_path", c.csv_path},
           {"sample_sizes", c.sample_sizes},
           {"dimensions", c.dimensions},
           {"ood_radii", c.ood_radii},
           {"ood_count", c.ood_count},
           {"test_size", c.test_size},
           {"test_fraction", c.test_fraction},
           {"repetitions", c.repetitions},
           {"fit_fraction", c.fit_fraction},
           {"k_grid", c.k_grid},
           {"k_selection", k_selection_name(c.k_selection)},
           {"lambda", c.lambda},
           {"log_bias", optional_json(c.log_bias)},
           {"posterior_oracle", oracle_mode_name(c.posterior_oracle)},
           {"oracle_draws", c.oracle_draws},
           {"forest",
            {{"tree_count", f.tree_count},
             {"max_depth", f.max_depth},
             {"min_samples_leaf", f.min_samples_leaf},
             {"max_features", f.max_features},
             {"bootstrap", f.bootstrap}}},
           {"net",
            {{"hidden", n.hidden},
             {"epochs", n.epochs},
             {"batch_size", n.batch_size},
             {"learning_rate", n.learning_rate},
             {"beta1", n.beta1},
             {"beta2", n.beta2},
             {"epsilon", n.epsilon},
             {"patience", n.patience},
             {"min_delta", n.min_delta}}},
           {"seed", c.seed}};
  return doc.dump(2);
}

namespace {

ExperimentConfig config_from_document(const json& doc, const ExperimentConfig& base = {}) {
  ExperimentConfig c = base;
  check_keys(doc,
             {"methods", "distance_mode", "simulation", "csv_path", "sample_sizes", "dimensions",
              "ood_radii", "ood_count", "test_size", "test_fraction", "repetitions", "fit_fraction",
              "k_grid", "k_selection", "lambda", "log_bias", "posterior_oracle", "oracle_draws", "forest", "net",
              "seed"},
             "config");
  read_into(doc, "methods", c.methods);
  if (doc.contains("distance_mode")) {
    c.distance_mode = parse_distance_mode(doc.at("distance_mode").get<std::string>());
  }
  if (doc.contains("simulation")) {
    const auto& s = doc.at("simulation");
    check_keys(s, {"kind", "n", "dimension", "class_count", "turns", "seed"}, "simulation");
    if (s.contains("kind")) c.simulation.kind = parse_simulation_kind(s.at("kind").get<std::string>());
    read_into(s, "n", c.simulation.n);
    read_into(s, "dimension", c.simulation.dimension);
    read_into(s, "class_count", c.simulation.class_count);
    read_into(s, "turns", c.simulation.turns);
    read_into(s, "seed", c.simulation.seed);
  }
  read_into(doc, "csv_path", c.csv_path);
  read_into(doc, "sample_sizes", c.sample_sizes);
  read_into(doc, "dimensions", c.dimensions);
  read_into(doc, "ood_radii", c.ood_radii);
  read_into(doc, "ood_count", c.ood_count);
  read_into(doc, "test_size", c.test_size);
  read_into(doc, "test_fraction", c.test_fraction);
  read_into(doc, "repetitions", c.repetitions);
  read_into(doc, "fit_fraction", c.fit_fraction);
  read_into(doc, "k_grid", c.k_grid);
  if (doc.contains("k_selection")) {
    c.k_selection = parse_k_selection(doc.at("k_selection").get<std::string>());
  }
  read_into(doc, "lambda", c.lambda);
  if (doc.contains("log_bias")) c.log_bias = optional_from(doc.at("log_bias"));
  if (doc.contains("posterior_oracle")) {
    c.posterior_oracle = parse_oracle_mode(doc.at("posterior_oracle").get<std::string>());
  }
  read_into(doc, "oracle_draws", c.oracle_draws);
  if (doc.contains("forest")) {
    const auto& f = doc.at("forest");
    check_keys(f, {"tree_count", "max_depth", "min_samples_leaf", "max_features", "bootstrap"},
               "forest");
    read_into(f, "tree_count", c.forest.tree_count);
    read_into(f, "max_depth", c.forest.max_depth);
    read_into(f, "min_samples_leaf", c.forest.min_samples_leaf);
    read_into(f, "max_features", c.forest.max_features);
    read_into(f, "bootstrap", c.forest.bootstrap);
  }
  if (doc.contains("net")) {
    const auto& n = doc.at("net");
    check_keys(n,
               {"hidden", "epochs", "batch_size", "learning_rate", "beta1", "beta2", "epsilon",
                "patience", "min_delta"},
               "net");
    read_into(n, "hidden", c.net.hidden);
    read_into(n, "epochs", c.net.epochs);
    read_into(n, "batch_size", c.net.batch_size);
    read_into(n, "learning_rate", c.net.learning_rate);
    read_into(n, "beta1", c.net.beta1);
    read_into(n, "beta2", c.net.beta2);
    read_into(n, "epsilon", c.net.epsilon);
    read_into(n, "patience", c.net.patience);
    read_into(n, "min_delta", c.net.min_delta);
  }
  read_into(doc, "seed", c.seed);
  return c;
}

json parse_json(const std::string& text, ErrorCode code, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(code, std::string(what) + " is not valid JSON: " + e.what());
  }
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text, const ExperimentConfig& base) {
  const json doc = parse_json(text, ErrorCode::config, "config");
  try {
    return config_from_document(doc, base);
  } catch (const json::exception& e) {
    fail(ErrorCode::config, std::string("bad config value: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::invalid_input) fail(ErrorCode::config, e.what());
    throw;
  }
}

// ---------------------------------------------------------------------------
// Runners

ExperimentReport run_simulation_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const std::optional<PosteriorOracle> oracle = build_oracle(config, config.simulation);
  std::vector<SimCell> cells;
  for (auto n : config.sample_sizes) {
    SimCell cell;
    cell.spec = config.simulation;
    cell.spec.n = n;
    cell.oracle = oracle ? &*oracle : nullptr;
    cells.push_back(cell);
  }
  return run_simulation_cells(config, "run-sim", cells);
}

ExperimentReport run_trunk_sweep(ExperimentConfig config) {
  config.simulation.kind = SimulationKind::trunk;
  if (config.dimensions.empty()) config.dimensions = {config.simulation.dimension};
  validate_config(config);
  std::vector<std::optional<PosteriorOracle>> oracles;
  for (auto d : config.dimensions) {
    SimulationSpec spec = config.simulation;
    spec.dimension = d;
    oracles.push_back(build_oracle(config, spec));
  }
  std::vector<SimCell> cells;
  for (std::size_t i = 0; i < config.dimensions.size(); ++i) {
    for (auto n : config.sample_sizes) {
      SimCell cell;
      cell.spec = config.simulation;
      cell.spec.dimension = config.dimensions[i];
      cell.spec.n = n;
      cell.oracle = oracles[i] ? &*oracles[i] : nullptr;
      cells.push_back(cell);
    }
  }
  return run_simulation_cells(config, "run-trunk", cells);
}

ExperimentReport run_tabular_experiment(const std::filesystem::path& csv_path,
                                        ExperimentConfig config) {
  config.csv_path = csv_path.string();
  validate_config(config);
  const Dataset data = read_csv(csv_path);
  require(data.class_count >= 2, "tabular data needs at least two classes");
  const auto train_rows = static_cast<std::size_t>(
      std::llround((1.0 - config.test_fraction) * static_cast<double>(data.rows)));
  config_check(train_rows < data.rows, "test_fraction leaves no test rows");
  check_split_feasible(train_rows, config.fit_fraction);

  const std::size_t reps = config.repetitions;
  std::vector<std::vector<ReportRow>> slots(reps);
  detail::parallel_for(reps, [&](std::size_t r) {
    RepInput in;
    in.seed = derive_seed(derive_seed(config.seed, r), 0);
    in.repetition = r;
    DatasetSplit holdout = split_dataset(data, 1.0 - config.test_fraction, derive_seed(in.seed, 5));
    NormalizedDataset normalized = normalize_max_l2(holdout.first);
    in.train = std::move(normalized.data);
    in.test = std::move(holdout.second);
    for (auto& v : in.test.features) v /= normalized.scale;
    in.n = in.train.rows;
    in.d = in.train.cols;
    slots[r] = run_repetition(config, in);
  });

  ExperimentReport report;
  report.software_version = KDX_VERSION_STRING;
  report.experiment = "run-tabular";
  report.config = config;
  report.seed_rule = kSeedRule;
  for (std::size_t r = 0; r < reps; ++r) report.seeds.push_back(derive_seed(config.seed, r));
  for (auto& slot : slots) {
    for (auto& row : slot) report.rows.push_back(std::move(row));
  }
  finalize_report(report);
  return report;
}

// ---------------------------------------------------------------------------
// Reports

double percentile(std::vector<double> values, double q) {
  require(!values.empty(), "percentile of an empty set");
  require(q >= 0.0 && q <= 100.0, "percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

void finalize_report(ExperimentReport& report) {
  auto key = [](const ReportRow& r) {
    return std::tie(r.method, r.n, r.d, r.radius, r.repetition);
  };
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [&](const ReportRow& a, const ReportRow& b) { return key(a) < key(b); });

  using Cell = std::tuple<std::string, std::size_t, std::size_t, double>;
  static const char* const metrics[] = {"classification_error", "hellinger",       "mce",
                                        "mean_max_confidence",  "oce",             "improvement_error",
                                        "improvement_mce",      "improvement_oce"};
  std::map<std::pair<Cell, std::string>, std::vector<double>> groups;
  for (const auto& r : report.rows) {
    const Cell cell{r.method, r.n, r.d, r.radius};
    const std::optional<double> values[] = {r.classification_error, r.hellinger,
                                            r.mce,                  r.mean_max_confidence,
                                            r.oce,                  r.improvement_error,
                                            r.improvement_mce,      r.improvement_oce};
    for (std::size_t m = 0; m < std::size(metrics); ++m) {
      if (values[m]) groups[{cell, metrics[m]}].push_back(*values[m]);
    }
  }
  report.summaries.clear();
  for (const auto& [key_pair, values] : groups) {
    const auto& [cell, metric] = key_pair;
    SummaryRow s;
    std::tie(s.method, s.n, s.d, s.radius) = cell;
    s.metric = metric;
    s.count = values.size();
    s.p25 = percentile(values, 25.0);
    s.p50 = percentile(values, 50.0);
    s.p75 = percentile(values, 75.0);
    report.summaries.push_back(std::move(s));
  }
}

std::string report_to_json(const ExperimentReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back(json{{"method", r.method},
                        {"distance_mode", r.distance_mode},
                        {"n", r.n},
                        {"d", r.d},
                        {"radius", r.radius},
                        {"repetition", r.repetition},
                        {"seed", r.seed},
                        {"classification_error", r.classification_error},
                        {"hellinger", optional_json(r.hellinger)},
                        {"mce", optional_json(r.mce)},
                        {"mean_max_confidence", r.mean_max_confidence},
                        {"oce", optional_json(r.oce)},
                        {"improvement_error", optional_json(r.improvement_error)},
                        {"improvement_mce", optional_json(r.improvement_mce)},
                        {"improvement_oce", optional_json(r.improvement_oce)},
                        {"selected_k", optional_json(r.selected_k)}});
  }
  json summaries = json::array();
  for (const auto& s : report.summaries) {
    summaries.push_back(json{{"method", s.method},
                             {"n", s.n},
                             {"d", s.d},
                             {"radius", s.radius},
                             {"metric", s.metric},
                             {"count", s.count},
                             {"p25", s.p25},
                             {"p50", s.p50},
                             {"p75", s.p75}});
  }
  json doc{{"schema_version", report.schema_version},
           {"software_version", report.software_version},
           {"experiment", report.experiment},
           {"config", json::parse(config_to_json(report.config))},
           {"seed_rule", report.seed_rule},
           {"seeds", report.seeds},
           {"rows", rows},
           {"summaries", summaries}};
  return doc.dump(2) + "\n";
}

ExperimentReport report_from_json(const std::string& text) {
  const json doc = parse_json(text, ErrorCode::invalid_input, "report");
  try {
    ExperimentReport report;
    report.schema_version = doc.at("schema_version").get<int>();
    if (report.schema_version != kReportSchemaVersion) {
      fail(ErrorCode::invalid_input,
           "unsupported report schema_version " + std::to_string(report.schema_version));
    }
    report.software_version = doc.at("software_version").get<std::string>();
    report.experiment = doc.at("experiment").get<std::string>();
    report.config = config_from_document(doc.at("config"));
    report.seed_rule = doc.at("seed_rule").get<std::string>();
    report.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& j : doc.at("rows")) {
      ReportRow r;
      r.method = j.at("method").get<std::string>();
      r.distance_mode = j.at("distance_mode").get<std::string>();
      r.n = j.at("n").get<std::size_t>();
      r.d = j.at("d").get<std::size_t>();
      r.radius = j.at("radius").get<double>();
      r.repetition = j.at("repetition").get<std::size_t>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.classification_error = j.at("classification_error").get<double>();
      r.hellinger = optional_from(j.at("hellinger"));
      r.mce = optional_from(j.at("mce"));
      r.mean_max_confidence = j.at("mean_max_confidence").get<double>();
      r.oce = optional_from(j.at("oce"));
      r.improvement_error = optional_from(j.at("improvement_error"));
      r.improvement_mce = optional_from(j.at("improvement_mce"));
      r.improvement_oce = optional_from(j.at("improvement_oce"));
      r.selected_k = optional_from(j.at("selected_k"));
      report.rows.push_back(std::move(r));
    }
    for (const auto& j : doc.at("summaries")) {
      SummaryRow s;
      s.method = j.at("method").get<std::string>();
      s.n = j.at("n").get<std::size_t>();
      s.d = j.at("d").get<std::size_t>();
      s.radius = j.at("radius").get<double>();
      s.metric = j.at("metric").get<std::string>();
      s.count = j.at("count").get<std::size_t>();
      s.p25 = j.at("p25").get<double>();
      s.p50 = j.at("p50").get<double>();
      s.p75 = j.at("p75").get<double>();
      report.summaries.push_back(std::move(s));
    }
    return report;
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_input, std::string("malformed report: ") + e.what());
  }
}

std::string report_to_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "method,distance_mode,n,d,radius,repetition,seed,classification_error,hellinger,mce,"
         "mean_max_confidence,oce,improvement_error,improvement_mce,improvement_oce,selected_k\n";
  for (const auto& r : report.rows) {
    out << r.method << ',' << r.distance_mode << ',' << r.n << ',' << r.d << ','
        << format_double(r.radius) << ',' << r.repetition << ',' << r.seed << ','
        << format_double(r.classification_error) << ',' << format_optional(r.hellinger) << ','
        << format_optional(r.mce) << ',' << format_double(r.mean_max_confidence) << ','
        << format_optional(r.oce) << ',' << format_optional(r.improvement_error) << ','
        << format_optional(r.improvement_mce) << ',' << format_optional(r.improvement_oce) << ','
        << format_optional(r.selected_k) << '\n';
  }
  return out.str();
}

std::string report_summary_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "method,n,d,radius,metric,count,p25,p50,p75\n";
  for (const auto& s : report.summaries) {
    out << s.method << ',' << s.n << ',' << s.d << ',' << format_double(s.radius) << ','
        << s.metric << ',' << s.count << ',' << format_double(s.p25) << ','
        << format_double(s.p50) << ',' << format_double(s.p75) << '\n';
  }
  return out.str();
}

void emit_report(const ExperimentReport& report, const std::string& format,
                 const std::filesystem::path& path) {
  if (format == "json") {
    write_file_atomic(path, report_to_json(report));
  } else if (format == "csv") {
    write_file_atomic(path, report_to_csv(report));
  } else if (format == "summary-csv") {
    write_file_atomic(path, report_summary_csv(report));
  } else {
    fail(ErrorCode::config, "unknown report format '" + format + "' (expected json or csv)");
  }
}

ExperimentReport read_report(const std::filesystem::path& path) {
  return report_from_json(read_file(path));
}

}  // namespace kdx
