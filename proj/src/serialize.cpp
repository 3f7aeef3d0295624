// SPDX-License-Identifier: Apache-2.0
#include "kdx/serialize.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kdx/error.hpp"

namespace kdx {

using nlohmann::json;

namespace {

json header(const char* kind) {
  return json{{"format", "kdx-model"}, {"version", kModelFormatVersion}, {"kind", kind}};
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::invalid_input, std::string("model file is not valid JSON: ") + e.what());
  }
}

void check_header(const json& doc, const char* kind) {
  if (!doc.is_object() || doc.value("format", "") != "kdx-model") {
    fail(ErrorCode::invalid_input, "not a kdx model document");
  }
  const int version = doc.value("version", -1);
  if (version != kModelFormatVersion) {
    fail(ErrorCode::invalid_input,
         "unsupported model format version " + std::to_string(version));
  }
  if (doc.value("kind", "") != kind) {
    fail(ErrorCode::invalid_input,
         std::string("expected a '") + kind + "' model, found '" + doc.value("kind", "") + "'");
  }
}

// Wraps nlohmann type errors so every malformed document reports invalid_input.
template <typename F>
auto guarded(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_input, std::string("malformed model document: ") + e.what());
  }
}

json forest_body(const ForestModel& model) {
  json trees = json::array();
  for (const auto& tree : model.trees) {
    json feature = json::array(), threshold = json::array(), left = json::array(),
         right = json::array(), counts = json::array();
    for (const auto& node : tree.nodes) {
      feature.push_back(node.feature);
      threshold.push_back(node.threshold);
      left.push_back(node.left);
      right.push_back(node.right);
      counts.push_back(node.class_counts);
    }
    trees.push_back(json{{"feature", feature}, {"threshold", threshold}, {"left", left},
                         {"right", right}, {"class_counts", counts}});
  }
  const auto& c = model.config;
  return json{{"input_dim", model.input_dim},
              {"class_count", model.class_count},
              {"seed", model.seed},
              {"config",
               {{"tree_count", c.tree_count},
                {"max_depth", c.max_depth},
                {"min_samples_leaf", c.min_samples_leaf},
                {"max_features", c.max_features},
                {"bootstrap", c.bootstrap}}},
              {"trees", trees}};
}

ForestModel forest_from_body(const json& body) {
  ForestModel model;
  model.input_dim = body.at("input_dim").get<std::size_t>();
  model.class_count = body.at("class_count").get<int>();
  model.seed = body.at("seed").get<std::uint64_t>();
  const auto& c = body.at("config");
  model.config.tree_count = c.at("tree_count").get<std::size_t>();
  model.config.max_depth = c.at("max_depth").get<std::size_t>();
  model.config.min_samples_leaf = c.at("min_samples_leaf").get<std::size_t>();
  model.config.max_features = c.at("max_features").get<std::size_t>();
  model.config.bootstrap = c.at("bootstrap").get<bool>();
  for (const auto& t : body.at("trees")) {
    const auto& feature = t.at("feature");
    const std::size_t size = feature.size();
    const auto& threshold = t.at("threshold");
    const auto& left = t.at("left");
    const auto& right = t.at("right");
    const auto& counts = t.at("class_counts");
    if (threshold.size() != size || left.size() != size || right.size() != size ||
        counts.size() != size || size == 0) {
      fail(ErrorCode::invalid_input, "tree arrays have inconsistent lengths");
    }
    DecisionTree tree;
    tree.nodes.resize(size);
    for (std::size_t i = 0; i < size; ++i) {
      auto& node = tree.nodes[i];
      node.feature = feature[i].get<std::int32_t>();
      node.threshold = threshold[i].get<double>();
      node.left = left[i].get<std::uint32_t>();
      node.right = right[i].get<std::uint32_t>();
      node.class_counts = counts[i].get<std::vector<double>>();
      if (!node.is_leaf()) {
        if (node.left >= size || node.right >= size ||
            static_cast<std::size_t>(node.feature) >= model.input_dim) {
          fail(ErrorCode::invalid_input, "tree node references out of range");
        }
      }
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json net_body(const ReluNetModel& model) {
  json layers = json::array();
  for (const auto& layer : model.layers) {
    json bias = json::array();
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) bias.push_back(layer.bias(i));
    layers.push_back(json{{"weights", matrix_to_json(layer.weights)}, {"bias", bias}});
  }
  return json{{"seed", model.seed}, {"layers", layers}};
}

ReluNetModel net_from_body(const json& body) {
  ReluNetModel model;
  model.seed = body.at("seed").get<std::uint64_t>();
  Eigen::Index previous = -1;
  for (const auto& l : body.at("layers")) {
    const auto& rows = l.at("weights");
    const auto& bias = l.at("bias");
    const auto out = static_cast<Eigen::Index>(rows.size());
    if (out == 0 || static_cast<Eigen::Index>(bias.size()) != out) {
      fail(ErrorCode::invalid_input, "layer weights and bias disagree");
    }
    const auto in = static_cast<Eigen::Index>(rows[0].size());
    if (in == 0 || (previous >= 0 && in != previous)) {
      fail(ErrorCode::invalid_input, "layer shapes do not chain");
    }
    DenseLayer layer;
    layer.weights.resize(out, in);
    layer.bias.resize(out);
    for (Eigen::Index r = 0; r < out; ++r) {
      const auto& row = rows[static_cast<std::size_t>(r)];
      if (static_cast<Eigen::Index>(row.size()) != in) {
        fail(ErrorCode::invalid_input, "ragged weight matrix");
      }
      for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = row[static_cast<std::size_t>(c)].get<double>();
      layer.bias(r) = bias[static_cast<std::size_t>(r)].get<double>();
    }
    previous = out;
    model.layers.push_back(std::move(layer));
  }
  if (model.layers.size() < 2) fail(ErrorCode::invalid_input, "network needs at least one hidden layer");
  return model;
}

json signature_to_json(const MembershipSignature& sig) {
  if (sig.kind == SignatureKind::forest) return json{{"leaves", sig.leaves}};
  json layers = json::array();
  for (const auto& layer : sig.activations) {
    std::string bits(layer.size(), '0');
    for (std::size_t i = 0; i < layer.size(); ++i) bits[i] = layer[i] ? '1' : '0';
    layers.push_back(bits);
  }
  return json{{"activations", layers}};
}

MembershipSignature signature_from_json(const json& doc) {
  MembershipSignature sig;
  if (doc.contains("leaves")) {
    sig.kind = SignatureKind::forest;
    sig.leaves = doc.at("leaves").get<std::vector<std::uint32_t>>();
    return sig;
  }
  sig.kind = SignatureKind::net;
  for (const auto& layer : doc.at("activations")) {
    const auto bits = layer.get<std::string>();
    std::vector<std::uint8_t> row(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (bits[i] != '0' && bits[i] != '1') fail(ErrorCode::invalid_input, "bad activation bit");
      row[i] = bits[i] == '1';
    }
    sig.activations.push_back(std::move(row));
  }
  return sig;
}

}  // namespace

std::string forest_to_json(const ForestModel& model) {
  json doc = header("forest");
  doc["model"] = forest_body(model);
  return doc.dump();
}

ForestModel forest_from_json(const std::string& text) {
  const json doc = parse(text);
  check_header(doc, "forest");
  return guarded([&] { return forest_from_body(doc.at("model")); });
}

std::string net_to_json(const ReluNetModel& model) {
  json doc = header("relu-net");
  doc["model"] = net_body(model);
  return doc.dump();
}

ReluNetModel net_from_json(const std::string& text) {
  const json doc = parse(text);
  check_header(doc, "relu-net");
  return guarded([&] { return net_from_body(doc.at("model")); });
}

std::string classifier_to_json(const KdxClassifier& classifier) {
  json doc = header(classifier.is_forest() ? "kdf" : "kdn");
  if (classifier.is_forest()) {
    doc["parent"] = forest_body(std::get<ForestModel>(classifier.parent()));
  } else {
    doc["parent"] = net_body(std::get<ReluNetModel>(classifier.parent()));
  }
  const KdxModel& m = classifier.model();
  json polytopes = json::array();
  for (const auto& p : m.polytopes) {
    polytopes.push_back(json{{"center", p.center},
                             {"variance", p.variance},
                             {"weighted_class_counts", p.weighted_class_counts},
                             {"representative", signature_to_json(p.representative)},
                             {"member_count", p.member_count},
                             {"total_weight", p.total_weight}});
  }
  doc["density"] = json{{"polytopes", polytopes},
                        {"class_priors", m.class_priors},
                        {"class_weight_totals", m.class_weight_totals},
                        {"log_bias", m.log_bias},
                        {"lambda", m.lambda},
                        {"sample_count", m.sample_count},
                        {"input_dim", m.input_dim},
                        {"distance_mode", distance_mode_name(m.distance_mode)}};
  doc["selected_k"] = classifier.selected_k();
  return doc.dump();
}

KdxClassifier classifier_from_json(const std::string& text) {
  const json doc = parse(text);
  if (!doc.is_object()) fail(ErrorCode::invalid_input, "not a kdx model document");
  const std::string kind = doc.value("kind", "");
  if (kind != "kdf" && kind != "kdn") {
    fail(ErrorCode::invalid_input, "expected a 'kdf' or 'kdn' model, found '" + kind + "'");
  }
  check_header(doc, kind.c_str());
  return guarded([&] {
    ParentModel parent;
    if (kind == "kdf") {
      parent = forest_from_body(doc.at("parent"));
    } else {
      parent = net_from_body(doc.at("parent"));
    }
    const auto& d = doc.at("density");
    KdxModel m;
    for (const auto& p : d.at("polytopes")) {
      PolytopeModel poly;
      poly.center = p.at("center").get<std::vector<double>>();
      poly.variance = p.at("variance").get<std::vector<double>>();
      poly.weighted_class_counts = p.at("weighted_class_counts").get<std::vector<double>>();
      poly.representative = signature_from_json(p.at("representative"));
      poly.member_count = p.at("member_count").get<std::size_t>();
      poly.total_weight = p.at("total_weight").get<double>();
      m.polytopes.push_back(std::move(poly));
    }
    m.class_priors = d.at("class_priors").get<std::vector<double>>();
    m.class_weight_totals = d.at("class_weight_totals").get<std::vector<double>>();
    m.log_bias = d.at("log_bias").get<double>();
    m.lambda = d.at("lambda").get<double>();
    m.sample_count = d.at("sample_count").get<std::size_t>();
    m.input_dim = d.at("input_dim").get<std::size_t>();
    m.distance_mode = parse_distance_mode(d.at("distance_mode").get<std::string>());
    for (const auto& p : m.polytopes) {
      if (p.center.size() != m.input_dim || p.variance.size() != m.input_dim ||
          p.weighted_class_counts.size() != m.class_priors.size()) {
        fail(ErrorCode::invalid_input, "polytope entry has the wrong shape");
      }
    }
    if (m.class_weight_totals.size() != m.class_priors.size()) {
      fail(ErrorCode::invalid_input, "class weight totals have the wrong length");
    }
    return KdxClassifier(std::move(parent), std::move(m), doc.at("selected_k").get<double>());
  });
}

void save_classifier(const KdxClassifier& classifier, const std::filesystem::path& path) {
  write_file_atomic(path, classifier_to_json(classifier));
}

KdxClassifier load_classifier(const std::filesystem::path& path) {
  return classifier_from_json(read_file(path));
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot open '" + tmp.string() + "' for writing");
    out << contents;
    out.flush();
    if (!out) fail(ErrorCode::io, "failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCode::io, "cannot replace '" + path.string() + "'");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) fail(ErrorCode::io, "failed reading '" + path.string() + "'");
  return buffer.str();
}

}  // namespace kdx
