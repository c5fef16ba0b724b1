#include "gravitree/mlp.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace gravitree {

using nlohmann::json;

MlpModel::MlpModel(int input_dim, int output_dim, std::vector<MlpLayer> layers, double train_rmse)
    : input_dim_(input_dim), output_dim_(output_dim), layers_(std::move(layers)),
      train_rmse_(train_rmse) {
  if (layers_.empty()) throw SchemaViolation("mlp: no layers");
  Eigen::Index expected_cols = input_dim_;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const MlpLayer& layer = layers_[k];
    if (layer.weights.cols() != expected_cols) {
      std::ostringstream msg;
      msg << "mlp: layer " << k << " expects " << layer.weights.cols() << " inputs, previous layer gives "
          << expected_cols;
      throw DimensionMismatch(msg.str());
    }
    if (layer.bias.size() != layer.weights.rows()) {
      std::ostringstream msg;
      msg << "mlp: layer " << k << " bias length " << layer.bias.size() << " != rows "
          << layer.weights.rows();
      throw SchemaViolation(msg.str());
    }
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
      throw SchemaViolation("mlp: non-finite weight in layer " + std::to_string(k));
    }
    expected_cols = layer.weights.rows();
  }
  if (expected_cols != output_dim_) throw DimensionMismatch("mlp: last layer rows != output_dim");
  if (layers_.back().activation != Activation::Identity) {
    throw SchemaViolation("mlp: last layer must use identity activation");
  }
}

Eigen::VectorXd MlpModel::forward(const Eigen::VectorXd& input) const {
  if (input.size() != input_dim_) throw InvalidParameter("mlp: input dimension mismatch");
  // Hot path inside the integrator: reuse buffers and evaluate tanh through
  // a vectorized exp, tanh|z| = (1 - e^{-2|z|}) / (1 + e^{-2|z|}).
  thread_local Eigen::VectorXd a, b, e;
  a = input;
  for (const MlpLayer& layer : layers_) {
    b.noalias() = layer.weights * a;
    b += layer.bias;
    if (layer.activation == Activation::Tanh) {
      e = (-2.0 * b.array().abs()).exp();
      b = b.array().sign() * (1.0 - e.array()) / (1.0 + e.array());
    }
    a.swap(b);
  }
  return a;
}

namespace {

Eigen::VectorXd read_vector(const json& j, const char* what) {
  if (!j.is_array()) throw SchemaViolation(std::string("mlp: ") + what + " must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw SchemaViolation(std::string("mlp: ") + what + " entry is not a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd read_matrix(const json& j) {
  if (!j.is_array() || j.empty()) throw SchemaViolation("mlp: weights must be a non-empty array of rows");
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  Eigen::MatrixXd w(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw SchemaViolation("mlp: ragged weight matrix");
    w.row(static_cast<Eigen::Index>(r)) = read_vector(j[r], "weight row").transpose();
  }
  return w;
}

}  // namespace

MlpModel parse_mlp(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaViolation(std::string("mlp: not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaViolation("mlp: top level must be an object");
  if (doc.contains("format_version")) {
    const std::string version = doc["format_version"].get<std::string>();
    if (version.rfind("1.", 0) != 0) throw VersionMismatch("mlp: unsupported format_version " + version);
  }
  for (const char* key : {"input_dim", "output_dim", "layers"}) {
    if (!doc.contains(key)) throw SchemaViolation(std::string("mlp: missing field ") + key);
  }
  if (!doc["input_dim"].is_number_integer() || !doc["output_dim"].is_number_integer()) {
    throw SchemaViolation("mlp: input_dim/output_dim must be integers");
  }
  std::vector<MlpLayer> layers;
  for (const json& jl : doc["layers"]) {
    if (!jl.contains("weights") || !jl.contains("bias") || !jl.contains("activation")) {
      throw SchemaViolation("mlp: layer requires weights, bias and activation");
    }
    MlpLayer layer;
    layer.weights = read_matrix(jl["weights"]);
    layer.bias = read_vector(jl["bias"], "bias");
    const std::string act = jl["activation"].get<std::string>();
    if (act == "tanh") {
      layer.activation = Activation::Tanh;
    } else if (act == "identity") {
      layer.activation = Activation::Identity;
    } else {
      throw SchemaViolation("mlp: unknown activation " + act);
    }
    layers.push_back(std::move(layer));
  }
  const double rmse = doc.contains("train_rmse") ? doc["train_rmse"].get<double>() : 0.0;
  return MlpModel(doc["input_dim"].get<int>(), doc["output_dim"].get<int>(), std::move(layers), rmse);
}

MlpModel load_mlp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileMissing("mlp: cannot open weight file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_mlp(buf.str());
}

void save_mlp(const MlpModel& model, const std::filesystem::path& path) {
  json doc;
  doc["format_version"] = "1.0";
  doc["input_dim"] = model.input_dim();
  doc["output_dim"] = model.output_dim();
  doc["train_rmse"] = model.train_rmse();
  json layers = json::array();
  for (const MlpLayer& layer : model.layers()) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) row.push_back(layer.weights(r, c));
      rows.push_back(std::move(row));
    }
    json bias = json::array();
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) bias.push_back(layer.bias[r]);
    layers.push_back({{"weights", std::move(rows)},
                      {"bias", std::move(bias)},
                      {"activation", layer.activation == Activation::Tanh ? "tanh" : "identity"}});
  }
  doc["layers"] = std::move(layers);
  std::ofstream out(path);
  if (!out) throw FileMissing("mlp: cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

}  // namespace gravitree
