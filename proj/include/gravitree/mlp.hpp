#pragma once

#include "gravitree/types.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace gravitree {

enum class Activation { Tanh, Identity };

struct MlpLayer {
  Eigen::MatrixXd weights;  // rows = outputs, cols = inputs
  Eigen::VectorXd bias;
  Activation activation = Activation::Identity;
};

/// Feed-forward network used as a learned vector field.
///
/// Weight file (JSON):
///   { "format_version": "1.0", "input_dim": int, "output_dim": int,
///     "layers": [ { "weights": [[row0...], [row1...], ...],
///                   "bias": [...], "activation": "tanh" | "identity" } ],
///     "train_rmse": real }
/// `format_version` is optional on read; an unknown major version is rejected.
class MlpModel {
 public:
  /// Validates the layer chain; throws DimensionMismatch or SchemaViolation.
  MlpModel(int input_dim, int output_dim, std::vector<MlpLayer> layers, double train_rmse = 0.0);

  int input_dim() const noexcept { return input_dim_; }
  int output_dim() const noexcept { return output_dim_; }
  double train_rmse() const noexcept { return train_rmse_; }
  const std::vector<MlpLayer>& layers() const noexcept { return layers_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;

 private:
  int input_dim_;
  int output_dim_;
  std::vector<MlpLayer> layers_;
  double train_rmse_;
};

MlpModel load_mlp(const std::filesystem::path& path);
MlpModel parse_mlp(const std::string& text);
void save_mlp(const MlpModel& model, const std::filesystem::path& path);

}  // namespace gravitree
