#pragma once

#include "gravitree/dynamics.hpp"
#include "gravitree/mlp.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gravitree {

struct SingleIntegratorOptions {
  double state_limit = 5.0;    // X = [-limit, limit]^2
  double control_limit = 1.0;  // U = [-limit, limit]^2
};

/// x' = u in the plane with g(x, u) = |u| * step_dt, goal at the origin.
SystemDef single_integrator(double step_dt, const SingleIntegratorOptions& opts = {});

struct PendulumOptions {
  double velocity_limit = 4.0;
};

/// Inverted pendulum x' = (x2, sin(x1) + u), g = x.x + u.u, upright goal,
/// x1 wrapped. Throws InvalidParameter for control_limit <= 0.
SystemDef pendulum(double control_limit, const PendulumOptions& opts = {});

/// Same bounds, cost and goal as pendulum(), with F given by the network
/// evaluated on [x; u]. The model must map R^3 -> R^2.
SystemDef mlp_system(std::shared_ptr<const MlpModel> model, double control_limit,
                     const PendulumOptions& opts = {});

/// Serializable description of which system to instantiate. Stored in store
/// file headers so a store can be reloaded without out-of-band knowledge.
struct SystemSpec {
  std::string kind = "single_integrator";  // single_integrator | pendulum | mlp
  double control_limit = 0.0;              // 0 selects the per-kind default
  double state_limit = 5.0;                // single integrator only
  double velocity_limit = 4.0;             // pendulum / mlp
  std::string model_path;                  // mlp only

  /// Parses "single_integrator", "pendulum" or "mlp:<path>".
  static SystemSpec from_selector(const std::string& selector);

  double effective_control_limit() const;
  nlohmann::json to_json() const;
  static SystemSpec from_json(const nlohmann::json& j);
};

/// Builds the SystemDef described by `spec`. `step_dt` is needed because the
/// single-integrator stage cost scales with the macro step.
SystemDef make_system(const SystemSpec& spec, double step_dt);

/// Per-kind defaults for the integrator.
IntegratorConfig default_integrator(const SystemSpec& spec);

// ---------------------------------------------------------------------------
// Obstacles

struct WallSegment {
  Eigen::Vector2d a;
  Eigen::Vector2d b;
};

/// Union of axis-aligned state boxes and thin planar walls. Walls act on the
/// first two state coordinates and occupy every point within `wall_margin`.
struct ObstacleSet {
  std::vector<Box> boxes;
  std::vector<WallSegment> walls;
  double wall_margin = 0.05;

  bool empty() const { return boxes.empty() && walls.empty(); }
};

bool inside_obstacle(const ObstacleSet& obs, const State& x);

/// Distance from p to the closed segment [a, b].
double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b);

}  // namespace gravitree
