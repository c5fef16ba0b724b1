#pragma once

#include "gravitree/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gravitree {

using VectorField = std::function<State(const State&, const Control&)>;
using StageCost = std::function<double(const State&, const Control&)>;

/// Fixed-step quadrature settings. `step_dt` is the macro step between graph
/// vertices, `sub_dt` the explicit-Euler substep used inside it.
struct IntegratorConfig {
  double step_dt = 0.1;
  double sub_dt = 0.01;

  /// Throws InvalidParameter unless 0 < sub_dt <= step_dt.
  void validate() const;
  int substeps() const;

  static IntegratorConfig with_default_substeps(double step_dt) {
    return {step_dt, step_dt / 10.0};
  }
};

/// A controlled dynamical system x' = F(x, u) with box bounds, a stage cost
/// and the terminal state every trajectory must reach.
struct SystemDef {
  std::string name;
  int n = 0;
  int m = 0;
  Box state_bounds;
  Box control_bounds;
  std::vector<bool> wrap_mask;  // true on angular axes (period 2*pi)
  State terminal_state;
  VectorField vector_field;
  StageCost stage_cost;

  bool is_wrapped(int axis) const { return wrap_mask[static_cast<std::size_t>(axis)]; }

  /// Dimension and bound checks, plus a randomized probe that the stage
  /// cost is nonnegative on the bounded domain.
  void validate(int cost_probes = 256) const;
};

/// Maps an angle into [-pi, pi).
double wrap_angle(double a);

/// Applies wrap_angle on every wrapped axis.
void wrap_state(const SystemDef& sys, State& x);

/// Per-axis difference b - a, using the shortest angular difference on
/// wrapped axes.
Eigen::VectorXd state_difference(const SystemDef& sys, const State& a, const State& b);

/// Euclidean distance with angular wrapping.
double state_distance(const SystemDef& sys, const State& a, const State& b);

State step_forward(const SystemDef& sys, const IntegratorConfig& cfg, const State& x,
                   const Control& u);

State step_backward(const SystemDef& sys, const IntegratorConfig& cfg, const State& x,
                    const Control& u);

/// Polishes `guess` into a predecessor of `target`: iterates
/// x <- x - (step_forward(x, u) - target) until the miss is below tol.
/// Returns nullopt if the iteration fails to converge.
std::optional<State> invert_step(const SystemDef& sys, const IntegratorConfig& cfg, const State& guess,
                                 const State& target, const Control& u, double tol, int max_iters = 50);

/// Integrates one macro step in the given time direction (+1 forward, -1
/// backward) and records every substep state, including the endpoints.
std::vector<State> step_path(const SystemDef& sys, const IntegratorConfig& cfg, const State& x,
                             const Control& u, int direction);

}  // namespace gravitree
