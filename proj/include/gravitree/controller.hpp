#pragma once

#include "gravitree/store.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace gravitree {

enum class Fallback { NearestVertex, Reject };

struct InterpConfig {
  double gamma = 0.0;  // 0 selects default_gamma(store)
  Fallback fallback = Fallback::NearestVertex;
};

/// Pattern search over +-(coordinate axes of U), 2m directions.
struct ControlSearchConfig {
  double alpha0 = 0.0;  // 0 selects 0.25 * diameter of U
  double shrink = 2.0;
  double eps_alpha = 1e-4;
};

/// Thrown when no probed control reaches a state with a finite value.
class ControllerStarved : public Error {
 public:
  ControllerStarved(const std::string& what, std::vector<Control> probed)
      : Error(what), probed_(std::move(probed)) {}
  const std::vector<Control>& probed() const noexcept { return probed_; }

 private:
  std::vector<Control> probed_;
};

/// Compactly supported kernel exp(-1 / (1 - (gamma d)^2)) for d < 1/gamma.
double bump(double gamma, double distance);
double bump(const SystemDef& sys, double gamma, const State& a, const State& b);

/// Support radius scale factor: gamma = 1 / (kGammaSpacing * median NN spacing).
inline constexpr double kGammaSpacing = 3.5;

/// Density-adaptive gamma for a store. Only finite-value vertices count.
double default_gamma(const Store& store);

/// Read-only value interpolator over a store snapshot.
class ValueInterpolator {
 public:
  ValueInterpolator(const Store& store, InterpConfig cfg);

  double gamma() const noexcept { return gamma_; }
  const Store& store() const noexcept { return *store_; }

  /// Bump-weighted mean of finite cost-to-go values around x. Falls back to
  /// the nearest finite vertex (or +inf under Reject) off support.
  double operator()(const State& x) const;

 private:
  const Store* store_;
  InterpConfig cfg_;
  double gamma_;
};

double interpolate_value(const Store& store, const InterpConfig& cfg, const State& x);

/// Q(u) = g(x, u) + V(step(x, u)) on the store's own system.
double q_value(const ValueInterpolator& value, const State& x, const Control& u);

/// Feedback law. Pattern search from u = 0 (clamped into U).
Control control(const ValueInterpolator& value, const ControlSearchConfig& scfg, const State& x);
Control control(const Store& store, const InterpConfig& icfg, const ControlSearchConfig& scfg,
                const State& x);

struct SimulationConfig {
  std::size_t horizon = 600;
  double goal_tol = 0.05;
  double divergence_margin = 1.0;  // tolerated excursion outside X before failing
};

struct Trajectory {
  std::vector<State> states;      // horizon + 1 entries unless the run failed early
  std::vector<Control> controls;  // one per step
  std::vector<double> stage_costs;
  std::vector<double> control_seconds;
  double total_cost = 0.0;
  std::optional<std::size_t> steps_to_goal;
  bool stabilized = false;  // entered the goal ball and never left it
  bool diverged = false;
};

/// Closed loop: controls are computed on the store's (planning) system and
/// applied to `exec_sys`. Stage costs are those of the executing system.
Trajectory simulate(const Store& store, const SystemDef& exec_sys, const InterpConfig& icfg,
                    const ControlSearchConfig& scfg, const State& x0, const SimulationConfig& sim);

/// Columns: step, x0..x{n-1}, u0..u{m-1}, stage_cost, cumulative_cost. The
/// last row carries the final state with empty control and cost cells.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace gravitree
