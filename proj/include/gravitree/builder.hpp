#pragma once

#include "gravitree/store.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <variant>

namespace gravitree {

/// Pattern-search settings for connecting two sampled states in one step.
/// Zero-valued fields select defaults derived from the control box.
struct SteerConfig {
  double alpha0 = 0.0;      // default 0.25 * diameter of U
  double shrink = 2.0;
  double eps_alpha = 1e-4;
  int n_directions = 0;     // default 4m: +-(coordinate axes and m random unit vectors)
  int max_evals = 600;
};

enum class StepDirection { Forward, Backward };

struct MaxSeconds {
  double seconds;
};
struct MaxVertices {
  std::size_t count;  // total vertices in the store, root included
};
struct GoalRegion {
  State center;
  double radius;
};
using StopCriterion = std::variant<MaxSeconds, MaxVertices, GoalRegion>;

struct BuildConfig {
  StopCriterion stop = MaxVertices{500};
  int controls_per_expand = 8;
  int k_parents = 10;
  int k_children = 10;
  int probes_per_axis = 0;   // grid controls per axis used to locate candidates; 0 picks 9, 5 or 3 for m = 1, 2, >2
  double goal_bias = 0.0;         // share of samples drawn near the terminal state
  double goal_bias_radius = 0.5;  // half-width of that sampling box
  SteerConfig steer;
  std::uint64_t rng_seed = 1;
  std::size_t max_consecutive_skips = 10000;

  void validate(int control_dim) const;
};

struct BuildReport {
  std::size_t iterations = 0;
  std::size_t vertices_added = 0;
  std::size_t edges_added = 0;
  std::size_t rewires = 0;
  std::size_t skipped = 0;
  bool stalled = false;  // hit max_consecutive_skips
  double elapsed_seconds = 0.0;
};

struct ConnectionCount {
  std::size_t parents = 0;
  std::size_t children = 0;
};

/// Called after every build iteration with the store in a consistent state.
using BuildObserver = std::function<void(const Store&, const BuildReport&)>;

/// Derivative-free search for u in U with ||step(from, u) - target|| < eps.
/// Starts at `initial` (the center of U when absent); iterates are clamped
/// into U. Returns the control only when the final residual is below eps.
std::optional<Control> steer(const SystemDef& sys, const IntegratorConfig& integrator,
                             const SteerConfig& cfg, const State& from, const State& target,
                             StepDirection direction, double eps, std::mt19937_64& rng,
                             std::optional<Control> initial = std::nullopt);

/// One growth step: sample, pick the nearest vertex, push random controls
/// backward and keep the candidate farthest from existing vertices. Adds the
/// vertex and its edge toward the chosen vertex and wires the tree.
/// Returns nullopt when every candidate left the state box.
std::optional<VertexId> expand_backward(Store& store, const BuildConfig& cfg, std::mt19937_64& rng);

ConnectionCount find_connections(Store& store, const BuildConfig& cfg, VertexId v, std::mt19937_64& rng);

/// Adopts the cheapest improving out-edge of v, then propagates to every
/// in-neighbour that improves by descending through v. Returns the number of
/// cost-to-go decreases.
std::size_t update_tree(Store& store, VertexId v);

BuildReport build(Store& store, const BuildConfig& cfg, const BuildObserver& observer = {});

}  // namespace gravitree
