#pragma once

#include "gravitree/store.hpp"

#include <filesystem>
#include <optional>

namespace gravitree {

/// Runtime modifications applied over a frozen graph. Vertices and edges are
/// never removed; forbidden edges get cost +inf and keep their base cost.
struct ConstraintSet {
  ObstacleSet obstacles;
  std::optional<Box> control_limit_override;  // must lie inside U
  StageCost cost_override;                    // replaces g when set
  std::optional<VertexId> goal_override;      // re-root at an existing vertex
  bool dense_edge_check = false;              // also test every Euler substep of the edge

  void validate(const Store& store) const;
};

struct RebuildResult {
  std::size_t sweeps = 0;  // phase-2 sweeps, including the final unchanged one
  std::size_t reachable = 0;
};

struct ModificationReport {
  std::size_t edges_infinite = 0;
  std::size_t unreachable = 0;
  std::size_t sweeps = 0;
  double elapsed_seconds = 0.0;
};

/// Recomputes every edge cost from its base cost under `cs`. Returns the
/// number of edges now at +inf.
std::size_t apply_constraints(Store& store, const ConstraintSet& cs);

/// Discards the tree, seeds it with hop-minimal paths to the root over
/// finite-cost edges, then sweeps vertices in id order adopting strictly
/// cheaper parents until a sweep changes nothing.
RebuildResult rebuild_tree(Store& store);

ModificationReport modify(Store& store, const ConstraintSet& cs);

/// Constraint file (JSON):
///   { "format_version": "1.0",
///     "boxes": [ {"lo": [...], "hi": [...]} ],
///     "walls": [ {"a": [x, y], "b": [x, y]} ], "wall_margin": real,
///     "control_limits": {"lo": [...], "hi": [...]},
///     "goal_vertex": int, "dense_edge_check": bool }
/// Every field except format_version is optional; an empty object restores
/// the unconstrained problem.
ConstraintSet load_constraints(const std::filesystem::path& path);
ConstraintSet parse_constraints(const std::string& text);

}  // namespace gravitree
