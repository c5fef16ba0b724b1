#pragma once

#include "gravitree/dynamics.hpp"
#include "gravitree/nn_index.hpp"
#include "gravitree/systems.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gravitree {

struct GraphEdge {
  VertexId from;
  VertexId to;
  Control control;
  double cost;       // current stage cost, +inf when a constraint forbids the edge
  double base_cost;  // stage cost under the unconstrained problem
};

struct VertexRecord {
  State state;
  double cost_to_go = kInfinity;
  std::optional<EdgeId> tree_edge;
  std::vector<EdgeId> out_edges;
  std::vector<EdgeId> in_edges;
};

struct StoreOptions {
  double eps_connect = 1e-3;  // feasibility tolerance for edges
  double dedup_tol = 1e-6;    // controls closer than this on the same (from, to) are duplicates
};

/// Per-kind defaults. The pendulum models use a looser eps_connect because
/// their one-step reach set is a curve and exact hits are rare.
StoreOptions default_store_options(const SystemSpec& spec);

/// The graph of dynamically connected sampled states together with the
/// spanning value tree over the same vertices.
///
/// Vertex 0 is created at the terminal state with cost-to-go 0. Every tree
/// edge is one of the vertex's graph out-edges, and a vertex with finite
/// cost-to-go always satisfies J(v) == cost(tree_edge) + J(parent) exactly.
/// A single writer may mutate the store; readers need an immutable snapshot.
class Store {
 public:
  Store(SystemSpec spec, IntegratorConfig integrator, StoreOptions options = {});
  Store(SystemSpec spec, SystemDef system, IntegratorConfig integrator, StoreOptions options = {});

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;
  Store(Store&&) noexcept;
  Store& operator=(Store&&) noexcept;
  ~Store();

  const SystemDef& system() const noexcept { return *system_; }
  const SystemSpec& spec() const noexcept { return spec_; }
  const IntegratorConfig& integrator() const noexcept { return integrator_; }
  const StoreOptions& options() const noexcept { return options_; }

  std::size_t vertex_count() const noexcept { return vertices_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  VertexId root() const noexcept { return root_; }

  const VertexRecord& vertex(VertexId v) const { return vertices_.at(v); }
  const GraphEdge& edge(EdgeId e) const { return edges_.at(e); }
  const std::vector<VertexRecord>& vertices() const noexcept { return vertices_; }
  const std::vector<GraphEdge>& edges() const noexcept { return edges_; }
  double cost_to_go(VertexId v) const { return vertices_.at(v).cost_to_go; }
  std::optional<VertexId> parent(VertexId v) const;

  /// Adds a vertex with cost-to-go +inf. Throws OutOfBounds when x is outside
  /// the state box.
  VertexId add_vertex(const State& x);

  /// Adds from -> to with the given control after checking that one forward
  /// step from `from` lands within eps_connect of `to`. Throws InfeasibleEdge
  /// carrying the measured residual otherwise. Returns nullopt when an edge
  /// with the same endpoints and a control within dedup_tol already exists.
  std::optional<EdgeId> add_edge(VertexId from, VertexId to, const Control& u);

  /// Residual of replaying the edge control from `from` against `to`.
  double edge_residual(VertexId from, VertexId to, const Control& u) const;

  std::vector<VertexId> nearest(const State& x, std::size_t k) const;
  std::vector<NnIndex::Hit> nearest_hits(const State& x, std::size_t k) const;
  std::vector<NnIndex::Hit> within(const State& x, double radius) const;

  // Tree mutation. These keep J consistent with the chosen edge.
  void set_tree_edge(VertexId v, EdgeId e);
  void reset_tree();
  void set_root(VertexId v);
  void set_cost_to_go(VertexId v, double j) { vertices_.at(v).cost_to_go = j; }
  void set_edge_cost(EdgeId e, double c) { edges_.at(e).cost = c; }

 private:
  SystemSpec spec_;
  std::unique_ptr<SystemDef> system_;
  IntegratorConfig integrator_;
  StoreOptions options_;
  std::vector<VertexRecord> vertices_;
  std::vector<GraphEdge> edges_;
  std::unique_ptr<NnIndex> index_;
  VertexId root_ = 0;

  void init_root();

  friend Store deserialize(const std::string& text);
};

/// Structural checks over the whole store. Returns human-readable violations;
/// an empty result means every invariant holds.
std::vector<std::string> check_invariants(const Store& store, bool check_feasibility = true);

// ---------------------------------------------------------------------------
// Persistence. File layout (JSON, one object):
//   format_version  "1.0"; readers reject other majors
//   system          SystemSpec as JSON, used to rebuild the SystemDef
//   integrator      {step_dt, sub_dt}
//   eps_connect, dedup_tol, root
//   vertices        [[x0, x1, ...], J, tree_edge | -1]
//   edges           [from, to, [u0, ...], cost, base_cost]
// Infinite costs are written as the string "inf".

inline constexpr const char* kStoreFormatVersion = "1.0";

std::string serialize(const Store& store);
void save_store(const Store& store, const std::filesystem::path& path);
Store deserialize(const std::string& text);
Store load_store(const std::filesystem::path& path);

}  // namespace gravitree
