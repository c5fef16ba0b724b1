#include "gravitree/rewire.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

namespace gravitree {

using nlohmann::json;

void ConstraintSet::validate(const Store& store) const {
  const SystemDef& sys = store.system();
  for (const Box& box : obstacles.boxes) {
    if (box.dim() != sys.n) throw DimensionMismatch("constraints: obstacle box dimension != state dimension");
  }
  if (!obstacles.walls.empty() && sys.n < 2) throw DimensionMismatch("constraints: walls need a 2-D state");
  if (control_limit_override) {
    if (control_limit_override->dim() != sys.m) {
      throw DimensionMismatch("constraints: control limits dimension != control dimension");
    }
    if (!sys.control_bounds.contains_box(*control_limit_override)) {
      throw InvalidParameter("constraints: control limits must lie inside the control box");
    }
  }
  if (goal_override && *goal_override >= store.vertex_count()) {
    throw InvalidParameter("constraints: goal vertex does not exist");
  }
}

namespace {

bool edge_blocked(const Store& store, const GraphEdge& edge, const ConstraintSet& cs) {
  if (cs.control_limit_override && !cs.control_limit_override->contains(edge.control)) return true;
  if (cs.obstacles.empty()) return false;
  const State& source = store.vertex(edge.from).state;
  if (inside_obstacle(cs.obstacles, source)) return true;
  if (cs.dense_edge_check) {
    for (const State& x : step_path(store.system(), store.integrator(), source, edge.control, 1)) {
      if (inside_obstacle(cs.obstacles, x)) return true;
    }
  }
  return false;
}

}  // namespace

std::size_t apply_constraints(Store& store, const ConstraintSet& cs) {
  cs.validate(store);
  std::size_t infinite = 0;
  for (EdgeId e = 0; e < store.edge_count(); ++e) {
    const GraphEdge& edge = store.edge(e);
    double cost;
    if (edge_blocked(store, edge, cs)) {
      cost = kInfinity;
    } else if (cs.cost_override) {
      cost = cs.cost_override(store.vertex(edge.from).state, edge.control);
    } else {
      cost = edge.base_cost;
    }
    if (std::isinf(cost)) ++infinite;
    store.set_edge_cost(e, cost);
  }
  store.set_root(cs.goal_override.value_or(0));
  return infinite;
}

RebuildResult rebuild_tree(Store& store) {
  store.reset_tree();
  const std::size_t n = store.vertex_count();
  const VertexId root = store.root();

  // Phase 1: breadth-first over reversed finite edges from the root.
  std::vector<char> seen(n, 0);
  std::deque<VertexId> queue{root};
  seen[root] = 1;
  while (!queue.empty()) {
    const VertexId w = queue.front();
    queue.pop_front();
    for (EdgeId e : store.vertex(w).in_edges) {
      const GraphEdge& edge = store.edge(e);
      if (seen[edge.from] || !std::isfinite(edge.cost)) continue;
      seen[edge.from] = 1;
      store.set_tree_edge(edge.from, e);
      queue.push_back(edge.from);
    }
  }

  // Phase 2: Bellman-Ford style sweeps in id order.
  RebuildResult result;
  bool changed = true;
  while (changed) {
    changed = false;
    ++result.sweeps;
    for (VertexId v = 0; v < n; ++v) {
      if (v == root) continue;
      double best = store.cost_to_go(v);
      std::optional<EdgeId> best_edge;
      for (EdgeId e : store.vertex(v).out_edges) {
        const GraphEdge& edge = store.edge(e);
        const double candidate = edge.cost + store.cost_to_go(edge.to);
        if (candidate < best) {
          best = candidate;
          best_edge = e;
        }
      }
      if (best_edge) {
        store.set_tree_edge(v, *best_edge);
        changed = true;
      }
    }
    if (result.sweeps > n + 1) throw Error("rebuild_tree: sweep count exceeded the vertex bound");
  }
  for (VertexId v = 0; v < n; ++v) result.reachable += std::isfinite(store.cost_to_go(v)) ? 1 : 0;
  return result;
}

ModificationReport modify(Store& store, const ConstraintSet& cs) {
  const auto t0 = std::chrono::steady_clock::now();
  ModificationReport report;
  report.edges_infinite = apply_constraints(store, cs);
  const RebuildResult rebuilt = rebuild_tree(store);
  report.sweeps = rebuilt.sweeps;
  report.unreachable = store.vertex_count() - rebuilt.reachable;
  report.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

namespace {

Eigen::VectorXd vec(const json& j) {
  if (!j.is_array()) throw SchemaViolation("constraints: expected a numeric array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Box box(const json& j) {
  Box b{vec(j.at("lo")), vec(j.at("hi"))};
  if (b.lo.size() != b.hi.size()) throw DimensionMismatch("constraints: box lo/hi length differ");
  return b;
}

}  // namespace

ConstraintSet parse_constraints(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaViolation(std::string("constraints: not valid JSON: ") + e.what());
  }
  try {
    if (!doc.is_object()) throw SchemaViolation("constraints: top level must be an object");
    if (!doc.contains("format_version")) throw SchemaViolation("constraints: missing format_version");
    const auto version = doc["format_version"].get<std::string>();
    if (version.rfind("1.", 0) != 0) throw VersionMismatch("constraints: unsupported format_version " + version);
    ConstraintSet cs;
    for (const json& jb : doc.value("boxes", json::array())) cs.obstacles.boxes.push_back(box(jb));
    for (const json& jw : doc.value("walls", json::array())) {
      const Eigen::VectorXd a = vec(jw.at("a"));
      const Eigen::VectorXd b = vec(jw.at("b"));
      if (a.size() != 2 || b.size() != 2) throw DimensionMismatch("constraints: wall endpoints must be 2-D");
      cs.obstacles.walls.push_back({a, b});
    }
    cs.obstacles.wall_margin = doc.value("wall_margin", cs.obstacles.wall_margin);
    if (doc.contains("control_limits")) cs.control_limit_override = box(doc["control_limits"]);
    if (doc.contains("goal_vertex")) cs.goal_override = doc["goal_vertex"].get<VertexId>();
    cs.dense_edge_check = doc.value("dense_edge_check", false);
    return cs;
  } catch (const json::exception& e) {
    throw SchemaViolation(std::string("constraints: ") + e.what());
  }
}

ConstraintSet load_constraints(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileMissing("constraints: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_constraints(buf.str());
}

}  // namespace gravitree
