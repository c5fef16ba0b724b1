#include "gravitree/builder.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include <Eigen/QR>

namespace gravitree {

void BuildConfig::validate(int control_dim) const {
  if (!(goal_bias >= 0.0 && goal_bias <= 1.0) || !(goal_bias_radius > 0.0)) {
    throw InvalidParameter("build config: goal_bias must lie in [0, 1] with a positive radius");
  }
  if (controls_per_expand < 1 || k_parents < 1 || k_children < 1 || probes_per_axis < 0) {
    throw InvalidParameter("build config: counts must be >= 1");
  }
  if (steer.n_directions != 0 && steer.n_directions < 2 * control_dim) {
    throw InvalidParameter("steer config: n_directions must be >= 2m");
  }
  if (!(steer.shrink > 1.0) || !(steer.eps_alpha > 0.0)) {
    throw InvalidParameter("steer config: shrink must exceed 1 and eps_alpha must be positive");
  }
  if (steer.alpha0 != 0.0 && !(steer.alpha0 > steer.eps_alpha)) {
    throw InvalidParameter("steer config: alpha0 must exceed eps_alpha");
  }
  if (const auto* t = std::get_if<MaxSeconds>(&stop); t && !(t->seconds > 0.0)) {
    throw InvalidParameter("build config: max seconds must be positive");
  }
  if (const auto* g = std::get_if<GoalRegion>(&stop); g && !(g->radius > 0.0)) {
    throw InvalidParameter("build config: goal region radius must be positive");
  }
}

namespace {

Control sample_in(const Box& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Control u(box.dim());
  for (Eigen::Index i = 0; i < box.dim(); ++i) u[i] = box.lo[i] + unit(rng) * (box.hi[i] - box.lo[i]);
  return u;
}

std::vector<Eigen::VectorXd> direction_set(int m, int count, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::VectorXd> half;
  for (int i = 0; i < m; ++i) half.push_back(Eigen::VectorXd::Unit(m, i));
  // In one dimension every unit vector is +-1.
  const int wanted_half = m == 1 ? 1 : std::max(m, count / 2);
  while (static_cast<int>(half.size()) < wanted_half) {
    Eigen::VectorXd d(m);
    for (int i = 0; i < m; ++i) d[i] = normal(rng);
    const double norm = d.norm();
    if (norm > 1e-12) half.push_back(d / norm);
  }
  half.resize(static_cast<std::size_t>(wanted_half));
  std::vector<Eigen::VectorXd> dirs;
  for (const auto& d : half) {
    dirs.push_back(d);
    dirs.push_back(-d);
  }
  return dirs;
}

State take_step(const SystemDef& sys, const IntegratorConfig& integrator, const State& x, const Control& u,
                StepDirection direction) {
  return direction == StepDirection::Forward ? step_forward(sys, integrator, x, u)
                                             : step_backward(sys, integrator, x, u);
}

double step_residual(const SystemDef& sys, const IntegratorConfig& integrator, const State& from,
                     const State& target, const Control& u, StepDirection direction) {
  try {
    return state_distance(sys, take_step(sys, integrator, from, u, direction), target);
  } catch (const IntegrationDiverged&) {
    return kInfinity;
  }
}

}  // namespace

std::optional<Control> steer(const SystemDef& sys, const IntegratorConfig& integrator,
                             const SteerConfig& cfg, const State& from, const State& target,
                             StepDirection direction, double eps, std::mt19937_64& rng,
                             std::optional<Control> initial) {
  const Box& ubox = sys.control_bounds;
  const int n_dirs = cfg.n_directions > 0 ? cfg.n_directions : 4 * sys.m;
  double alpha = cfg.alpha0 > 0.0 ? cfg.alpha0 : 0.25 * ubox.diameter();
  // Once the residual is this small further refinement buys nothing.
  const double good_enough = 1e-2 * eps;

  Control u = ubox.clamp(initial ? *initial : ubox.center());
  double best = step_residual(sys, integrator, from, target, u, direction);
  int evals = 1;
  auto dirs = direction_set(sys.m, n_dirs, rng);

  while (alpha > cfg.eps_alpha && evals < cfg.max_evals && best > good_enough) {
    double round_best = kInfinity;
    Control round_u;
    for (const auto& d : dirs) {
      Control probe = ubox.clamp(u + alpha * d);
      const double r = step_residual(sys, integrator, from, target, probe, direction);
      ++evals;
      if (r < round_best) {
        round_best = r;
        round_u = std::move(probe);
      }
    }
    if (round_best < best) {
      best = round_best;
      u = std::move(round_u);
    } else {
      alpha /= cfg.shrink;
      dirs = direction_set(sys.m, n_dirs, rng);
    }
  }
  if (best < eps) return u;
  return std::nullopt;
}

namespace {

/// Controls on a regular grid over U, used to locate connection candidates.
std::vector<Control> probe_controls(const Box& ubox, int per_axis) {
  const auto m = ubox.dim();
  std::vector<Control> out;
  std::vector<int> idx(static_cast<std::size_t>(m), 0);
  for (;;) {
    Control u(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double t = per_axis == 1 ? 0.5 : static_cast<double>(idx[static_cast<std::size_t>(i)]) / (per_axis - 1);
      u[i] = ubox.lo[i] + t * (ubox.hi[i] - ubox.lo[i]);
    }
    out.push_back(std::move(u));
    Eigen::Index axis = 0;
    while (axis < m && ++idx[static_cast<std::size_t>(axis)] == per_axis) {
      idx[static_cast<std::size_t>(axis)] = 0;
      ++axis;
    }
    if (axis == m) break;
  }
  return out;
}

struct Candidate {
  VertexId id;
  double score;
  Control guess;
};

int effective_probes(const BuildConfig& cfg, int m) {
  if (cfg.probes_per_axis > 0) return cfg.probes_per_axis;
  return m == 1 ? 9 : m == 2 ? 5 : 3;
}

/// Vertices closest to the states reached from v by the probe controls.
/// A vertex farther from every probe state than the grid can explain
/// (half the largest gap between neighbouring probe states, scaled by
/// sqrt(m), plus eps) cannot be hit and is dropped.
std::vector<Candidate> connection_candidates(const Store& store, const BuildConfig& cfg, VertexId v,
                                             StepDirection direction, std::size_t k) {
  const SystemDef& sys = store.system();
  const int per_axis = effective_probes(cfg, sys.m);
  const std::vector<Control> probes = probe_controls(sys.control_bounds, per_axis);
  std::vector<std::optional<State>> reached(probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i) {
    try {
      reached[i] = take_step(sys, store.integrator(), store.vertex(v).state, probes[i], direction);
    } catch (const IntegrationDiverged&) {
    }
  }

  // Grid neighbours differ by one index on one axis; index i has stride per_axis^axis.
  double gap = 0.0;
  std::size_t stride = 1;
  for (int axis = 0; axis < sys.m; ++axis) {
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const bool last_on_axis = (i / stride) % static_cast<std::size_t>(per_axis) == static_cast<std::size_t>(per_axis - 1);
      if (last_on_axis || !reached[i] || !reached[i + stride]) continue;
      gap = std::max(gap, state_distance(sys, *reached[i], *reached[i + stride]));
    }
    stride *= static_cast<std::size_t>(per_axis);
  }
  const double gate = 0.5 * gap * std::sqrt(static_cast<double>(sys.m)) + store.options().eps_connect;

  // Tangent of the reachable set at each probe from neighbouring probes,
  // used to drop vertices lying off a lower-dimensional reachable set.
  const bool thin = sys.m < sys.n;
  std::vector<Eigen::MatrixXd> tangent(thin ? probes.size() : 0);
  if (thin) {
    for (std::size_t i = 0; i < probes.size(); ++i) {
      if (!reached[i]) continue;
      Eigen::MatrixXd t(sys.n, sys.m);
      std::size_t axis_stride = 1;
      bool ok = true;
      for (int axis = 0; axis < sys.m && ok; ++axis) {
        const bool last = (i / axis_stride) % static_cast<std::size_t>(per_axis) == static_cast<std::size_t>(per_axis - 1);
        const std::size_t j = last ? i - axis_stride : i + axis_stride;
        ok = per_axis > 1 && reached[j].has_value();
        if (ok) t.col(axis) = state_difference(sys, *reached[i], *reached[j]);
        axis_stride *= static_cast<std::size_t>(per_axis);
      }
      if (ok) tangent[i] = t.householderQr().householderQ() * Eigen::MatrixXd::Identity(sys.n, sys.m);
    }
  }
  const double off_manifold_gate = store.options().eps_connect + 0.25 * gap;

  std::map<VertexId, Candidate> best;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    if (!reached[i]) continue;
    for (const auto& hit : store.nearest_hits(*reached[i], k + 1)) {
      if (hit.id == v || hit.distance > gate) continue;
      if (thin && tangent[i].size() > 0) {
        const Eigen::VectorXd d = state_difference(sys, *reached[i], store.vertex(hit.id).state);
        const Eigen::VectorXd off = d - tangent[i] * (tangent[i].transpose() * d);
        if (off.norm() > off_manifold_gate) continue;
      }
      auto it = best.find(hit.id);
      if (it == best.end()) {
        best.emplace(hit.id, Candidate{hit.id, hit.distance, probes[i]});
      } else if (hit.distance < it->second.score) {
        it->second.score = hit.distance;
        it->second.guess = probes[i];
      }
    }
  }
  std::vector<Candidate> out;
  out.reserve(best.size());
  for (auto& [id, c] : best) out.push_back(std::move(c));
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    return a.score < b.score || (a.score == b.score && a.id < b.id);
  });
  if (out.size() > k) out.resize(k);
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) { return a.id < b.id; });
  return out;
}

bool has_edge(const Store& store, VertexId from, VertexId to) {
  for (EdgeId e : store.vertex(from).out_edges) {
    if (store.edge(e).to == to) return true;
  }
  return false;
}

}  // namespace

ConnectionCount find_connections(Store& store, const BuildConfig& cfg, VertexId v, std::mt19937_64& rng) {
  const SystemDef& sys = store.system();
  const IntegratorConfig& integrator = store.integrator();
  const double eps = store.options().eps_connect;
  ConnectionCount count;

  for (const Candidate& c : connection_candidates(store, cfg, v, StepDirection::Forward,
                                                  static_cast<std::size_t>(cfg.k_parents))) {
    if (has_edge(store, v, c.id)) continue;
    const auto u = steer(sys, integrator, cfg.steer, store.vertex(v).state, store.vertex(c.id).state,
                         StepDirection::Forward, eps, rng, c.guess);
    if (!u) continue;
    try {
      if (store.add_edge(v, c.id, *u)) ++count.parents;
    } catch (const InfeasibleEdge&) {
    }
  }

  for (const Candidate& c : connection_candidates(store, cfg, v, StepDirection::Backward,
                                                  static_cast<std::size_t>(cfg.k_children))) {
    if (has_edge(store, c.id, v)) continue;
    auto u = steer(sys, integrator, cfg.steer, store.vertex(v).state, store.vertex(c.id).state,
                   StepDirection::Backward, eps, rng, c.guess);
    if (!u) continue;
    // The edge is stored forward in time; polish if the reverse step drifts.
    if (!(store.edge_residual(c.id, v, *u) < eps)) {
      u = steer(sys, integrator, cfg.steer, store.vertex(c.id).state, store.vertex(v).state,
                StepDirection::Forward, eps, rng, *u);
      if (!u) continue;
    }
    try {
      if (store.add_edge(c.id, v, *u)) ++count.children;
    } catch (const InfeasibleEdge&) {
    }
  }
  return count;
}

std::size_t update_tree(Store& store, VertexId v) {
  std::size_t improved = 0;
  std::vector<VertexId> pending{v};
  bool first = true;
  while (!pending.empty()) {
    const VertexId w = pending.back();
    pending.pop_back();

    bool changed = false;
    if (w != store.root()) {
      double best = store.cost_to_go(w);
      std::optional<EdgeId> best_edge;
      for (EdgeId e : store.vertex(w).out_edges) {
        const GraphEdge& edge = store.edge(e);
        const double candidate = edge.cost + store.cost_to_go(edge.to);
        if (candidate < best) {
          best = candidate;
          best_edge = e;
        }
      }
      if (best_edge) {
        store.set_tree_edge(w, *best_edge);
        ++improved;
        changed = true;
      }
    }
    if (!changed && !first) continue;
    first = false;

    const double jw = store.cost_to_go(w);
    for (EdgeId e : store.vertex(w).in_edges) {
      const GraphEdge& edge = store.edge(e);
      if (edge.cost + jw < store.cost_to_go(edge.from)) pending.push_back(edge.from);
    }
  }
  return improved;
}

std::optional<VertexId> expand_backward(Store& store, const BuildConfig& cfg, std::mt19937_64& rng) {
  const SystemDef& sys = store.system();
  State sample = sample_in(sys.state_bounds, rng);
  if (cfg.goal_bias > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.goal_bias) {
    const Eigen::VectorXd half = Eigen::VectorXd::Constant(sys.n, cfg.goal_bias_radius);
    sample = sys.state_bounds.clamp(sample_in(Box{sys.terminal_state - half, sys.terminal_state + half}, rng));
    wrap_state(sys, sample);
  }
  const VertexId anchor = store.nearest(sample, 1).front();
  const State& anchor_state = store.vertex(anchor).state;

  std::optional<State> chosen;
  Control chosen_u;
  double chosen_gap = -1.0;
  for (int i = 0; i < cfg.controls_per_expand; ++i) {
    const Control u = sample_in(sys.control_bounds, rng);
    State x;
    try {
      x = step_backward(sys, store.integrator(), anchor_state, u);
    } catch (const IntegrationDiverged&) {
      continue;
    }
    if (!sys.state_bounds.contains(x)) continue;
    const double gap = store.nearest_hits(x, 1).front().distance;
    if (gap > chosen_gap) {
      chosen_gap = gap;
      chosen = std::move(x);
      chosen_u = u;
    }
  }
  if (!chosen) return std::nullopt;

  const double eps = store.options().eps_connect;
  auto corrected = invert_step(sys, store.integrator(), *chosen, anchor_state, chosen_u, 1e-3 * eps);
  if (!corrected || !sys.state_bounds.contains(*corrected)) return std::nullopt;
  chosen = std::move(corrected);

  const VertexId added = store.add_vertex(*chosen);
  const auto edge = store.add_edge(added, anchor, chosen_u);
  if (edge && std::isfinite(store.cost_to_go(anchor))) store.set_tree_edge(added, *edge);
  return added;
}

BuildReport build(Store& store, const BuildConfig& cfg, const BuildObserver& observer) {
  cfg.validate(store.system().m);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  std::mt19937_64 rng(cfg.rng_seed);
  BuildReport report;
  std::size_t skips_in_row = 0;

  auto finished = [&]() -> bool {
    return std::visit(
        [&](const auto& stop) -> bool {
          using T = std::decay_t<decltype(stop)>;
          if constexpr (std::is_same_v<T, MaxSeconds>) {
            return elapsed() >= stop.seconds;
          } else if constexpr (std::is_same_v<T, MaxVertices>) {
            return store.vertex_count() >= stop.count;
          } else {
            for (const auto& hit : store.within(stop.center, stop.radius)) {
              if (std::isfinite(store.cost_to_go(hit.id))) return true;
            }
            return false;
          }
        },
        cfg.stop);
  };

  while (!finished()) {
    ++report.iterations;
    const std::size_t edges_before = store.edge_count();
    const auto added = expand_backward(store, cfg, rng);
    if (!added) {
      ++report.skipped;
      if (++skips_in_row >= cfg.max_consecutive_skips) {
        report.stalled = true;
        break;
      }
      continue;
    }
    skips_in_row = 0;
    ++report.vertices_added;
    find_connections(store, cfg, *added, rng);
    report.rewires += update_tree(store, *added);
    report.edges_added += store.edge_count() - edges_before;
    report.elapsed_seconds = elapsed();
    if (observer) observer(store, report);
  }
  report.elapsed_seconds = elapsed();
  return report;
}

}  // namespace gravitree
