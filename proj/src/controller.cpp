#include "gravitree/controller.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

namespace gravitree {

double bump(double gamma, double distance) {
  const double s = gamma * distance;
  if (!(s < 1.0)) return 0.0;
  return std::exp(-1.0 / (1.0 - s * s));
}

double bump(const SystemDef& sys, double gamma, const State& a, const State& b) {
  return bump(gamma, state_distance(sys, a, b));
}

double default_gamma(const Store& store) {
  std::vector<double> spacing;
  spacing.reserve(store.vertex_count());
  for (VertexId v = 0; v < store.vertex_count(); ++v) {
    if (!std::isfinite(store.cost_to_go(v))) continue;
    for (const auto& hit : store.nearest_hits(store.vertex(v).state, 2)) {
      if (hit.id != v) {
        spacing.push_back(hit.distance);
        break;
      }
    }
  }
  spacing.erase(std::remove_if(spacing.begin(), spacing.end(), [](double d) { return !(d > 0.0); }),
                spacing.end());
  if (spacing.empty()) return 1.0 / store.system().state_bounds.diameter();
  auto mid = spacing.begin() + static_cast<std::ptrdiff_t>(spacing.size() / 2);
  std::nth_element(spacing.begin(), mid, spacing.end());
  return 1.0 / (kGammaSpacing * *mid);
}

ValueInterpolator::ValueInterpolator(const Store& store, InterpConfig cfg)
    : store_(&store), cfg_(cfg), gamma_(cfg.gamma > 0.0 ? cfg.gamma : default_gamma(store)) {
  if (!(cfg.gamma >= 0.0) || !std::isfinite(cfg.gamma)) throw InvalidParameter("interpolation: gamma must be > 0");
}

double ValueInterpolator::operator()(const State& x) const {
  double weight_sum = 0.0;
  double value_sum = 0.0;
  for (const auto& hit : store_->within(x, 1.0 / gamma_)) {
    const double j = store_->cost_to_go(hit.id);
    if (!std::isfinite(j)) continue;
    const double w = bump(gamma_, hit.distance);
    weight_sum += w;
    value_sum += w * j;
  }
  if (weight_sum > 0.0) return value_sum / weight_sum;
  if (cfg_.fallback == Fallback::Reject) return kInfinity;

  // Widen the neighbour query until a finite vertex shows up.
  const std::size_t total = store_->vertex_count();
  for (std::size_t k = 8;; k *= 4) {
    for (const auto& hit : store_->nearest_hits(x, std::min(k, total))) {
      if (std::isfinite(store_->cost_to_go(hit.id))) return store_->cost_to_go(hit.id);
    }
    if (k >= total) return kInfinity;
  }
}

double interpolate_value(const Store& store, const InterpConfig& cfg, const State& x) {
  return ValueInterpolator(store, cfg)(x);
}

double q_value(const ValueInterpolator& value, const State& x, const Control& u) {
  const SystemDef& sys = value.store().system();
  State next;
  try {
    next = step_forward(sys, value.store().integrator(), x, u);
  } catch (const IntegrationDiverged&) {
    return kInfinity;
  }
  return sys.stage_cost(x, u) + value(next);
}

Control control(const ValueInterpolator& value, const ControlSearchConfig& scfg, const State& x) {
  const SystemDef& sys = value.store().system();
  const Box& ubox = sys.control_bounds;
  double alpha = scfg.alpha0 > 0.0 ? scfg.alpha0 : 0.25 * ubox.diameter();
  if (!(alpha > scfg.eps_alpha) || !(scfg.eps_alpha > 0.0) || !(scfg.shrink > 1.0)) {
    throw InvalidParameter("control search: need alpha0 > eps_alpha > 0 and shrink > 1");
  }

  Control u = ubox.clamp(Control::Zero(sys.m));
  double best = q_value(value, x, u);
  std::vector<Control> probed{u};

  while (alpha > scfg.eps_alpha) {
    double candidate_q = best;
    Control candidate = u;
    for (int axis = 0; axis < sys.m; ++axis) {
      for (double sign : {1.0, -1.0}) {
        Control trial = u;
        trial[axis] += sign * alpha;
        trial = ubox.clamp(trial);
        const double q = q_value(value, x, trial);
        if (!std::isfinite(best)) probed.push_back(trial);
        if (q < candidate_q) {
          candidate_q = q;
          candidate = trial;
        }
      }
    }
    if (candidate_q < best) {
      best = candidate_q;
      u = candidate;
    } else {
      alpha /= scfg.shrink;
    }
  }
  if (!std::isfinite(best)) throw ControllerStarved("controller: no probed control reaches a finite value", probed);
  return u;
}

Control control(const Store& store, const InterpConfig& icfg, const ControlSearchConfig& scfg,
                const State& x) {
  return control(ValueInterpolator(store, icfg), scfg, x);
}

namespace {

double box_excess(const Box& box, const State& x) {
  double excess = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    excess = std::max({excess, box.lo[i] - x[i], x[i] - box.hi[i]});
  }
  return excess;
}

}  // namespace

Trajectory simulate(const Store& store, const SystemDef& exec_sys, const InterpConfig& icfg,
                    const ControlSearchConfig& scfg, const State& x0, const SimulationConfig& sim) {
  const SystemDef& plan_sys = store.system();
  if (exec_sys.n != plan_sys.n || exec_sys.m != plan_sys.m) {
    throw DimensionMismatch("simulate: planning and executing systems differ in dimension");
  }
  if (x0.size() != plan_sys.n) throw DimensionMismatch("simulate: x0 has the wrong dimension");
  if (!(sim.goal_tol > 0.0)) throw InvalidParameter("simulate: goal_tol must be > 0");

  const ValueInterpolator value(store, icfg);
  Trajectory traj;
  State x = x0;
  wrap_state(exec_sys, x);
  traj.states.push_back(x);

  auto at_goal = [&](const State& s) { return state_distance(exec_sys, s, exec_sys.terminal_state) < sim.goal_tol; };
  auto note_goal = [&](std::size_t step, const State& s) {
    if (at_goal(s)) {
      if (!traj.steps_to_goal) traj.steps_to_goal = step;
    } else if (traj.steps_to_goal) {
      traj.stabilized = false;
    }
  };
  traj.stabilized = true;
  note_goal(0, x);

  for (std::size_t k = 0; k < sim.horizon; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const Control u = control(value, scfg, x);
    traj.control_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

    const double g = exec_sys.stage_cost(x, u);
    State next;
    try {
      next = step_forward(exec_sys, store.integrator(), x, u);
    } catch (const IntegrationDiverged&) {
      traj.diverged = true;
    }
    traj.controls.push_back(u);
    traj.stage_costs.push_back(g);
    traj.total_cost += g;
    if (traj.diverged || box_excess(exec_sys.state_bounds, next) > sim.divergence_margin) {
      traj.diverged = true;
      if (next.size() == x.size()) traj.states.push_back(next);
      break;
    }
    x = next;
    traj.states.push_back(x);
    note_goal(k + 1, x);
  }
  traj.stabilized = traj.stabilized && traj.steps_to_goal.has_value() && !traj.diverged;
  return traj;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const std::size_t n = traj.states.empty() ? 0 : static_cast<std::size_t>(traj.states.front().size());
  const std::size_t m = traj.controls.empty() ? 0 : static_cast<std::size_t>(traj.controls.front().size());
  const auto old_precision = out.precision(9);
  out << "step";
  for (std::size_t i = 0; i < n; ++i) out << ",x" << i;
  for (std::size_t i = 0; i < m; ++i) out << ",u" << i;
  out << ",stage_cost,cumulative_cost\n";
  double cumulative = 0.0;
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    out << k;
    for (std::size_t i = 0; i < n; ++i) out << ',' << traj.states[k][static_cast<Eigen::Index>(i)];
    if (k < traj.controls.size()) {
      cumulative += traj.stage_costs[k];
      for (std::size_t i = 0; i < m; ++i) out << ',' << traj.controls[k][static_cast<Eigen::Index>(i)];
      out << ',' << traj.stage_costs[k] << ',' << cumulative;
    } else {
      for (std::size_t i = 0; i < m; ++i) out << ',';
      out << ",,";
    }
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace gravitree
