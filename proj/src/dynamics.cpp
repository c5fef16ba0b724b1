#include "gravitree/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace gravitree {

bool Box::contains(const Eigen::VectorXd& x) const {
  if (x.size() != lo.size()) return false;
  return ((x.array() >= lo.array()) && (x.array() <= hi.array())).all();
}

Eigen::VectorXd Box::clamp(const Eigen::VectorXd& x) const {
  return x.cwiseMax(lo).cwiseMin(hi);
}

bool Box::contains_box(const Box& other) const {
  return other.dim() == dim() && (other.lo.array() >= lo.array()).all() &&
         (other.hi.array() <= hi.array()).all();
}

void IntegratorConfig::validate() const {
  if (!(sub_dt > 0.0) || !(sub_dt <= step_dt) || !std::isfinite(step_dt)) {
    throw InvalidParameter("integrator config requires 0 < sub_dt <= step_dt");
  }
}

int IntegratorConfig::substeps() const {
  return std::max(1, static_cast<int>(std::lround(step_dt / sub_dt)));
}

void SystemDef::validate(int cost_probes) const {
  if (n <= 0 || m <= 0) throw InvalidParameter(name + ": dimensions must be positive");
  if (state_bounds.dim() != n || control_bounds.dim() != m ||
      wrap_mask.size() != static_cast<std::size_t>(n) || terminal_state.size() != n) {
    throw InvalidParameter(name + ": bounds/wrap mask/terminal state dimension mismatch");
  }
  if ((state_bounds.lo.array() > state_bounds.hi.array()).any() ||
      (control_bounds.lo.array() > control_bounds.hi.array()).any()) {
    throw InvalidParameter(name + ": empty bound box");
  }
  if (!state_bounds.contains(terminal_state)) {
    throw InvalidParameter(name + ": terminal state outside state bounds");
  }
  if (!vector_field || !stage_cost) throw InvalidParameter(name + ": missing dynamics or cost");

  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  State x(n);
  Control u(m);
  for (int probe = 0; probe < cost_probes; ++probe) {
    for (int i = 0; i < n; ++i) {
      x[i] = state_bounds.lo[i] + unit(rng) * (state_bounds.hi[i] - state_bounds.lo[i]);
    }
    for (int i = 0; i < m; ++i) {
      u[i] = control_bounds.lo[i] + unit(rng) * (control_bounds.hi[i] - control_bounds.lo[i]);
    }
    const double g = stage_cost(x, u);
    if (!(g >= 0.0)) {
      std::ostringstream msg;
      msg << name << ": stage cost negative or NaN (" << g << ") on the bounded domain";
      throw InvalidParameter(msg.str());
    }
  }
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = a - two_pi * std::floor((a + std::numbers::pi) / two_pi);
  // floor can land exactly on +pi through rounding
  if (w >= std::numbers::pi) w -= two_pi;
  if (w < -std::numbers::pi) w = -std::numbers::pi;
  return w;
}

void wrap_state(const SystemDef& sys, State& x) {
  for (int i = 0; i < sys.n; ++i) {
    if (sys.is_wrapped(i)) x[i] = wrap_angle(x[i]);
  }
}

Eigen::VectorXd state_difference(const SystemDef& sys, const State& a, const State& b) {
  Eigen::VectorXd d = b - a;
  for (int i = 0; i < sys.n; ++i) {
    if (sys.is_wrapped(i)) d[i] = std::remainder(d[i], 2.0 * std::numbers::pi);
  }
  return d;
}

double state_distance(const SystemDef& sys, const State& a, const State& b) {
  return state_difference(sys, a, b).norm();
}

namespace {

State integrate(const SystemDef& sys, const IntegratorConfig& cfg, const State& x0,
                const Control& u, double sign, std::vector<State>* path) {
  if (x0.size() != sys.n || u.size() != sys.m) {
    throw InvalidParameter(sys.name + ": state/control dimension mismatch");
  }
  const int steps = cfg.substeps();
  const double h = sign * cfg.step_dt / steps;
  State x = x0;
  if (path) path->push_back(x);
  for (int k = 0; k < steps; ++k) {
    x += h * sys.vector_field(x, u);
    if (!x.allFinite()) throw IntegrationDiverged(sys.name + ": non-finite state during integration");
    if (path) path->push_back(x);
  }
  wrap_state(sys, x);
  if (path) {
    for (State& p : *path) wrap_state(sys, p);
  }
  return x;
}

}  // namespace

State step_forward(const SystemDef& sys, const IntegratorConfig& cfg, const State& x,
                   const Control& u) {
  return integrate(sys, cfg, x, u, 1.0, nullptr);
}

State step_backward(const SystemDef& sys, const IntegratorConfig& cfg, const State& x,
                    const Control& u) {
  return integrate(sys, cfg, x, u, -1.0, nullptr);
}

std::optional<State> invert_step(const SystemDef& sys, const IntegratorConfig& cfg, const State& guess,
                                 const State& target, const Control& u, double tol, int max_iters) {
  State x = guess;
  for (int it = 0; it < max_iters; ++it) {
    State reached;
    try {
      reached = step_forward(sys, cfg, x, u);
    } catch (const IntegrationDiverged&) {
      return std::nullopt;
    }
    const Eigen::VectorXd miss = state_difference(sys, target, reached);
    if (miss.norm() < tol) return x;
    x -= miss;
    wrap_state(sys, x);
  }
  return std::nullopt;
}

std::vector<State> step_path(const SystemDef& sys, const IntegratorConfig& cfg, const State& x,
                             const Control& u, int direction) {
  std::vector<State> path;
  path.reserve(static_cast<std::size_t>(cfg.substeps()) + 1);
  integrate(sys, cfg, x, u, direction >= 0 ? 1.0 : -1.0, &path);
  return path;
}

}  // namespace gravitree
