#include "gravitree/systems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gravitree {

SystemDef single_integrator(double step_dt, const SingleIntegratorOptions& opts) {
  if (!(step_dt > 0.0) || !(opts.state_limit > 0.0) || !(opts.control_limit > 0.0)) {
    throw InvalidParameter("single_integrator: step and limits must be positive");
  }
  SystemDef sys;
  sys.name = "single_integrator";
  sys.n = 2;
  sys.m = 2;
  sys.state_bounds = {Eigen::Vector2d::Constant(-opts.state_limit),
                      Eigen::Vector2d::Constant(opts.state_limit)};
  sys.control_bounds = {Eigen::Vector2d::Constant(-opts.control_limit),
                        Eigen::Vector2d::Constant(opts.control_limit)};
  sys.wrap_mask = {false, false};
  sys.terminal_state = Eigen::Vector2d::Zero();
  sys.vector_field = [](const State&, const Control& u) -> State { return u; };
  sys.stage_cost = [step_dt](const State&, const Control& u) { return u.norm() * step_dt; };
  return sys;
}

namespace {

SystemDef pendulum_shell(double control_limit, const PendulumOptions& opts) {
  if (!(control_limit > 0.0)) throw InvalidParameter("pendulum: control_limit must be positive");
  if (!(opts.velocity_limit > 0.0)) throw InvalidParameter("pendulum: velocity_limit must be positive");
  SystemDef sys;
  sys.n = 2;
  sys.m = 1;
  sys.state_bounds = {Eigen::Vector2d(-std::numbers::pi, -opts.velocity_limit),
                      Eigen::Vector2d(std::numbers::pi, opts.velocity_limit)};
  sys.control_bounds = {Eigen::VectorXd::Constant(1, -control_limit),
                        Eigen::VectorXd::Constant(1, control_limit)};
  sys.wrap_mask = {true, false};
  sys.terminal_state = Eigen::Vector2d::Zero();
  sys.stage_cost = [](const State& x, const Control& u) { return x.squaredNorm() + u.squaredNorm(); };
  return sys;
}

}  // namespace

SystemDef pendulum(double control_limit, const PendulumOptions& opts) {
  SystemDef sys = pendulum_shell(control_limit, opts);
  sys.name = "pendulum";
  sys.vector_field = [](const State& x, const Control& u) -> State {
    State dx(2);
    dx[0] = x[1];
    dx[1] = std::sin(x[0]) + u[0];
    return dx;
  };
  return sys;
}

SystemDef mlp_system(std::shared_ptr<const MlpModel> model, double control_limit,
                     const PendulumOptions& opts) {
  if (!model) throw InvalidParameter("mlp_system: null model");
  if (model->input_dim() != 3 || model->output_dim() != 2) {
    throw InvalidParameter("mlp_system: model must map 3 inputs to 2 outputs");
  }
  SystemDef sys = pendulum_shell(control_limit, opts);
  sys.name = "mlp";
  sys.vector_field = [model = std::move(model)](const State& x, const Control& u) -> State {
    Eigen::VectorXd input(3);
    input << x[0], x[1], u[0];
    return model->forward(input);
  };
  return sys;
}

SystemSpec SystemSpec::from_selector(const std::string& selector) {
  SystemSpec spec;
  if (selector == "single_integrator" || selector == "pendulum") {
    spec.kind = selector;
  } else if (selector.rfind("mlp:", 0) == 0 && selector.size() > 4) {
    spec.kind = "mlp";
    spec.model_path = selector.substr(4);
  } else {
    throw InvalidParameter("unknown system selector '" + selector +
                           "' (expected single_integrator, pendulum or mlp:<path>)");
  }
  return spec;
}

double SystemSpec::effective_control_limit() const {
  if (control_limit > 0.0) return control_limit;
  return kind == "single_integrator" ? 1.0 : 4.0;
}

nlohmann::json SystemSpec::to_json() const {
  nlohmann::json j{{"kind", kind}, {"control_limit", effective_control_limit()}};
  if (kind == "single_integrator") {
    j["state_limit"] = state_limit;
  } else {
    j["velocity_limit"] = velocity_limit;
  }
  if (kind == "mlp") j["model_path"] = model_path;
  return j;
}

SystemSpec SystemSpec::from_json(const nlohmann::json& j) {
  SystemSpec spec;
  spec.kind = j.at("kind").get<std::string>();
  spec.control_limit = j.value("control_limit", 0.0);
  spec.state_limit = j.value("state_limit", 5.0);
  spec.velocity_limit = j.value("velocity_limit", 4.0);
  spec.model_path = j.value("model_path", std::string{});
  return spec;
}

SystemDef make_system(const SystemSpec& spec, double step_dt) {
  const double limit = spec.effective_control_limit();
  if (spec.kind == "single_integrator") {
    return single_integrator(step_dt, {spec.state_limit, limit});
  }
  if (spec.kind == "pendulum") return pendulum(limit, {spec.velocity_limit});
  if (spec.kind == "mlp") {
    auto model = std::make_shared<const MlpModel>(load_mlp(spec.model_path));
    return mlp_system(std::move(model), limit, {spec.velocity_limit});
  }
  throw InvalidParameter("unknown system kind '" + spec.kind + "'");
}

IntegratorConfig default_integrator(const SystemSpec& spec) {
  if (spec.kind == "single_integrator") return IntegratorConfig::with_default_substeps(0.5);
  return IntegratorConfig::with_default_substeps(0.1);
}

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

bool inside_obstacle(const ObstacleSet& obs, const State& x) {
  for (const Box& box : obs.boxes) {
    if (box.dim() != x.size()) throw InvalidParameter("obstacle box dimension mismatch");
    if (box.contains(x)) return true;
  }
  if (!obs.walls.empty()) {
    if (x.size() < 2) throw InvalidParameter("wall obstacles need at least two state axes");
    const Eigen::Vector2d p(x[0], x[1]);
    for (const WallSegment& wall : obs.walls) {
      if (point_segment_distance(p, wall.a, wall.b) <= obs.wall_margin) return true;
    }
  }
  return false;
}

}  // namespace gravitree
