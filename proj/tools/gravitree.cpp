// Command-line front end: build, modify, export-values, simulate, inspect.
//
// Exit codes: 0 ok, 1 other error, 2 invalid configuration, 3 missing file,
// 4 unreadable or incompatible file, 5 simulation failure.

#include "gravitree/builder.hpp"
#include "gravitree/controller.hpp"
#include "gravitree/rewire.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace gravitree;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kOther = 1, kInvalid = 2, kMissing = 3, kUnreadable = 4, kSimFailed = 5 };

/// Rounds to 9 significant digits so reports diff cleanly.
json num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::stod(buf);
}

json num_vector(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(num(v[i]));
  return out;
}

/// FNV-1a over the canonical JSON text of a config.
std::string config_hash(const json& cfg) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : cfg.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void emit_report(json report, const std::string& path) {
  const std::string text = report.dump(2) + "\n";
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw FileMissing("cannot write " + path);
  out << text;
}

json value_stats(const Store& store) {
  std::vector<double> finite;
  for (const auto& rec : store.vertices())
    if (std::isfinite(rec.cost_to_go)) finite.push_back(rec.cost_to_go);
  std::sort(finite.begin(), finite.end());
  json j;
  j["reachable"] = finite.size();
  j["unreachable"] = store.vertex_count() - finite.size();
  if (!finite.empty()) {
    j["min"] = num(finite.front());
    j["median"] = num(finite[finite.size() / 2]);
    j["max"] = num(finite.back());
    j["mean"] = num(std::accumulate(finite.begin(), finite.end(), 0.0) / static_cast<double>(finite.size()));
  }
  return j;
}

State parse_vector(const std::vector<double>& values, int dim, const std::string& what) {
  if (static_cast<int>(values.size()) != dim) {
    throw InvalidParameter(what + ": expected " + std::to_string(dim) + " components, got " +
                            std::to_string(values.size()));
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), dim);
}

// ---------------------------------------------------------------------------

struct BuildArgs {
  std::string system = "single_integrator";
  double control_limit = 0.0;
  double step_dt = 0.0;
  double sub_dt = 0.0;
  double eps_connect = 0.0;
  std::size_t max_vertices = 0;
  double max_seconds = 0.0;
  std::uint64_t seed = 1;
  int controls_per_expand = 8;
  int k_parents = 10;
  int k_children = 10;
  int probes_per_axis = 0;
  double goal_bias = 0.0;
  double goal_bias_radius = 0.5;
  std::string out = "store.json";
  std::string report;
};

int cmd_build(const BuildArgs& a) {
  SystemSpec spec = SystemSpec::from_selector(a.system);
  spec.control_limit = a.control_limit;
  IntegratorConfig integrator = default_integrator(spec);
  if (a.step_dt > 0.0) integrator = IntegratorConfig::with_default_substeps(a.step_dt);
  if (a.sub_dt > 0.0) integrator.sub_dt = a.sub_dt;
  StoreOptions options = default_store_options(spec);
  if (a.eps_connect > 0.0) options.eps_connect = a.eps_connect;

  BuildConfig cfg;
  if (a.max_seconds > 0.0 && a.max_vertices > 0) throw InvalidParameter("give only one of --max-vertices, --max-seconds");
  if (a.max_seconds > 0.0) cfg.stop = MaxSeconds{a.max_seconds};
  else cfg.stop = MaxVertices{a.max_vertices > 0 ? a.max_vertices : 500};
  cfg.rng_seed = a.seed;
  cfg.controls_per_expand = a.controls_per_expand;
  cfg.k_parents = a.k_parents;
  cfg.k_children = a.k_children;
  cfg.probes_per_axis = a.probes_per_axis;
  cfg.goal_bias = a.goal_bias;
  cfg.goal_bias_radius = a.goal_bias_radius;

  Store store(spec, integrator, options);
  const BuildReport rep = build(store, cfg);
  save_store(store, a.out);

  json config = {{"system", spec.to_json()},
                 {"integrator", {{"step_dt", integrator.step_dt}, {"sub_dt", integrator.sub_dt}}},
                 {"eps_connect", options.eps_connect},
                 {"stop", a.max_seconds > 0.0 ? json{{"max_seconds", a.max_seconds}}
                                               : json{{"max_vertices", std::get<MaxVertices>(cfg.stop).count}}},
                 {"controls_per_expand", cfg.controls_per_expand},
                 {"k_parents", cfg.k_parents},
                 {"k_children", cfg.k_children},
                 {"probes_per_axis", cfg.probes_per_axis},
                 {"goal_bias", cfg.goal_bias},
                 {"goal_bias_radius", cfg.goal_bias_radius},
                 {"seed", cfg.rng_seed}};
  json report = {{"command", "build"},
                 {"seed", a.seed},
                 {"config_hash", config_hash(config)},
                 {"config", config},
                 {"store", a.out},
                 {"vertices", store.vertex_count()},
                 {"edges", store.edge_count()},
                 {"iterations", rep.iterations},
                 {"skipped", rep.skipped},
                 {"rewires", rep.rewires},
                 {"stalled", rep.stalled},
                 {"elapsed_seconds", num(rep.elapsed_seconds)},
                 {"cost_to_go", value_stats(store)}};
  emit_report(report, a.report);
  return kOk;
}

struct ModifyArgs {
  std::string store;
  std::string constraints;
  std::string out;
  std::string report;
};

int cmd_modify(const ModifyArgs& a) {
  Store store = load_store(a.store);
  const ConstraintSet cs = load_constraints(a.constraints);
  const ModificationReport rep = modify(store, cs);
  const std::string out = a.out.empty() ? a.store : a.out;
  save_store(store, out);
  std::ifstream in(a.constraints);
  const json cfg = {{"constraints", json::parse(in)}};
  json report = {{"command", "modify"},
                 {"config_hash", config_hash(cfg)},
                 {"store", out},
                 {"edges_infinite", rep.edges_infinite},
                 {"unreachable", rep.unreachable},
                 {"sweeps", rep.sweeps},
                 {"elapsed_seconds", num(rep.elapsed_seconds)},
                 {"cost_to_go", value_stats(store)}};
  emit_report(report, a.report);
  return kOk;
}

struct ExportArgs {
  std::string store;
  std::string out;
  bool include_infinite = false;
  bool replicate_wrap = false;
};

int cmd_export(const ExportArgs& a) {
  const Store store = load_store(a.store);
  const SystemDef& sys = store.system();
  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw FileMissing("cannot write " + a.out);
  }
  std::ostream& out = a.out.empty() ? std::cout : file;
  out.precision(9);
  out << "id";
  for (int i = 0; i < sys.n; ++i) out << ",x" << i;
  out << ",J";
  if (a.include_infinite) out << ",reachable";
  out << '\n';

  auto row = [&](VertexId v, int axis, double shift) {
    const VertexRecord& rec = store.vertex(v);
    const bool finite = std::isfinite(rec.cost_to_go);
    out << v;
    for (int i = 0; i < sys.n; ++i) out << ',' << rec.state[i] + (i == axis ? shift : 0.0);
    out << ',';
    if (finite) out << rec.cost_to_go;
    else out << "inf";
    if (a.include_infinite) out << ',' << (finite ? 1 : 0);
    out << '\n';
  };
  for (VertexId v = 0; v < store.vertex_count(); ++v) {
    if (!std::isfinite(store.cost_to_go(v)) && !a.include_infinite) continue;
    row(v, -1, 0.0);
    if (!a.replicate_wrap) continue;
    for (int axis = 0; axis < sys.n; ++axis) {
      if (!sys.wrap_mask[static_cast<std::size_t>(axis)]) continue;
      row(v, axis, -2.0 * M_PI);
      row(v, axis, 2.0 * M_PI);
    }
  }
  return kOk;
}

struct SimulateArgs {
  std::string store;
  std::string exec_system;
  std::vector<double> x0;
  std::size_t horizon = 600;
  double goal_tol = 0.05;
  double divergence_margin = 1.0;
  double gamma = 0.0;
  std::string fallback = "nearest";
  std::string out;
  std::string summary;
};

int cmd_simulate(const SimulateArgs& a) {
  const Store store = load_store(a.store);
  SystemSpec exec_spec = store.spec();
  if (!a.exec_system.empty()) {
    exec_spec = SystemSpec::from_selector(a.exec_system);
    exec_spec.control_limit = store.spec().effective_control_limit();
  }
  const SystemDef exec = make_system(exec_spec, store.integrator().step_dt);
  if (exec.n != store.system().n || exec.m != store.system().m) {
    throw DimensionMismatch("executing system dimensions differ from the store's");
  }
  const State x0 = a.x0.empty() ? exec.terminal_state : parse_vector(a.x0, exec.n, "--x0");

  InterpConfig icfg;
  icfg.gamma = a.gamma;
  if (a.fallback == "reject") icfg.fallback = Fallback::Reject;
  else if (a.fallback != "nearest") throw InvalidParameter("--fallback must be nearest or reject");
  SimulationConfig sim;
  sim.horizon = a.horizon;
  sim.goal_tol = a.goal_tol;
  sim.divergence_margin = a.divergence_margin;

  const Trajectory t = simulate(store, exec, icfg, ControlSearchConfig{}, x0, sim);
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    if (!out) throw FileMissing("cannot write " + a.out);
    write_trajectory_csv(out, t);
  }

  double mean = 0.0, sd = 0.0;
  if (!t.control_seconds.empty()) {
    const double n = static_cast<double>(t.control_seconds.size());
    mean = std::accumulate(t.control_seconds.begin(), t.control_seconds.end(), 0.0) / n;
    for (double s : t.control_seconds) sd += (s - mean) * (s - mean);
    sd = std::sqrt(sd / n);
  }
  const json cfg = {{"store", a.store},
                    {"plan_system", store.spec().to_json()},
                    {"exec_system", exec_spec.to_json()},
                    {"x0", num_vector(x0)},
                    {"horizon", a.horizon},
                    {"goal_tol", a.goal_tol},
                    {"gamma", a.gamma},
                    {"fallback", a.fallback}};
  json summary = {{"command", "simulate"},
                  {"config_hash", config_hash(cfg)},
                  {"config", cfg},
                  {"steps", t.controls.size()},
                  {"total_cost", num(t.total_cost)},
                  {"steps_to_goal", t.steps_to_goal ? json(*t.steps_to_goal) : json(nullptr)},
                  {"stabilized", t.stabilized},
                  {"diverged", t.diverged},
                  {"final_state", num_vector(t.states.back())},
                  {"control_seconds_mean", num(mean)},
                  {"control_seconds_std", num(sd)}};
  emit_report(summary, a.summary);
  return t.diverged ? kSimFailed : kOk;
}

int cmd_inspect(const std::string& path) {
  const Store store = load_store(path);
  const auto problems = check_invariants(store);
  std::size_t tree_edges = 0, infinite_edges = 0;
  for (const auto& rec : store.vertices()) tree_edges += rec.tree_edge.has_value();
  for (const auto& e : store.edges()) infinite_edges += std::isinf(e.cost);
  json report = {{"command", "inspect"},
                 {"store", path},
                 {"system", store.spec().to_json()},
                 {"integrator", {{"step_dt", num(store.integrator().step_dt)}, {"sub_dt", num(store.integrator().sub_dt)}}},
                 {"eps_connect", num(store.options().eps_connect)},
                 {"root", store.root()},
                 {"vertices", store.vertex_count()},
                 {"edges", store.edge_count()},
                 {"tree_edges", tree_edges},
                 {"infinite_edges", infinite_edges},
                 {"cost_to_go", value_stats(store)},
                 {"invariant_violations", problems}};
  emit_report(report, "");
  return problems.empty() ? kOk : kUnreadable;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sampling-based value trees for feedback control"};
  app.set_config("--config", "", "TOML/INI file with option defaults; command-line flags take precedence");
  app.require_subcommand(1);

  BuildArgs b;
  auto* build_cmd = app.add_subcommand("build", "Grow a value tree and write the store file");
  build_cmd->add_option("--system", b.system, "single_integrator | pendulum | mlp:<weights.json>")->capture_default_str();
  build_cmd->add_option("--control-limit", b.control_limit, "Symmetric control bound; 0 keeps the system default");
  build_cmd->add_option("--step-dt", b.step_dt, "Macro step; 0 keeps the system default");
  build_cmd->add_option("--sub-dt", b.sub_dt, "Euler substep; 0 uses step-dt / 10");
  build_cmd->add_option("--eps-connect", b.eps_connect, "Edge feasibility tolerance; 0 keeps the system default");
  auto* mv = build_cmd->add_option("--max-vertices", b.max_vertices, "Stop at this many vertices (default 500)");
  build_cmd->add_option("--max-seconds", b.max_seconds, "Stop after this much wall time")->excludes(mv);
  build_cmd->add_option("--seed", b.seed, "Random seed")->capture_default_str();
  build_cmd->add_option("--controls-per-expand", b.controls_per_expand)->capture_default_str();
  build_cmd->add_option("--k-parents", b.k_parents)->capture_default_str();
  build_cmd->add_option("--k-children", b.k_children)->capture_default_str();
  build_cmd->add_option("--probes-per-axis", b.probes_per_axis, "0 picks by control dimension")->capture_default_str();
  build_cmd->add_option("--goal-bias", b.goal_bias, "Share of samples drawn near the goal")->capture_default_str();
  build_cmd->add_option("--goal-bias-radius", b.goal_bias_radius)->capture_default_str();
  build_cmd->add_option("--out", b.out, "Store file to write")->capture_default_str();
  build_cmd->add_option("--report", b.report, "Write the JSON report here instead of stdout");

  ModifyArgs m;
  auto* modify_cmd = app.add_subcommand("modify", "Apply a constraint file and rebuild the tree");
  modify_cmd->add_option("--store", m.store)->required();
  modify_cmd->add_option("--constraints", m.constraints)->required();
  modify_cmd->add_option("--out", m.out, "Defaults to rewriting --store");
  modify_cmd->add_option("--report", m.report);

  ExportArgs e;
  auto* export_cmd = app.add_subcommand("export-values", "CSV of vertex states and cost-to-go");
  export_cmd->add_option("--store", e.store)->required();
  export_cmd->add_option("--out", e.out, "Defaults to stdout");
  export_cmd->add_flag("--include-infinite", e.include_infinite, "Also emit unreachable vertices");
  export_cmd->add_flag("--replicate-wrap", e.replicate_wrap, "Add copies shifted by +-2pi on wrapped axes");

  SimulateArgs s;
  auto* sim_cmd = app.add_subcommand("simulate", "Closed-loop run driven by a stored value tree");
  sim_cmd->add_option("--store", s.store)->required();
  sim_cmd->add_option("--exec-system", s.exec_system, "System that executes the controls; defaults to the store's");
  sim_cmd->add_option("--x0", s.x0, "Initial state components")->delimiter(',');
  sim_cmd->add_option("--horizon", s.horizon)->capture_default_str();
  sim_cmd->add_option("--goal-tol", s.goal_tol)->capture_default_str();
  sim_cmd->add_option("--divergence-margin", s.divergence_margin)->capture_default_str();
  sim_cmd->add_option("--gamma", s.gamma, "Kernel sharpness; 0 derives it from vertex spacing")->capture_default_str();
  sim_cmd->add_option("--fallback", s.fallback, "nearest | reject")->capture_default_str();
  sim_cmd->add_option("--out", s.out, "Trajectory CSV");
  sim_cmd->add_option("--summary", s.summary, "Write the JSON summary here instead of stdout");

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print store statistics and invariant checks");
  inspect_cmd->add_option("store", inspect_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::FileError& err) {
    std::cerr << err.what() << '\n';
    return kMissing;
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*build_cmd) return cmd_build(b);
    if (*modify_cmd) return cmd_modify(m);
    if (*export_cmd) return cmd_export(e);
    if (*sim_cmd) return cmd_simulate(s);
    if (*inspect_cmd) return cmd_inspect(inspect_path);
  } catch (const FileMissing& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kMissing;
  } catch (const SchemaViolation& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUnreadable;
  } catch (const CorruptFile& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUnreadable;
  } catch (const VersionMismatch& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUnreadable;
  } catch (const InvalidParameter& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kInvalid;
  } catch (const ControllerStarved& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kSimFailed;
  } catch (const IntegrationDiverged& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kSimFailed;
  } catch (const json::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUnreadable;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kOther;
  }
  return kOther;
}
