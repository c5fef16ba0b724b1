#include "gravitree/store.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace gravitree {

using nlohmann::json;

Store::Store(SystemSpec spec, IntegratorConfig integrator, StoreOptions options)
    : Store(spec, make_system(spec, integrator.step_dt), integrator, options) {}

Store::Store(SystemSpec spec, SystemDef system, IntegratorConfig integrator, StoreOptions options)
    : spec_(std::move(spec)),
      system_(std::make_unique<SystemDef>(std::move(system))),
      integrator_(integrator),
      options_(options) {
  integrator_.validate();
  system_->validate();
  if (!(options_.eps_connect > 0.0)) throw InvalidParameter("eps_connect must be positive");
  index_ = std::make_unique<NnIndex>(system_.get());
  init_root();
}

Store::Store(Store&&) noexcept = default;
Store& Store::operator=(Store&&) noexcept = default;
Store::~Store() = default;

void Store::init_root() {
  VertexRecord root;
  root.state = system_->terminal_state;
  wrap_state(*system_, root.state);
  root.cost_to_go = 0.0;
  vertices_.push_back(std::move(root));
  index_->insert(0, vertices_.front().state);
  root_ = 0;
}

std::optional<VertexId> Store::parent(VertexId v) const {
  const auto& te = vertices_.at(v).tree_edge;
  if (!te) return std::nullopt;
  return edges_[*te].to;
}

VertexId Store::add_vertex(const State& x) {
  if (x.size() != system_->n || !x.allFinite()) {
    throw InvalidParameter("add_vertex: state has wrong dimension or is not finite");
  }
  State s = x;
  wrap_state(*system_, s);
  if (!system_->state_bounds.contains(s)) throw OutOfBounds("add_vertex: state outside the state box");
  const auto id = static_cast<VertexId>(vertices_.size());
  VertexRecord rec;
  rec.state = std::move(s);
  vertices_.push_back(std::move(rec));
  index_->insert(id, vertices_.back().state);
  return id;
}

double Store::edge_residual(VertexId from, VertexId to, const Control& u) const {
  const State next = step_forward(*system_, integrator_, vertices_.at(from).state, u);
  return state_distance(*system_, next, vertices_.at(to).state);
}

std::optional<EdgeId> Store::add_edge(VertexId from, VertexId to, const Control& u) {
  if (from >= vertices_.size() || to >= vertices_.size()) throw InvalidParameter("add_edge: unknown vertex");
  if (from == to) throw InvalidParameter("add_edge: self edges are not allowed");
  if (u.size() != system_->m || !u.allFinite()) throw InvalidParameter("add_edge: bad control");
  if (!system_->control_bounds.contains(u)) throw InvalidParameter("add_edge: control outside U");
  const double residual = edge_residual(from, to, u);
  if (!(residual < options_.eps_connect)) {
    std::ostringstream msg;
    msg << "add_edge: infeasible edge " << from << " -> " << to << ", residual " << residual;
    throw InfeasibleEdge(msg.str(), residual);
  }
  for (EdgeId e : vertices_[from].out_edges) {
    const GraphEdge& ex = edges_[e];
    if (ex.to == to && (ex.control - u).norm() <= options_.dedup_tol) return std::nullopt;
  }
  const double cost = system_->stage_cost(vertices_[from].state, u);
  const auto id = static_cast<EdgeId>(edges_.size());
  edges_.push_back({from, to, u, cost, cost});
  vertices_[from].out_edges.push_back(id);
  vertices_[to].in_edges.push_back(id);
  return id;
}

std::vector<VertexId> Store::nearest(const State& x, std::size_t k) const {
  std::vector<VertexId> ids;
  for (const auto& hit : index_->nearest(x, k)) ids.push_back(hit.id);
  return ids;
}

std::vector<NnIndex::Hit> Store::nearest_hits(const State& x, std::size_t k) const {
  return index_->nearest(x, k);
}

std::vector<NnIndex::Hit> Store::within(const State& x, double radius) const {
  return index_->within(x, radius);
}

void Store::set_tree_edge(VertexId v, EdgeId e) {
  const GraphEdge& edge = edges_.at(e);
  if (edge.from != v) throw InvalidParameter("set_tree_edge: edge does not start at the vertex");
  VertexRecord& rec = vertices_.at(v);
  rec.tree_edge = e;
  rec.cost_to_go = edge.cost + vertices_[edge.to].cost_to_go;
}

void Store::reset_tree() {
  for (VertexRecord& rec : vertices_) {
    rec.tree_edge.reset();
    rec.cost_to_go = kInfinity;
  }
  vertices_.at(root_).cost_to_go = 0.0;
}

void Store::set_root(VertexId v) {
  if (v >= vertices_.size()) throw InvalidParameter("set_root: unknown vertex");
  root_ = v;
}

std::vector<std::string> check_invariants(const Store& store, bool check_feasibility) {
  std::vector<std::string> problems;
  auto report = [&](const std::string& s) { problems.push_back(s); };
  const auto& vs = store.vertices();
  const auto& es = store.edges();

  const VertexRecord& root = vs.at(store.root());
  if (root.cost_to_go != 0.0) report("root cost-to-go is not 0");
  if (root.tree_edge) report("root has a tree edge");

  for (VertexId v = 0; v < vs.size(); ++v) {
    const VertexRecord& rec = vs[v];
    if (v == store.root()) continue;
    if (std::isfinite(rec.cost_to_go)) {
      if (!rec.tree_edge) {
        report("vertex " + std::to_string(v) + " has finite J but no tree edge");
        continue;
      }
      const GraphEdge& e = es.at(*rec.tree_edge);
      if (e.from != v) report("vertex " + std::to_string(v) + " tree edge does not start at it");
      if (rec.cost_to_go != e.cost + vs[e.to].cost_to_go) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "vertex " << v << " J=" << rec.cost_to_go << " != c + J(parent)="
            << e.cost + vs[e.to].cost_to_go;
        report(msg.str());
      }
      bool member = false;
      for (EdgeId oe : rec.out_edges) member = member || oe == *rec.tree_edge;
      if (!member) report("vertex " + std::to_string(v) + " tree edge not among its out-edges");
    }
  }

  // Acyclicity: walk to the root, marking vertices known to terminate.
  std::vector<char> state(vs.size(), 0);  // 0 unknown, 1 on current walk, 2 reaches root
  state[store.root()] = 2;
  for (VertexId start = 0; start < vs.size(); ++start) {
    if (state[start] != 0 || !std::isfinite(vs[start].cost_to_go)) continue;
    std::vector<VertexId> walk;
    VertexId cur = start;
    bool ok = true;
    while (state[cur] == 0) {
      state[cur] = 1;
      walk.push_back(cur);
      const auto p = store.parent(cur);
      if (!p) {
        ok = false;
        break;
      }
      cur = *p;
    }
    if (ok && state[cur] == 1) {
      report("tree cycle through vertex " + std::to_string(cur));
      ok = false;
    }
    for (VertexId w : walk) state[w] = ok ? 2 : 3;
  }

  for (EdgeId e = 0; e < es.size(); ++e) {
    const GraphEdge& edge = es[e];
    if (!(edge.cost >= 0.0) || !(edge.base_cost >= 0.0)) report("edge " + std::to_string(e) + " negative cost");
    if (check_feasibility) {
      const double r = store.edge_residual(edge.from, edge.to, edge.control);
      if (!(r < store.options().eps_connect)) {
        report("edge " + std::to_string(e) + " infeasible, residual " + std::to_string(r));
      }
    }
  }
  return problems;
}

// ---------------------------------------------------------------------------

namespace {

json encode_cost(double c) {
  if (std::isinf(c)) return "inf";
  return c;
}

double decode_cost(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return kInfinity;
    throw CorruptFile("store: unexpected cost token " + j.get<std::string>());
  }
  return j.get<double>();
}

json encode_vector(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd decode_vector(const json& j, Eigen::Index expected) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != expected) {
    throw CorruptFile("store: vector has wrong length");
  }
  Eigen::VectorXd v(expected);
  for (Eigen::Index i = 0; i < expected; ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace

StoreOptions default_store_options(const SystemSpec& spec) {
  StoreOptions opts;
  if (spec.kind != "single_integrator") opts.eps_connect = 0.02;
  return opts;
}

std::string serialize(const Store& store) {
  json doc;
  doc["format_version"] = kStoreFormatVersion;
  doc["system"] = store.spec().to_json();
  doc["system_name"] = store.system().name;
  doc["integrator"] = {{"step_dt", store.integrator().step_dt}, {"sub_dt", store.integrator().sub_dt}};
  doc["eps_connect"] = store.options().eps_connect;
  doc["dedup_tol"] = store.options().dedup_tol;
  doc["root"] = store.root();

  json vertices = json::array();
  for (const VertexRecord& v : store.vertices()) {
    vertices.push_back(json::array({encode_vector(v.state), encode_cost(v.cost_to_go),
                                    v.tree_edge ? static_cast<std::int64_t>(*v.tree_edge) : -1}));
  }
  doc["vertices"] = std::move(vertices);

  json edges = json::array();
  for (const GraphEdge& e : store.edges()) {
    edges.push_back(json::array({e.from, e.to, encode_vector(e.control), encode_cost(e.cost),
                                 encode_cost(e.base_cost)}));
  }
  doc["edges"] = std::move(edges);
  return doc.dump() + "\n";
}

void save_store(const Store& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileMissing("store: cannot write " + path.string());
  out << serialize(store);
  if (!out) throw Error("store: write failed for " + path.string());
}

Store deserialize(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CorruptFile(std::string("store: unreadable file: ") + e.what());
  }
  try {
    const std::string version = doc.at("format_version").get<std::string>();
    if (version.substr(0, version.find('.')) != "1") {
      throw VersionMismatch("store: unsupported format_version " + version);
    }
    const SystemSpec spec = SystemSpec::from_json(doc.at("system"));
    IntegratorConfig integrator{doc.at("integrator").at("step_dt").get<double>(),
                                doc.at("integrator").at("sub_dt").get<double>()};
    StoreOptions options{doc.at("eps_connect").get<double>(), doc.at("dedup_tol").get<double>()};
    Store store(spec, integrator, options);
    const int n = store.system().n;
    const int m = store.system().m;

    const json& jv = doc.at("vertices");
    const json& je = doc.at("edges");
    if (!jv.is_array() || jv.empty() || !je.is_array()) throw CorruptFile("store: missing vertex/edge arrays");

    std::vector<VertexRecord>& vs = store.vertices_;
    std::vector<GraphEdge>& es = store.edges_;
    for (std::size_t i = 1; i < jv.size(); ++i) {
      store.add_vertex(decode_vector(jv[i].at(0), n));
    }
    for (std::size_t i = 0; i < jv.size(); ++i) {
      vs[i].cost_to_go = decode_cost(jv[i].at(1));
      const auto te = jv[i].at(2).get<std::int64_t>();
      if (te >= 0) {
        if (static_cast<std::size_t>(te) >= je.size()) throw CorruptFile("store: tree edge out of range");
        vs[i].tree_edge = static_cast<EdgeId>(te);
      }
    }
    es.reserve(je.size());
    for (const json& e : je) {
      const auto from = e.at(0).get<VertexId>();
      const auto to = e.at(1).get<VertexId>();
      if (from >= vs.size() || to >= vs.size()) throw CorruptFile("store: edge endpoint out of range");
      const auto id = static_cast<EdgeId>(es.size());
      es.push_back({from, to, decode_vector(e.at(2), m), decode_cost(e.at(3)), decode_cost(e.at(4))});
      vs[from].out_edges.push_back(id);
      vs[to].in_edges.push_back(id);
    }
    store.set_root(doc.at("root").get<VertexId>());
    return store;
  } catch (const json::exception& e) {
    throw CorruptFile(std::string("store: malformed content: ") + e.what());
  } catch (const OutOfBounds& e) {
    throw CorruptFile(std::string("store: ") + e.what());
  }
}

Store load_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileMissing("store: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace gravitree
