#include "gravitree/builder.hpp"
#include "gravitree/store.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace gravitree;

namespace {

State v2(double a, double b) {
  State x(2);
  x << a, b;
  return x;
}

Control v1(double a) {
  Control u(1);
  u << a;
  return u;
}

Store si_store(double dt = 0.1) {
  return Store(SystemSpec{}, single_integrator(dt), IntegratorConfig{dt, dt / 10});
}

SystemSpec pendulum_spec() {
  SystemSpec s;
  s.kind = "pendulum";
  s.control_limit = 4.0;
  return s;
}

}  // namespace

TEST_CASE("fresh stores hold only the root") {
  Store p(pendulum_spec(), default_integrator(pendulum_spec()));
  CHECK(p.vertex_count() == 1);
  CHECK(p.vertex(0).state.norm() == 0.0);
  CHECK(p.cost_to_go(0) == 0.0);
  CHECK(p.root() == 0);

  Store s = si_store();
  CHECK(s.vertex(0).state.norm() == 0.0);
  CHECK(s.nearest(v2(0, 0), 1) == std::vector<VertexId>{0});
  CHECK(s.nearest(v2(3, 3), 1) == std::vector<VertexId>{0});
  CHECK(check_invariants(s).empty());
}

TEST_CASE("add_vertex") {
  Store s = si_store();
  const VertexId v = s.add_vertex(v2(1, 1));
  CHECK(v == 1);
  CHECK(std::isinf(s.cost_to_go(v)));
  CHECK(s.nearest(v2(0.9, 0.9), 1) == std::vector<VertexId>{1});
  CHECK_THROWS_AS(s.add_vertex(v2(6, 0)), OutOfBounds);
  CHECK_THROWS_AS(s.add_vertex(v2(0, -5.5)), OutOfBounds);
  CHECK_THROWS_AS(s.add_vertex(State::Zero(3)), InvalidParameter);
  CHECK(s.vertex_count() == 2);
}

TEST_CASE("pendulum vertices are wrapped on entry") {
  Store p(pendulum_spec(), default_integrator(pendulum_spec()));
  const VertexId v = p.add_vertex(v2(M_PI + 0.25, 0.0));
  CHECK(p.vertex(v).state[0] == doctest::Approx(-M_PI + 0.25));
}

TEST_CASE("add_edge checks feasibility") {
  Store s = si_store();
  const VertexId a = s.add_vertex(v2(1, 0));
  const VertexId b = s.add_vertex(v2(0.9, 0));
  const auto e = s.add_edge(a, b, v2(-1, 0));
  REQUIRE(e.has_value());
  CHECK(s.edge(*e).cost == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(s.edge(*e).base_cost == s.edge(*e).cost);
  CHECK(s.vertex(a).out_edges == std::vector<EdgeId>{*e});
  CHECK(s.vertex(b).in_edges == std::vector<EdgeId>{*e});

  try {
    s.add_edge(a, b, v2(1, 0));
    FAIL("expected InfeasibleEdge");
  } catch (const InfeasibleEdge& err) {
    CHECK(err.residual() == doctest::Approx(0.2).epsilon(1e-12));
  }
  CHECK(s.edge_count() == 1);
}

TEST_CASE("duplicate and self edges") {
  Store s = si_store();
  const VertexId a = s.add_vertex(v2(1, 0));
  const VertexId b = s.add_vertex(v2(0.9, 0));
  REQUIRE(s.add_edge(a, b, v2(-1, 0)).has_value());
  CHECK_FALSE(s.add_edge(a, b, v2(-1 + 1e-8, 0)).has_value());
  CHECK(s.edge_count() == 1);
  CHECK_THROWS_AS(s.add_edge(a, a, v2(0, 0)), InvalidParameter);
  CHECK_THROWS_AS(s.add_edge(a, 7, v2(0, 0)), InvalidParameter);
  CHECK_THROWS_AS(s.add_edge(a, b, v2(-3, 0)), InvalidParameter);
}

TEST_CASE("pendulum edge reconnecting a backward step is accepted") {
  Store p(pendulum_spec(), IntegratorConfig{0.1, 0.01}, default_store_options(pendulum_spec()));
  const State target = v2(0.3, -0.5);
  const Control u = v1(1.2);
  const State pred = step_backward(p.system(), p.integrator(), target, u);
  const double round_trip = (step_forward(p.system(), p.integrator(), pred, u) - target).norm();
  const VertexId a = p.add_vertex(pred);
  const VertexId b = p.add_vertex(target);
  REQUIRE(p.add_edge(a, b, u).has_value());
  CHECK(p.edge_residual(a, b, u) == doctest::Approx(round_trip));
  CHECK(round_trip < p.options().eps_connect);
}

TEST_CASE("per-kind store defaults") {
  CHECK(default_store_options(SystemSpec{}).eps_connect == 1e-3);
  CHECK(default_store_options(pendulum_spec()).eps_connect == 0.02);
  CHECK(default_store_options(SystemSpec{}).dedup_tol == 1e-6);
}

TEST_CASE("nearest matches a linear scan") {
  for (const bool wrapped : {false, true}) {
    Store s = wrapped ? Store(pendulum_spec(), default_integrator(pendulum_spec())) : si_store();
    std::mt19937_64 rng(wrapped ? 11 : 12);
    const Box& box = s.system().state_bounds;
    std::vector<State> pts{s.vertex(0).state};
    for (int i = 0; i < 600; ++i) {
      State x(2);
      for (int d = 0; d < 2; ++d) x[d] = std::uniform_real_distribution<double>(box.lo[d], box.hi[d])(rng);
      const VertexId v = s.add_vertex(x);
      pts.push_back(s.vertex(v).state);
    }
    for (int q = 0; q < 200; ++q) {
      State x(2);
      for (int d = 0; d < 2; ++d) x[d] = std::uniform_real_distribution<double>(box.lo[d], box.hi[d])(rng);
      for (std::size_t k : {1u, 7u}) {
        CHECK(s.nearest(x, k) == oracle::linear_nearest(s.system(), pts, x, k));
      }
      const double r = 0.6;
      std::vector<VertexId> expect;
      for (VertexId i = 0; i < pts.size(); ++i)
        if (oracle::wrapped_distance(s.system(), pts[i], x) < r) expect.push_back(i);
      std::vector<VertexId> got;
      for (const auto& h : s.within(x, r)) got.push_back(h.id);
      CHECK(got == expect);
    }
    CHECK(s.nearest(pts[0], 1000).size() == pts.size());
  }
}

TEST_CASE("set_tree_edge keeps J exact") {
  Store s = si_store();
  const VertexId a = s.add_vertex(v2(0.1, 0));
  const VertexId b = s.add_vertex(v2(0.2, 0));
  const EdgeId e0 = *s.add_edge(a, 0, v2(-1, 0));
  const EdgeId e1 = *s.add_edge(b, a, v2(-1, 0));
  s.set_tree_edge(a, e0);
  s.set_tree_edge(b, e1);
  CHECK(s.cost_to_go(b) == s.edge(e1).cost + s.cost_to_go(a));
  CHECK(s.parent(b) == a);
  CHECK(check_invariants(s).empty());
  CHECK_THROWS_AS(s.set_tree_edge(a, e1), InvalidParameter);
  s.reset_tree();
  CHECK(std::isinf(s.cost_to_go(a)));
  CHECK(s.cost_to_go(0) == 0.0);
}

TEST_CASE("store round trip through JSON") {
  Store s = si_store(0.5);
  BuildConfig cfg;
  cfg.stop = MaxVertices{1000};
  cfg.rng_seed = 5;
  build(s, cfg);
  s.set_edge_cost(0, kInfinity);

  const std::string text = serialize(s);
  Store t = deserialize(text);
  REQUIRE(t.vertex_count() == s.vertex_count());
  REQUIRE(t.edge_count() == s.edge_count());
  for (VertexId v = 0; v < s.vertex_count(); ++v) {
    CHECK(t.vertex(v).state == s.vertex(v).state);
    CHECK(t.cost_to_go(v) == s.cost_to_go(v));
    CHECK(t.vertex(v).tree_edge == s.vertex(v).tree_edge);
    CHECK(t.vertex(v).out_edges == s.vertex(v).out_edges);
  }
  for (EdgeId e = 0; e < s.edge_count(); ++e) {
    CHECK(t.edge(e).control == s.edge(e).control);
    CHECK(t.edge(e).cost == s.edge(e).cost);
    CHECK(t.edge(e).base_cost == s.edge(e).base_cost);
  }
  CHECK(std::isinf(t.edge(0).cost));
  CHECK(serialize(t) == text);
  CHECK(text.find("\"inf\"") != std::string::npos);

  const auto path = std::filesystem::temp_directory_path() / "gravitree_store_rt.json";
  save_store(s, path);
  CHECK(serialize(load_store(path)) == text);
  std::filesystem::remove(path);
}

TEST_CASE("damaged store files") {
  Store s = si_store();
  s.add_vertex(v2(1, 1));
  const std::string text = serialize(s);
  CHECK_THROWS_AS(deserialize(text.substr(0, text.size() / 2)), CorruptFile);
  CHECK_THROWS_AS(deserialize("{}"), CorruptFile);

  auto doc = nlohmann::json::parse(text);
  doc["format_version"] = "2.0";
  CHECK_THROWS_AS(deserialize(doc.dump()), VersionMismatch);

  doc = nlohmann::json::parse(text);
  doc["vertices"][1][0] = {9.0, 9.0};
  CHECK_THROWS_AS(deserialize(doc.dump()), CorruptFile);

  doc = nlohmann::json::parse(text);
  doc["edges"] = {{0, 5, {0.0, 0.0}, 1.0, 1.0}};
  CHECK_THROWS_AS(deserialize(doc.dump()), CorruptFile);

  CHECK_THROWS_AS(load_store("/nonexistent/store.json"), FileMissing);
}
