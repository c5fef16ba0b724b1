#include "gravitree/systems.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace gravitree;

namespace {

const std::string kFixture = std::string(FIXTURE_DIR) + "/pendulum_mlp.json";

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

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("single integrator definition") {
  const SystemDef si = single_integrator(0.1);
  CHECK(si.n == 2);
  CHECK(si.m == 2);
  CHECK(si.stage_cost(v2(1, 2), v2(0, 0)) == 0.0);
  CHECK(si.stage_cost(v2(1, 2), v2(3, 4)) == doctest::Approx(0.5));
  CHECK(si.vector_field(v2(7, -2), v2(1, 1)) == v2(1, 1));
  CHECK(si.terminal_state.norm() == 0.0);
  CHECK(si.state_bounds.hi[0] == 5.0);
  CHECK(si.control_bounds.hi[1] == 1.0);
  CHECK_FALSE(si.is_wrapped(0));
}

TEST_CASE("pendulum definition") {
  const SystemDef p = pendulum(4.0);
  CHECK(p.n == 2);
  CHECK(p.m == 1);
  CHECK(p.vector_field(v2(0, 0), v1(0)).norm() == 0.0);
  const State f = p.vector_field(v2(M_PI / 2, 1), v1(0.5));
  CHECK(f[0] == 1.0);
  CHECK(f[1] == doctest::Approx(1.5));
  CHECK(p.stage_cost(v2(1, 1), v1(2)) == 6.0);
  CHECK(p.is_wrapped(0));
  CHECK_FALSE(p.is_wrapped(1));
  CHECK(p.control_bounds.lo[0] == -4.0);
  CHECK(p.state_bounds.hi[1] == 4.0);
  CHECK_THROWS_AS(pendulum(0.0), InvalidParameter);
  CHECK_THROWS_AS(pendulum(-1.0), InvalidParameter);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-10, 10);
  for (int i = 0; i < 100; ++i) {
    const State x = v2(d(rng), d(rng));
    CHECK(p.vector_field(x, v1(d(rng)))[0] == x[1]);
  }
}

TEST_CASE("mlp identity fixture selects the state slice") {
  MlpLayer layer;
  layer.weights = Eigen::MatrixXd::Zero(2, 3);
  layer.weights(0, 0) = 1.0;
  layer.weights(1, 1) = 1.0;
  layer.bias = Eigen::VectorXd::Zero(2);
  const MlpModel model(3, 2, {layer});
  Eigen::VectorXd in(3);
  in << 0.3, -0.1, 0.5;
  const auto out = model.forward(in);
  CHECK(out[0] == doctest::Approx(0.3));
  CHECK(out[1] == doctest::Approx(-0.1));

  const SystemDef sys = mlp_system(std::make_shared<const MlpModel>(model), 4.0);
  CHECK(sys.name == "mlp");
  CHECK(sys.vector_field(v2(0.3, -0.1), v1(0.5)) == v2(0.3, -0.1));
}

TEST_CASE("zero-weight model returns its bias") {
  MlpLayer hidden{Eigen::MatrixXd::Zero(4, 3), Eigen::VectorXd::Zero(4), Activation::Tanh};
  MlpLayer head{Eigen::MatrixXd::Zero(2, 4), Eigen::Vector2d(0.25, -0.75), Activation::Identity};
  const MlpModel model(3, 2, {hidden, head});
  Eigen::VectorXd in = Eigen::VectorXd::Random(3);
  CHECK(model.forward(in) == Eigen::Vector2d(0.25, -0.75));
}

TEST_CASE("tanh layer matches std::tanh") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 2);
  MlpLayer hidden{Eigen::MatrixXd(8, 3), Eigen::VectorXd(8), Activation::Tanh};
  for (int i = 0; i < 8; ++i) {
    hidden.bias[i] = n(rng);
    for (int j = 0; j < 3; ++j) hidden.weights(i, j) = n(rng);
  }
  MlpLayer head{Eigen::MatrixXd::Identity(8, 8), Eigen::VectorXd::Zero(8), Activation::Identity};
  const MlpModel model(3, 8, {hidden, head});
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd in(3);
    in << n(rng), n(rng), n(rng);
    in *= (t % 10 == 0) ? 1e-9 : 1.0;
    const Eigen::VectorXd ref = (hidden.weights * in + hidden.bias).array().tanh();
    const Eigen::VectorXd got = model.forward(in);
    for (int i = 0; i < 8; ++i) CHECK(std::abs(got[i] - ref[i]) <= 1e-15 + 1e-12 * std::abs(ref[i]));
  }
}

TEST_CASE("committed fixture loads and tracks the true field") {
  const MlpModel model = load_mlp(kFixture);
  CHECK(model.input_dim() == 3);
  CHECK(model.output_dim() == 2);
  REQUIRE(model.train_rmse() > 0.0);
  const double tol = 5.0 * model.train_rmse();

  Eigen::VectorXd in(3);
  in << M_PI / 2, 0, 0;
  const auto out = model.forward(in);
  CHECK(std::abs(out[0] - 0.0) < tol);
  CHECK(std::abs(out[1] - 1.0) < tol);

  const SystemDef net = mlp_system(std::make_shared<const MlpModel>(model), 4.0);
  const SystemDef truth = pendulum(4.0);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> a(-M_PI, M_PI), v(-4, 4), c(-4, 4);
  double sq = 0.0;
  const int samples = 100000;
  for (int i = 0; i < samples; ++i) {
    const State x = v2(a(rng), v(rng));
    const Control u = v1(c(rng));
    const State f = net.vector_field(x, u);
    REQUIRE(f.allFinite());
    sq += (f - truth.vector_field(x, u)).squaredNorm();
  }
  CHECK(std::sqrt(sq / (2.0 * samples)) < 0.02);
}

TEST_CASE("mlp forward is deterministic and Lipschitz-bounded on the box") {
  const MlpModel model = load_mlp(kFixture);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> a(-M_PI, M_PI), v(-4, 4), c(-4, 4);
  double lipschitz = 0.0;
  for (int i = 0; i < 2000; ++i) {
    Eigen::VectorXd p(3), q(3);
    p << a(rng), v(rng), c(rng);
    q = p + 1e-3 * Eigen::VectorXd::Random(3);
    const auto fp = model.forward(p);
    CHECK(fp == model.forward(p));
    lipschitz = std::max(lipschitz, (fp - model.forward(q)).norm() / (p - q).norm());
  }
  CHECK(std::isfinite(lipschitz));
  CHECK(lipschitz < 10.0);
}

TEST_CASE("mlp loader error kinds") {
  CHECK_THROWS_AS(load_mlp("/nonexistent/weights.json"), FileMissing);
  CHECK_THROWS_AS(parse_mlp("{ not json"), SchemaViolation);
  CHECK_THROWS_AS(parse_mlp(R"({"input_dim": 3, "output_dim": 2})"), SchemaViolation);

  const std::string bad_bias = R"({"input_dim": 2, "output_dim": 1, "train_rmse": 0,
    "layers": [{"weights": [[1, 2]], "bias": [0, 1], "activation": "identity"}]})";
  CHECK_THROWS_AS(parse_mlp(bad_bias), SchemaViolation);

  const std::string bad_chain = R"({"input_dim": 2, "output_dim": 1, "train_rmse": 0,
    "layers": [{"weights": [[1, 2, 3]], "bias": [0], "activation": "identity"}]})";
  CHECK_THROWS_AS(parse_mlp(bad_chain), DimensionMismatch);

  const std::string tanh_head = R"({"input_dim": 2, "output_dim": 1, "train_rmse": 0,
    "layers": [{"weights": [[1, 2]], "bias": [0], "activation": "tanh"}]})";
  CHECK_THROWS_AS(parse_mlp(tanh_head), SchemaViolation);

  const std::string future = R"({"format_version": "2.0", "input_dim": 2, "output_dim": 1, "train_rmse": 0,
    "layers": [{"weights": [[1, 2]], "bias": [0], "activation": "identity"}]})";
  CHECK_THROWS_AS(parse_mlp(future), VersionMismatch);

  MlpLayer wide{Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), Activation::Identity};
  CHECK_THROWS_AS(mlp_system(std::make_shared<const MlpModel>(MlpModel(2, 2, {wide})), 4.0), InvalidParameter);
}

TEST_CASE("mlp save/load round trip is exact") {
  const MlpModel model = load_mlp(kFixture);
  const auto path = std::filesystem::temp_directory_path() / "gravitree_mlp_roundtrip.json";
  save_mlp(model, path);
  const MlpModel again = load_mlp(path);
  REQUIRE(again.layers().size() == model.layers().size());
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    CHECK(again.layers()[i].weights == model.layers()[i].weights);
    CHECK(again.layers()[i].bias == model.layers()[i].bias);
  }
  CHECK(again.train_rmse() == model.train_rmse());
  std::filesystem::remove(path);
}

TEST_CASE("system selector parsing") {
  CHECK(SystemSpec::from_selector("pendulum").kind == "pendulum");
  const auto mlp = SystemSpec::from_selector("mlp:/tmp/w.json");
  CHECK(mlp.kind == "mlp");
  CHECK(mlp.model_path == "/tmp/w.json");
  CHECK_THROWS_AS(SystemSpec::from_selector("cartpole"), InvalidParameter);
  CHECK_THROWS_AS(SystemSpec::from_selector("mlp:"), InvalidParameter);
  CHECK(SystemSpec::from_selector("single_integrator").effective_control_limit() == 1.0);
  CHECK(SystemSpec::from_selector("pendulum").effective_control_limit() == 4.0);
  const auto spec = SystemSpec::from_json(mlp.to_json());
  CHECK(spec.model_path == mlp.model_path);
  CHECK_THROWS_AS(make_system(SystemSpec::from_selector("mlp:/nonexistent.json"), 0.1), FileMissing);
}

TEST_CASE("obstacle membership") {
  ObstacleSet none;
  CHECK_FALSE(inside_obstacle(none, v2(0.5, 0.5)));

  ObstacleSet box;
  box.boxes.push_back({Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)});
  CHECK(inside_obstacle(box, v2(0.5, 0.5)));
  CHECK_FALSE(inside_obstacle(box, v2(1.5, 0.5)));

  // Three walls forming a U whose mouth faces +x.
  ObstacleSet u;
  u.walls = {{Eigen::Vector2d(-2, -1), Eigen::Vector2d(-2, 1)},
             {Eigen::Vector2d(-2, 1), Eigen::Vector2d(0, 1)},
             {Eigen::Vector2d(-2, -1), Eigen::Vector2d(0, -1)}};
  CHECK_FALSE(inside_obstacle(u, v2(-1, 0)));
  CHECK(inside_obstacle(u, v2(-2, 0.3)));
  CHECK(inside_obstacle(u, v2(-1, 1.02)));
  CHECK_FALSE(inside_obstacle(u, v2(-1, 1.2)));
  CHECK(point_segment_distance(Eigen::Vector2d(3, 4), Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0)) == 5.0);
}

TEST_CASE("obstacle membership is monotone under box enlargement") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(-3, 3);
  for (int t = 0; t < 50; ++t) {
    ObstacleSet small, large;
    const Eigen::Vector2d c(d(rng), d(rng));
    small.boxes.push_back({c.array() - 0.5, c.array() + 0.5});
    large.boxes.push_back({c.array() - 0.9, c.array() + 0.9});
    for (int i = 0; i < 40; ++i) {
      const State x = v2(d(rng), d(rng));
      if (inside_obstacle(small, x)) CHECK(inside_obstacle(large, x));
    }
  }
}
