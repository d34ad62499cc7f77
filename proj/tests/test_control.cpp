#include <doctest.h>

#include <cmath>

#include "gdyn/control.hpp"
#include "gdyn/rng.hpp"

using namespace gdyn;
using graph::NodeState;
using graph::Vec2;

namespace {

ModelConfig resolved_cfg() {
  ModelConfig cfg;
  cfg.embed_dim = 8;
  cfg.mlp_hidden = {8};
  cfg.gru_hidden = 8;
  auto r = solve_stable_ranges(cfg.dt, cfg.invmass_max);
  cfg.k_max = r.k_max;
  cfg.c_max = r.c_max;
  return cfg;
}

std::vector<dynmod::AffineSystem> random_stable_systems(Rng& rng, const ModelConfig& cfg, int n) {
  std::vector<dynmod::AffineSystem> out;
  for (int i = 0; i < n; ++i) {
    double raw[8];
    for (double& y : raw) y = rng.uniform(-2, 2);
    out.push_back(dynmod::assemble_affine(dynmod::squash_params(cfg, raw), cfg.dt));
  }
  return out;
}

/// Cost of running the time-invariant joint system for H steps, matching the
/// planner's convention: per-step state + control cost, terminal state cost.
double policy_cost(const ctrl::JointAffineSystem& s, const ctrl::QuadCost& cost,
                   Eigen::VectorXd x, const ctrl::GainSchedule* gains,
                   const std::vector<Eigen::Vector2d>* us, int H) {
  double c = 0.0;
  Eigen::VectorXd xa = ctrl::augment(x);
  for (int t = 0; t < H; ++t) {
    Eigen::Vector2d u = gains ? Eigen::Vector2d(-(gains->K[t] * xa)) : (*us)[t];
    c += cost.state_cost(xa.head(xa.size() - 1)) + cost.control_cost(u);
    xa = s.A * xa + s.B * u;
  }
  return c + cost.state_cost(xa.head(xa.size() - 1));
}

}  // namespace

TEST_CASE("state stacking round trip and augmentation") {
  std::vector<NodeState> nodes = {{{1, 2}, {3, 4}}, {{-1, 0.5}, {0, -2}}};
  Eigen::VectorXd x = ctrl::stack_state(nodes);
  CHECK(x.size() == 8);
  CHECK(x(0) == 1);
  CHECK(x(1) == 2);
  CHECK(x(2) == 3);
  CHECK(x(3) == 4);
  CHECK(x(4) == -1);
  auto back = ctrl::unstack_state(x);
  CHECK(back[1].position == nodes[1].position);
  CHECK(back[1].velocity == nodes[1].velocity);
  Eigen::VectorXd a = ctrl::augment(x);
  CHECK(a.size() == 9);
  CHECK(a(8) == 1.0);
  CHECK_THROWS_AS(ctrl::unstack_state(Eigen::VectorXd::Zero(7)), std::invalid_argument);
}

TEST_CASE("joint assembly places blocks, offsets and controls") {
  Rng rng(3);
  ModelConfig cfg = resolved_cfg();
  auto systems = random_stable_systems(rng, cfg, 2);
  auto js = ctrl::assemble_joint(systems);
  REQUIRE(js.A.rows() == 9);
  CHECK(js.A(8, 8) == 1.0);
  CHECK(js.A.row(8).head(8).isZero());
  for (int i = 0; i < 2; ++i)
    for (int d = 0; d < 2; ++d) {
      const auto& a = systems[i].dof[d];
      int q = 4 * i + d, v = 4 * i + 2 + d;
      CHECK(js.A(q, q) == a.a00);
      CHECK(js.A(q, v) == a.a01);
      CHECK(js.A(v, q) == a.a10);
      CHECK(js.A(v, v) == a.a11);
      CHECK(js.A(q, 8) == a.o0);
      CHECK(js.A(v, 8) == a.o1);
      CHECK(js.B(q, d) == a.b0);
      CHECK(js.B(v, d) == a.b1);
    }

  // joint step == stacked per-node step, and the homogeneous entry stays 1
  std::vector<NodeState> nodes = {{{0.2, -0.1}, {0.4, 0.3}}, {{-0.6, 0.9}, {0.1, -0.2}}};
  Vec2 u{0.3, -0.7};
  Eigen::VectorXd xa = ctrl::augment(ctrl::stack_state(nodes));
  Eigen::VectorXd next = js.A * xa + js.B * Eigen::Vector2d(u[0], u[1]);
  CHECK(next(8) == 1.0);
  for (int i = 0; i < 2; ++i) {
    NodeState n = dynmod::predict_next(nodes[i], u, systems[i]);
    CHECK(next(4 * i + 0) == doctest::Approx(n.position[0]).epsilon(1e-13));
    CHECK(next(4 * i + 1) == doctest::Approx(n.position[1]).epsilon(1e-13));
    CHECK(next(4 * i + 2) == doctest::Approx(n.velocity[0]).epsilon(1e-13));
    CHECK(next(4 * i + 3) == doctest::Approx(n.velocity[1]).epsilon(1e-13));
  }
}

TEST_CASE("quadratic cost validation and augmented form") {
  ctrl::QuadCost c = ctrl::default_pickup_cost(2, 1, {0.5, -0.25});
  CHECK_NOTHROW(c.validate());

  Rng rng(7);
  Eigen::MatrixXd qa = c.augmented_q();
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x(8);
    for (int i = 0; i < 8; ++i) x(i) = rng.uniform(-2, 2);
    Eigen::VectorXd xa = ctrl::augment(x);
    CHECK(xa.dot(qa * xa) == doctest::Approx(c.state_cost(x)).epsilon(1e-10));
  }

  ctrl::QuadCost bad = c;
  bad.Q(0, 1) = 5.0;  // asymmetric-indefinite after this edit
  bad.Q(1, 0) = 5.0;
  bad.Q(0, 0) = 0.0;
  bad.Q(1, 1) = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.R = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.goal = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("riccati gain on a hand-solved scalar problem") {
  // scalar x' = x + u with Q = R = 1, horizon 1: K = (R + B'QB)^-1 B'QA = 1/2
  ctrl::JointAffineSystem s;
  s.A = Eigen::MatrixXd::Identity(2, 2);
  s.B = Eigen::MatrixXd::Zero(2, 2);
  s.B(0, 0) = 1.0;
  ctrl::QuadCost cost;
  cost.Q = Eigen::MatrixXd::Identity(1, 1);
  cost.R = Eigen::MatrixXd::Identity(2, 2);
  cost.goal = Eigen::VectorXd::Zero(1);
  auto g = ctrl::lqr_backward({s}, cost);
  REQUIRE(g.K.size() == 1);
  CHECK(g.K[0](0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(g.K[0](1, 0) == doctest::Approx(0.0));

  // zero state cost: doing nothing is optimal
  cost.Q(0, 0) = 0.0;
  auto g0 = ctrl::lqr_backward({s}, cost);
  CHECK(g0.K[0].norm() == doctest::Approx(0.0));
  CHECK_THROWS_AS(ctrl::lqr_backward({}, cost), std::invalid_argument);
}

TEST_CASE("riccati policy beats random policies") {
  Rng rng(11);
  ModelConfig cfg = resolved_cfg();
  auto systems = random_stable_systems(rng, cfg, 1);
  auto js = ctrl::assemble_joint(systems);
  ctrl::QuadCost cost = ctrl::default_pickup_cost(1, 0, {0.4, -0.3});
  const int H = 10;
  auto gains = ctrl::lqr_backward(std::vector<ctrl::JointAffineSystem>(H, js), cost);

  Eigen::VectorXd x0(4);
  x0 << -0.5, 0.8, 0.2, -0.1;
  double opt = policy_cost(js, cost, x0, &gains, nullptr, H);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Eigen::Vector2d> us(H);
    for (auto& u : us) u = Eigen::Vector2d(rng.uniform(-3, 3), rng.uniform(-3, 3));
    CHECK(opt <= policy_cost(js, cost, x0, nullptr, &us, H) + 1e-10);
  }
}

TEST_CASE("planner solves an exactly linear problem in one update") {
  Rng rng(13);
  ModelConfig cfg = resolved_cfg();
  auto systems = random_stable_systems(rng, cfg, 2);
  std::vector<NodeState> init = {{{-0.4, 0.2}, {0, 0}}, {{0.6, -0.5}, {0, 0}}};
  ctrl::LinearDyn dyn(systems, init);
  ctrl::QuadCost cost = ctrl::default_pickup_cost(2, 1, {0.5, 0.5});

  const int H = 15;
  auto res = ctrl::ilqr(dyn, cost, H);
  CHECK(res.converged);
  CHECK(res.iterations == 1);
  CHECK(res.controls.size() == H);
  CHECK(res.states.size() == H + 1);

  // the returned gains are the direct Riccati solution on those systems
  auto js = ctrl::assemble_joint(systems);
  auto direct = ctrl::lqr_backward(std::vector<ctrl::JointAffineSystem>(H, js), cost);
  for (int t = 0; t < H; ++t)
    CHECK((res.gains.K[t] - direct.K[t]).cwiseAbs().maxCoeff() < 1e-6);

  // and the cost matches evaluating that policy directly
  double direct_cost = policy_cost(js, cost, ctrl::stack_state(init), &direct, nullptr, H);
  CHECK(res.cost == doctest::Approx(direct_cost).epsilon(1e-9));

  CHECK_THROWS_AS(ctrl::ilqr(dyn, cost, 0), std::invalid_argument);
}

TEST_CASE("starting on the goal costs nothing") {
  // identity dynamics (default DofAffine), goal = initial state at rest
  std::vector<dynmod::AffineSystem> systems(2);
  for (auto& s : systems) {
    s.dt = 0.05;
    s.dof.resize(2);
  }
  std::vector<NodeState> init = {{{0.5, 0.5}, {0, 0}}, {{0.5, 0.5}, {0, 0}}};
  ctrl::LinearDyn dyn(systems, init);
  ctrl::QuadCost cost = ctrl::default_pickup_cost(2, 1, {0.5, 0.5});
  auto res = ctrl::ilqr(dyn, cost, 10);
  CHECK(res.cost == doctest::Approx(0.0));
  CHECK(res.converged);
  for (const auto& u : res.controls) {
    CHECK(u[0] == doctest::Approx(0.0));
    CHECK(u[1] == doctest::Approx(0.0));
  }
}

TEST_CASE("posterior updates and contact likelihoods") {
  auto p = ctrl::posterior_update({0.3, 0.7}, {0.99, 0.01});
  double z = 0.3 * 0.99 + 0.7 * 0.01;
  CHECK(p[0] == doctest::Approx(0.297 / z).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.007 / z).epsilon(1e-12));
  CHECK(p[0] + p[1] == doctest::Approx(1.0));
  // uniform belief snaps almost entirely onto the observation
  auto u = ctrl::posterior_update({0.5, 0.5}, {0.99, 0.01});
  CHECK(u[0] == doctest::Approx(0.99));
  CHECK_THROWS_AS(ctrl::posterior_update({1.0, 0.0}, {0.0, 1.0}), std::domain_error);

  auto like = ctrl::contact_likelihood({true, false}, 0.01);
  CHECK(like[0][0] == 0.99);
  CHECK(like[0][1] == doctest::Approx(0.01));
  CHECK(like[1][0] == doctest::Approx(0.01));
  CHECK(like[1][1] == 0.99);
}

TEST_CASE("receding-horizon control with the simulator as planner succeeds") {
  Rng rng(17);
  auto ep = sim::sample_pickup(rng, 1, 0);
  sim::PickupEnv env(ep.world);
  ctrl::SimDyn planner(env);
  ctrl::QuadCost cost = ctrl::default_pickup_cost(2, 1, ep.goal);

  ctrl::MpcOptions opt;
  opt.plan_horizon_cap = 40;
  auto log = ctrl::mpc_run(env, planner, cost, 200, opt);
  CHECK(!log.aborted);
  CHECK(log.executed.size() == 201);
  CHECK(log.controls.size() == 200);
  CHECK(log.plans.size() == 40);
  CHECK(ctrl::pickup_success(log, 1, ep.goal, 0.1));
  double err = ctrl::n_step_error(log, 10);
  CHECK(std::isfinite(err));
  CHECK(err < 0.5);  // the planner is the simulator itself

  CHECK_THROWS_AS(ctrl::mpc_run(env, planner, cost, 17, opt), std::invalid_argument);
}

TEST_CASE("windowed error metric against a hand computation") {
  ctrl::MpcResult log;
  auto mk = [](double q) {
    return std::vector<NodeState>{{{q, 0}, {0, 0}}};
  };
  // executed: q = 0, 1, 2, 3, 4
  for (int t = 0; t <= 4; ++t) log.executed.push_back(mk(t));
  log.controls.resize(4, Vec2{0, 0});
  // plan at t0 = 0 predicts q = 0, 1.5, 2.5 (needs > n entries to count)
  log.plans.push_back({0, {mk(0), mk(1.5), mk(2.5)}});
  // plan at t0 = 2 predicts q = 2, 3, 4.4
  log.plans.push_back({2, {mk(2), mk(3), mk(4.4)}});
  // n = 2: window 0 errors {0.5, 0.5}, window 2 errors {0, 0.4};
  // each step contributes 4 entries (qx, qy, vx, vy), only qx is off
  double expect = std::sqrt((0.25 + 0.25 + 0.0 + 0.16) / 16.0);
  CHECK(ctrl::n_step_error(log, 2) == doctest::Approx(expect).epsilon(1e-12));
  // n = 4: no plan covers a full window (plan 0 has only 2 predicted steps)
  CHECK_THROWS_AS(ctrl::n_step_error(log, 4), std::invalid_argument);
  CHECK_THROWS_AS(ctrl::n_step_error(log, 0), std::invalid_argument);
}

TEST_CASE("edge accuracy counts matching (edge, step) pairs") {
  ctrl::MpcResult log;
  log.controls.resize(4, Vec2{0, 0});
  log.pred_active = {{true, false}, {true, true}, {false, false}, {true, false}};
  log.contacts = {{true, false}, {false, true}, {false, false}, {false, true}};
  // matches per step: 2, 1, 2, 0 over the first 4 steps => 5/8
  CHECK(ctrl::edge_accuracy(log, 2) == doctest::Approx(5.0 / 8.0));
  // rows with mismatched sizes are skipped
  log.pred_active[1] = {};
  CHECK(ctrl::edge_accuracy(log, 2) == doctest::Approx(4.0 / 6.0));
}

TEST_CASE("success requires the weld and the goal region together") {
  ctrl::MpcResult log;
  auto at = [](double gx, double tx) {
    return std::vector<NodeState>{{{gx, 0}, {0, 0}}, {{tx, 0}, {0, 0}}};
  };
  log.executed = {at(0, 1), at(0.5, 1), at(0.95, 1.0)};
  log.contacts = {{false}, {true}};
  Vec2 goal{1.0, 0.0};
  CHECK(ctrl::pickup_success(log, 1, goal, 0.1));
  // welded but never near the goal
  ctrl::MpcResult far = log;
  far.executed[2] = at(0.0, 0.2);
  CHECK(!ctrl::pickup_success(far, 1, goal, 0.1));
  // near the goal but never welded
  ctrl::MpcResult free = log;
  free.contacts = {{false}, {false}};
  CHECK(!ctrl::pickup_success(free, 1, goal, 0.1));
}
