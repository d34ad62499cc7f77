#include <doctest.h>

#include <cmath>

#include "gdyn/sim2d.hpp"

using namespace gdyn;
using graph::NodeState;
using graph::Vec2;

namespace {

double kinetic(const sim::PickupWorld& w) {
  double e = 0.0;
  for (const auto& b : w.bodies)
    e += 0.5 * w.cfg.mass * (b.velocity[0] * b.velocity[0] + b.velocity[1] * b.velocity[1]);
  return e;
}

int edge_index(int n, int i, int j) {
  // position of (i, j), i < j, in the row-major upper-triangle order
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

}  // namespace

TEST_CASE("a resting world under zero force stays put") {
  auto w = sim::make_pickup_world({{{0, 0}, {0, 0}}, {{0.8, 0}, {0, 0}}});
  for (int t = 0; t < 50; ++t) {
    auto r = sim::step(w, {0, 0});
    CHECK(r.next[0].position == Vec2{0, 0});
    CHECK(r.next[1].position == Vec2{0.8, 0});
    CHECK(r.contact == std::vector<bool>{false});
  }
}

TEST_CASE("constant force integrates semi-implicitly") {
  sim::SimConfig cfg;
  auto w = sim::make_pickup_world({{{0, 0}, {0, 0}}, {{5, 5}, {0, 0}}}, cfg);
  Vec2 f{0.4, -0.2};
  int N = 20;
  for (int t = 0; t < N; ++t) sim::step(w, f);
  // v_N = N dt f / m; q_N = dt sum_{k=1}^{N} v_k = dt^2 f/m * N(N+1)/2
  for (int d = 0; d < 2; ++d) {
    CHECK(w.bodies[0].velocity[d] ==
          doctest::Approx(N * cfg.dt * f[d] / cfg.mass).epsilon(1e-12));
    CHECK(w.bodies[0].position[d] ==
          doctest::Approx(cfg.dt * cfg.dt * f[d] / cfg.mass * N * (N + 1) / 2.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(sim::step(w, {std::nan(""), 0.0}), std::invalid_argument);
}

TEST_CASE("welds conserve momentum and dissipate energy") {
  auto w = sim::make_pickup_world({{{0, 0}, {2, 0}}, {{0.25, 0}, {0, 0}}});
  double ke_before = kinetic(w);
  auto r = sim::step(w, {0, 0});  // gripper moves to 0.1, within grasp radius
  CHECK(r.contact == std::vector<bool>{true});
  CHECK(w.same_set(0, 1));
  CHECK(w.bodies[0].velocity == Vec2{1, 0});  // (1*2 + 1*0) / 2
  CHECK(w.bodies[1].velocity == Vec2{1, 0});
  CHECK(kinetic(w) < ke_before);

  // welded pair moves rigidly and shares the applied force over both masses
  double gap = w.bodies[1].position[0] - w.bodies[0].position[0];
  sim::step(w, {1, 0});
  CHECK(w.bodies[0].velocity[0] == doctest::Approx(1.0 + 0.05 * 0.5));
  CHECK(w.bodies[1].velocity[0] == doctest::Approx(w.bodies[0].velocity[0]));
  CHECK(w.bodies[1].position[0] - w.bodies[0].position[0] == doctest::Approx(gap));
}

TEST_CASE("contacts only accumulate") {
  Rng rng(5);
  auto ep = sim::sample_pickup(rng, 2, 2);
  sim::PickupExpert expert(ep.targets, ep.goal);
  auto& w = ep.world;
  std::vector<bool> seen(w.n_nodes() * (w.n_nodes() - 1) / 2, false);
  for (int t = 0; t < w.cfg.horizon; ++t) {
    auto r = sim::step(w, expert.act(w));
    for (size_t e = 0; e < seen.size(); ++e) {
      if (seen[e]) CHECK(r.contact[e]);
      if (r.contact[e]) seen[e] = true;
    }
  }
}

TEST_CASE("door: coasting, attachment, and torque") {
  sim::DoorWorld w;
  w.theta = 0.2;
  w.theta_dot = 0.3;
  w.gripper = {{-0.9, -0.9}, {0, 0}};
  double th = w.theta;
  sim::door_step(w, {0, 0});
  CHECK(!w.attached);
  CHECK(w.theta == doctest::Approx(th + 0.05 * 0.3));
  CHECK(w.theta_dot == doctest::Approx(0.3));

  // place the gripper on top of the handle moving tangentially: angular
  // momentum about the hinge is conserved through the rigid attach
  sim::DoorWorld a;
  a.theta = 0.0;
  a.theta_dot = 0.0;
  a.gripper = {{0.95, 0.0}, {0.0, 1.2}};
  double l_before = a.cfg.mass * (a.gripper.position[0] * a.gripper.velocity[1] -
                                  a.gripper.position[1] * a.gripper.velocity[0]);
  // after the free step the gripper is at (0.95, 0.06), handle at (1, 0):
  // distance ~0.078 < grasp radius, so it attaches
  sim::door_step(a, {0, 0});
  REQUIRE(a.attached);
  double expect = (a.rod_inertia() * 0.0 + l_before) / a.total_inertia();
  CHECK(a.theta_dot == doctest::Approx(expect).epsilon(1e-9));
  CHECK(a.gripper.position == a.handle_position());
  CHECK(a.gripper.velocity == a.handle_velocity());
  CHECK(graph::norm(a.handle_velocity()) ==
        doctest::Approx(a.cfg.door_length * std::abs(a.theta_dot)));

  // attached: planar force becomes hinge torque
  double thd = a.theta_dot, thv = a.theta;
  Vec2 f{0.3, 0.8};
  sim::door_step(a, f);
  double torque = a.cfg.door_length * (std::cos(thv) * f[1] - std::sin(thv) * f[0]);
  CHECK(a.theta_dot == doctest::Approx(thd + 0.05 * torque / a.total_inertia()).epsilon(1e-12));
  CHECK(a.total_inertia() == doctest::Approx(a.rod_inertia() + a.cfg.mass));
  auto flags = a.contact_flags();
  CHECK(flags[edge_index(a.n_nodes(), 0, 1)]);
}

TEST_CASE("sampled episodes respect separation and clearance") {
  Rng rng(11);
  sim::SimConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    auto ep = sim::sample_pickup(rng, 2, 3, cfg);
    const auto& b = ep.world.bodies;
    REQUIRE(b.size() == 6);
    for (size_t i = 0; i < b.size(); ++i) {
      CHECK(std::abs(b[i].position[0]) <= cfg.workspace_half);
      CHECK(std::abs(b[i].position[1]) <= cfg.workspace_half);
      for (size_t j = i + 1; j < b.size(); ++j)
        CHECK(graph::norm(b[i].position - b[j].position) >= cfg.min_separation);
    }
  }
  Vec2 fixed{0.5, 0.5};
  auto ep = sim::sample_pickup(rng, 1, 0, cfg, &fixed);
  CHECK(ep.goal == fixed);
}

TEST_CASE("the scripted expert completes a pickup") {
  Rng rng(21);
  auto ep = sim::sample_pickup(rng, 1, 0);
  sim::PickupExpert expert(ep.targets, ep.goal);
  auto& w = ep.world;
  for (int t = 0; t < w.cfg.horizon; ++t) sim::step(w, expert.act(w));
  CHECK(w.same_set(0, 1));
  CHECK(graph::norm(w.bodies[1].position - ep.goal) <= w.cfg.goal_radius);
}

TEST_CASE("the scripted expert opens the door") {
  Rng rng(23);
  auto ep = sim::sample_door(rng, 0);
  sim::DoorExpert expert;
  auto& w = ep.world;
  for (int t = 0; t < w.cfg.horizon; ++t) sim::door_step(w, expert.act(w));
  CHECK(w.attached);
  CHECK(std::abs(w.theta - w.goal_angle) < 0.05);
}

TEST_CASE("dataset collection: shapes, welds, determinism") {
  sim::CollectOptions opt;
  opt.task = 1;
  opt.n_traj = 3;
  opt.seed = 31;
  opt.distractors = 2;
  auto a = sim::collect_dataset(opt);
  auto b = sim::collect_dataset(opt);
  REQUIRE(a.size() == 3);
  for (size_t k = 0; k < a.size(); ++k) {
    const auto& tr = a[k];
    CHECK(tr.num_nodes() == 4);  // gripper + target + 2 distractors
    CHECK(tr.num_steps() == sim::SimConfig{}.horizon);
    CHECK_NOTHROW(tr.validate());
    // exactly the gripper-target weld fires, and it persists to the end
    int n = tr.num_nodes();
    const auto& last = tr.contact_flags.back();
    CHECK(last[edge_index(n, 0, 1)]);
    int welded = 0;
    for (bool f : last) welded += f;
    CHECK(welded == 1);
    // bitwise reproducible
    for (size_t t = 0; t < tr.snapshots.size(); ++t)
      for (int i = 0; i < n; ++i) {
        CHECK(tr.snapshots[t].nodes[i].position == b[k].snapshots[t].nodes[i].position);
        CHECK(tr.snapshots[t].nodes[i].velocity == b[k].snapshots[t].nodes[i].velocity);
      }
  }

  opt.task = 2;
  opt.distractors = 0;
  auto two = sim::collect_dataset(opt);
  for (const auto& tr : two) {
    CHECK(tr.num_nodes() == 3);
    const auto& last = tr.contact_flags.back();
    CHECK(last[edge_index(3, 0, 1)]);
    CHECK(last[edge_index(3, 0, 2)]);
  }

  opt.task = 3;
  auto door = sim::collect_dataset(opt);
  for (const auto& tr : door) {
    CHECK(tr.num_nodes() == 2);
    CHECK(tr.contact_flags.back()[0]);
  }

  opt.task = 9;
  CHECK_THROWS_AS(sim::collect_dataset(opt), std::invalid_argument);
}
