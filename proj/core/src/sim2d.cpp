#include "gdyn/sim2d.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace gdyn::sim {

using graph::NodeState;
using graph::Vec2;

namespace {

bool finite2(Vec2 f) { return std::isfinite(f[0]) && std::isfinite(f[1]); }

std::vector<bool> pair_flags(int n, const std::function<bool(int, int)>& pred) {
  std::vector<bool> out;
  out.reserve(n * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.push_back(pred(i, j));
  return out;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  Vec2 ab = b - a;
  double len2 = ab[0] * ab[0] + ab[1] * ab[1];
  double t = len2 > 0.0 ? ((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return graph::norm(p - (a + t * ab));
}

}  // namespace

std::vector<bool> PickupWorld::contact_flags() const {
  return pair_flags(n_nodes(), [&](int i, int j) { return same_set(i, j); });
}

PickupWorld make_pickup_world(std::vector<NodeState> bodies, SimConfig cfg) {
  if (bodies.size() < 2) throw std::invalid_argument("make_pickup_world: need >= 2 bodies");
  PickupWorld w;
  w.cfg = cfg;
  w.bodies = std::move(bodies);
  w.weld_id.resize(w.bodies.size());
  for (size_t i = 0; i < w.weld_id.size(); ++i) w.weld_id[i] = int(i);
  return w;
}

StepResult step(PickupWorld& w, Vec2 force) {
  if (!finite2(force)) throw std::invalid_argument("step: force must be finite");
  const double dt = w.cfg.dt, m = w.cfg.mass;
  const int n = w.n_nodes();

  // Semi-implicit Euler per welded set; the force drives the gripper's set.
  const int gset = w.weld_id[0];
  std::vector<double> set_mass(n, 0.0);
  for (int i = 0; i < n; ++i) set_mass[w.weld_id[i]] += m;
  for (int i = 0; i < n; ++i) {
    Vec2 a{0.0, 0.0};
    if (w.weld_id[i] == gset) a = (1.0 / set_mass[gset]) * force;
    w.bodies[i].velocity += dt * a;
  }
  for (int i = 0; i < n; ++i) w.bodies[i].position += dt * w.bodies[i].velocity;

  // Inelastic welds: any free body within grasp radius of the gripper joins
  // its set with the momentum-conserving shared velocity.
  for (int j = 1; j < n; ++j) {
    if (w.weld_id[j] == w.weld_id[0]) continue;
    if (graph::norm(w.bodies[j].position - w.bodies[0].position) >= w.cfg.grasp_radius) continue;
    const int a = w.weld_id[0], b = w.weld_id[j];
    double ma = set_mass[a], mb = set_mass[b];
    Vec2 v = (1.0 / (ma + mb)) * (ma * w.bodies[0].velocity + mb * w.bodies[j].velocity);
    for (int i = 0; i < n; ++i)
      if (w.weld_id[i] == a || w.weld_id[i] == b) {
        w.weld_id[i] = a;
        w.bodies[i].velocity = v;
      }
    set_mass[a] = ma + mb;
  }

  StepResult r;
  r.next = w.bodies;
  r.contact = w.contact_flags();
  r.control = force;
  return r;
}

double DoorWorld::rod_inertia() const { return cfg.mass * cfg.door_length * cfg.door_length / 3.0; }

double DoorWorld::total_inertia() const {
  double I = rod_inertia();
  if (attached) I += cfg.mass * cfg.door_length * cfg.door_length;
  return I;
}

Vec2 DoorWorld::handle_position() const {
  return {cfg.door_length * std::cos(theta), cfg.door_length * std::sin(theta)};
}

Vec2 DoorWorld::handle_velocity() const {
  return {-cfg.door_length * theta_dot * std::sin(theta),
          cfg.door_length * theta_dot * std::cos(theta)};
}

std::vector<NodeState> DoorWorld::node_states() const {
  std::vector<NodeState> out;
  out.push_back(gripper);
  out.push_back({handle_position(), handle_velocity()});
  for (const auto& d : distractors) out.push_back(d);
  return out;
}

std::vector<bool> DoorWorld::contact_flags() const {
  return pair_flags(n_nodes(), [&](int i, int j) { return attached && i == 0 && j == 1; });
}

StepResult door_step(DoorWorld& w, Vec2 force) {
  if (!finite2(force)) throw std::invalid_argument("door_step: force must be finite");
  const double dt = w.cfg.dt, L = w.cfg.door_length;

  if (!w.attached) {
    w.theta += dt * w.theta_dot;  // unforced hinge coasts
    w.gripper.velocity += (dt / w.cfg.mass) * force;
    w.gripper.position += dt * w.gripper.velocity;
    if (graph::norm(w.gripper.position - w.handle_position()) < w.cfg.grasp_radius) {
      // Angular momentum about the hinge is conserved through the rigid
      // attachment; the gripper then rides the handle point.
      double l_grip = w.cfg.mass * (w.gripper.position[0] * w.gripper.velocity[1] -
                                    w.gripper.position[1] * w.gripper.velocity[0]);
      double l_door = w.rod_inertia() * w.theta_dot;
      w.attached = true;
      w.theta_dot = (l_door + l_grip) / w.total_inertia();
      w.gripper = {w.handle_position(), w.handle_velocity()};
    }
  } else {
    double torque = L * (std::cos(w.theta) * force[1] - std::sin(w.theta) * force[0]);
    w.theta_dot += dt * torque / w.total_inertia();
    w.theta += dt * w.theta_dot;
    w.gripper = {w.handle_position(), w.handle_velocity()};
  }

  StepResult r;
  r.next = w.node_states();
  r.contact = w.contact_flags();
  r.control = force;
  return r;
}

PickupEpisode sample_pickup(Rng& rng, int n_targets, int n_distractors, const SimConfig& cfg,
                            const graph::Vec2* fixed_goal) {
  if (n_targets < 1) throw std::invalid_argument("sample_pickup: need >= 1 target");
  const double w = cfg.workspace_half;
  auto draw = [&] { return Vec2{rng.uniform(-w, w), rng.uniform(-w, w)}; };

  // Gripper, targets, goal: uniform with pairwise separation.
  std::vector<Vec2> pts;
  for (int k = 0; k < n_targets + 2; ++k) {
    Vec2 p;
    if (fixed_goal && k == n_targets + 1) {
      pts.push_back(*fixed_goal);
      break;
    }
    for (;;) {
      p = draw();
      bool ok = true;
      for (const auto& q : pts)
        if (graph::norm(p - q) < cfg.min_separation) ok = false;
      if (ok) break;
    }
    pts.push_back(p);
  }
  Vec2 goal = pts.back();

  // The expert roughly follows the waypoint polyline; distractors keep clear.
  std::vector<std::pair<Vec2, Vec2>> segments;
  for (size_t k = 0; k + 1 < pts.size(); ++k) segments.emplace_back(pts[k], pts[k + 1]);

  std::vector<NodeState> bodies;
  for (int k = 0; k < n_targets + 1; ++k) bodies.push_back({pts[k], {0.0, 0.0}});
  if (cfg.gripper_v0 > 0.0) {
    double ang = rng.uniform(0, 2 * M_PI);
    double speed = cfg.gripper_v0 * std::sqrt(rng.uniform(0.0, 1.0));
    bodies[0].velocity = {speed * std::cos(ang), speed * std::sin(ang)};
  }
  for (int k = 0; k < n_distractors; ++k) {
    Vec2 p;
    for (;;) {
      p = draw();
      bool ok = true;
      for (const auto& [a, b] : segments)
        if (point_segment_distance(p, a, b) < cfg.distractor_clearance) ok = false;
      for (const auto& bd : bodies)
        if (graph::norm(p - bd.position) < cfg.min_separation) ok = false;
      if (ok) break;
    }
    bodies.push_back({p, {0.0, 0.0}});
  }

  PickupEpisode ep;
  ep.world = make_pickup_world(std::move(bodies), cfg);
  for (int k = 1; k <= n_targets; ++k) ep.targets.push_back(k);
  ep.goal = goal;
  return ep;
}

DoorEpisode sample_door(Rng& rng, int n_distractors, const SimConfig& cfg) {
  DoorEpisode ep;
  ep.world.cfg = cfg;
  ep.world.theta = rng.uniform(-0.25, 0.25);
  ep.world.goal_angle = rng.uniform(M_PI / 4, 3 * M_PI / 4);
  const double w = cfg.workspace_half;
  for (;;) {
    ep.world.gripper.position = {rng.uniform(-w, w), rng.uniform(-w, w)};
    if (graph::norm(ep.world.gripper.position - ep.world.handle_position()) >=
        cfg.min_separation)
      break;
  }
  if (cfg.gripper_v0 > 0.0) {
    double ang = rng.uniform(0, 2 * M_PI);
    double speed = cfg.gripper_v0 * std::sqrt(rng.uniform(0.0, 1.0));
    ep.world.gripper.velocity = {speed * std::cos(ang), speed * std::sin(ang)};
  }
  for (int k = 0; k < n_distractors; ++k) {
    // Clear of the hinge disc swept by the door and of the gripper approach.
    Vec2 p;
    for (;;) {
      p = {rng.uniform(-w, w), rng.uniform(-w, w)};
      bool ok = graph::norm(p) > cfg.door_length + cfg.distractor_clearance;
      if (point_segment_distance(p, ep.world.gripper.position, ep.world.handle_position()) <
          cfg.distractor_clearance)
        ok = false;
      if (ok) break;
    }
    ep.world.distractors.push_back({p, {0.0, 0.0}});
  }
  return ep;
}

Vec2 PickupExpert::act(const PickupWorld& w) {
  Vec2 wp = goal_;
  bool carrying = !targets_.empty();
  for (int tgt : targets_)
    if (!w.same_set(0, tgt)) {
      wp = w.bodies[tgt].position;
      carrying = false;
      break;
    }
  if (carrying) {
    // the payload rides at a rigid offset from the gripper; steer so the
    // primary target, not the gripper, lands on the goal
    wp = goal_ + (w.bodies[0].position - w.bodies[targets_[0]].position);
  }
  return w.cfg.kp * (wp - w.bodies[0].position) + (-w.cfg.kd) * w.bodies[0].velocity;
}

Vec2 DoorExpert::act(const DoorWorld& w) {
  if (!w.attached)
    return w.cfg.kp * (w.handle_position() - w.gripper.position) +
           (-w.cfg.kd) * w.gripper.velocity;
  double torque = w.total_inertia() *
                  (w.cfg.kp * (w.goal_angle - w.theta) - w.cfg.kd * w.theta_dot);
  double f = torque / w.cfg.door_length;
  return {-f * std::sin(w.theta), f * std::cos(w.theta)};
}

namespace {

// Piecewise-constant dither: one uniform draw held for `hold` steps.
struct Dither {
  Rng* rng = nullptr;
  double amp = 0.0;
  int hold = 1, left = 0;
  Vec2 u{0.0, 0.0};
  Vec2 next() {
    if (!rng || amp <= 0.0) return {0.0, 0.0};
    if (left == 0) {
      u = {rng->uniform(-amp, amp), rng->uniform(-amp, amp)};
      left = hold;
    }
    --left;
    return u;
  }
};

graph::GraphTrajectory run_pickup_episode(PickupEpisode ep, const SimConfig& cfg, int* welds,
                                          Rng* noise_rng = nullptr, double noise = 0.0,
                                          int noise_hold = 1) {
  graph::GraphTrajectory tr;
  tr.dt = cfg.dt;
  PickupExpert expert(ep.targets, ep.goal);
  PickupWorld& w = ep.world;
  Dither dith{noise_rng, noise, noise_hold > 0 ? noise_hold : 1};
  tr.snapshots.push_back(graph::build_fully_connected(w.bodies));
  int weld_count = 0;
  for (int t = 0; t < cfg.horizon; ++t) {
    int sets_before = 0;
    {
      std::vector<bool> seen(w.n_nodes(), false);
      for (int id : w.weld_id)
        if (!seen[id]) { seen[id] = true; ++sets_before; }
    }
    Vec2 u = expert.act(w) + dith.next();
    StepResult r = step(w, u);
    int sets_after = 0;
    {
      std::vector<bool> seen(w.n_nodes(), false);
      for (int id : w.weld_id)
        if (!seen[id]) { seen[id] = true; ++sets_after; }
    }
    weld_count += sets_before - sets_after;
    tr.snapshots.push_back(graph::build_fully_connected(r.next));
    tr.controls.push_back(u);
    tr.contact_flags.push_back(r.contact);
  }
  if (welds) *welds = weld_count;
  return tr;
}

graph::GraphTrajectory run_door_episode(DoorEpisode ep, const SimConfig& cfg, int* welds,
                                        Rng* noise_rng = nullptr, double noise = 0.0,
                                        int noise_hold = 1) {
  graph::GraphTrajectory tr;
  tr.dt = cfg.dt;
  DoorExpert expert;
  Dither dith{noise_rng, noise, noise_hold > 0 ? noise_hold : 1};
  DoorWorld& w = ep.world;
  tr.snapshots.push_back(graph::build_fully_connected(w.node_states()));
  int attach = 0;
  for (int t = 0; t < cfg.horizon; ++t) {
    bool was = w.attached;
    Vec2 u = expert.act(w) + dith.next();
    StepResult r = door_step(w, u);
    if (!was && w.attached) ++attach;
    tr.snapshots.push_back(graph::build_fully_connected(r.next));
    tr.controls.push_back(u);
    tr.contact_flags.push_back(r.contact);
  }
  if (welds) *welds = attach;
  return tr;
}

}  // namespace

std::vector<graph::GraphTrajectory> collect_dataset(const CollectOptions& opt,
                                                    const SimConfig& cfg) {
  if (opt.n_traj < 1) throw std::invalid_argument("collect_dataset: n_traj must be >= 1");
  if (opt.task < 1 || opt.task > 3) throw std::invalid_argument("collect_dataset: task must be 1..3");
  int pickups = opt.pickups > 0 ? opt.pickups : (opt.task == 2 ? 2 : 1);

  Rng rng(opt.seed);
  std::vector<graph::GraphTrajectory> out;
  out.reserve(opt.n_traj);
  while (int(out.size()) < opt.n_traj) {
    int welds = 0;
    graph::GraphTrajectory tr;
    if (opt.task == 3) {
      tr = run_door_episode(sample_door(rng, opt.distractors, cfg), cfg, &welds, &rng,
                            opt.control_noise, opt.control_noise_hold);
      if (welds != 1) continue;
    } else {
      const graph::Vec2* fg = opt.fix_goal ? &opt.goal : nullptr;
      tr = run_pickup_episode(sample_pickup(rng, pickups, opt.distractors, cfg, fg), cfg, &welds,
                              &rng, opt.control_noise, opt.control_noise_hold);
      if (welds != pickups) continue;
    }
    out.push_back(std::move(tr));
  }
  return out;
}

}  // namespace gdyn::sim
