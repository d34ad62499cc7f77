#pragma once

#include <vector>

#include "gdyn/graph.hpp"
#include "gdyn/rng.hpp"

namespace gdyn::sim {

struct SimConfig {
  double dt = 0.05;
  int horizon = 200;           // 10 s of simulation
  double grasp_radius = 0.2;   // weld / attach distance (m)
  double workspace_half = 1.0; // workspace is 2 m x 2 m, centered at origin
  double mass = 1.0;           // every point body (kg)
  double kp = 10.0, kd = 4.0;  // scripted PD expert gains
  double switch_radius = 0.1;  // waypoint switch distance (m)
  double goal_radius = 0.1;
  double door_length = 1.0;
  double min_separation = 0.3;      // sampled bodies start at least this far apart
  double distractor_clearance = 0.5; // min distance from the expert path
  // The gripper starts already moving (uniform in the disc of this radius,
  // m/s): pickups are dynamic, and a never-static gripper leaves "velocity
  // exactly zero" as an unambiguous signature of a free, unactuated body.
  double gripper_v0 = 1.0;
};

/// One simulator tick: next states plus per-pair contact flags in the
/// fully-connected (i < j) edge order shared with the learned model.
struct StepResult {
  std::vector<graph::NodeState> next;
  std::vector<bool> contact;
  graph::Vec2 control{0.0, 0.0};
};

/// Point masses with inelastic grasping. Body 0 is the actuated gripper.
/// Bodies in the same welded set share velocity and move rigidly; welded
/// sets only grow.
struct PickupWorld {
  SimConfig cfg;
  std::vector<graph::NodeState> bodies;
  std::vector<int> weld_id;  // welded-set label per body

  int n_nodes() const { return int(bodies.size()); }
  bool same_set(int i, int j) const { return weld_id[i] == weld_id[j]; }
  std::vector<bool> contact_flags() const;
};

PickupWorld make_pickup_world(std::vector<graph::NodeState> bodies, SimConfig cfg = {});

/// Semi-implicit Euler at cfg.dt. The force acts on the gripper's welded
/// set; a weld fires when an unwelded body comes within grasp_radius of the
/// gripper, merging with momentum-conserving shared velocity.
StepResult step(PickupWorld& w, graph::Vec2 force);

/// Rigid rod on a frictionless hinge at the origin plus a free gripper.
/// Node order for the graph view: 0 = gripper, 1 = handle point, then any
/// static distractors.
struct DoorWorld {
  SimConfig cfg;
  double theta = 0.0, theta_dot = 0.0;
  graph::NodeState gripper;
  bool attached = false;
  double goal_angle = 0.0;
  std::vector<graph::NodeState> distractors;

  double rod_inertia() const;    // m L^2 / 3 about the hinge
  double total_inertia() const;  // + m_gripper L^2 once attached
  graph::Vec2 handle_position() const;
  graph::Vec2 handle_velocity() const;
  int n_nodes() const { return 2 + int(distractors.size()); }
  std::vector<graph::NodeState> node_states() const;
  std::vector<bool> contact_flags() const;
};

/// While detached the gripper is a free mass; attachment fires within
/// grasp_radius of the handle, conserving angular momentum about the hinge.
/// Attached, the gripper force becomes hinge torque and the gripper state
/// tracks the handle point.
StepResult door_step(DoorWorld& w, graph::Vec2 force);

// ---- scripted episodes and data collection ----

struct PickupEpisode {
  PickupWorld world;
  std::vector<int> targets;  // body indices to grasp, in order
  graph::Vec2 goal{0.0, 0.0};
};

struct DoorEpisode {
  DoorWorld world;
};

/// Samples gripper/targets/goal uniformly in the workspace with pairwise
/// separation, and distractors clear of the straight-line expert path.
/// `fixed_goal` pins the goal instead of sampling it (expert demo sets for
/// cost learning share one goal).
PickupEpisode sample_pickup(Rng& rng, int n_targets, int n_distractors, const SimConfig& cfg = {},
                            const graph::Vec2* fixed_goal = nullptr);
DoorEpisode sample_door(Rng& rng, int n_distractors, const SimConfig& cfg = {});

/// PD waypoint follower: chase each ungrasped target in turn, then carry the
/// payload to the goal and hold.
class PickupExpert {
 public:
  PickupExpert(std::vector<int> targets, graph::Vec2 goal) : targets_(std::move(targets)), goal_(goal) {}
  graph::Vec2 act(const PickupWorld& w);

 private:
  std::vector<int> targets_;
  graph::Vec2 goal_;
};

/// PD to the handle, then angle-space PD torque toward the goal angle.
class DoorExpert {
 public:
  graph::Vec2 act(const DoorWorld& w);
};

struct CollectOptions {
  int task = 1;  // 1 = single pickup, 2 = double pickup, 3 = door
  int n_traj = 40;
  uint64_t seed = 0;
  int distractors = 0;
  int pickups = 0;  // 0 = task default (1 or 2)
  bool fix_goal = false;  // pin every episode's goal (expert demo sets)
  graph::Vec2 goal{0.5, 0.5};
  // Uniform dither (N) added to the expert force. Pure PD controls are
  // functions of the state, so mass is identifiable from them only at
  // transients; a sustained excitation decorrelates control from state and
  // makes the inertial response observable along the whole trajectory.
  // The dither vector is resampled every control_noise_hold steps; holding
  // it produces sizable velocity excursions (fly-bys past static objects)
  // instead of a near-cancelling random walk.
  double control_noise = 0.0;
  int control_noise_hold = 10;
};

/// Scripted-expert dataset. Deterministic in the seed; resamples any episode
/// whose weld count differs from the number of intended targets (distractor
/// interference), so the weld structure is exact by construction.
std::vector<graph::GraphTrajectory> collect_dataset(const CollectOptions& opt,
                                                    const SimConfig& cfg = {});

/// Abstract environment used by the controller: observe node states, apply a
/// gripper force, read back contact flags.
class Env {
 public:
  virtual ~Env() = default;
  virtual std::vector<graph::NodeState> observe() const = 0;
  virtual StepResult step_env(graph::Vec2 force) = 0;
  virtual int n_nodes() const = 0;
};

class PickupEnv : public Env {
 public:
  explicit PickupEnv(PickupWorld w) : world_(std::move(w)) {}
  std::vector<graph::NodeState> observe() const override { return world_.bodies; }
  StepResult step_env(graph::Vec2 force) override { return step(world_, force); }
  int n_nodes() const override { return world_.n_nodes(); }
  const PickupWorld& world() const { return world_; }

 private:
  PickupWorld world_;
};

class DoorEnv : public Env {
 public:
  explicit DoorEnv(DoorWorld w) : world_(std::move(w)) {}
  std::vector<graph::NodeState> observe() const override { return world_.node_states(); }
  StepResult step_env(graph::Vec2 force) override { return door_step(world_, force); }
  int n_nodes() const override { return world_.n_nodes(); }
  const DoorWorld& world() const { return world_; }

 private:
  DoorWorld world_;
};

}  // namespace gdyn::sim
