#pragma once

#include <Eigen/Dense>
#include <array>
#include <limits>
#include <vector>

#include "gdyn/dynamics.hpp"
#include "gdyn/sim2d.hpp"

namespace gdyn::ctrl {

/// Stacked-state layout: node i occupies entries [4i..4i+3] as
/// [qx, qy, vx, vy]; the augmented form appends a constant-1 coordinate.
Eigen::VectorXd stack_state(const std::vector<graph::NodeState>& nodes);
std::vector<graph::NodeState> unstack_state(const Eigen::VectorXd& x);
Eigen::VectorXd augment(const Eigen::VectorXd& x);

/// Block-diagonal joint system over all nodes with the per-node offsets
/// absorbed into the augmented column; every node sees the shared 2-D
/// control through its own B.
struct JointAffineSystem {
  Eigen::MatrixXd A;  // (4n+1) x (4n+1)
  Eigen::MatrixXd B;  // (4n+1) x 2
};
JointAffineSystem assemble_joint(const std::vector<dynmod::AffineSystem>& per_node);

struct QuadCost {
  Eigen::MatrixXd Q;     // 4n x 4n, PSD
  Eigen::MatrixXd R;     // 2 x 2, PD
  Eigen::VectorXd goal;  // 4n

  void validate() const;  // throws unless Q is PSD and R is PD
  /// (x - g)^T Q (x - g) rewritten over the augmented state.
  Eigen::MatrixXd augmented_q() const;
  double state_cost(const Eigen::VectorXd& x) const;
  double control_cost(const Eigen::VectorXd& u) const;
};

/// Evaluation cost for pickup: target position tracks the goal, a coupling
/// term pulls the gripper toward the target (so planning discovers the
/// grasp), light velocity damping, cheap controls.
QuadCost default_pickup_cost(int n_nodes, int target_node, graph::Vec2 goal);
/// Door variant: handle node tracks the goal-angle handle point, gripper
/// couples to the handle.
QuadCost default_door_cost(int n_nodes, double goal_angle, double door_length);

struct GainSchedule {
  std::vector<Eigen::MatrixXd> K;  // 2 x (4n+1); policy u_t = -K_t x~_t
};

/// Time-varying Riccati recursion on the augmented system; the per-step cost
/// is charged at t = 0..H-1 and the terminal state pays state_cost again.
GainSchedule lqr_backward(const std::vector<JointAffineSystem>& systems, const QuadCost& cost);

/// Planning-side dynamics: resettable to a rebased initial condition and
/// steppable with per-step affine linearizations.
class DynModel {
 public:
  virtual ~DynModel() = default;
  virtual int n_nodes() const = 0;
  /// Moves the reset point to the observed node states (internal latent
  /// state, e.g. the GRU, is preserved).
  virtual void rebase(const std::vector<graph::NodeState>& obs) = 0;
  virtual void reset() = 0;
  virtual std::vector<graph::NodeState> current() const = 0;
  virtual dynmod::StepRecord advance(graph::Vec2 u) = 0;
  /// Execution-side hook: advance latent state along the executed step,
  /// sync to the observed outcome and fold in the contact posterior.
  /// Returns the model's activation predictions for this step (empty when
  /// the model has none).
  virtual std::vector<bool> observe_step(graph::Vec2 u,
                                         const std::vector<graph::NodeState>& obs_next,
                                         const std::vector<bool>& contacts, double eps,
                                         bool posterior) {
    (void)u; (void)obs_next; (void)contacts; (void)eps; (void)posterior;
    return {};
  }
};

/// The learned model as planner: Argmax activations, GRU carried across
/// plans and execution.
class LearnedDyn : public DynModel {
 public:
  LearnedDyn(const Model& model, const std::vector<graph::NodeState>& init);
  int n_nodes() const override { return stepper_.wiring().n_nodes; }
  void rebase(const std::vector<graph::NodeState>& obs) override;
  void reset() override { state_ = base_; }
  std::vector<graph::NodeState> current() const override { return state_.nodes; }
  dynmod::StepRecord advance(graph::Vec2 u) override;
  std::vector<bool> observe_step(graph::Vec2 u, const std::vector<graph::NodeState>& obs_next,
                                 const std::vector<bool>& contacts, double eps,
                                 bool posterior) override;
  const dynmod::ModelState& base_state() const { return base_; }

 private:
  dynmod::ModelStepper stepper_;
  dynmod::ModelState base_, state_;
};

/// Fixed time-invariant per-node affine dynamics (test oracle).
class LinearDyn : public DynModel {
 public:
  LinearDyn(std::vector<dynmod::AffineSystem> systems, std::vector<graph::NodeState> init);
  int n_nodes() const override { return int(systems_.size()); }
  void rebase(const std::vector<graph::NodeState>& obs) override { base_ = obs; reset(); }
  void reset() override { nodes_ = base_; }
  std::vector<graph::NodeState> current() const override { return nodes_; }
  dynmod::StepRecord advance(graph::Vec2 u) override;

 private:
  std::vector<dynmod::AffineSystem> systems_;
  std::vector<graph::NodeState> base_, nodes_;
};

/// The simulator itself as planner (controller-plumbing oracle).
class SimDyn : public DynModel {
 public:
  explicit SimDyn(const sim::PickupEnv& env) : env_(&env), base_(env.world()) { reset(); }
  int n_nodes() const override { return base_.n_nodes(); }
  void rebase(const std::vector<graph::NodeState>& obs) override;
  void reset() override { world_ = base_; }
  std::vector<graph::NodeState> current() const override { return world_.bodies; }
  dynmod::StepRecord advance(graph::Vec2 u) override;

 private:
  const sim::PickupEnv* env_;
  sim::PickupWorld base_, world_;
};

struct IlqrOptions {
  int max_iters = 50;
  double tol = 1e-6;
  int max_halvings = 10;
  // Per-component actuator bound, applied inside every rollout (forward pass
  // and closed-loop execution). Keeps the optimizer from commanding forces
  // that drive the state far outside the model's training regime.
  double u_max = std::numeric_limits<double>::infinity();
};

struct IlqrResult {
  std::vector<graph::Vec2> controls;
  std::vector<std::vector<graph::NodeState>> states;  // nominal, length H+1
  GainSchedule gains;
  double cost = 0.0;
  int iterations = 0;  // accepted control updates
  bool converged = false;
};

IlqrResult ilqr(DynModel& dyn, const QuadCost& cost, int horizon,
                std::vector<graph::Vec2> init_controls = {}, const IlqrOptions& opt = {});

/// Renormalized elementwise product; throws on a degenerate (all-zero)
/// posterior.
std::array<double, 2> posterior_update(const std::array<double, 2>& p,
                                       const std::array<double, 2>& c);
/// contact -> [1-eps, eps], no contact -> [eps, 1-eps].
std::vector<std::array<double, 2>> contact_likelihood(const std::vector<bool>& contacts,
                                                      double eps);

struct MpcOptions {
  int t_lqr = 5;
  int plan_horizon_cap = 0;  // 0 = plan to the end of the episode
  bool posterior_updates = true;
  bool closed_loop = true;  // execute u = -K x~ from the observed state
  double contact_eps = 0.01;
  IlqrOptions ilqr;
};

struct PlanRecord {
  int t0 = 0;
  std::vector<std::vector<graph::NodeState>> predicted;  // nominal from the replan
};

struct MpcResult {
  std::vector<std::vector<graph::NodeState>> executed;  // 0..T
  std::vector<graph::Vec2> controls;                    // 0..T-1
  std::vector<std::vector<bool>> pred_active;           // per step; may be empty rows
  std::vector<std::vector<bool>> contacts;              // env flags per step
  std::vector<PlanRecord> plans;
  bool aborted = false;
};

/// Receding-horizon loop: replan every t_lqr steps from the observed state,
/// execute the gain schedule, and feed observed contacts back through the
/// planner's posterior hook. Throws on a non-divisible horizon.
MpcResult mpc_run(sim::Env& env, DynModel& planner, const QuadCost& cost, int total_steps,
                  const MpcOptions& opt = {});

/// RMSE over all node-state entries of two aligned state sequences.
double rmse_states(const std::vector<std::vector<graph::NodeState>>& a,
                   const std::vector<std::vector<graph::NodeState>>& b);
/// Non-overlapping N-step windows aligned to replans: each window at
/// t0 = 0, N, 2N, ... compares the nominal plan against the executed states.
double n_step_error(const MpcResult& log, int n);
/// Fraction of (edge, step) pairs where the model's activation matches the
/// observed contact flag, over the same N-step windows.
double edge_accuracy(const MpcResult& log, int n);
/// Success: target welded to the gripper and inside the goal region at some
/// step.
bool pickup_success(const MpcResult& log, int target_node, graph::Vec2 goal, double radius);

}  // namespace gdyn::ctrl
