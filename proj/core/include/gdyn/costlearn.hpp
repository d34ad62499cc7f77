#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gdyn/control.hpp"
#include "gdyn/trainer.hpp"

namespace gdyn::cost {

/// Learned quadratic cost: Q = L L^T + eps I (PSD by construction), R =
/// exp(log_r) I (PD by construction).
struct CostParams {
  int state_dim = 0;           // unaugmented stacked-state size
  std::vector<double> l_packed;  // n(n+1)/2 lower-triangle entries
  double log_r = -4.6051701859880914;  // log 0.01
  double eps = 1e-6;

  Eigen::MatrixXd q() const;
  Eigen::MatrixXd r() const;
  /// QuadCost with this (Q, R) and a fresh goal x_f.
  ctrl::QuadCost with_goal(const Eigen::VectorXd& goal) const;
};

/// Expert demonstrations reduced to stacked vectors plus the frozen model's
/// per-step linearizations along the expert (teacher-forced).
struct DemoSet {
  struct Demo {
    std::vector<Eigen::VectorXd> states;             // 0..T, unaugmented
    std::vector<Eigen::Vector2d> controls;           // 0..T-1
    std::vector<ctrl::JointAffineSystem> systems;    // 0..T-1
  };
  std::vector<Demo> demos;
  Eigen::VectorXd goal;  // shared x_f

  int state_dim() const { return demos.empty() ? 0 : int(demos[0].states[0].size()); }
  void validate() const;
};

/// Node indices that stay fully inactive: unactuated and never on an active
/// inferred edge at any step of any demo (argmax activations, teacher
/// forced). Node 0 is always kept.
std::vector<int> isolated_nodes(const std::vector<graph::GraphTrajectory>& demos,
                                const Model& model);

/// Drops the isolated nodes from every snapshot/contact row. `kept` (if
/// given) receives the surviving original indices. Throws if nothing but
/// the gripper survives.
std::vector<graph::GraphTrajectory> remove_isolated_nodes(
    const std::vector<graph::GraphTrajectory>& demos, const Model& model,
    std::vector<int>* kept = nullptr);

/// Teacher-forced linearizations of each demo under the frozen model plus
/// stacked expert states/controls. The goal is the target node's final
/// expert position (zero velocity), replicated for the gripper.
DemoSet build_demoset(const std::vector<graph::GraphTrajectory>& demos, const Model& model,
                      int target_node, graph::Vec2 goal_pos);

struct CostLearnConfig {
  double lr = 0.05;
  int epochs = 120;
  double ctrl_weight = 0.1;  // weight of the control-MSE term
  double val_fraction = 0.2;
  double min_lr = 1e-8;
  uint64_t seed = 0;
};

struct CostLearnResult {
  CostParams params;       // best-validation parameters
  std::vector<double> train_curve;
  double best_val = 0.0;
  int rejected_steps = 0;
};

/// Imitation loss for one demo under the current parameters: differentiable
/// Riccati recursion + closed-loop rollout from the expert's start, state
/// MSE + ctrl_weight * control MSE against the expert.
double imitation_loss(const CostParams& cp, const DemoSet::Demo& demo,
                      const Eigen::VectorXd& goal, double ctrl_weight);

/// Adam on (L, log_r) through the Riccati recursion and rollout. Steps that
/// increase the training loss (or produce non-finite values) are rejected:
/// parameters and moments roll back and the learning rate halves, so the
/// accepted-loss sequence is non-increasing.
CostLearnResult learn_cost(const DemoSet& demos, const CostLearnConfig& cfg);

/// Runs MPC with the learned model under the learned cost and counts
/// goal-region successes (object welded and within `radius` of the goal at
/// some step). `sample_goal` draws a fresh goal per episode (unseen-goal
/// generalization); otherwise `fixed_goal` is reused.
struct SuccessOptions {
  int episodes = 10;
  uint64_t seed = 0;
  double radius = 0.1;
  bool sample_goal = false;
  graph::Vec2 fixed_goal{0.5, 0.5};
  ctrl::MpcOptions mpc;
  sim::SimConfig sim;
};
double evaluate_success(const Model& model, const CostParams& cp, const SuccessOptions& opt);

}  // namespace gdyn::cost
