#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "gdyn/inference.hpp"
#include "gdyn/model.hpp"

namespace gdyn::dynmod {

/// Spring-mass-damper parameters for one degree of freedom.
struct DofParams {
  double inv_mass = 0.0;     // 1/kg, in (0, invmass_max]
  double stiffness = 0.0;    // N/m, in [0, k_max]
  double damping = 0.0;      // N*s/m, >= stiffness*dt (discrete-time stability floor)
  double equilibrium = 0.0;  // m
};

struct NodeDynParams {
  std::vector<DofParams> dof;  // size = spatial_dim
};

/// x' = A x + B u + o for one DOF with x = [q, qdot]. Row 0 is the exact
/// integrator row [1, dt | 0 | 0].
struct DofAffine {
  double a00 = 1, a01 = 0, a10 = 0, a11 = 1;
  double b0 = 0, b1 = 0;
  double o0 = 0, o1 = 0;
  double spectral_radius() const;
};

struct AffineSystem {
  std::vector<DofAffine> dof;
  double dt = 0.0;
};

/// Squashes raw head outputs (4 per DOF) into the stable parameter ranges:
/// scaled sigmoids for 1/m and k, a damping floor of k*dt below a scaled
/// sigmoid for c, and a wide tanh soft clamp for the equilibrium.
NodeDynParams squash_params(const ModelConfig& cfg, const double* raw);

DofAffine assemble_affine_dof(const DofParams& p, double dt);
AffineSystem assemble_affine(const NodeDynParams& p, double dt);

/// FullAb ablation: raw head outputs (8 per DOF) taken as unconstrained
/// A = I + dt*M, B = dt*[.], o = dt*[.]; no stability guarantee.
AffineSystem assemble_full_ab(const ModelConfig& cfg, const double* raw, double dt);

graph::NodeState predict_next(const graph::NodeState& x, graph::Vec2 u, const AffineSystem& sys);

/// Tape path used by the trainer: teacher-forced next-state prediction for a
/// batch of node rows. `raw_head` is (N x head_out), `states` (N x 2D),
/// `controls` (N x D); returns (N x 2D) predictions.
ad::Var predict_next_rows(ad::Tape& t, const ModelConfig& cfg, ad::Var raw_head, ad::Var states,
                          ad::Var controls);

// ---- closed-loop model stepping (value path) ----

/// Everything the learned model carries along a rollout.
struct ModelState {
  std::vector<graph::NodeState> nodes;
  ad::Tensor gru_hidden;  // E x gru_hidden (GimTemp/FullAb only)
  ad::Tensor prev_p;      // E x 2; posterior-adjusted during execution
};

struct StepRecord {
  std::vector<std::array<double, 2>> p;  // edge distributions at this step
  std::vector<bool> active;              // sampled/argmax activations
  std::vector<AffineSystem> systems;     // per node
  std::vector<graph::NodeState> next;
};

class ModelStepper {
 public:
  ModelStepper(const Model& model, int n_nodes);

  ModelState initial_state(const std::vector<graph::NodeState>& nodes) const;

  /// Infers edge distributions from the current state (advancing the GRU),
  /// selects activations, assembles per-node affine systems and advances all
  /// nodes under the shared control. `rng` may be null in Argmax mode.
  StepRecord step(ModelState& s, graph::Vec2 u, ad::SampleMode mode, Rng* rng) const;

  /// Replaces the step's distribution with the renormalized product
  /// p*likelihood, so the next GRU input sees the observed contact evidence.
  void apply_posterior(ModelState& s, const std::vector<std::array<double, 2>>& likelihood) const;

  const infer::GraphWiring& wiring() const { return wiring_; }
  const Model& model() const { return model_; }

 private:
  const Model& model_;
  infer::GraphWiring wiring_;
};

struct RolloutResult {
  std::vector<std::vector<graph::NodeState>> states;         // t = 0..H
  std::vector<std::vector<std::array<double, 2>>> edge_p;    // t = 0..H-1
  std::vector<std::vector<bool>> activations;                // t = 0..H-1
  std::vector<std::vector<AffineSystem>> systems;            // t = 0..H-1, per node
};

/// Optional per-step contact likelihood injection, mirroring the execution
/// posterior update; returns nullopt when no observation is available.
using PosteriorHook =
    std::function<std::optional<std::vector<std::array<double, 2>>>(int step)>;

RolloutResult rollout(const Model& model, const std::vector<graph::NodeState>& init,
                      const std::vector<graph::Vec2>& controls, ad::SampleMode mode, Rng* rng,
                      const PosteriorHook& hook = nullptr);

}  // namespace gdyn::dynmod
