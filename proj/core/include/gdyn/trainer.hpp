#pragma once

#include <cstdint>
#include <vector>

#include "gdyn/dynamics.hpp"
#include "gdyn/model.hpp"

namespace gdyn::train {

struct TrainConfig {
  double lr = 1e-5;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int batch_size = 64;
  int epochs = 2000;
  double prior_weight = 1.0;  // lambda on the KL-to-prior term
  uint64_t seed = 0;
  int val_every = 1;
};

struct Dataset {
  std::vector<graph::GraphTrajectory> trajectories;
  std::vector<int> split;  // 0 = train, 1 = validation; parallel to trajectories

  std::vector<int> train_indices() const;
  std::vector<int> val_indices() const;
  /// Checks nonemptiness, shared dt and node-feature dimension.
  void validate() const;
  /// Tags the last `ceil(frac * n)` trajectories as validation.
  static Dataset with_split(std::vector<graph::GraphTrajectory> trajs, double val_fraction);
};

struct LossBreakdown {
  double total = 0.0;
  double pred = 0.0;  // sum_i ||x*_{1:T} - x^pred_{1:T}||_2
  double kl = 0.0;    // sum_{ij} KL[p || q] (unweighted)
};

/// Records the Eq.-style loss for one trajectory on the binder's tape:
/// teacher-forced one-step prediction error plus lambda * KL(p || prior).
/// Sampling mode Hard for training, Argmax for validation, Soft for
/// gradient checks.
ad::Var compute_loss_tape(ad::ParamBinder& binder, const Model& model,
                          const graph::GraphTrajectory& traj, const TrainConfig& cfg, Rng& rng,
                          ad::SampleMode mode, LossBreakdown* breakdown = nullptr);

/// Value-only convenience wrapper.
LossBreakdown compute_loss(const Model& model, const graph::GraphTrajectory& traj,
                           const TrainConfig& cfg, uint64_t sample_seed, ad::SampleMode mode);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double pred_term = 0.0;
  double kl_term = 0.0;
};

struct TrainResult {
  Model best;              // best-validation checkpoint
  Model last;              // final-epoch parameters
  std::vector<EpochStats> curve;
  double best_val = 0.0;
  int best_epoch = -1;
};

/// Mini-batch Adam over shuffled trajectories; per-trajectory losses are
/// averaged within a batch. Fully deterministic given cfg.seed. When
/// `warm_start` is given its parameters seed the optimization (with fresh
/// Adam moments), e.g. to continue a run at a lower learning rate; its
/// architecture must match `arch`.
TrainResult train(const Dataset& data, const ModelConfig& arch, const TrainConfig& cfg,
                  const Model* warm_start = nullptr);

}  // namespace gdyn::train
