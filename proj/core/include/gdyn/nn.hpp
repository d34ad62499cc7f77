#pragma once

#include <map>
#include <string>
#include <vector>

#include "gdyn/rng.hpp"
#include "gdyn/tape.hpp"
#include "gdyn/tensor.hpp"

namespace gdyn::ad {

/// Named parameter tensors plus Adam moment buffers. Names are unique by
/// construction (std::map); iteration order is the name order, which keeps
/// gradient accumulation and serialization deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init);
  bool has(const std::string& name) const { return params_.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  Tensor& grad(const std::string& name);

  void zero_grads();
  bool grads_populated() const { return grads_live_; }
  void mark_grads_populated() { grads_live_ = true; }
  void accumulate_grad(const std::string& name, const Tensor& g, double scale = 1.0);

  /// Bias-corrected Adam update on every parameter; increments the step
  /// counter and clears the populated flag.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  long step_count() const { return step_; }
  void reset_optimizer();

  const std::map<std::string, Tensor>& params() const { return params_; }
  std::map<std::string, Tensor>& params_mutable() { return params_; }

 private:
  std::map<std::string, Tensor> params_, grads_, m_, v_;
  long step_ = 0;
  bool grads_live_ = false;
};

/// Binds ParamStore tensors onto a Tape as leaves and collects their
/// gradients back after backward().
class ParamBinder {
 public:
  ParamBinder(Tape& tape, ParamStore& store) : tape_(tape), store_(store) {}
  Var operator()(const std::string& name);
  /// Adds tape gradients into the store (scaled), in name-bind order.
  void collect(double scale = 1.0);
  Tape& tape() { return tape_; }
  ParamStore& store() { return store_; }

 private:
  Tape& tape_;
  ParamStore& store_;
  std::vector<std::pair<std::string, Var>> bound_;
};

enum class Act { Linear, Relu, Tanh, Sigmoid };

struct MlpConfig {
  int in = 0;
  std::vector<int> hidden;  // paper default: {64, 64}
  int out = 0;
  Act hidden_act = Act::Relu;
  Act out_act = Act::Linear;
};

/// Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] init for W{i}/b{i} under `prefix`.
void init_mlp(ParamStore& store, const std::string& prefix, const MlpConfig& cfg, Rng& rng);

/// x is (batch x in); returns (batch x out). Throws on input dim mismatch.
Var mlp_forward(ParamBinder& p, const std::string& prefix, const MlpConfig& cfg, Var x);

struct GruConfig {
  int in = 0;
  int hidden = 0;
};

void init_gru(ParamStore& store, const std::string& prefix, const GruConfig& cfg, Rng& rng);

/// Standard GRU cell (reset/update/candidate gates, PyTorch layout):
///   r = sig(x Wir + br_i + h Whr + br_h)
///   z = sig(x Wiz + bz_i + h Whz + bz_h)
///   n = tanh(x Win + bn_i + r * (h Whn + bn_h))
///   h' = (1 - z) * n + z * h
Var gru_cell_forward(ParamBinder& p, const std::string& prefix, const GruConfig& cfg, Var x, Var h);

// Value-only forward passes sharing the same parameters; used on the
// rollout/control path where no gradients are needed. Kept numerically
// identical to the tape versions (asserted in tests).
Tensor mlp_eval(const ParamStore& store, const std::string& prefix, const MlpConfig& cfg,
                const Tensor& x);
Tensor gru_cell_eval(const ParamStore& store, const std::string& prefix, const GruConfig& cfg,
                     const Tensor& x, const Tensor& h);

}  // namespace gdyn::ad
