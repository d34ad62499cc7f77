#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdyn/graph.hpp"
#include "gdyn/nn.hpp"

namespace gdyn {

/// Model variants from the ablation matrix. NoGimAug is NoGim trained on an
/// augmented dataset; it is a data choice, not an architecture, so it does
/// not appear here.
enum class Variant { GimTemp, GimNonTemp, NoGim, FullAb };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& s);

struct ModelConfig {
  int spatial_dim = 2;
  int embed_dim = 64;
  std::vector<int> mlp_hidden = {64, 64};
  int gru_hidden = 64;
  Variant variant = Variant::GimTemp;
  double d_th = 0.2;          // distance-prior threshold (m)
  double temperature = 0.5;   // Gumbel-softmax temperature
  double dt = 0.05;
  double invmass_max = 4.0;   // 1/kg
  double k_max = 0.0;         // 0 = solve from dt at init
  double c_max = 0.0;
  double equil_max = 10.0;    // soft clamp on the emitted equilibrium (m)

  int feat_dim() const { return 2 * spatial_dim; }
  // Number of head outputs per node: [1/m, k, c, xhat] per DOF, or the raw
  // (A row 2, B, o) entries per DOF for FullAb.
  int head_out_dim() const {
    return (variant == Variant::FullAb ? 8 : 4) * spatial_dim;
  }

  ad::MlpConfig edge_net() const { return {2 * embed_dim + 1, mlp_hidden, embed_dim}; }
  ad::MlpConfig node_net() const { return {2 * embed_dim, mlp_hidden, embed_dim}; }
  ad::MlpConfig edge_head_mlp() const { return {embed_dim, mlp_hidden, 2}; }  // GimNonTemp
  ad::MlpConfig edge_head_linear() const { return {gru_hidden, {}, 2}; }      // GimTemp
  ad::MlpConfig param_head() const { return {embed_dim, mlp_hidden, head_out_dim()}; }
  ad::GruConfig gru() const { return {embed_dim + 2, gru_hidden}; }

  bool has_inference() const { return variant != Variant::NoGim; }
  bool has_gru() const { return variant == Variant::GimTemp || variant == Variant::FullAb; }
};

/// Upper bounds (k_max, c_max) for the spring/damper ranges such that every
/// reachable per-DOF A matrix has spectral radius <= 1 at the given dt.
/// Positivity alone does not give discrete-time stability; the damping floor
/// c >= k*dt (see dynamics.hpp) supplies the coupling, and these bounds keep
/// |1 - c*dt/m| within range. Verified numerically over a parameter grid.
struct StableRanges {
  double k_max = 0.0;
  double c_max = 0.0;
};
StableRanges solve_stable_ranges(double dt, double invmass_max);

/// Full checkpointable model: architecture config + all trainable arrays.
struct Model {
  ModelConfig cfg;
  ad::ParamStore params;

  static Model init(ModelConfig cfg, uint64_t seed);
};

}  // namespace gdyn
