#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "gdyn/graph.hpp"
#include "gdyn/model.hpp"
#include "gdyn/nn.hpp"

namespace gdyn::infer {

/// Index wiring for message passing over S stacked snapshots with a fixed
/// node count n and the full unordered edge set E = n(n-1)/2.
///
/// Row layouts (t-major):
///   node rows:      t*n + i
///   edge rows:      t*E + e          (unordered, e indexed i<j)
///   directed rows:  t*2E + 2e (+1)   (receiver i then receiver j)
struct GraphWiring {
  int n_nodes = 0, n_edges = 0, n_steps = 0;
  std::vector<std::pair<int, int>> edge_pairs;  // per snapshot, i < j
  std::vector<int> recv, send;                  // directed -> node rows
  std::vector<int> dir_edge;                    // directed -> edge rows
  std::vector<int> recv_node;                   // directed -> node index (0..n)

  static GraphWiring make(int n_nodes, int n_steps);
  int node_rows() const { return n_nodes * n_steps; }
  int edge_rows() const { return n_edges * n_steps; }
  int dir_rows() const { return 2 * n_edges * n_steps; }
};

/// Stacks node features ((n*S) x 2D) and pairwise distances (dir rows x 1)
/// from a trajectory's snapshots.
ad::Tensor stack_features(const std::vector<graph::GraphSnapshot>& snaps);
ad::Tensor stack_distances(const GraphWiring& w, const std::vector<graph::GraphSnapshot>& snaps);

struct MessagePassResult {
  ad::Var edge_embed;  // (S*E) x embed, symmetrized over the two directions
  ad::Var node_embed;  // (S*n) x embed
};

/// Two rounds of message passing with shared weights. Round 1 sees node
/// features zero-padded to the embedding width; round 2 substitutes the
/// round-1 node embeddings. `edge_activation` (edge rows x 1), when given,
/// scales every directed message by its edge's activation so inactive edges
/// pass nothing (used by the dynamics GNN on the pruned graph).
MessagePassResult message_pass(ad::ParamBinder& p, const ModelConfig& cfg,
                               const std::string& net_prefix, const GraphWiring& w,
                               ad::Var states, ad::Var dists,
                               std::optional<ad::Var> edge_activation = std::nullopt);

/// GRU over time per edge (weights shared across edges). Input at step t is
/// the edge embedding concatenated with the previous step's distribution
/// (uniform at t=0), matching the execution-time recurrence where observed
/// contact posteriors are substituted for that distribution. Returns the
/// per-edge categorical sequence p ((S*E) x 2, rows summing to 1).
ad::Var edge_distribution_seq(ad::ParamBinder& p, const ModelConfig& cfg, const GraphWiring& w,
                              ad::Var edge_embed);

/// GimNonTemp head: per-step feedforward distribution from the current edge
/// embedding only.
ad::Var edge_distribution_ff(ad::ParamBinder& p, const ModelConfig& cfg, ad::Var edge_embed);

/// One-hot activation samples from distributions p ((rows) x 2): hard
/// straight-through draws in training, argmax in eval mode.
ad::Var sample_activations(ad::Tape& t, ad::Var p, double temperature, Rng& rng,
                           ad::SampleMode mode);

/// q = softmax([d_th - d, d - d_th]); active-probability > 0.5 iff d < d_th.
std::array<double, 2> distance_prior(double d, double d_th);

/// Distance-prior rows for a whole wiring (edge rows x 2), for the KL term.
ad::Tensor distance_prior_rows(const GraphWiring& w,
                               const std::vector<graph::GraphSnapshot>& snaps, double d_th);

// ---- value-only eval path (single snapshot, used by rollout/control) ----
struct MessagePassEval {
  ad::Tensor edge_embed;  // E x embed
  ad::Tensor node_embed;  // n x embed
};
MessagePassEval message_pass_eval(const ad::ParamStore& store, const ModelConfig& cfg,
                                  const std::string& net_prefix, const GraphWiring& w,
                                  const ad::Tensor& states, const ad::Tensor& dists,
                                  const ad::Tensor* edge_activation = nullptr);

}  // namespace gdyn::infer
