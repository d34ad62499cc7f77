#include "gdyn/inference.hpp"

#include <cmath>

namespace gdyn::infer {

using ad::Tensor;
using ad::Var;

GraphWiring GraphWiring::make(int n_nodes, int n_steps) {
  if (n_nodes < 2) throw std::invalid_argument("GraphWiring: need >= 2 nodes");
  if (n_steps < 1) throw std::invalid_argument("GraphWiring: need >= 1 step");
  GraphWiring w;
  w.n_nodes = n_nodes;
  w.n_steps = n_steps;
  for (int i = 0; i < n_nodes; ++i)
    for (int j = i + 1; j < n_nodes; ++j) w.edge_pairs.emplace_back(i, j);
  w.n_edges = int(w.edge_pairs.size());
  w.recv.reserve(w.dir_rows());
  for (int t = 0; t < n_steps; ++t)
    for (int e = 0; e < w.n_edges; ++e) {
      auto [i, j] = w.edge_pairs[e];
      // receiver i, sender j
      w.recv.push_back(t * n_nodes + i);
      w.send.push_back(t * n_nodes + j);
      w.dir_edge.push_back(t * w.n_edges + e);
      w.recv_node.push_back(i);
      // receiver j, sender i
      w.recv.push_back(t * n_nodes + j);
      w.send.push_back(t * n_nodes + i);
      w.dir_edge.push_back(t * w.n_edges + e);
      w.recv_node.push_back(j);
    }
  return w;
}

Tensor stack_features(const std::vector<graph::GraphSnapshot>& snaps) {
  int n = snaps[0].num_nodes();
  Tensor x(int(snaps.size()) * n, 2 * graph::kSpatialDim);
  int r = 0;
  for (const auto& s : snaps)
    for (const auto& node : s.nodes) {
      auto f = node.features();
      for (size_t c = 0; c < f.size(); ++c) x.at(r, int(c)) = f[c];
      ++r;
    }
  return x;
}

Tensor stack_distances(const GraphWiring& w, const std::vector<graph::GraphSnapshot>& snaps) {
  Tensor d(w.dir_rows(), 1);
  int r = 0;
  for (const auto& s : snaps) {
    for (int e = 0; e < w.n_edges; ++e) {
      auto [i, j] = w.edge_pairs[e];
      double dist = graph::norm(s.nodes[i].position - s.nodes[j].position);
      d.d[r++] = dist;
      d.d[r++] = dist;
    }
  }
  return d;
}

MessagePassResult message_pass(ad::ParamBinder& p, const ModelConfig& cfg,
                               const std::string& net_prefix, const GraphWiring& w,
                               Var states, Var dists,
                               std::optional<Var> edge_activation) {
  ad::Tape& t = p.tape();
  if (t.val(states).rows != w.node_rows() || t.val(dists).rows != w.dir_rows())
    throw std::invalid_argument("message_pass: wiring/row mismatch");

  std::optional<Var> dir_act;
  if (edge_activation) dir_act = ad::gather_rows(t, *edge_activation, w.dir_edge);

  // Round 1 node representation: features zero-padded to the embedding width.
  Var x = ad::concat_cols(
      t, {states, t.constant(Tensor(w.node_rows(), cfg.embed_dim - t.val(states).cols))});

  Var edge_out{};
  for (int round = 0; round < 2; ++round) {
    Var ein = ad::concat_cols(t, {ad::gather_rows(t, x, w.recv), ad::gather_rows(t, x, w.send), dists});
    Var msg = ad::mlp_forward(p, net_prefix + ".edge", cfg.edge_net(), ein);
    if (dir_act) msg = ad::mul_colvec(t, msg, *dir_act);
    Var agg = ad::scatter_add_rows(t, msg, w.recv, w.node_rows());
    x = ad::mlp_forward(p, net_prefix + ".node", cfg.node_net(), ad::concat_cols(t, {x, agg}));
    if (round == 1) edge_out = ad::scatter_add_rows(t, msg, w.dir_edge, w.edge_rows());
  }
  return {edge_out, x};
}

Var edge_distribution_seq(ad::ParamBinder& p, const ModelConfig& cfg, const GraphWiring& w,
                          Var edge_embed) {
  ad::Tape& t = p.tape();
  if (w.n_steps < 1 || t.val(edge_embed).rows != w.edge_rows())
    throw std::invalid_argument("edge_distribution_seq: empty or mismatched sequence");
  Var h = t.constant(Tensor(w.n_edges, cfg.gru_hidden));
  Var prev = t.constant(Tensor(w.n_edges, 2, 0.5));
  std::vector<Var> ps;
  ps.reserve(w.n_steps);
  for (int step = 0; step < w.n_steps; ++step) {
    Var m = ad::slice_rows(t, edge_embed, step * w.n_edges, (step + 1) * w.n_edges);
    Var in = ad::concat_cols(t, {m, prev});
    h = ad::gru_cell_forward(p, "inf.gru", cfg.gru(), in, h);
    Var logits = ad::mlp_forward(p, "inf.head", cfg.edge_head_linear(), h);
    Var pt = ad::softmax_rows(t, logits);
    ps.push_back(pt);
    prev = pt;
  }
  return ad::concat_rows(t, ps);
}

Var edge_distribution_ff(ad::ParamBinder& p, const ModelConfig& cfg, Var edge_embed) {
  ad::Tape& t = p.tape();
  Var logits = ad::mlp_forward(p, "inf.head", cfg.edge_head_mlp(), edge_embed);
  return ad::softmax_rows(t, logits);
}

Var sample_activations(ad::Tape& t, Var p, double temperature, Rng& rng, ad::SampleMode mode) {
  return ad::gumbel_softmax(t, ad::log_(t, p), temperature, rng, mode);
}

std::array<double, 2> distance_prior(double d, double d_th) {
  if (d < 0.0) throw std::invalid_argument("distance_prior: negative distance");
  Tensor logits = Tensor::row({d_th - d, d - d_th});
  Tensor q = ad::softmax(logits);
  return {q.d[0], q.d[1]};
}

Tensor distance_prior_rows(const GraphWiring& w, const std::vector<graph::GraphSnapshot>& snaps,
                           double d_th) {
  Tensor q(w.edge_rows(), 2);
  int r = 0;
  for (const auto& s : snaps)
    for (int e = 0; e < w.n_edges; ++e) {
      auto [i, j] = w.edge_pairs[e];
      auto pr = distance_prior(graph::norm(s.nodes[i].position - s.nodes[j].position), d_th);
      q.at(r, 0) = pr[0];
      q.at(r, 1) = pr[1];
      ++r;
    }
  return q;
}

MessagePassEval message_pass_eval(const ad::ParamStore& store, const ModelConfig& cfg,
                                  const std::string& net_prefix, const GraphWiring& w,
                                  const Tensor& states, const Tensor& dists,
                                  const Tensor* edge_activation) {
  if (w.n_steps != 1) throw std::invalid_argument("message_pass_eval: single snapshot only");
  Tensor x(w.n_nodes, cfg.embed_dim);
  for (int i = 0; i < w.n_nodes; ++i)
    for (int c = 0; c < states.cols; ++c) x.at(i, c) = states.at(i, c);

  Tensor edge_out;
  for (int round = 0; round < 2; ++round) {
    Tensor ein(w.dir_rows(), 2 * cfg.embed_dim + 1);
    for (int r = 0; r < w.dir_rows(); ++r) {
      for (int c = 0; c < cfg.embed_dim; ++c) {
        ein.at(r, c) = x.at(w.recv[r], c);
        ein.at(r, cfg.embed_dim + c) = x.at(w.send[r], c);
      }
      ein.at(r, 2 * cfg.embed_dim) = dists.d[r];
    }
    Tensor msg = ad::mlp_eval(store, net_prefix + ".edge", cfg.edge_net(), ein);
    if (edge_activation)
      for (int r = 0; r < msg.rows; ++r) {
        double a = edge_activation->d[w.dir_edge[r]];
        for (int c = 0; c < msg.cols; ++c) msg.at(r, c) *= a;
      }
    Tensor xin(w.n_nodes, 2 * cfg.embed_dim);
    for (int i = 0; i < w.n_nodes; ++i)
      for (int c = 0; c < cfg.embed_dim; ++c) xin.at(i, c) = x.at(i, c);
    for (int r = 0; r < msg.rows; ++r)
      for (int c = 0; c < msg.cols; ++c) xin.at(w.recv[r], cfg.embed_dim + c) += msg.at(r, c);
    x = ad::mlp_eval(store, net_prefix + ".node", cfg.node_net(), xin);
    if (round == 1) {
      edge_out = Tensor(w.n_edges, cfg.embed_dim);
      for (int r = 0; r < msg.rows; ++r)
        for (int c = 0; c < msg.cols; ++c) edge_out.at(w.dir_edge[r], c) += msg.at(r, c);
    }
  }
  return {edge_out, x};
}

}  // namespace gdyn::infer
