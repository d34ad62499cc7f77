#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gdyn/inference.hpp"
#include "gdyn/model.hpp"
#include "gdyn/rng.hpp"
#include "helpers.hpp"

using namespace gdyn;
using ad::Tensor;
using ad::Var;
using graph::GraphSnapshot;
using graph::NodeState;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.embed_dim = 8;
  cfg.mlp_hidden = {8};
  cfg.gru_hidden = 8;
  return cfg;
}

GraphSnapshot random_snapshot(Rng& rng, int n) {
  std::vector<NodeState> nodes(n);
  for (auto& nd : nodes) {
    nd.position = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    nd.velocity = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  }
  return graph::build_fully_connected(nodes);
}

infer::MessagePassResult tape_pass(ad::Tape& t, ad::ParamBinder& b, const ModelConfig& cfg,
                                   const infer::GraphWiring& w,
                                   const std::vector<GraphSnapshot>& snaps,
                                   const Tensor* act = nullptr) {
  Var x = t.constant(infer::stack_features(snaps));
  Var d = t.constant(infer::stack_distances(w, snaps));
  std::optional<Var> a;
  if (act) a = t.constant(*act);
  return infer::message_pass(b, cfg, "dyn", w, x, d, a);
}

}  // namespace

TEST_CASE("wiring layout") {
  auto w = infer::GraphWiring::make(4, 3);
  CHECK(w.n_edges == 6);
  CHECK(w.node_rows() == 12);
  CHECK(w.edge_rows() == 18);
  CHECK(w.dir_rows() == 36);
  for (int t = 0; t < 3; ++t)
    for (int e = 0; e < 6; ++e) {
      auto [i, j] = w.edge_pairs[e];
      int r = t * 12 + 2 * e;
      CHECK(w.recv[r] == t * 4 + i);
      CHECK(w.send[r] == t * 4 + j);
      CHECK(w.recv[r + 1] == t * 4 + j);
      CHECK(w.send[r + 1] == t * 4 + i);
      CHECK(w.dir_edge[r] == t * 6 + e);
      CHECK(w.dir_edge[r + 1] == t * 6 + e);
      CHECK(w.recv_node[r] == i);
      CHECK(w.recv_node[r + 1] == j);
    }
  CHECK_THROWS_AS(infer::GraphWiring::make(1, 1), std::invalid_argument);
  CHECK_THROWS_AS(infer::GraphWiring::make(3, 0), std::invalid_argument);
}

TEST_CASE("stacked features and distances match the snapshots") {
  Rng rng(3);
  std::vector<GraphSnapshot> snaps = {random_snapshot(rng, 3), random_snapshot(rng, 3)};
  auto w = infer::GraphWiring::make(3, 2);
  Tensor x = infer::stack_features(snaps);
  Tensor d = infer::stack_distances(w, snaps);
  CHECK(x.rows == 6);
  CHECK(d.rows == 12);
  for (int t = 0; t < 2; ++t)
    for (int i = 0; i < 3; ++i) {
      auto f = snaps[t].nodes[i].features();
      for (int c = 0; c < 4; ++c) CHECK(x.at(t * 3 + i, c) == f[c]);
    }
  for (int t = 0; t < 2; ++t)
    for (int e = 0; e < 3; ++e) {
      auto [i, j] = w.edge_pairs[e];
      double dist = graph::norm(snaps[t].nodes[i].position - snaps[t].nodes[j].position);
      CHECK(d.d[t * 6 + 2 * e] == doctest::Approx(dist));
      CHECK(d.d[t * 6 + 2 * e + 1] == doctest::Approx(dist));
    }
}

TEST_CASE("eval message passing matches the tape path") {
  ModelConfig cfg = tiny_cfg();
  Model m = Model::init(cfg, 11);
  Rng rng(5);
  for (int n : {2, 4}) {
    auto snap = random_snapshot(rng, n);
    auto w = infer::GraphWiring::make(n, 1);
    Tensor act(w.n_edges, 1);
    for (double& a : act.d) a = rng.uniform(0, 1);

    ad::Tape t;
    ad::ParamBinder b(t, m.params);
    auto tp = tape_pass(t, b, cfg, w, {snap}, &act);
    auto ev = infer::message_pass_eval(m.params, cfg, "dyn", w, infer::stack_features({snap}),
                                       infer::stack_distances(w, {snap}), &act);
    CHECK(t.val(tp.edge_embed).max_abs_diff(ev.edge_embed) < 1e-12);
    CHECK(t.val(tp.node_embed).max_abs_diff(ev.node_embed) < 1e-12);
  }
}

TEST_CASE("stacked snapshots factor into independent per-step passes") {
  ModelConfig cfg = tiny_cfg();
  Model m = Model::init(cfg, 12);
  Rng rng(7);
  int n = 3, S = 3;
  std::vector<GraphSnapshot> snaps;
  for (int s = 0; s < S; ++s) snaps.push_back(random_snapshot(rng, n));
  auto w = infer::GraphWiring::make(n, S);

  ad::Tape t;
  ad::ParamBinder b(t, m.params);
  auto stacked = tape_pass(t, b, cfg, w, snaps);

  auto w1 = infer::GraphWiring::make(n, 1);
  for (int s = 0; s < S; ++s) {
    auto ev = infer::message_pass_eval(m.params, cfg, "dyn", w1, infer::stack_features({snaps[s]}),
                                       infer::stack_distances(w1, {snaps[s]}));
    const Tensor& ee = t.val(stacked.edge_embed);
    const Tensor& ne = t.val(stacked.node_embed);
    for (int e = 0; e < w.n_edges; ++e)
      for (int c = 0; c < cfg.embed_dim; ++c)
        CHECK(ee.at(s * w.n_edges + e, c) == doctest::Approx(ev.edge_embed.at(e, c)).epsilon(1e-12));
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < cfg.embed_dim; ++c)
        CHECK(ne.at(s * n + i, c) == doctest::Approx(ev.node_embed.at(i, c)).epsilon(1e-12));
  }
}

TEST_CASE("message passing is equivariant under node relabeling") {
  ModelConfig cfg = tiny_cfg();
  Model m = Model::init(cfg, 21);
  Rng rng(9);
  int n = 4;
  auto snap = random_snapshot(rng, n);
  std::vector<int> perm = {2, 0, 3, 1};  // new index of original node i

  std::vector<NodeState> pnodes(n);
  for (int i = 0; i < n; ++i) pnodes[perm[i]] = snap.nodes[i];
  auto psnap = graph::build_fully_connected(pnodes);
  auto w = infer::GraphWiring::make(n, 1);

  auto a = infer::message_pass_eval(m.params, cfg, "dyn", w, infer::stack_features({snap}),
                                    infer::stack_distances(w, {snap}));
  auto p = infer::message_pass_eval(m.params, cfg, "dyn", w, infer::stack_features({psnap}),
                                    infer::stack_distances(w, {psnap}));
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < cfg.embed_dim; ++c)
      CHECK(a.node_embed.at(i, c) == doctest::Approx(p.node_embed.at(perm[i], c)).epsilon(1e-12));
  for (int e = 0; e < w.n_edges; ++e) {
    auto [i, j] = w.edge_pairs[e];
    int pi = std::min(perm[i], perm[j]), pj = std::max(perm[i], perm[j]);
    int pe = int(std::find(w.edge_pairs.begin(), w.edge_pairs.end(), std::make_pair(pi, pj)) -
                 w.edge_pairs.begin());
    for (int c = 0; c < cfg.embed_dim; ++c)
      CHECK(a.edge_embed.at(e, c) == doctest::Approx(p.edge_embed.at(pe, c)).epsilon(1e-12));
  }
}

TEST_CASE("zero activations silence every edge embedding") {
  ModelConfig cfg = tiny_cfg();
  Model m = Model::init(cfg, 31);
  Rng rng(13);
  auto snap = random_snapshot(rng, 3);
  auto w = infer::GraphWiring::make(3, 1);
  Tensor act(w.n_edges, 1);  // zeros
  auto ev = infer::message_pass_eval(m.params, cfg, "dyn", w, infer::stack_features({snap}),
                                     infer::stack_distances(w, {snap}), &act);
  for (double v : ev.edge_embed.d) CHECK(v == 0.0);
}

TEST_CASE("distance prior") {
  double d_th = 0.2;
  auto at_th = infer::distance_prior(d_th, d_th);
  CHECK(at_th[0] == doctest::Approx(0.5));
  CHECK(at_th[1] == doctest::Approx(0.5));
  // closed form: p_active = sigmoid(2 (d_th - d))
  for (double d : {0.0, 0.05, 0.3, 2.0}) {
    auto q = infer::distance_prior(d, d_th);
    CHECK(q[0] + q[1] == doctest::Approx(1.0));
    CHECK(q[0] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0 * (d_th - d)))));
    CHECK((d < d_th) == (q[0] > 0.5));
  }
  // monotone: farther apart means less likely active
  double prev = 2.0;
  for (double d = 0.0; d <= 1.0; d += 0.05) {
    double p0 = infer::distance_prior(d, d_th)[0];
    CHECK(p0 < prev);
    prev = p0;
  }
  CHECK_THROWS_AS(infer::distance_prior(-0.1, d_th), std::invalid_argument);
}

TEST_CASE("recurrent edge distributions: normalized and causal") {
  ModelConfig cfg = tiny_cfg();
  Model m = Model::init(cfg, 41);
  Rng rng(17);
  int n = 3, S = 4;
  auto w = infer::GraphWiring::make(n, S);
  Tensor embed = test::rand_tensor(rng, w.edge_rows(), cfg.embed_dim);

  ad::Tape t;
  ad::ParamBinder b(t, m.params);
  Var p = infer::edge_distribution_seq(b, cfg, w, t.constant(embed));
  const Tensor& pv = t.val(p);
  CHECK(pv.rows == w.edge_rows());
  for (int r = 0; r < pv.rows; ++r) {
    CHECK(pv.at(r, 0) + pv.at(r, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pv.at(r, 0) > 0.0);
    CHECK(pv.at(r, 1) > 0.0);
  }

  // truncating the sequence leaves the earlier distributions unchanged
  int Sc = 2;
  auto wc = infer::GraphWiring::make(n, Sc);
  Tensor head(wc.edge_rows(), cfg.embed_dim);
  for (int i = 0; i < head.size(); ++i) head.d[i] = embed.d[i];
  ad::Tape t2;
  ad::ParamBinder b2(t2, m.params);
  Var pc = infer::edge_distribution_seq(b2, cfg, wc, t2.constant(head));
  CHECK(pv.rows >= t2.val(pc).rows);
  for (int r = 0; r < t2.val(pc).rows; ++r)
    for (int c = 0; c < 2; ++c)
      CHECK(pv.at(r, c) == doctest::Approx(t2.val(pc).at(r, c)).epsilon(1e-13));
}

TEST_CASE("feedforward edge distributions are per-row") {
  ModelConfig cfg = tiny_cfg();
  cfg.variant = Variant::GimNonTemp;
  Model m = Model::init(cfg, 51);
  Rng rng(19);
  Tensor embed = test::rand_tensor(rng, 6, cfg.embed_dim);

  ad::Tape t;
  ad::ParamBinder b(t, m.params);
  Var p = infer::edge_distribution_ff(b, cfg, t.constant(embed));
  const Tensor& pv = t.val(p);
  for (int r = 0; r < pv.rows; ++r)
    CHECK(pv.at(r, 0) + pv.at(r, 1) == doctest::Approx(1.0).epsilon(1e-12));

  // a single row through the head gives the same answer as the batch
  Tensor one(1, cfg.embed_dim);
  for (int c = 0; c < cfg.embed_dim; ++c) one.at(0, c) = embed.at(3, c);
  ad::Tape t2;
  ad::ParamBinder b2(t2, m.params);
  Var p1 = infer::edge_distribution_ff(b2, cfg, t2.constant(one));
  CHECK(t2.val(p1).at(0, 0) == doctest::Approx(pv.at(3, 0)).epsilon(1e-13));
}

TEST_CASE("sampled activations are one-hot in hard mode") {
  Rng rng(23);
  Tensor p(10, 2);
  for (int r = 0; r < 10; ++r) {
    double a = rng.uniform(0.05, 0.95);
    p.at(r, 0) = a;
    p.at(r, 1) = 1.0 - a;
  }
  ad::Tape t;
  Var s = infer::sample_activations(t, t.constant(p), 0.5, rng, ad::SampleMode::Hard);
  for (int r = 0; r < 10; ++r) {
    double a = t.val(s).at(r, 0), b = t.val(s).at(r, 1);
    CHECK(((a == 1.0 && b == 0.0) || (a == 0.0 && b == 1.0)));
  }
  // argmax mode is deterministic and picks the mode
  Var am = infer::sample_activations(t, t.constant(p), 0.5, rng, ad::SampleMode::Argmax);
  for (int r = 0; r < 10; ++r)
    CHECK(t.val(am).at(r, 0) == (p.at(r, 0) >= p.at(r, 1) ? 1.0 : 0.0));
}
