#include "gdyn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gdyn::train {

using ad::Tensor;
using ad::Var;

std::vector<int> Dataset::train_indices() const {
  std::vector<int> out;
  for (size_t i = 0; i < trajectories.size(); ++i)
    if (split[i] == 0) out.push_back(int(i));
  return out;
}

std::vector<int> Dataset::val_indices() const {
  std::vector<int> out;
  for (size_t i = 0; i < trajectories.size(); ++i)
    if (split[i] == 1) out.push_back(int(i));
  return out;
}

void Dataset::validate() const {
  if (trajectories.empty()) throw std::invalid_argument("Dataset: empty");
  if (split.size() != trajectories.size())
    throw std::invalid_argument("Dataset: split tags mismatched");
  double dt = trajectories[0].dt;
  for (const auto& tr : trajectories) {
    tr.validate();
    if (tr.dt != dt) throw std::invalid_argument("Dataset: trajectories must share dt");
  }
}

Dataset Dataset::with_split(std::vector<graph::GraphTrajectory> trajs, double val_fraction) {
  Dataset d;
  d.trajectories = std::move(trajs);
  int n = int(d.trajectories.size());
  int nval = int(std::ceil(val_fraction * n));
  if (nval >= n) nval = n > 1 ? n - 1 : 0;
  d.split.assign(n, 0);
  for (int i = n - nval; i < n; ++i) d.split[i] = 1;
  return d;
}

Var compute_loss_tape(ad::ParamBinder& binder, const Model& model,
                      const graph::GraphTrajectory& traj, const TrainConfig& cfg, Rng& rng,
                      ad::SampleMode mode, LossBreakdown* breakdown) {
  if (traj.snapshots.size() < 2)
    throw std::invalid_argument("compute_loss: trajectory too short (need >= 2 snapshots)");
  traj.validate();
  ad::Tape& t = binder.tape();
  const ModelConfig& mc = model.cfg;
  const int T = traj.num_steps();
  const int n = traj.num_nodes();
  const int D = mc.spatial_dim;

  auto wiring = infer::GraphWiring::make(n, T);
  std::vector<graph::GraphSnapshot> inputs(traj.snapshots.begin(), traj.snapshots.end() - 1);

  Var states = t.constant(infer::stack_features(inputs));
  Var dists = t.constant(infer::stack_distances(wiring, inputs));

  // Targets x*_{1:T} and shared controls replicated per node.
  std::vector<graph::GraphSnapshot> targets_snaps(traj.snapshots.begin() + 1,
                                                  traj.snapshots.end());
  Var targets = t.constant(infer::stack_features(targets_snaps));
  Tensor ctrl(T * n, D);
  for (int step = 0; step < T; ++step)
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < D; ++d) ctrl.at(step * n + i, d) = traj.controls[step][d];
  Var controls = t.constant(ctrl);

  std::optional<Var> mask;
  Var p_rows{};
  if (mc.has_inference()) {
    auto mp = infer::message_pass(binder, mc, "inf", wiring, states, dists);
    p_rows = mc.has_gru() ? infer::edge_distribution_seq(binder, mc, wiring, mp.edge_embed)
                          : infer::edge_distribution_ff(binder, mc, mp.edge_embed);
    Var acts = infer::sample_activations(t, p_rows, mc.temperature, rng, mode);
    mask = ad::slice_cols(t, acts, 0, 1);
  }

  auto dmp = infer::message_pass(binder, mc, "dyn", wiring, states, dists, mask);
  Var raw = ad::mlp_forward(binder, "dyn.head", mc.param_head(), dmp.node_embed);
  Var x_pred = dynmod::predict_next_rows(t, mc, raw, states, controls);

  // sum_i || x*_i - x^pred_i ||_2 : per-row squared error, pooled per node,
  // square-rooted, then summed over nodes.
  Var diff = ad::sub(t, targets, x_pred);
  Var row_sq = ad::row_sums(t, ad::square(t, diff));
  std::vector<int> node_of_row(T * n);
  for (int step = 0; step < T; ++step)
    for (int i = 0; i < n; ++i) node_of_row[step * n + i] = i;
  Var per_node = ad::scatter_add_rows(t, row_sq, node_of_row, n);
  Var pred_term = ad::sum_all(t, ad::sqrt_(t, per_node));

  Var total = pred_term;
  Var kl_term{};
  if (mc.has_inference()) {
    Tensor prior = infer::distance_prior_rows(wiring, inputs, mc.d_th);
    for (double& x : prior.d) x = std::log(x);
    Var log_q = t.constant(prior);
    Var kl_rows = ad::mul(t, p_rows, ad::sub(t, ad::log_(t, p_rows), log_q));
    kl_term = ad::sum_all(t, kl_rows);
    if (cfg.prior_weight != 0.0)
      total = ad::add(t, total, ad::scale(t, kl_term, cfg.prior_weight));
  }

  if (breakdown) {
    breakdown->pred = t.val(pred_term).d[0];
    breakdown->kl = kl_term.valid() ? t.val(kl_term).d[0] : 0.0;
    breakdown->total = t.val(total).d[0];
  }
  return total;
}

LossBreakdown compute_loss(const Model& model, const graph::GraphTrajectory& traj,
                           const TrainConfig& cfg, uint64_t sample_seed, ad::SampleMode mode) {
  ad::Tape tape;
  ad::ParamBinder binder(tape, const_cast<ad::ParamStore&>(model.params));
  Rng rng(sample_seed);
  LossBreakdown b;
  compute_loss_tape(binder, model, traj, cfg, rng, mode, &b);
  return b;
}

TrainResult train(const Dataset& data, const ModelConfig& arch, const TrainConfig& cfg,
                  const Model* warm_start) {
  data.validate();
  if (cfg.batch_size < 1 || cfg.lr <= 0.0 || cfg.prior_weight < 0.0)
    throw std::invalid_argument("train: bad config");
  auto train_idx = data.train_indices();
  auto val_idx = data.val_indices();
  if (train_idx.empty()) throw std::invalid_argument("train: empty train split");

  ModelConfig mc = arch;
  mc.dt = data.trajectories[0].dt;
  Model model = Model::init(mc, cfg.seed);
  if (warm_start) {
    if (warm_start->cfg.variant != mc.variant ||
        warm_start->cfg.embed_dim != mc.embed_dim ||
        warm_start->cfg.gru_hidden != mc.gru_hidden ||
        warm_start->cfg.mlp_hidden != mc.mlp_hidden)
      throw std::invalid_argument("train: warm-start architecture mismatch");
    model.params = warm_start->params;
    model.params.reset_optimizer();
  }
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  TrainResult result;
  result.best = model;
  result.best_val = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates shuffle with our own rng for cross-platform determinism.
    std::vector<int> order = train_idx;
    for (int i = int(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(i + 1)]);

    double epoch_loss = 0.0, epoch_pred = 0.0, epoch_kl = 0.0;
    int count = 0;
    for (size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      int bs = int(b1 - b0);
      model.params.zero_grads();
      for (size_t k = b0; k < b1; ++k) {
        ad::Tape tape;
        ad::ParamBinder binder(tape, model.params);
        LossBreakdown lb;
        Var loss = compute_loss_tape(binder, model, data.trajectories[order[k]], cfg, rng,
                                     ad::SampleMode::Hard, &lb);
        if (!std::isfinite(lb.total)) throw std::runtime_error("train: non-finite loss");
        tape.backward(loss);
        binder.collect(1.0 / bs);
        epoch_loss += lb.total;
        epoch_pred += lb.pred;
        epoch_kl += lb.kl;
        ++count;
      }
      model.params.adam_step(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = epoch_loss / count;
    st.pred_term = epoch_pred / count;
    st.kl_term = epoch_kl / count;
    st.val_loss = st.train_loss;
    if (!val_idx.empty() && (epoch % cfg.val_every == 0 || epoch == cfg.epochs - 1)) {
      double v = 0.0;
      for (int idx : val_idx)
        v += compute_loss(model, data.trajectories[idx], cfg, cfg.seed, ad::SampleMode::Argmax)
                 .total;
      st.val_loss = v / double(val_idx.size());
      if (st.val_loss < result.best_val) {
        result.best_val = st.val_loss;
        result.best_epoch = epoch;
        result.best.params = model.params;
        result.best.cfg = model.cfg;
      }
    }
    result.curve.push_back(st);
  }
  result.last = model;
  if (result.best_epoch < 0) result.best = model;
  return result;
}

}  // namespace gdyn::train
