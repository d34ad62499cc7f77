#include "gdyn/costlearn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gdyn::cost {

using ad::Tensor;
using ad::Var;
using graph::NodeState;
using graph::Vec2;

namespace {

Tensor to_tensor(const Eigen::MatrixXd& m) {
  Tensor t(int(m.rows()), int(m.cols()));
  for (int r = 0; r < t.rows; ++r)
    for (int c = 0; c < t.cols; ++c) t.at(r, c) = m(r, c);
  return t;
}

Eigen::VectorXd pickup_goal_vector(int n_nodes, int target_node, Vec2 goal) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(4 * n_nodes);
  for (int d = 0; d < 2; ++d) {
    g(d) = goal[d];
    g(4 * target_node + d) = goal[d];
  }
  return g;
}

}  // namespace

Eigen::MatrixXd CostParams::q() const {
  const int n = state_dim;
  if (int(l_packed.size()) != n * (n + 1) / 2)
    throw std::invalid_argument("CostParams: packed size mismatch");
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  int k = 0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c <= r; ++c) l(r, c) = l_packed[k++];
  return l * l.transpose() + eps * Eigen::MatrixXd::Identity(n, n);
}

Eigen::MatrixXd CostParams::r() const {
  return std::exp(log_r) * Eigen::MatrixXd::Identity(2, 2);
}

ctrl::QuadCost CostParams::with_goal(const Eigen::VectorXd& goal) const {
  if (int(goal.size()) != state_dim)
    throw std::invalid_argument("CostParams::with_goal: goal size mismatch");
  return {q(), r(), goal};
}

void DemoSet::validate() const {
  if (demos.empty()) throw std::invalid_argument("DemoSet: no demonstrations");
  const int nx = state_dim();
  if (int(goal.size()) != nx) throw std::invalid_argument("DemoSet: goal size mismatch");
  for (const auto& d : demos) {
    if (d.states.size() != d.controls.size() + 1 || d.systems.size() != d.controls.size() ||
        d.controls.empty())
      throw std::invalid_argument("DemoSet: inconsistent demo lengths");
    for (const auto& x : d.states)
      if (int(x.size()) != nx) throw std::invalid_argument("DemoSet: state size mismatch");
  }
}

std::vector<int> isolated_nodes(const std::vector<graph::GraphTrajectory>& demos,
                                const Model& model) {
  if (demos.empty()) throw std::invalid_argument("isolated_nodes: no demos");
  const int n = demos[0].num_nodes();
  std::vector<bool> touched(n, false);
  touched[0] = true;  // the gripper is actuated
  dynmod::ModelStepper stepper(model, n);
  for (const auto& demo : demos) {
    if (demo.num_nodes() != n) throw std::invalid_argument("isolated_nodes: node mismatch");
    dynmod::ModelState s = stepper.initial_state(demo.snapshots[0].nodes);
    for (int t = 0; t < demo.num_steps(); ++t) {
      s.nodes = demo.snapshots[t].nodes;  // teacher forcing
      dynmod::StepRecord rec = stepper.step(s, demo.controls[t], ad::SampleMode::Argmax, nullptr);
      for (int e = 0; e < int(rec.active.size()); ++e)
        if (rec.active[e]) {
          auto [i, j] = stepper.wiring().edge_pairs[e];
          touched[i] = touched[j] = true;
        }
    }
  }
  std::vector<int> isolated;
  for (int i = 1; i < n; ++i)
    if (!touched[i]) isolated.push_back(i);
  return isolated;
}

std::vector<graph::GraphTrajectory> remove_isolated_nodes(
    const std::vector<graph::GraphTrajectory>& demos, const Model& model,
    std::vector<int>* kept_out) {
  std::vector<int> iso = isolated_nodes(demos, model);
  const int n = demos[0].num_nodes();
  std::vector<int> kept;
  for (int i = 0; i < n; ++i)
    if (std::find(iso.begin(), iso.end(), i) == iso.end()) kept.push_back(i);
  if (kept.size() < 2) throw std::invalid_argument("remove_isolated_nodes: all nodes isolated");
  if (kept_out) *kept_out = kept;
  if (int(kept.size()) == n) return demos;

  // Edge remap in i<j order over the kept subset.
  std::vector<int> old_edge_index;
  for (size_t a = 0; a < kept.size(); ++a)
    for (size_t b = a + 1; b < kept.size(); ++b) {
      int i = kept[a], j = kept[b];
      int idx = 0;
      for (int p = 0; p < i; ++p) idx += n - 1 - p;
      idx += j - i - 1;
      old_edge_index.push_back(idx);
    }

  std::vector<graph::GraphTrajectory> out;
  out.reserve(demos.size());
  for (const auto& demo : demos) {
    graph::GraphTrajectory tr;
    tr.dt = demo.dt;
    tr.controls = demo.controls;
    for (const auto& snap : demo.snapshots) {
      std::vector<NodeState> nodes;
      for (int i : kept) nodes.push_back(snap.nodes[i]);
      tr.snapshots.push_back(graph::build_fully_connected(nodes));
    }
    for (const auto& flags : demo.contact_flags) {
      std::vector<bool> sub;
      for (int e : old_edge_index) sub.push_back(flags[e]);
      tr.contact_flags.push_back(sub);
    }
    out.push_back(std::move(tr));
  }
  return out;
}

DemoSet build_demoset(const std::vector<graph::GraphTrajectory>& demos, const Model& model,
                      int target_node, Vec2 goal_pos) {
  if (demos.empty()) throw std::invalid_argument("build_demoset: no demos");
  const int n = demos[0].num_nodes();
  DemoSet set;
  set.goal = pickup_goal_vector(n, target_node, goal_pos);
  dynmod::ModelStepper stepper(model, n);
  for (const auto& demo : demos) {
    DemoSet::Demo d;
    dynmod::ModelState s = stepper.initial_state(demo.snapshots[0].nodes);
    for (const auto& snap : demo.snapshots) d.states.push_back(ctrl::stack_state(snap.nodes));
    for (int t = 0; t < demo.num_steps(); ++t) {
      s.nodes = demo.snapshots[t].nodes;
      dynmod::StepRecord rec = stepper.step(s, demo.controls[t], ad::SampleMode::Argmax, nullptr);
      d.systems.push_back(ctrl::assemble_joint(rec.systems));
      d.controls.push_back(Eigen::Vector2d(demo.controls[t][0], demo.controls[t][1]));
    }
    set.demos.push_back(std::move(d));
  }
  set.validate();
  return set;
}

namespace {

/// Records the full imitation loss of one demo: learned (Q, R) -> Riccati
/// gains -> closed-loop rollout from the expert start -> MSE to the expert.
Var demo_loss_tape(ad::ParamBinder& binder, const DemoSet::Demo& demo,
                   const Eigen::VectorXd& goal, double ctrl_weight, double eps) {
  ad::Tape& t = binder.tape();
  const int nx = int(goal.size());
  const int na = nx + 1;
  const int horizon = int(demo.controls.size());

  Var lmat = ad::lower_triangular(t, binder("cost.L"), nx);
  Var q = ad::add(t, ad::matmul(t, lmat, ad::transpose(t, lmat)),
                  t.constant(to_tensor(eps * Eigen::MatrixXd::Identity(nx, nx))));
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(nx, na);
  s.leftCols(nx).setIdentity();
  s.col(nx) = -goal;
  Var sv = t.constant(to_tensor(s));
  Var qa = ad::matmul(t, ad::matmul(t, ad::transpose(t, sv), q), sv);
  Var rv = ad::mul_scalar(t, t.constant(to_tensor(Eigen::MatrixXd::Identity(2, 2))),
                          ad::exp_(t, binder("cost.logr")));

  std::vector<Var> av(horizon), bv(horizon), bt(horizon);
  for (int k = 0; k < horizon; ++k) {
    av[k] = t.constant(to_tensor(demo.systems[k].A));
    bv[k] = t.constant(to_tensor(demo.systems[k].B));
    bt[k] = t.constant(to_tensor(demo.systems[k].B.transpose()));
  }

  std::vector<Var> gains(horizon);
  Var p = qa;
  for (int k = horizon - 1; k >= 0; --k) {
    Var btp = ad::matmul(t, bt[k], p);
    Var h = ad::add(t, rv, ad::matmul(t, btp, bv[k]));
    Var kk = ad::matmul(t, ad::inverse(t, h), ad::matmul(t, btp, av[k]));
    Var acl = ad::sub(t, av[k], ad::matmul(t, bv[k], kk));
    p = ad::add(t, qa,
                ad::add(t, ad::matmul(t, ad::transpose(t, kk), ad::matmul(t, rv, kk)),
                        ad::matmul(t, ad::transpose(t, acl), ad::matmul(t, p, acl))));
    gains[k] = kk;
  }

  Eigen::VectorXd x0a(na);
  x0a.head(nx) = demo.states[0];
  x0a(nx) = 1.0;
  Var x = t.constant(to_tensor(x0a));
  Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(nx, na);
  sel.leftCols(nx).setIdentity();
  Var ev = t.constant(to_tensor(sel));

  Var loss_s = t.scalar(0.0), loss_u = t.scalar(0.0);
  for (int k = 0; k < horizon; ++k) {
    Var u = ad::scale(t, ad::matmul(t, gains[k], x), -1.0);
    Var du = ad::sub(t, u, t.constant(to_tensor(demo.controls[k])));
    loss_u = ad::add(t, loss_u, ad::sum_all(t, ad::square(t, du)));
    x = ad::add(t, ad::matmul(t, av[k], x), ad::matmul(t, bv[k], u));
    Var dx = ad::sub(t, ad::matmul(t, ev, x), t.constant(to_tensor(demo.states[k + 1])));
    loss_s = ad::add(t, loss_s, ad::sum_all(t, ad::square(t, dx)));
  }
  Var total = ad::add(t, ad::scale(t, loss_s, 1.0 / double(horizon * nx)),
                      ad::scale(t, loss_u, ctrl_weight / double(horizon * 2)));
  return total;
}

ad::ParamStore make_store(const CostParams& cp) {
  ad::ParamStore store;
  Tensor l(int(cp.l_packed.size()), 1);
  l.d = cp.l_packed;
  store.add("cost.L", std::move(l));
  store.add("cost.logr", Tensor(1, 1, cp.log_r));
  return store;
}

CostParams from_store(const ad::ParamStore& store, int nx, double eps) {
  CostParams cp;
  cp.state_dim = nx;
  cp.l_packed = store.at("cost.L").d;
  cp.log_r = store.at("cost.logr").d[0];
  cp.eps = eps;
  return cp;
}

double store_loss(ad::ParamStore& store, const DemoSet& set, const std::vector<int>& idx,
                  double ctrl_weight, double eps) {
  double total = 0.0;
  for (int i : idx) {
    ad::Tape tape;
    ad::ParamBinder binder(tape, store);
    Var l = demo_loss_tape(binder, set.demos[i], set.goal, ctrl_weight, eps);
    total += tape.val(l).d[0];
  }
  return total / double(idx.size());
}

}  // namespace

double imitation_loss(const CostParams& cp, const DemoSet::Demo& demo,
                      const Eigen::VectorXd& goal, double ctrl_weight) {
  ad::ParamStore store = make_store(cp);
  ad::Tape tape;
  ad::ParamBinder binder(tape, store);
  Var l = demo_loss_tape(binder, demo, goal, ctrl_weight, cp.eps);
  return tape.val(l).d[0];
}

CostLearnResult learn_cost(const DemoSet& set, const CostLearnConfig& cfg) {
  set.validate();
  const int nx = set.state_dim();
  const double eps = 1e-6;

  CostParams init;
  init.state_dim = nx;
  init.l_packed.assign(nx * (nx + 1) / 2, 0.0);
  {
    int k = 0;
    for (int r = 0; r < nx; ++r)
      for (int c = 0; c <= r; ++c) init.l_packed[k++] = (r == c) ? 1.0 : 0.0;
  }
  ad::ParamStore store = make_store(init);

  const int n = int(set.demos.size());
  int nval = std::min(n - 1, int(std::ceil(cfg.val_fraction * n)));
  std::vector<int> train_idx, val_idx;
  for (int i = 0; i < n - nval; ++i) train_idx.push_back(i);
  for (int i = n - nval; i < n; ++i) val_idx.push_back(i);
  if (val_idx.empty()) val_idx = train_idx;

  CostLearnResult res;
  double lr = cfg.lr;
  double train_loss = store_loss(store, set, train_idx, cfg.ctrl_weight, eps);
  res.best_val = std::numeric_limits<double>::infinity();
  res.params = from_store(store, nx, eps);

  for (int epoch = 0; epoch < cfg.epochs && lr >= cfg.min_lr; ++epoch) {
    store.zero_grads();
    for (int i : train_idx) {
      ad::Tape tape;
      ad::ParamBinder binder(tape, store);
      Var l = demo_loss_tape(binder, set.demos[i], set.goal, cfg.ctrl_weight, eps);
      tape.backward(l);
      binder.collect(1.0 / double(train_idx.size()));
    }
    ad::ParamStore snapshot = store;
    store.adam_step(lr);
    double new_loss = store_loss(store, set, train_idx, cfg.ctrl_weight, eps);
    if (!std::isfinite(new_loss) || new_loss > train_loss) {
      store = snapshot;
      lr *= 0.5;
      ++res.rejected_steps;
      res.train_curve.push_back(train_loss);
      continue;
    }
    train_loss = new_loss;
    res.train_curve.push_back(train_loss);
    double val = store_loss(store, set, val_idx, cfg.ctrl_weight, eps);
    if (val < res.best_val) {
      res.best_val = val;
      res.params = from_store(store, nx, eps);
    }
  }
  return res;
}

double evaluate_success(const Model& model, const CostParams& cp, const SuccessOptions& opt) {
  if (opt.episodes < 1) throw std::invalid_argument("evaluate_success: need >= 1 episode");
  if (cp.state_dim != 8)
    throw std::invalid_argument("evaluate_success: expects a gripper+object cost (dim 8)");
  Rng rng(opt.seed);
  int succ = 0;
  for (int ep = 0; ep < opt.episodes; ++ep) {
    sim::PickupEpisode pe = sim::sample_pickup(rng, 1, 0, opt.sim);
    Vec2 goal = opt.sample_goal ? pe.goal : opt.fixed_goal;
    ctrl::QuadCost qc = cp.with_goal(pickup_goal_vector(2, 1, goal));
    sim::PickupEnv env(pe.world);
    ctrl::LearnedDyn planner(model, env.observe());
    ctrl::MpcResult log = ctrl::mpc_run(env, planner, qc, opt.sim.horizon, opt.mpc);
    if (!log.aborted && ctrl::pickup_success(log, 1, goal, opt.radius)) ++succ;
  }
  return double(succ) / double(opt.episodes);
}

}  // namespace gdyn::cost
