#include "gdyn/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gdyn::ctrl {

using graph::NodeState;
using graph::Vec2;

Eigen::VectorXd stack_state(const std::vector<NodeState>& nodes) {
  Eigen::VectorXd x(4 * nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) {
    x(4 * i + 0) = nodes[i].position[0];
    x(4 * i + 1) = nodes[i].position[1];
    x(4 * i + 2) = nodes[i].velocity[0];
    x(4 * i + 3) = nodes[i].velocity[1];
  }
  return x;
}

std::vector<NodeState> unstack_state(const Eigen::VectorXd& x) {
  if (x.size() % 4 != 0) throw std::invalid_argument("unstack_state: size not divisible by 4");
  std::vector<NodeState> out(x.size() / 4);
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = {{x(4 * i + 0), x(4 * i + 1)}, {x(4 * i + 2), x(4 * i + 3)}};
  return out;
}

Eigen::VectorXd augment(const Eigen::VectorXd& x) {
  Eigen::VectorXd a(x.size() + 1);
  a.head(x.size()) = x;
  a(x.size()) = 1.0;
  return a;
}

JointAffineSystem assemble_joint(const std::vector<dynmod::AffineSystem>& per_node) {
  const int n = int(per_node.size());
  const int dim = 4 * n + 1;
  JointAffineSystem js;
  js.A = Eigen::MatrixXd::Zero(dim, dim);
  js.B = Eigen::MatrixXd::Zero(dim, 2);
  js.A(dim - 1, dim - 1) = 1.0;
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < 2; ++d) {
      const auto& a = per_node[i].dof[d];
      int q = 4 * i + d, v = 4 * i + 2 + d;
      js.A(q, q) = a.a00;
      js.A(q, v) = a.a01;
      js.A(v, q) = a.a10;
      js.A(v, v) = a.a11;
      js.A(q, dim - 1) = a.o0;
      js.A(v, dim - 1) = a.o1;
      js.B(q, d) = a.b0;
      js.B(v, d) = a.b1;
    }
  }
  return js;
}

void QuadCost::validate() const {
  if (Q.rows() != Q.cols() || R.rows() != 2 || R.cols() != 2 || goal.size() != Q.rows())
    throw std::invalid_argument("QuadCost: shape mismatch");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eq(Q);
  if (eq.eigenvalues().minCoeff() < -1e-9)
    throw std::invalid_argument("QuadCost: Q is not PSD");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> er(R);
  if (er.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("QuadCost: R is not PD");
}

Eigen::MatrixXd QuadCost::augmented_q() const {
  const int nx = int(Q.rows());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(nx, nx + 1);
  s.leftCols(nx).setIdentity();
  s.col(nx) = -goal;
  return s.transpose() * Q * s;
}

double QuadCost::state_cost(const Eigen::VectorXd& x) const {
  Eigen::VectorXd e = x - goal;
  return e.dot(Q * e);
}

double QuadCost::control_cost(const Eigen::VectorXd& u) const { return u.dot(R * u); }

QuadCost default_pickup_cost(int n_nodes, int target_node, Vec2 goal) {
  const int nx = 4 * n_nodes;
  QuadCost c;
  c.Q = Eigen::MatrixXd::Zero(nx, nx);
  c.R = 0.01 * Eigen::MatrixXd::Identity(2, 2);
  c.goal = Eigen::VectorXd::Zero(nx);
  const double w_couple = 1.0, w_vel = 0.1;
  for (int d = 0; d < 2; ++d) {
    int g = d, o = 4 * target_node + d;
    c.Q(o, o) += 1.0;  // target tracks the goal
    c.Q(g, g) += w_couple;  // gripper tracks the target
    c.Q(o, o) += w_couple;
    c.Q(g, o) -= w_couple;
    c.Q(o, g) -= w_couple;
    c.goal(g) = goal[d];
    c.goal(o) = goal[d];
  }
  for (int i = 0; i < n_nodes; ++i)
    for (int d = 0; d < 2; ++d) c.Q(4 * i + 2 + d, 4 * i + 2 + d) += w_vel;
  return c;
}

QuadCost default_door_cost(int n_nodes, double goal_angle, double door_length) {
  const int nx = 4 * n_nodes;
  Vec2 hgoal{door_length * std::cos(goal_angle), door_length * std::sin(goal_angle)};
  QuadCost c = default_pickup_cost(n_nodes, 1, hgoal);
  return c;
}

GainSchedule lqr_backward(const std::vector<JointAffineSystem>& systems, const QuadCost& cost) {
  if (systems.empty()) throw std::invalid_argument("lqr_backward: horizon must be >= 1");
  cost.validate();
  const Eigen::MatrixXd qt = cost.augmented_q();
  Eigen::MatrixXd p = qt;
  GainSchedule g;
  g.K.resize(systems.size());
  for (int t = int(systems.size()) - 1; t >= 0; --t) {
    const auto& s = systems[t];
    Eigen::MatrixXd btp = s.B.transpose() * p;
    Eigen::MatrixXd h = cost.R + btp * s.B;
    Eigen::MatrixXd k = h.ldlt().solve(btp * s.A);
    Eigen::MatrixXd acl = s.A - s.B * k;
    p = qt + k.transpose() * cost.R * k + acl.transpose() * p * acl;
    p = 0.5 * (p + p.transpose());
    g.K[t] = std::move(k);
  }
  return g;
}

LearnedDyn::LearnedDyn(const Model& model, const std::vector<NodeState>& init)
    : stepper_(model, int(init.size())), base_(stepper_.initial_state(init)), state_(base_) {}

void LearnedDyn::rebase(const std::vector<NodeState>& obs) {
  base_.nodes = obs;
  state_ = base_;
}

dynmod::StepRecord LearnedDyn::advance(Vec2 u) {
  return stepper_.step(state_, u, ad::SampleMode::Argmax, nullptr);
}

std::vector<bool> LearnedDyn::observe_step(Vec2 u, const std::vector<NodeState>& obs_next,
                                           const std::vector<bool>& contacts, double eps,
                                           bool posterior) {
  dynmod::StepRecord rec = stepper_.step(base_, u, ad::SampleMode::Argmax, nullptr);
  base_.nodes = obs_next;
  const ModelConfig& cfg = stepper_.model().cfg;
  if (posterior && cfg.has_gru())
    stepper_.apply_posterior(base_, contact_likelihood(contacts, eps));
  state_ = base_;
  return rec.active;
}

LinearDyn::LinearDyn(std::vector<dynmod::AffineSystem> systems, std::vector<NodeState> init)
    : systems_(std::move(systems)), base_(std::move(init)), nodes_(base_) {
  if (systems_.size() != base_.size())
    throw std::invalid_argument("LinearDyn: system/node count mismatch");
}

dynmod::StepRecord LinearDyn::advance(Vec2 u) {
  dynmod::StepRecord rec;
  const int n = n_nodes();
  rec.p.assign(size_t(n) * (n - 1) / 2, {1.0, 0.0});
  rec.active.assign(rec.p.size(), true);
  rec.systems = systems_;
  rec.next.resize(n);
  for (int i = 0; i < n; ++i) rec.next[i] = dynmod::predict_next(nodes_[i], u, systems_[i]);
  nodes_ = rec.next;
  return rec;
}

void SimDyn::rebase(const std::vector<NodeState>&) {
  // The environment's weld structure is the ground truth; copy it whole.
  base_ = env_->world();
  reset();
}

dynmod::StepRecord SimDyn::advance(Vec2 u) {
  const double dt = world_.cfg.dt, m = world_.cfg.mass;
  const int n = world_.n_nodes();
  std::vector<double> set_mass(n, 0.0);
  for (int i = 0; i < n; ++i) set_mass[world_.weld_id[i]] += m;
  dynmod::StepRecord rec;
  rec.systems.resize(n);
  for (int i = 0; i < n; ++i) {
    dynmod::AffineSystem sys;
    sys.dt = dt;
    bool driven = world_.weld_id[i] == world_.weld_id[0];
    double binv = driven ? dt / set_mass[world_.weld_id[i]] : 0.0;
    for (int d = 0; d < 2; ++d) {
      dynmod::DofAffine a;  // exact semi-implicit Euler linearization
      a.a00 = 1.0; a.a01 = dt; a.a10 = 0.0; a.a11 = 1.0;
      a.b1 = binv;
      a.b0 = dt * binv;
      sys.dof.push_back(a);
    }
    rec.systems[i] = std::move(sys);
  }
  sim::StepResult sr = sim::step(world_, u);
  rec.next = sr.next;
  rec.active.assign(sr.contact.begin(), sr.contact.end());
  rec.p.resize(rec.active.size());
  for (size_t e = 0; e < rec.active.size(); ++e)
    rec.p[e] = rec.active[e] ? std::array<double, 2>{1.0, 0.0} : std::array<double, 2>{0.0, 1.0};
  return rec;
}

namespace {

struct Roll {
  std::vector<std::vector<NodeState>> states;
  std::vector<JointAffineSystem> systems;
  std::vector<Vec2> controls;
  double cost = 0.0;
};

bool finite_nodes(const std::vector<NodeState>& ns) {
  for (const auto& s : ns)
    for (int d = 0; d < 2; ++d)
      if (!std::isfinite(s.position[d]) || !std::isfinite(s.velocity[d])) return false;
  return true;
}

Eigen::VectorXd to_vec(Vec2 u) { return Eigen::Vector2d(u[0], u[1]); }

Vec2 clamp_u(Vec2 u, double u_max) {
  return {std::clamp(u[0], -u_max, u_max), std::clamp(u[1], -u_max, u_max)};
}

/// alpha = -1: pure open loop with the given controls. Otherwise blend
/// (1-alpha) * nominal + alpha * (-K x~).
Roll roll(DynModel& dyn, const QuadCost& cost, const std::vector<Vec2>& nominal,
          const GainSchedule* gains, double alpha, double u_max) {
  dyn.reset();
  Roll r;
  r.states.push_back(dyn.current());
  for (size_t t = 0; t < nominal.size(); ++t) {
    Eigen::VectorXd x = stack_state(r.states.back());
    Vec2 u = nominal[t];
    if (gains) {
      Eigen::Vector2d ulqr = -(gains->K[t] * augment(x));
      u = {(1 - alpha) * u[0] + alpha * ulqr(0), (1 - alpha) * u[1] + alpha * ulqr(1)};
    }
    u = clamp_u(u, u_max);
    r.cost += cost.state_cost(x) + cost.control_cost(to_vec(u));
    dynmod::StepRecord rec = dyn.advance(u);
    r.systems.push_back(assemble_joint(rec.systems));
    r.states.push_back(rec.next);
    r.controls.push_back(u);
    if (!finite_nodes(rec.next)) {
      r.cost = std::numeric_limits<double>::infinity();
      for (size_t k = t + 1; k < nominal.size(); ++k) {
        r.systems.push_back(r.systems.back());
        r.states.push_back(r.states.back());
        r.controls.push_back(nominal[k]);
      }
      return r;
    }
  }
  r.cost += cost.state_cost(stack_state(r.states.back()));
  return r;
}

}  // namespace

IlqrResult ilqr(DynModel& dyn, const QuadCost& cost, int horizon,
                std::vector<Vec2> init_controls, const IlqrOptions& opt) {
  if (horizon < 1) throw std::invalid_argument("ilqr: horizon must be >= 1");
  cost.validate();
  init_controls.resize(horizon, Vec2{0.0, 0.0});

  Roll best = roll(dyn, cost, init_controls, nullptr, 0.0, opt.u_max);
  IlqrResult res;
  for (int it = 0; it < opt.max_iters; ++it) {
    GainSchedule gains = lqr_backward(best.systems, cost);
    bool accepted = false;
    double alpha = 1.0;
    for (int h = 0; h <= opt.max_halvings; ++h, alpha *= 0.5) {
      Roll cand = roll(dyn, cost, best.controls, &gains, alpha, opt.u_max);
      if (cand.cost < best.cost - 1e-12) {
        double improvement = best.cost - cand.cost;
        best = std::move(cand);
        ++res.iterations;
        accepted = true;
        if (improvement < opt.tol * std::max(1.0, std::abs(best.cost))) {
          res.converged = true;
        }
        break;
      }
    }
    if (!accepted) {
      res.converged = true;  // line search exhausted: local optimum reached
      break;
    }
    if (res.converged) break;
  }
  res.controls = best.controls;
  res.states = best.states;
  res.cost = best.cost;
  res.gains = lqr_backward(best.systems, cost);
  return res;
}

std::array<double, 2> posterior_update(const std::array<double, 2>& p,
                                       const std::array<double, 2>& c) {
  double a = p[0] * c[0], b = p[1] * c[1];
  double z = a + b;
  if (z <= 0.0) throw std::domain_error("posterior_update: degenerate posterior");
  return {a / z, b / z};
}

std::vector<std::array<double, 2>> contact_likelihood(const std::vector<bool>& contacts,
                                                      double eps) {
  std::vector<std::array<double, 2>> out(contacts.size());
  for (size_t e = 0; e < contacts.size(); ++e)
    out[e] = contacts[e] ? std::array<double, 2>{1.0 - eps, eps}
                         : std::array<double, 2>{eps, 1.0 - eps};
  return out;
}

MpcResult mpc_run(sim::Env& env, DynModel& planner, const QuadCost& cost, int total_steps,
                  const MpcOptions& opt) {
  if (total_steps < 1 || total_steps % opt.t_lqr != 0)
    throw std::invalid_argument("mpc_run: total_steps must be a positive multiple of t_lqr");
  MpcResult log;
  log.executed.push_back(env.observe());
  std::vector<Vec2> warm;
  for (int t0 = 0; t0 < total_steps; t0 += opt.t_lqr) {
    int h = total_steps - t0;
    if (opt.plan_horizon_cap > 0) h = std::min(h, std::max(opt.plan_horizon_cap, opt.t_lqr));
    planner.rebase(env.observe());
    warm.resize(h, Vec2{0.0, 0.0});
    IlqrResult plan = ilqr(planner, cost, h, warm, opt.ilqr);
    log.plans.push_back({t0, plan.states});
    for (int k = 0; k < opt.t_lqr; ++k) {
      Vec2 u = plan.controls[k];
      if (opt.closed_loop) {
        Eigen::Vector2d uv = -(plan.gains.K[k] * augment(stack_state(env.observe())));
        u = {uv(0), uv(1)};
      }
      u = clamp_u(u, opt.ilqr.u_max);
      sim::StepResult sr = env.step_env(u);
      if (!finite_nodes(sr.next)) {
        log.aborted = true;
        return log;
      }
      log.pred_active.push_back(planner.observe_step(u, sr.next, sr.contact, opt.contact_eps,
                                                     opt.posterior_updates));
      log.executed.push_back(sr.next);
      log.controls.push_back(u);
      log.contacts.push_back(sr.contact);
    }
    warm.assign(plan.controls.begin() + opt.t_lqr, plan.controls.end());
  }
  return log;
}

double rmse_states(const std::vector<std::vector<NodeState>>& a,
                   const std::vector<std::vector<NodeState>>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("rmse_states: length mismatch");
  double ss = 0.0;
  size_t count = 0;
  for (size_t t = 0; t < a.size(); ++t) {
    if (a[t].size() != b[t].size()) throw std::invalid_argument("rmse_states: node mismatch");
    for (size_t i = 0; i < a[t].size(); ++i) {
      for (int d = 0; d < 2; ++d) {
        double dq = a[t][i].position[d] - b[t][i].position[d];
        double dv = a[t][i].velocity[d] - b[t][i].velocity[d];
        ss += dq * dq + dv * dv;
        count += 2;
      }
    }
  }
  return std::sqrt(ss / double(count));
}

double n_step_error(const MpcResult& log, int n) {
  if (n < 1) throw std::invalid_argument("n_step_error: n must be >= 1");
  double ss = 0.0;
  size_t count = 0;
  int windows = 0;
  for (int t0 = 0; t0 + n <= int(log.controls.size()); t0 += n) {
    const PlanRecord* plan = nullptr;
    for (const auto& p : log.plans)
      if (p.t0 == t0 && int(p.predicted.size()) > n) plan = &p;
    if (!plan) continue;
    ++windows;
    for (int k = 1; k <= n; ++k) {
      const auto& pred = plan->predicted[k];
      const auto& exec = log.executed[t0 + k];
      for (size_t i = 0; i < pred.size(); ++i)
        for (int d = 0; d < 2; ++d) {
          double dq = pred[i].position[d] - exec[i].position[d];
          double dv = pred[i].velocity[d] - exec[i].velocity[d];
          ss += dq * dq + dv * dv;
          count += 2;
        }
    }
  }
  if (windows == 0) throw std::invalid_argument("n_step_error: no aligned windows");
  return std::sqrt(ss / double(count));
}

double edge_accuracy(const MpcResult& log, int n) {
  if (n < 1) throw std::invalid_argument("edge_accuracy: n must be >= 1");
  int limit = int(log.controls.size()) / n * n;
  size_t match = 0, total = 0;
  for (int t = 0; t < limit; ++t) {
    if (log.pred_active[t].size() != log.contacts[t].size()) continue;
    for (size_t e = 0; e < log.contacts[t].size(); ++e) {
      match += log.pred_active[t][e] == log.contacts[t][e];
      ++total;
    }
  }
  return total == 0 ? 0.0 : double(match) / double(total);
}

bool pickup_success(const MpcResult& log, int target_node, Vec2 goal, double radius) {
  if (target_node < 1) throw std::invalid_argument("pickup_success: target must be > 0");
  int e = target_node - 1;  // edge (0, target) in i<j order
  for (size_t t = 0; t < log.contacts.size(); ++t) {
    if (e >= int(log.contacts[t].size()) || !log.contacts[t][e]) continue;
    if (graph::norm(log.executed[t + 1][target_node].position - goal) <= radius) return true;
  }
  return false;
}

}  // namespace gdyn::ctrl
