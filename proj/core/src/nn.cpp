#include "gdyn/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace gdyn::ad {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  if (params_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
  Tensor& t = params_[name] = std::move(init);
  grads_[name] = Tensor(t.rows, t.cols);
  m_[name] = Tensor(t.rows, t.cols);
  v_[name] = Tensor(t.rows, t.cols);
  return t;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
  return it->second;
}

Tensor& ParamStore::grad(const std::string& name) {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [k, g] : grads_)
    for (double& x : g.d) x = 0.0;
  grads_live_ = false;
}

void ParamStore::accumulate_grad(const std::string& name, const Tensor& g, double scale) {
  Tensor& dst = grad(name);
  if (!dst.same_shape(g)) throw std::invalid_argument("accumulate_grad: shape mismatch");
  for (int i = 0; i < g.size(); ++i) dst.d[i] += scale * g.d[i];
  grads_live_ = true;
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
  if (!grads_live_) throw std::logic_error("adam_step: gradients not populated");
  ++step_;
  double bc1 = 1.0 - std::pow(beta1, double(step_));
  double bc2 = 1.0 - std::pow(beta2, double(step_));
  for (auto& [name, p] : params_) {
    Tensor& g = grads_[name];
    Tensor& m = m_[name];
    Tensor& v = v_[name];
    for (int i = 0; i < p.size(); ++i) {
      m.d[i] = beta1 * m.d[i] + (1.0 - beta1) * g.d[i];
      v.d[i] = beta2 * v.d[i] + (1.0 - beta2) * g.d[i] * g.d[i];
      double mh = m.d[i] / bc1;
      double vh = v.d[i] / bc2;
      p.d[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
  grads_live_ = false;
}

void ParamStore::reset_optimizer() {
  step_ = 0;
  for (auto& [k, t] : m_)
    for (double& x : t.d) x = 0.0;
  for (auto& [k, t] : v_)
    for (double& x : t.d) x = 0.0;
}

Var ParamBinder::operator()(const std::string& name) {
  for (auto& [n, var] : bound_)
    if (n == name) return var;
  Var v = tape_.leaf(store_.at(name));
  bound_.emplace_back(name, v);
  return v;
}

void ParamBinder::collect(double scale) {
  for (auto& [name, var] : bound_) {
    const Tensor& g = tape_.grad(var);
    if (g.size() > 0) store_.accumulate_grad(name, g, scale);
  }
}

namespace {
Tensor uniform_init(int rows, int cols, int fan_in, Rng& rng) {
  double b = 1.0 / std::sqrt(double(fan_in));
  Tensor t(rows, cols);
  for (double& x : t.d) x = rng.uniform(-b, b);
  return t;
}

Var activate(Tape& t, Var x, Act a) {
  switch (a) {
    case Act::Linear: return x;
    case Act::Relu: return relu(t, x);
    case Act::Tanh: return tanh_(t, x);
    case Act::Sigmoid: return sigmoid(t, x);
  }
  throw std::logic_error("activate: bad tag");
}
}  // namespace

void init_mlp(ParamStore& store, const std::string& prefix, const MlpConfig& cfg, Rng& rng) {
  int in = cfg.in;
  for (size_t l = 0; l < cfg.hidden.size(); ++l) {
    int out = cfg.hidden[l];
    store.add(prefix + ".W" + std::to_string(l), uniform_init(in, out, in, rng));
    store.add(prefix + ".b" + std::to_string(l), uniform_init(1, out, in, rng));
    in = out;
  }
  size_t l = cfg.hidden.size();
  store.add(prefix + ".W" + std::to_string(l), uniform_init(in, cfg.out, in, rng));
  store.add(prefix + ".b" + std::to_string(l), uniform_init(1, cfg.out, in, rng));
}

Var mlp_forward(ParamBinder& p, const std::string& prefix, const MlpConfig& cfg, Var x) {
  Tape& t = p.tape();
  if (t.val(x).cols != cfg.in) throw std::invalid_argument("mlp_forward: input dim mismatch");
  Var h = x;
  for (size_t l = 0; l < cfg.hidden.size(); ++l) {
    Var W = p(prefix + ".W" + std::to_string(l));
    Var b = p(prefix + ".b" + std::to_string(l));
    h = activate(t, add_rowvec(t, matmul(t, h, W), b), cfg.hidden_act);
  }
  size_t l = cfg.hidden.size();
  Var W = p(prefix + ".W" + std::to_string(l));
  Var b = p(prefix + ".b" + std::to_string(l));
  return activate(t, add_rowvec(t, matmul(t, h, W), b), cfg.out_act);
}

void init_gru(ParamStore& store, const std::string& prefix, const GruConfig& cfg, Rng& rng) {
  const char* gates[3] = {"r", "z", "n"};
  for (const char* gname : gates) {
    store.add(prefix + ".Wi" + gname, uniform_init(cfg.in, cfg.hidden, cfg.in, rng));
    store.add(prefix + ".bi" + gname, uniform_init(1, cfg.hidden, cfg.in, rng));
    store.add(prefix + ".Wh" + gname, uniform_init(cfg.hidden, cfg.hidden, cfg.hidden, rng));
    store.add(prefix + ".bh" + gname, uniform_init(1, cfg.hidden, cfg.hidden, rng));
  }
}

Var gru_cell_forward(ParamBinder& p, const std::string& prefix, const GruConfig& cfg, Var x, Var h) {
  Tape& t = p.tape();
  if (t.val(x).cols != cfg.in || t.val(h).cols != cfg.hidden)
    throw std::invalid_argument("gru_cell_forward: dim mismatch");
  auto gate = [&](const char* g, Var inp, Var hid) {
    Var xi = add_rowvec(t, matmul(t, inp, p(prefix + ".Wi" + g)), p(prefix + ".bi" + g));
    Var hi = add_rowvec(t, matmul(t, hid, p(prefix + ".Wh" + g)), p(prefix + ".bh" + g));
    return std::pair{xi, hi};
  };
  auto [rx, rh] = gate("r", x, h);
  Var r = sigmoid(t, add(t, rx, rh));
  auto [zx, zh] = gate("z", x, h);
  Var z = sigmoid(t, add(t, zx, zh));
  auto [nx, nh] = gate("n", x, h);
  Var n = tanh_(t, add(t, nx, mul(t, r, nh)));
  // h' = (1 - z) * n + z * h = n - z*n + z*h
  return add(t, sub(t, n, mul(t, z, n)), mul(t, z, h));
}

namespace {
void apply_act_inplace(Tensor& t, Act a) {
  switch (a) {
    case Act::Linear: return;
    case Act::Relu:
      for (double& x : t.d) x = x > 0.0 ? x : 0.0;
      return;
    case Act::Tanh:
      for (double& x : t.d) x = std::tanh(x);
      return;
    case Act::Sigmoid:
      for (double& x : t.d) x = 1.0 / (1.0 + std::exp(-x));
      return;
  }
}

Tensor linear_eval(const ParamStore& store, const std::string& w, const std::string& b,
                   const Tensor& x) {
  const Tensor& W = store.at(w);
  const Tensor& bias = store.at(b);
  Tensor y(x.rows, W.cols);
  for (int r = 0; r < y.rows; ++r)
    for (int c = 0; c < y.cols; ++c) y.at(r, c) = bias.d[c];
  matmul_acc(x, W, y);
  return y;
}
}  // namespace

Tensor mlp_eval(const ParamStore& store, const std::string& prefix, const MlpConfig& cfg,
                const Tensor& x) {
  if (x.cols != cfg.in) throw std::invalid_argument("mlp_eval: input dim mismatch");
  Tensor h = x;
  for (size_t l = 0; l < cfg.hidden.size(); ++l) {
    h = linear_eval(store, prefix + ".W" + std::to_string(l), prefix + ".b" + std::to_string(l), h);
    apply_act_inplace(h, cfg.hidden_act);
  }
  size_t l = cfg.hidden.size();
  h = linear_eval(store, prefix + ".W" + std::to_string(l), prefix + ".b" + std::to_string(l), h);
  apply_act_inplace(h, cfg.out_act);
  return h;
}

Tensor gru_cell_eval(const ParamStore& store, const std::string& prefix, const GruConfig& cfg,
                     const Tensor& x, const Tensor& h) {
  if (x.cols != cfg.in || h.cols != cfg.hidden)
    throw std::invalid_argument("gru_cell_eval: dim mismatch");
  auto gate = [&](const char* g) {
    Tensor xi = linear_eval(store, prefix + ".Wi" + g, prefix + ".bi" + g, x);
    Tensor hi = linear_eval(store, prefix + ".Wh" + g, prefix + ".bh" + g, h);
    return std::pair{xi, hi};
  };
  auto [rx, rh] = gate("r");
  auto [zx, zh] = gate("z");
  auto [nx, nh] = gate("n");
  Tensor out(h.rows, h.cols);
  for (int i = 0; i < out.size(); ++i) {
    double r = 1.0 / (1.0 + std::exp(-(rx.d[i] + rh.d[i])));
    double z = 1.0 / (1.0 + std::exp(-(zx.d[i] + zh.d[i])));
    double n = std::tanh(nx.d[i] + r * nh.d[i]);
    out.d[i] = (1.0 - z) * n + z * h.d[i];
  }
  return out;
}

}  // namespace gdyn::ad
