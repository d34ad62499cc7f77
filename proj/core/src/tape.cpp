#include "gdyn/tape.hpp"

#include <algorithm>
#include <cmath>

namespace gdyn::ad {

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), nullptr});
  return Var{int(nodes_.size()) - 1};
}

int Tape::push(Tensor value, std::function<void(Tape&, int)> back) {
  nodes_.push_back(Node{std::move(value), Tensor(), std::move(back)});
  return int(nodes_.size()) - 1;
}

void Tape::backward(Var loss) {
  int lid = check(loss);
  if (nodes_[lid].val.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  for (auto& n : nodes_) {
    n.grad = Tensor(n.val.rows, n.val.cols);
  }
  nodes_[lid].grad.d[0] = 1.0;
  for (int i = lid; i >= 0; --i) {
    if (nodes_[i].back) nodes_[i].back(*this, i);
  }
}

namespace {

// Ensures a parent grad tensor is allocated (it always is after backward's
// sweep, but ops may run on tapes where backward allocated lazily).
inline Tensor& g(Tape& t, int id) { return t.node_grad(id); }
inline Tensor& v(Tape& t, int id) { return t.node_val(id); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

template <class Fwd, class Bwd>
Var unary_ew(Tape& t, Var a, Fwd f, Bwd dfdx_from_xy) {
  const Tensor& x = t.val(a);
  Tensor y(x.rows, x.cols);
  for (int i = 0; i < x.size(); ++i) y.d[i] = f(x.d[i]);
  int aid = a.id;
  int id = t.push(std::move(y), [aid, dfdx_from_xy](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    const Tensor& x = v(tp, aid);
    const Tensor& y = v(tp, self);
    Tensor& ga = g(tp, aid);
    for (int i = 0; i < x.size(); ++i) ga.d[i] += go.d[i] * dfdx_from_xy(x.d[i], y.d[i]);
  });
  return Var{id};
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  const Tensor &x = t.val(a), &y = t.val(b);
  require_same_shape(x, y, "add");
  Tensor z = x;
  for (int i = 0; i < z.size(); ++i) z.d[i] += y.d[i];
  int aid = a.id, bid = b.id;
  return Var{t.push(std::move(z), [aid, bid](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    Tensor &ga = g(tp, aid), &gb = g(tp, bid);
    for (int i = 0; i < go.size(); ++i) {
      ga.d[i] += go.d[i];
      gb.d[i] += go.d[i];
    }
  })};
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor &x = t.val(a), &y = t.val(b);
  require_same_shape(x, y, "sub");
  Tensor z = x;
  for (int i = 0; i < z.size(); ++i) z.d[i] -= y.d[i];
  int aid = a.id, bid = b.id;
  return Var{t.push(std::move(z), [aid, bid](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    Tensor &ga = g(tp, aid), &gb = g(tp, bid);
    for (int i = 0; i < go.size(); ++i) {
      ga.d[i] += go.d[i];
      gb.d[i] -= go.d[i];
    }
  })};
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor &x = t.val(a), &y = t.val(b);
  require_same_shape(x, y, "mul");
  Tensor z = x;
  for (int i = 0; i < z.size(); ++i) z.d[i] *= y.d[i];
  int aid = a.id, bid = b.id;
  return Var{t.push(std::move(z), [aid, bid](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    const Tensor &x = v(tp, aid), &y = v(tp, bid);
    Tensor &ga = g(tp, aid), &gb = g(tp, bid);
    for (int i = 0; i < go.size(); ++i) {
      ga.d[i] += go.d[i] * y.d[i];
      gb.d[i] += go.d[i] * x.d[i];
    }
  })};
}

Var scale(Tape& t, Var a, double s) {
  Tensor z = t.val(a);
  for (double& x : z.d) x *= s;
  int aid = a.id;
  return Var{t.push(std::move(z), [aid, s](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    Tensor& ga = g(tp, aid);
    for (int i = 0; i < go.size(); ++i) ga.d[i] += go.d[i] * s;
  })};
}

Var add_rowvec(Tape& t, Var a, Var b) {
  const Tensor &x = t.val(a), &y = t.val(b);
  if (y.rows != 1 || y.cols != x.cols) throw std::invalid_argument("add_rowvec: shape mismatch");
  Tensor z = x;
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) z.at(r, c) += y.d[c];
  int aid = a.id, bid = b.id;
  return Var{t.push(std::move(z), [aid, bid](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    Tensor &ga = g(tp, aid), &gb = g(tp, bid);
    for (int r = 0; r < go.rows; ++r)
      for (int c = 0; c < go.cols; ++c) {
        ga.at(r, c) += go.at(r, c);
        gb.d[c] += go.at(r, c);
      }
  })};
}

Var mul_colvec(Tape& t, Var a, Var b) {
  const Tensor &x = t.val(a), &y = t.val(b);
  if (y.cols != 1 || y.rows != x.rows) throw std::invalid_argument("mul_colvec: shape mismatch");
  Tensor z = x;
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) z.at(r, c) *= y.d[r];
  int aid = a.id, bid = b.id;
  return Var{t.push(std::move(z), [aid, bid](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    const Tensor &x = v(tp, aid), &y = v(tp, bid);
    Tensor &ga = g(tp, aid), &gb = g(tp, bid);
    for (int r = 0; r < go.rows; ++r)
      for (int c = 0; c < go.cols; ++c) {
        ga.at(r, c) += go.at(r, c) * y.d[r];
        gb.d[r] += go.at(r, c) * x.at(r, c);
      }
  })};
}

Var mul_scalar(Tape& t, Var a, Var s) {
  const Tensor &x = t.val(a), &sv = t.val(s);
  if (sv.size() != 1) throw std::invalid_argument("mul_scalar: s must be 1x1");
  Tensor z = x;
  for (double& e : z.d) e *= sv.d[0];
  int aid = a.id, sid = s.id;
  return Var{t.push(std::move(z), [aid, sid](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    const Tensor& x = v(tp, aid);
    double sval = v(tp, sid).d[0];
    Tensor& ga = g(tp, aid);
    Tensor& gs = g(tp, sid);
    for (int i = 0; i < go.size(); ++i) {
      ga.d[i] += go.d[i] * sval;
      gs.d[0] += go.d[i] * x.d[i];
    }
  })};
}

Var relu(Tape& t, Var a) {
  return unary_ew(
      t, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Tape& t, Var a) {
  return unary_ew(
      t, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh_(Tape& t, Var a) {
  return unary_ew(
      t, a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var log_(Tape& t, Var a) {
  return unary_ew(
      t, a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var exp_(Tape& t, Var a) {
  return unary_ew(
      t, a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var sqrt_(Tape& t, Var a) {
  // Gradient clamped at 0 so a perfectly matched L2 term stays finite.
  return unary_ew(
      t, a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var square(Tape& t, Var a) {
  return unary_ew(
      t, a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var matmul(Tape& t, Var a, Var b) {
  const Tensor &x = t.val(a), &y = t.val(b);
  Tensor z = matmul(x, y);
  int aid = a.id, bid = b.id;
  return Var{t.push(std::move(z), [aid, bid](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    const Tensor &x = v(tp, aid), &y = v(tp, bid);
    // dA += G * B^T ; dB += A^T * G
    matmul_acc(go, transposed(y), g(tp, aid));
    matmul_acc(transposed(x), go, g(tp, bid));
  })};
}

Var transpose(Tape& t, Var a) {
  Tensor z = transposed(t.val(a));
  int aid = a.id;
  return Var{t.push(std::move(z), [aid](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    Tensor& ga = g(tp, aid);
    for (int r = 0; r < go.rows; ++r)
      for (int c = 0; c < go.cols; ++c) ga.at(c, r) += go.at(r, c);
  })};
}

namespace {
Tensor gauss_jordan_inverse(const Tensor& a) {
  int n = a.rows;
  Tensor m = a, inv = Tensor::identity(n);
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(m.at(r, col)) > std::abs(m.at(piv, col))) piv = r;
    if (std::abs(m.at(piv, col)) < 1e-300) throw std::runtime_error("inverse: singular matrix");
    if (piv != col)
      for (int c = 0; c < n; ++c) {
        std::swap(m.at(piv, c), m.at(col, c));
        std::swap(inv.at(piv, c), inv.at(col, c));
      }
    double p = m.at(col, col);
    for (int c = 0; c < n; ++c) {
      m.at(col, c) /= p;
      inv.at(col, c) /= p;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      double f = m.at(r, col);
      if (f == 0.0) continue;
      for (int c = 0; c < n; ++c) {
        m.at(r, c) -= f * m.at(col, c);
        inv.at(r, c) -= f * inv.at(col, c);
      }
    }
  }
  return inv;
}
}  // namespace

Var inverse(Tape& t, Var a) {
  const Tensor& x = t.val(a);
  if (x.rows != x.cols) throw std::invalid_argument("inverse: not square");
  Tensor z = gauss_jordan_inverse(x);
  int aid = a.id;
  return Var{t.push(std::move(z), [aid](Tape& tp, int self) {
    // dA += -X^T G X^T with X = A^{-1}
    const Tensor& go = g(tp, self);
    const Tensor& xinv = v(tp, self);
    Tensor xt = transposed(xinv);
    Tensor tmp = matmul(xt, go);
    Tensor da = matmul(tmp, xt);
    Tensor& ga = g(tp, aid);
    for (int i = 0; i < da.size(); ++i) ga.d[i] -= da.d[i];
  })};
}

Var lower_triangular(Tape& t, Var packed, int n) {
  const Tensor& p = t.val(packed);
  if (p.cols != 1 || p.rows != n * (n + 1) / 2)
    throw std::invalid_argument("lower_triangular: packed size mismatch");
  Tensor z(n, n);
  int k = 0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c <= r; ++c) z.at(r, c) = p.d[k++];
  int pid = packed.id;
  return Var{t.push(std::move(z), [pid, n](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    Tensor& gp = g(tp, pid);
    int k = 0;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c <= r; ++c) gp.d[k++] += go.at(r, c);
  })};
}

Var sum_all(Tape& t, Var a) {
  const Tensor& x = t.val(a);
  double s = 0.0;
  for (double e : x.d) s += e;
  int aid = a.id;
  return Var{t.push(Tensor(1, 1, s), [aid](Tape& tp, int self) {
    double go = g(tp, self).d[0];
    Tensor& ga = g(tp, aid);
    for (int i = 0; i < ga.size(); ++i) ga.d[i] += go;
  })};
}

Var row_sums(Tape& t, Var a) {
  const Tensor& x = t.val(a);
  Tensor z(x.rows, 1);
  for (int r = 0; r < x.rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < x.cols; ++c) s += x.at(r, c);
    z.d[r] = s;
  }
  int aid = a.id;
  return Var{t.push(std::move(z), [aid](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    Tensor& ga = g(tp, aid);
    for (int r = 0; r < ga.rows; ++r)
      for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += go.d[r];
  })};
}

Var concat_rows(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  int cols = t.val(parts[0]).cols, rows = 0;
  for (Var p : parts) {
    if (t.val(p).cols != cols) throw std::invalid_argument("concat_rows: col mismatch");
    rows += t.val(p).rows;
  }
  Tensor z(rows, cols);
  int r0 = 0;
  std::vector<int> ids, offs;
  for (Var p : parts) {
    const Tensor& x = t.val(p);
    std::copy(x.d.begin(), x.d.end(), z.d.begin() + size_t(r0) * cols);
    ids.push_back(p.id);
    offs.push_back(r0);
    r0 += x.rows;
  }
  return Var{t.push(std::move(z), [ids, offs, cols](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    for (size_t k = 0; k < ids.size(); ++k) {
      Tensor& ga = g(tp, ids[k]);
      const double* src = &go.d[size_t(offs[k]) * cols];
      for (int i = 0; i < ga.size(); ++i) ga.d[i] += src[i];
    }
  })};
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  int rows = t.val(parts[0]).rows, cols = 0;
  for (Var p : parts) {
    if (t.val(p).rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += t.val(p).cols;
  }
  Tensor z(rows, cols);
  std::vector<int> ids, offs;
  int c0 = 0;
  for (Var p : parts) {
    const Tensor& x = t.val(p);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < x.cols; ++c) z.at(r, c0 + c) = x.at(r, c);
    ids.push_back(p.id);
    offs.push_back(c0);
    c0 += x.cols;
  }
  return Var{t.push(std::move(z), [ids, offs](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    for (size_t k = 0; k < ids.size(); ++k) {
      Tensor& ga = g(tp, ids[k]);
      for (int r = 0; r < ga.rows; ++r)
        for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += go.at(r, offs[k] + c);
    }
  })};
}

Var slice_rows(Tape& t, Var a, int r0, int r1) {
  const Tensor& x = t.val(a);
  if (r0 < 0 || r1 > x.rows || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
  Tensor z(r1 - r0, x.cols);
  std::copy(x.d.begin() + size_t(r0) * x.cols, x.d.begin() + size_t(r1) * x.cols, z.d.begin());
  int aid = a.id;
  return Var{t.push(std::move(z), [aid, r0](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    Tensor& ga = g(tp, aid);
    double* dst = &ga.d[size_t(r0) * ga.cols];
    for (int i = 0; i < go.size(); ++i) dst[i] += go.d[i];
  })};
}

Var slice_cols(Tape& t, Var a, int c0, int c1) {
  const Tensor& x = t.val(a);
  if (c0 < 0 || c1 > x.cols || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
  Tensor z(x.rows, c1 - c0);
  for (int r = 0; r < x.rows; ++r)
    for (int c = c0; c < c1; ++c) z.at(r, c - c0) = x.at(r, c);
  int aid = a.id;
  return Var{t.push(std::move(z), [aid, c0](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    Tensor& ga = g(tp, aid);
    for (int r = 0; r < go.rows; ++r)
      for (int c = 0; c < go.cols; ++c) ga.at(r, c0 + c) += go.at(r, c);
  })};
}

Var gather_rows(Tape& t, Var a, std::vector<int> idx) {
  const Tensor& x = t.val(a);
  Tensor z(int(idx.size()), x.cols);
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= x.rows) throw std::invalid_argument("gather_rows: index out of range");
    std::copy(&x.d[size_t(idx[r]) * x.cols], &x.d[size_t(idx[r]) * x.cols] + x.cols,
              &z.d[r * x.cols]);
  }
  int aid = a.id;
  return Var{t.push(std::move(z), [aid, idx = std::move(idx)](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    Tensor& ga = g(tp, aid);
    for (size_t r = 0; r < idx.size(); ++r) {
      double* dst = &ga.d[size_t(idx[r]) * ga.cols];
      const double* src = &go.d[r * go.cols];
      for (int c = 0; c < go.cols; ++c) dst[c] += src[c];
    }
  })};
}

Var scatter_add_rows(Tape& t, Var a, std::vector<int> idx, int out_rows) {
  const Tensor& x = t.val(a);
  if (int(idx.size()) != x.rows) throw std::invalid_argument("scatter_add_rows: index size mismatch");
  Tensor z(out_rows, x.cols);
  for (int r = 0; r < x.rows; ++r) {
    if (idx[r] < 0 || idx[r] >= out_rows)
      throw std::invalid_argument("scatter_add_rows: index out of range");
    double* dst = &z.d[size_t(idx[r]) * x.cols];
    const double* src = &x.d[size_t(r) * x.cols];
    for (int c = 0; c < x.cols; ++c) dst[c] += src[c];
  }
  int aid = a.id;
  return Var{t.push(std::move(z), [aid, idx = std::move(idx)](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    Tensor& ga = g(tp, aid);
    for (int r = 0; r < ga.rows; ++r) {
      const double* src = &go.d[size_t(idx[r]) * go.cols];
      double* dst = &ga.d[size_t(r) * go.cols];
      for (int c = 0; c < go.cols; ++c) dst[c] += src[c];
    }
  })};
}

Var softmax_rows(Tape& t, Var logits) {
  Tensor z = softmax(t.val(logits));
  int aid = logits.id;
  return Var{t.push(std::move(z), [aid](Tape& tp, int self) {
    const Tensor& go = g(tp, self);
    const Tensor& y = v(tp, self);
    Tensor& ga = g(tp, aid);
    for (int r = 0; r < y.rows; ++r) {
      double dot = 0.0;
      for (int c = 0; c < y.cols; ++c) dot += go.at(r, c) * y.at(r, c);
      for (int c = 0; c < y.cols; ++c) ga.at(r, c) += y.at(r, c) * (go.at(r, c) - dot);
    }
  })};
}

Var gumbel_softmax(Tape& t, Var logits, double temperature, Rng& rng, SampleMode mode) {
  if (temperature <= 0.0) throw std::invalid_argument("gumbel_softmax: temperature must be > 0");
  const Tensor& lg = t.val(logits);
  Tensor noise(lg.rows, lg.cols);
  if (mode != SampleMode::Argmax)
    for (double& n : noise.d) n = rng.gumbel();

  // Soft relaxation y = softmax((logits + g) / tau).
  Tensor perturbed = lg;
  for (int i = 0; i < perturbed.size(); ++i)
    perturbed.d[i] = (perturbed.d[i] + noise.d[i]) / temperature;
  Tensor soft = softmax(perturbed);

  Tensor out(lg.rows, lg.cols);
  if (mode == SampleMode::Soft) {
    out = soft;
  } else {
    for (int r = 0; r < lg.rows; ++r) {
      int best = 0;
      for (int c = 1; c < lg.cols; ++c)
        if (perturbed.at(r, c) > perturbed.at(r, best)) best = c;
      out.at(r, best) = 1.0;
    }
  }

  int aid = logits.id;
  double tau = temperature;
  bool grad_flows = (mode != SampleMode::Argmax);
  return Var{t.push(std::move(out), [aid, soft, tau, grad_flows](Tape& tp, int self) {
    if (!grad_flows) return;
    // Straight-through: gradient of the soft relaxation regardless of the
    // hard forward value.
    const Tensor& go = g(tp, self);
    Tensor& ga = g(tp, aid);
    for (int r = 0; r < soft.rows; ++r) {
      double dot = 0.0;
      for (int c = 0; c < soft.cols; ++c) dot += go.at(r, c) * soft.at(r, c);
      for (int c = 0; c < soft.cols; ++c)
        ga.at(r, c) += soft.at(r, c) * (go.at(r, c) - dot) / tau;
    }
  })};
}

Tensor softmax(const Tensor& logits) {
  Tensor y(logits.rows, logits.cols);
  for (int r = 0; r < logits.rows; ++r) {
    double mx = logits.at(r, 0);
    for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, logits.at(r, c));
    double s = 0.0;
    for (int c = 0; c < logits.cols; ++c) {
      y.at(r, c) = std::exp(logits.at(r, c) - mx);
      s += y.at(r, c);
    }
    for (int c = 0; c < logits.cols; ++c) y.at(r, c) /= s;
  }
  return y;
}

double kl_categorical(const Tensor& p, const Tensor& q) {
  if (!p.same_shape(q)) throw std::invalid_argument("kl_categorical: shape mismatch");
  double kl = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p.d[i] == 0.0) continue;
    if (q.d[i] <= 0.0) throw std::domain_error("kl_categorical: infinite divergence (q=0, p>0)");
    kl += p.d[i] * (std::log(p.d[i]) - std::log(q.d[i]));
  }
  return kl;
}

}  // namespace gdyn::ad
