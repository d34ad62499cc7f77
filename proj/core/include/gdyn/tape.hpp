#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gdyn/rng.hpp"
#include "gdyn/tensor.hpp"

namespace gdyn::ad {

class Tape;

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode autodiff over a recorded computation graph. Ops append
/// nodes; backward() walks the record once, accumulating gradients.
class Tape {
 public:
  Var leaf(Tensor value);
  Var constant(Tensor value) { return leaf(std::move(value)); }
  Var scalar(double v) { return leaf(Tensor(1, 1, v)); }

  const Tensor& val(Var v) const { return nodes_[check(v)].val; }
  const Tensor& grad(Var v) const { return nodes_[check(v)].grad; }

  /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1 x 1 and be
  /// the result of recorded ops (or a leaf).
  void backward(Var loss);

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  int push(Tensor value, std::function<void(Tape&, int)> back);
  Tensor& node_val(int id) { return nodes_[id].val; }
  Tensor& node_grad(int id) { return nodes_[id].grad; }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    std::function<void(Tape&, int)> back;  // empty for leaves
  };
  std::vector<Node> nodes_;

  int check(Var v) const {
    if (!v.valid() || size_t(v.id) >= nodes_.size())
      throw std::logic_error("Tape: use of invalid Var (backward before forward?)");
    return v.id;
  }
  friend struct OpAccess;
};

// ---- elementwise / structural ops ----
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
/// a (n x c) + b (1 x c), broadcast over rows.
Var add_rowvec(Tape& t, Var a, Var b);
/// a (n x c) * b (n x 1), broadcast over columns.
Var mul_colvec(Tape& t, Var a, Var b);
/// a * s where s is a 1 x 1 Var, broadcast everywhere.
Var mul_scalar(Tape& t, Var a, Var s);

Var relu(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var tanh_(Tape& t, Var a);
Var log_(Tape& t, Var a);
Var exp_(Tape& t, Var a);
Var sqrt_(Tape& t, Var a);
Var square(Tape& t, Var a);

// ---- matrix ops ----
Var matmul(Tape& t, Var a, Var b);
Var transpose(Tape& t, Var a);
/// Inverse of a small square matrix via Gauss-Jordan.
Var inverse(Tape& t, Var a);
/// Scatter a packed vector (k x 1, k = n(n+1)/2) into an n x n lower
/// triangle, upper entries zero.
Var lower_triangular(Tape& t, Var packed, int n);

// ---- reductions / shape ----
Var sum_all(Tape& t, Var a);          // -> 1 x 1
Var row_sums(Tape& t, Var a);         // n x c -> n x 1
Var concat_rows(Tape& t, const std::vector<Var>& parts);
Var concat_cols(Tape& t, const std::vector<Var>& parts);
Var slice_rows(Tape& t, Var a, int r0, int r1);
Var slice_cols(Tape& t, Var a, int c0, int c1);
/// out[r] = a[idx[r]] — duplicating rows is fine; backward scatter-adds.
Var gather_rows(Tape& t, Var a, std::vector<int> idx);
/// out has `out_rows` rows; out[idx[r]] += a[r].
Var scatter_add_rows(Tape& t, Var a, std::vector<int> idx, int out_rows);

// ---- probability ops ----
Var softmax_rows(Tape& t, Var logits);

enum class SampleMode {
  Hard,    // straight-through: hard one-hot forward, soft gradient
  Soft,    // relaxed sample forward and backward (used by gradient checks)
  Argmax,  // deterministic, no noise, zero gradient
};

/// Row-wise Gumbel-softmax. Noise is drawn from `rng` (one Gumbel per
/// entry) except in Argmax mode.
Var gumbel_softmax(Tape& t, Var logits, double temperature, Rng& rng, SampleMode mode);

// ---- plain-tensor counterparts (no tape) ----
Tensor softmax(const Tensor& logits);  // row-wise, max-subtracted
/// KL(p || q) for categorical rows, summed over rows. 0 ln 0 := 0; throws
/// if q has a zero where p > 0.
double kl_categorical(const Tensor& p, const Tensor& q);

}  // namespace gdyn::ad
