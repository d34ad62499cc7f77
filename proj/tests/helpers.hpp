#pragma once

#include <doctest.h>

#include <functional>

#include "gdyn/nn.hpp"
#include "gdyn/rng.hpp"
#include "gdyn/tape.hpp"

namespace gdyn::test {

inline ad::Tensor rand_tensor(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  ad::Tensor t(r, c);
  for (double& x : t.d) x = rng.uniform(lo, hi);
  return t;
}

using LossFn = std::function<ad::Var(ad::Tape&, ad::ParamBinder&)>;

inline double eval_loss(ad::ParamStore& store, const LossFn& f) {
  ad::Tape t;
  ad::ParamBinder b(t, store);
  ad::Var l = f(t, b);
  return t.val(l).d[0];
}

/// Central finite differences against the tape gradients for every entry of
/// every parameter. The loss functor must be deterministic (re-seed any Rng
/// inside it).
inline double max_grad_rel_err(ad::ParamStore& store, const LossFn& f, double eps = 1e-6) {
  store.zero_grads();
  {
    ad::Tape t;
    ad::ParamBinder b(t, store);
    ad::Var l = f(t, b);
    t.backward(l);
    b.collect();
  }
  double worst = 0.0;
  for (auto& [name, p] : store.params_mutable()) {
    for (int i = 0; i < p.size(); ++i) {
      double keep = p.d[i];
      p.d[i] = keep + eps;
      double up = eval_loss(store, f);
      p.d[i] = keep - eps;
      double dn = eval_loss(store, f);
      p.d[i] = keep;
      double fd = (up - dn) / (2.0 * eps);
      double an = store.grad(name).d[i];
      double err = std::abs(fd - an) / std::max(1.0, std::abs(fd) + std::abs(an));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace gdyn::test
