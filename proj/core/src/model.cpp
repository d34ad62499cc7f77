#include "gdyn/model.hpp"

#include <cmath>
#include <stdexcept>

namespace gdyn {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::GimTemp: return "GIM-Temp";
    case Variant::GimNonTemp: return "GIM-Non-Temp";
    case Variant::NoGim: return "No-GIM";
    case Variant::FullAb: return "Full-AB";
  }
  throw std::logic_error("variant_name: bad value");
}

Variant variant_from_name(const std::string& s) {
  if (s == "GIM-Temp") return Variant::GimTemp;
  if (s == "GIM-Non-Temp") return Variant::GimNonTemp;
  if (s == "No-GIM" || s == "No-GIM-Aug") return Variant::NoGim;
  if (s == "Full-AB") return Variant::FullAb;
  throw std::invalid_argument("unknown model variant: " + s);
}

namespace {
double spectral_radius_2x2(double a00, double a01, double a10, double a11) {
  double tr = a00 + a11, det = a00 * a11 - a01 * a10;
  double disc = tr * tr / 4.0 - det;
  if (disc >= 0.0) {
    double s = std::sqrt(disc);
    return std::max(std::abs(tr / 2.0 + s), std::abs(tr / 2.0 - s));
  }
  return std::sqrt(det);  // complex pair, |lambda| = sqrt(det)
}
}  // namespace

StableRanges solve_stable_ranges(double dt, double invmass_max) {
  if (dt <= 0.0 || invmass_max <= 0.0)
    throw std::invalid_argument("solve_stable_ranges: dt and invmass_max must be > 0");
  // Start from the Jury-condition bounds b = c*dt/m <= 2, then shrink until a
  // grid sweep over (k, c, 1/m) with the damping floor c >= k*dt confirms
  // rho(A) <= 1.
  double c_max = 1.8 / (dt * invmass_max);
  double k_max = 0.9 * c_max / dt;
  for (int attempt = 0; attempt < 64; ++attempt) {
    double worst = 0.0;
    const int N = 60;
    for (int ik = 0; ik <= N; ++ik)
      for (int ic = 0; ic <= N; ++ic)
        for (int im = 1; im <= 8; ++im) {
          double k = k_max * ik / N;
          double c = k * dt + (c_max - k * dt) * ic / N;
          if (c < k * dt) continue;
          double invm = invmass_max * im / 8.0;
          double rho = spectral_radius_2x2(1.0, dt, -k * dt * invm, 1.0 - c * dt * invm);
          worst = std::max(worst, rho);
        }
    if (worst <= 1.0 + 1e-12) return {k_max, c_max};
    k_max *= 0.9;
    c_max *= 0.95;
  }
  throw std::runtime_error("solve_stable_ranges: failed to find stable box");
}

Model Model::init(ModelConfig cfg, uint64_t seed) {
  if (cfg.k_max <= 0.0 || cfg.c_max <= 0.0) {
    StableRanges r = solve_stable_ranges(cfg.dt, cfg.invmass_max);
    cfg.k_max = r.k_max;
    cfg.c_max = r.c_max;
  }
  Model m;
  m.cfg = cfg;
  Rng rng(seed);
  if (cfg.has_inference()) {
    ad::init_mlp(m.params, "inf.edge", cfg.edge_net(), rng);
    ad::init_mlp(m.params, "inf.node", cfg.node_net(), rng);
    if (cfg.has_gru()) {
      ad::init_gru(m.params, "inf.gru", cfg.gru(), rng);
      ad::init_mlp(m.params, "inf.head", cfg.edge_head_linear(), rng);
    } else {
      ad::init_mlp(m.params, "inf.head", cfg.edge_head_mlp(), rng);
    }
  }
  ad::init_mlp(m.params, "dyn.edge", cfg.edge_net(), rng);
  ad::init_mlp(m.params, "dyn.node", cfg.node_net(), rng);
  ad::init_mlp(m.params, "dyn.head", cfg.param_head(), rng);
  return m;
}

}  // namespace gdyn
