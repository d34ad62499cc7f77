#include <benchmark/benchmark.h>

#include "gdyn/control.hpp"
#include "gdyn/inference.hpp"
#include "gdyn/model.hpp"
#include "gdyn/sim2d.hpp"

using namespace gdyn;

namespace {

Model make_model(uint64_t seed = 1) { return Model::init(ModelConfig{}, seed); }

ad::Tensor rand_tensor(Rng& rng, int r, int c) {
  ad::Tensor t(r, c);
  for (double& x : t.d) x = rng.uniform(-1, 1);
  return t;
}

void bm_mlp_forward(benchmark::State& state) {
  Model m = make_model();
  Rng rng(2);
  ad::Tensor x = rand_tensor(rng, int(state.range(0)), m.cfg.edge_net().in);
  for (auto _ : state) {
    ad::Tensor y = ad::mlp_eval(m.params, "dyn.edge", m.cfg.edge_net(), x);
    benchmark::DoNotOptimize(y.d.data());
  }
}

void bm_mlp_backward(benchmark::State& state) {
  Model m = make_model();
  Rng rng(3);
  ad::Tensor x = rand_tensor(rng, int(state.range(0)), m.cfg.edge_net().in);
  for (auto _ : state) {
    ad::Tape t;
    ad::ParamBinder b(t, m.params);
    ad::Var y = ad::mlp_forward(b, "dyn.edge", m.cfg.edge_net(), t.constant(x));
    ad::Var loss = ad::sum_all(t, ad::square(t, y));
    t.backward(loss);
    b.collect();
    benchmark::DoNotOptimize(loss.id);
  }
}

void bm_message_pass_eval(benchmark::State& state) {
  Model m = make_model();
  Rng rng(5);
  const int n = int(state.range(0));
  std::vector<graph::NodeState> nodes(n);
  for (auto& nd : nodes) {
    nd.position = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    nd.velocity = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  }
  auto w = infer::GraphWiring::make(n, 1);
  auto snap = graph::build_fully_connected(nodes);
  ad::Tensor states = infer::stack_features({snap});
  ad::Tensor dists = infer::stack_distances(w, {snap});
  for (auto _ : state) {
    auto r = infer::message_pass_eval(m.params, m.cfg, "dyn", w, states, dists);
    benchmark::DoNotOptimize(r.node_embed.d.data());
  }
}

void bm_model_step(benchmark::State& state) {
  Model m = make_model();
  Rng rng(7);
  const int n = int(state.range(0));
  std::vector<graph::NodeState> nodes(n);
  for (auto& nd : nodes) nd.position = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  dynmod::ModelStepper stepper(m, n);
  auto s = stepper.initial_state(nodes);
  for (auto _ : state) {
    auto rec = stepper.step(s, {0.1, -0.1}, ad::SampleMode::Argmax, nullptr);
    benchmark::DoNotOptimize(rec.next.data());
  }
}

void bm_lqr_backward(benchmark::State& state) {
  const int n = int(state.range(0));
  std::vector<dynmod::AffineSystem> per_node(n);
  for (auto& sys : per_node) {
    dynmod::NodeDynParams p;
    p.dof = {{1.0, 2.0, 1.0, 0.0}, {1.0, 2.0, 1.0, 0.0}};
    sys = dynmod::assemble_affine(p, 0.05);
  }
  auto js = ctrl::assemble_joint(per_node);
  std::vector<ctrl::JointAffineSystem> seq(40, js);
  ctrl::QuadCost cost = ctrl::default_pickup_cost(n, 1, {0.5, 0.5});
  for (auto _ : state) {
    auto g = ctrl::lqr_backward(seq, cost);
    benchmark::DoNotOptimize(g.K.data());
  }
}

void bm_sim_step(benchmark::State& state) {
  Rng rng(11);
  auto ep = sim::sample_pickup(rng, 1, int(state.range(0)) - 2);
  for (auto _ : state) {
    auto w = ep.world;
    for (int t = 0; t < 200; ++t) {
      auto r = sim::step(w, {0.05, 0.02});
      benchmark::DoNotOptimize(r.next.data());
    }
  }
}

}  // namespace

BENCHMARK(bm_mlp_forward)->Arg(64)->Arg(512);
BENCHMARK(bm_mlp_backward)->Arg(64)->Arg(512);
BENCHMARK(bm_message_pass_eval)->Arg(2)->Arg(6)->Arg(12);
BENCHMARK(bm_model_step)->Arg(2)->Arg(6);
BENCHMARK(bm_lqr_backward)->Arg(2)->Arg(6)->Arg(12);
BENCHMARK(bm_sim_step)->Arg(2)->Arg(6);

BENCHMARK_MAIN();
