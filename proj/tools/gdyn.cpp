// Command-line workbench: data generation, training, evaluation, MPC runs,
// ablation sweeps and cost learning on top of the gdyn core library.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "gdyn/control.hpp"
#include "gdyn/costlearn.hpp"
#include "gdyn/io.hpp"
#include "gdyn/model.hpp"
#include "gdyn/sim2d.hpp"
#include "gdyn/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace gdyn;

namespace {

struct RunConfig {
  train::TrainConfig train;
  ctrl::MpcOptions mpc;
  sim::SimConfig sim;
  int n_step = 10;  // N for the N-step metrics (0.5 s at dt = 0.05)
  double collect_noise = 2.0;  // expert-force dither for internally collected data

  void apply_json(const json& j) {
    if (j.contains("train")) {
      const json& t = j["train"];
      if (t.contains("lr")) train.lr = t["lr"].get<double>();
      if (t.contains("batch_size")) train.batch_size = t["batch_size"].get<int>();
      if (t.contains("epochs")) train.epochs = t["epochs"].get<int>();
      if (t.contains("prior_weight")) train.prior_weight = t["prior_weight"].get<double>();
      if (t.contains("val_every")) train.val_every = t["val_every"].get<int>();
    }
    if (j.contains("mpc")) {
      const json& m = j["mpc"];
      if (m.contains("t_lqr")) mpc.t_lqr = m["t_lqr"].get<int>();
      if (m.contains("plan_horizon_cap")) mpc.plan_horizon_cap = m["plan_horizon_cap"].get<int>();
      if (m.contains("posterior_updates")) mpc.posterior_updates = m["posterior_updates"].get<bool>();
      if (m.contains("max_iters")) mpc.ilqr.max_iters = m["max_iters"].get<int>();
      if (m.contains("u_max")) mpc.ilqr.u_max = m["u_max"].get<double>();
    }
    if (j.contains("n_step")) n_step = j["n_step"].get<int>();
    if (j.contains("collect_noise")) collect_noise = j["collect_noise"].get<double>();
  }
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

bool is_aug_variant(const std::string& name) { return name == "No-GIM-Aug"; }

std::vector<graph::GraphTrajectory> make_train_data(int task, const std::string& variant,
                                                    uint64_t seed, const sim::SimConfig& sc,
                                                    double control_noise) {
  sim::CollectOptions opt;
  opt.task = task;
  opt.seed = seed;
  opt.n_traj = 40;
  opt.control_noise = control_noise;
  if (!is_aug_variant(variant)) return sim::collect_dataset(opt, sc);
  // Augmented data: Task 1 adds 0..3 distractors (160 trajectories); Task 2
  // sweeps 1..3 pickups (120); Task 3 adds 0..3 distractors.
  std::vector<graph::GraphTrajectory> all;
  if (task == 2) {
    for (int p = 1; p <= 3; ++p) {
      opt.pickups = p;
      opt.seed = seed + 1000 * p;
      auto part = sim::collect_dataset(opt, sc);
      all.insert(all.end(), part.begin(), part.end());
    }
  } else {
    for (int d = 0; d <= 3; ++d) {
      opt.distractors = d;
      opt.seed = seed + 1000 * d;
      auto part = sim::collect_dataset(opt, sc);
      all.insert(all.end(), part.begin(), part.end());
    }
  }
  return all;
}

Model train_variant(const std::vector<graph::GraphTrajectory>& data, const std::string& variant,
                    const RunConfig& rc, uint64_t seed, const std::string& out_dir,
                    const std::string& tag) {
  // Node counts may differ across augmented trajectories; the model is
  // node-count agnostic, but the trainer batches per trajectory, so mixed
  // sizes are fine.
  ModelConfig arch;
  arch.variant = variant_from_name(variant == "No-GIM-Aug" ? "No-GIM" : variant);
  train::TrainConfig tc = rc.train;
  tc.seed = seed;
  train::Dataset ds = train::Dataset::with_split(data, 0.2);
  train::TrainResult res = train::train(ds, arch, tc);

  fs::create_directories(out_dir);
  io::CheckpointMeta meta;
  meta.seed = seed;
  meta.epochs = tc.epochs;
  meta.final_train_loss = res.curve.empty() ? 0.0 : res.curve.back().train_loss;
  meta.best_val_loss = res.best_val;
  io::save_checkpoint(out_dir + "/" + tag + "checkpoint.json", res.best, meta);
  std::vector<std::vector<std::string>> rows;
  for (const auto& st : res.curve)
    rows.push_back({std::to_string(st.epoch), fmt(st.train_loss), fmt(st.val_loss),
                    fmt(st.pred_term), fmt(st.kl_term)});
  io::write_csv(out_dir + "/" + tag + "loss.csv",
                {"epoch", "train_loss", "val_loss", "pred_term", "kl_term"}, rows);
  return res.best;
}

struct EpisodeMetrics {
  double rmse = 0.0;
  double edge_acc = 0.0;
  bool success = false;
  bool aborted = false;
};

EpisodeMetrics run_episode(const Model& model, int task, int distractors, uint64_t seed,
                           const RunConfig& rc) {
  Rng rng(seed);
  EpisodeMetrics m;
  std::unique_ptr<sim::Env> env;
  graph::Vec2 goal{0.0, 0.0};
  if (task == 3) {
    sim::DoorEpisode ep = sim::sample_door(rng, distractors, rc.sim);
    goal = {rc.sim.door_length * std::cos(ep.world.goal_angle),
            rc.sim.door_length * std::sin(ep.world.goal_angle)};
    env = std::make_unique<sim::DoorEnv>(ep.world);
  } else {
    sim::PickupEpisode ep = sim::sample_pickup(rng, task == 2 ? 2 : 1, distractors, rc.sim);
    goal = ep.goal;
    env = std::make_unique<sim::PickupEnv>(ep.world);
  }
  ctrl::QuadCost cost = ctrl::default_pickup_cost(env->n_nodes(), 1, goal);
  ctrl::LearnedDyn planner(model, env->observe());
  ctrl::MpcResult log = ctrl::mpc_run(*env, planner, cost, rc.sim.horizon, rc.mpc);
  m.aborted = log.aborted;
  if (log.aborted) {
    m.rmse = std::numeric_limits<double>::infinity();
    return m;
  }
  m.rmse = ctrl::n_step_error(log, rc.n_step);
  m.edge_acc = ctrl::edge_accuracy(log, rc.n_step);
  m.success = ctrl::pickup_success(log, 1, goal, rc.sim.goal_radius);
  return m;
}

struct Aggregate {
  double rmse = 0.0, edge_acc = 0.0, success = 0.0;
};

Aggregate eval_model(const Model& model, int task, int distractors, int episodes, uint64_t seed,
                     const RunConfig& rc, std::vector<std::vector<std::string>>* rows,
                     const std::string& variant) {
  Aggregate agg;
  for (int ep = 0; ep < episodes; ++ep) {
    EpisodeMetrics m = run_episode(model, task, distractors, seed + 7919 * ep, rc);
    agg.rmse += m.rmse;
    agg.edge_acc += m.edge_acc;
    agg.success += m.success ? 1.0 : 0.0;
    if (rows)
      rows->push_back({std::to_string(task), variant, std::to_string(distractors),
                       std::to_string(seed), std::to_string(ep), fmt(m.rmse), fmt(m.edge_acc),
                       m.success ? "1" : "0"});
  }
  agg.rmse /= episodes;
  agg.edge_acc /= episodes;
  agg.success /= episodes;
  return agg;
}

const std::vector<std::string> kMetricsHeader = {
    "task", "model_variant", "n_distractors", "seed", "episode",
    "n_step_rmse", "edge_accuracy", "success"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interaction-graph dynamics workbench"};
  app.require_subcommand(1);

  std::string config_path, out = ".";
  uint64_t seed = 0;
  app.add_option("--config", config_path, "JSON config file")->capture_default_str();

  RunConfig rc;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a scripted-expert dataset");
  int g_task = 1, g_n = 40, g_distractors = 0, g_pickups = 0;
  double g_noise = 0.0;
  bool g_fix_goal = false;
  std::vector<double> g_goal{0.5, 0.5};
  std::string g_out = "dataset.jsonl";
  gen->add_option("--task", g_task, "Task id (1, 2 or 3)")->capture_default_str();
  gen->add_option("--n", g_n, "Number of trajectories")->capture_default_str();
  gen->add_option("--seed", seed, "Random seed")->capture_default_str();
  gen->add_option("--distractors", g_distractors)->capture_default_str();
  gen->add_option("--pickups", g_pickups, "Targets per trajectory (0 = task default)");
  gen->add_flag("--fix-goal", g_fix_goal, "Pin every episode's goal (expert demo sets)");
  gen->add_option("--goal", g_goal, "Fixed goal position")->expected(2);
  gen->add_option("--control-noise", g_noise,
                  "Uniform dither (N) added to the expert force for excitation")
      ->capture_default_str();
  gen->add_option("--out", g_out, "Output file")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a model variant on a dataset");
  std::string t_data, t_variant = "GIM-Temp", t_out = ".";
  tr->add_option("--data", t_data, "Dataset (JSON-Lines)")->required();
  tr->add_option("--variant", t_variant, "GIM-Temp|GIM-Non-Temp|No-GIM|No-GIM-Aug|Full-AB")
      ->capture_default_str();
  tr->add_option("--seed", seed)->capture_default_str();
  tr->add_option("--out", t_out, "Output directory")->capture_default_str();
  tr->add_option("--epochs", rc.train.epochs)->capture_default_str();
  tr->add_option("--batch", rc.train.batch_size)->capture_default_str();
  tr->add_option("--lr", rc.train.lr)->capture_default_str();
  tr->add_option("--lambda", rc.train.prior_weight, "Distance-prior weight")
      ->capture_default_str();

  // eval
  auto* ev = app.add_subcommand("eval", "Run MPC episodes and emit metrics");
  std::string e_ckpt, e_out = "metrics.csv", e_variant = "GIM-Temp";
  int e_task = 1, e_distractors = 0, e_episodes = 5;
  ev->add_option("--checkpoint", e_ckpt)->required();
  ev->add_option("--task", e_task)->capture_default_str();
  ev->add_option("--distractors", e_distractors)->capture_default_str();
  ev->add_option("--episodes", e_episodes)->capture_default_str();
  ev->add_option("--seed", seed)->capture_default_str();
  ev->add_option("--variant", e_variant, "Variant label for the CSV")->capture_default_str();
  ev->add_option("--out", e_out, "Metrics CSV path")->capture_default_str();
  ev->add_option("--horizon-cap", rc.mpc.plan_horizon_cap, "Planning horizon cap (0 = to end)")
      ->capture_default_str();

  // mpc-run
  auto* mr = app.add_subcommand("mpc-run", "Run one MPC episode and dump the trajectory");
  std::string m_ckpt, m_out = "episode.csv";
  int m_task = 1, m_distractors = 0;
  mr->add_option("--checkpoint", m_ckpt)->required();
  mr->add_option("--task", m_task)->capture_default_str();
  mr->add_option("--distractors", m_distractors)->capture_default_str();
  mr->add_option("--seed", seed)->capture_default_str();
  mr->add_option("--out", m_out)->capture_default_str();
  mr->add_option("--horizon-cap", rc.mpc.plan_horizon_cap)->capture_default_str();

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train/eval sweep over variants and seeds");
  std::string a_out = "ablation";
  std::vector<std::string> a_variants{"GIM-Temp", "GIM-Non-Temp", "No-GIM"};
  std::vector<uint64_t> a_seeds{0};
  int a_task = 1, a_episodes = 3, a_eval_distractors = 10;
  ab->add_option("--task", a_task)->capture_default_str();
  ab->add_option("--variants", a_variants, "Variants to sweep")->delimiter(',');
  ab->add_option("--seeds", a_seeds, "Seeds to sweep")->delimiter(',');
  ab->add_option("--episodes", a_episodes)->capture_default_str();
  ab->add_option("--eval-distractors", a_eval_distractors)->capture_default_str();
  ab->add_option("--out", a_out, "Output directory")->capture_default_str();
  ab->add_option("--epochs", rc.train.epochs)->capture_default_str();
  ab->add_option("--batch", rc.train.batch_size)->capture_default_str();
  ab->add_option("--lr", rc.train.lr)->capture_default_str();
  ab->add_option("--horizon-cap", rc.mpc.plan_horizon_cap)->capture_default_str();

  // cost-learn
  auto* cl = app.add_subcommand("cost-learn", "Learn quadratic cost matrices from demos");
  std::string c_demos, c_ckpt, c_out = ".";
  std::vector<double> c_goal{0.5, 0.5};
  int c_episodes = 10, c_epochs = 120;
  cl->add_option("--demos", c_demos, "Expert demo dataset")->required();
  cl->add_option("--checkpoint", c_ckpt, "Frozen dynamics model")->required();
  cl->add_option("--goal", c_goal, "The demos' shared goal")->expected(2);
  cl->add_option("--episodes", c_episodes, "Evaluation episodes per condition")
      ->capture_default_str();
  cl->add_option("--epochs", c_epochs)->capture_default_str();
  cl->add_option("--seed", seed)->capture_default_str();
  cl->add_option("--out", c_out, "Output directory")->capture_default_str();
  cl->add_option("--horizon-cap", rc.mpc.plan_horizon_cap)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (!config_path.empty()) rc.apply_json(json::parse(io::read_file(config_path)));

    if (gen->parsed()) {
      sim::CollectOptions opt;
      opt.task = g_task;
      opt.n_traj = g_n;
      opt.seed = seed;
      opt.distractors = g_distractors;
      opt.pickups = g_pickups;
      opt.fix_goal = g_fix_goal;
      opt.goal = {g_goal[0], g_goal[1]};
      opt.control_noise = g_noise;
      auto trajs = sim::collect_dataset(opt, rc.sim);
      io::save_dataset(g_out, trajs);
      int welds = 0;
      for (const auto& t : trajs)
        for (bool c : t.contact_flags.back()) welds += c;
      std::cout << "wrote " << trajs.size() << " trajectories, " << trajs[0].num_nodes()
                << " nodes, " << welds << " final contacts to " << g_out << "\n";
    } else if (tr->parsed()) {
      variant_from_name(t_variant == "No-GIM-Aug" ? "No-GIM" : t_variant);  // validate name
      auto data = io::load_dataset(t_data);
      Model model = train_variant(data, t_variant, rc, seed, t_out, "");
      std::cout << "trained " << t_variant << " -> " << t_out << "/checkpoint.json\n";
    } else if (ev->parsed()) {
      Model model = io::load_checkpoint(e_ckpt);
      std::vector<std::vector<std::string>> rows;
      Aggregate agg =
          eval_model(model, e_task, e_distractors, e_episodes, seed, rc, &rows, e_variant);
      rows.push_back({std::to_string(e_task), e_variant, std::to_string(e_distractors),
                      std::to_string(seed), "mean", fmt(agg.rmse), fmt(agg.edge_acc),
                      fmt(agg.success)});
      io::write_csv(e_out, kMetricsHeader, rows);
      std::cout << "mean n_step_rmse " << agg.rmse << "  edge_accuracy " << agg.edge_acc
                << "  success " << agg.success << "\n";
    } else if (mr->parsed()) {
      Model model = io::load_checkpoint(m_ckpt);
      Rng rng(seed);
      std::unique_ptr<sim::Env> env;
      graph::Vec2 goal{0, 0};
      if (m_task == 3) {
        auto ep = sim::sample_door(rng, m_distractors, rc.sim);
        goal = {rc.sim.door_length * std::cos(ep.world.goal_angle),
                rc.sim.door_length * std::sin(ep.world.goal_angle)};
        env = std::make_unique<sim::DoorEnv>(ep.world);
      } else {
        auto ep = sim::sample_pickup(rng, m_task == 2 ? 2 : 1, m_distractors, rc.sim);
        goal = ep.goal;
        env = std::make_unique<sim::PickupEnv>(ep.world);
      }
      ctrl::QuadCost cost = ctrl::default_pickup_cost(env->n_nodes(), 1, goal);
      ctrl::LearnedDyn planner(model, env->observe());
      ctrl::MpcResult log = ctrl::mpc_run(*env, planner, cost, rc.sim.horizon, rc.mpc);
      std::vector<std::vector<std::string>> rows;
      for (size_t t = 0; t < log.executed.size(); ++t) {
        std::vector<std::string> row{std::to_string(t)};
        for (const auto& nd : log.executed[t]) {
          row.push_back(fmt(nd.position[0]));
          row.push_back(fmt(nd.position[1]));
        }
        rows.push_back(std::move(row));
      }
      std::vector<std::string> header{"t"};
      for (int i = 0; i < env->n_nodes(); ++i) {
        header.push_back("q" + std::to_string(i) + "x");
        header.push_back("q" + std::to_string(i) + "y");
      }
      io::write_csv(m_out, header, rows);
      std::cout << (log.aborted ? "aborted" : "completed") << "; n_step_rmse "
                << (log.aborted ? std::nan("") : ctrl::n_step_error(log, rc.n_step)) << "\n";
    } else if (ab->parsed()) {
      fs::create_directories(a_out);
      std::vector<std::vector<std::string>> combined;
      const std::vector<std::string> header = {
          "task", "model_variant", "seed", "rmse_0", "edge_acc_0", "success_0",
          "rmse_gen", "edge_acc_gen", "success_gen"};
      for (uint64_t s : a_seeds) {
        for (const std::string& v : a_variants) {
          std::string tag = v + "_s" + std::to_string(s);
          std::string cell_csv = a_out + "/" + tag + ".csv";
          if (!io::read_csv(cell_csv).empty()) {
            std::cout << "skip " << tag << " (done)\n";
          } else {
            std::cout << "cell " << tag << "\n";
            auto data = make_train_data(a_task, v, s, rc.sim, rc.collect_noise);
            Model model = train_variant(data, v, rc, s, a_out, tag + "_");
            Aggregate a0 = eval_model(model, a_task, 0, a_episodes, s, rc, nullptr, v);
            Aggregate ag =
                eval_model(model, a_task, a_eval_distractors, a_episodes, s, rc, nullptr, v);
            io::write_csv(cell_csv, header,
                          {{std::to_string(a_task), v, std::to_string(s), fmt(a0.rmse),
                            fmt(a0.edge_acc), fmt(a0.success), fmt(ag.rmse), fmt(ag.edge_acc),
                            fmt(ag.success)}});
          }
          auto rows = io::read_csv(cell_csv);
          combined.push_back(rows.at(1));
        }
      }
      io::write_csv(a_out + "/combined.csv", header, combined);
      std::cout << "wrote " << a_out << "/combined.csv\n";
    } else if (cl->parsed()) {
      auto demos = io::load_dataset(c_demos);
      Model model = io::load_checkpoint(c_ckpt);
      std::vector<int> kept;
      auto reduced = cost::remove_isolated_nodes(demos, model, &kept);
      graph::Vec2 goal{c_goal[0], c_goal[1]};
      cost::DemoSet set = cost::build_demoset(reduced, model, 1, goal);
      cost::CostLearnConfig cc;
      cc.seed = seed;
      cc.epochs = c_epochs;
      cost::CostLearnResult res = cost::learn_cost(set, cc);
      fs::create_directories(c_out);
      io::save_cost_params(c_out + "/cost_params.json", res.params);
      cost::SuccessOptions so;
      so.episodes = c_episodes;
      so.seed = seed + 1;
      so.fixed_goal = goal;
      so.mpc = rc.mpc;
      double seen = cost::evaluate_success(model, res.params, so);
      so.sample_goal = true;
      so.seed = seed + 2;
      double unseen = cost::evaluate_success(model, res.params, so);
      io::write_csv(c_out + "/success.csv", {"condition", "success"},
                    {{"seen_goal", fmt(seen)}, {"unseen_goal", fmt(unseen)}});
      std::cout << "kept " << kept.size() << " nodes; success seen " << seen << " unseen "
                << unseen << "\n";
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
