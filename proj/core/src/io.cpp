#include "gdyn/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gdyn::io {

using json = nlohmann::ordered_json;

void write_file_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("write_file_atomic: cannot open " + tmp);
    f << content;
    if (!f) throw std::runtime_error("write_file_atomic: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("write_file_atomic: rename failed for " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_file: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void save_dataset(const std::string& path, const std::vector<graph::GraphTrajectory>& trajs) {
  std::ostringstream out;
  for (const auto& tr : trajs) {
    tr.validate();
    json j;
    j["dt"] = tr.dt;
    json steps = json::array();
    for (const auto& snap : tr.snapshots) {
      json nodes = json::array();
      for (const auto& nd : snap.nodes)
        nodes.push_back({nd.position[0], nd.position[1], nd.velocity[0], nd.velocity[1]});
      steps.push_back(std::move(nodes));
    }
    j["nodes"] = std::move(steps);
    json controls = json::array();
    for (const auto& u : tr.controls) controls.push_back({u[0], u[1]});
    j["controls"] = std::move(controls);
    json contacts = json::array();
    for (size_t t = 0; t < tr.contact_flags.size(); ++t) {
      int e = 0;
      const int n = tr.num_nodes();
      for (int i = 0; i < n; ++i)
        for (int k = i + 1; k < n; ++k, ++e)
          if (tr.contact_flags[t][e]) contacts.push_back({i, k, int(t)});
    }
    j["contacts"] = std::move(contacts);
    out << j.dump() << "\n";
  }
  write_file_atomic(path, out.str());
}

std::vector<graph::GraphTrajectory> load_dataset(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<graph::GraphTrajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    graph::GraphTrajectory tr;
    tr.dt = j.at("dt").get<double>();
    for (const auto& step : j.at("nodes")) {
      std::vector<graph::NodeState> nodes;
      for (const auto& nd : step)
        nodes.push_back({{nd.at(0).get<double>(), nd.at(1).get<double>()},
                         {nd.at(2).get<double>(), nd.at(3).get<double>()}});
      tr.snapshots.push_back(graph::build_fully_connected(nodes));
    }
    for (const auto& u : j.at("controls"))
      tr.controls.push_back({u.at(0).get<double>(), u.at(1).get<double>()});
    const int n = tr.num_nodes();
    const int n_edges = n * (n - 1) / 2;
    tr.contact_flags.assign(tr.controls.size(), std::vector<bool>(n_edges, false));
    for (const auto& c : j.at("contacts")) {
      int i = c.at(0).get<int>(), k = c.at(1).get<int>(), t = c.at(2).get<int>();
      if (i < 0 || k <= i || k >= n || t < 0 || t >= int(tr.contact_flags.size()))
        throw std::runtime_error("load_dataset: contact entry out of range");
      int e = 0;
      for (int p = 0; p < i; ++p) e += n - 1 - p;
      e += k - i - 1;
      tr.contact_flags[t][e] = true;
    }
    tr.validate();
    out.push_back(std::move(tr));
  }
  return out;
}

namespace {

json tensor_to_json(const ad::Tensor& t) {
  json j;
  j["rows"] = t.rows;
  j["cols"] = t.cols;
  j["data"] = t.d;
  return j;
}

ad::Tensor tensor_from_json(const json& j) {
  ad::Tensor t(j.at("rows").get<int>(), j.at("cols").get<int>());
  auto data = j.at("data").get<std::vector<double>>();
  if (int(data.size()) != t.rows * t.cols)
    throw std::runtime_error("checkpoint: tensor size mismatch");
  t.d = std::move(data);
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const CheckpointMeta& meta) {
  json j;
  j["format_version"] = 1;
  json cfg;
  cfg["variant"] = variant_name(model.cfg.variant);
  cfg["spatial_dim"] = model.cfg.spatial_dim;
  cfg["embed_dim"] = model.cfg.embed_dim;
  cfg["mlp_hidden"] = model.cfg.mlp_hidden;
  cfg["gru_hidden"] = model.cfg.gru_hidden;
  cfg["d_th"] = model.cfg.d_th;
  cfg["temperature"] = model.cfg.temperature;
  cfg["dt"] = model.cfg.dt;
  cfg["invmass_max"] = model.cfg.invmass_max;
  cfg["k_max"] = model.cfg.k_max;
  cfg["c_max"] = model.cfg.c_max;
  cfg["equil_max"] = model.cfg.equil_max;
  j["config"] = std::move(cfg);
  json m;
  m["seed"] = meta.seed;
  m["epochs"] = meta.epochs;
  m["final_train_loss"] = meta.final_train_loss;
  m["best_val_loss"] = meta.best_val_loss;
  j["meta"] = std::move(m);
  json params;
  for (const auto& [name, tensor] : model.params.params()) params[name] = tensor_to_json(tensor);
  j["params"] = std::move(params);
  write_file_atomic(path, j.dump() + "\n");
}

Model load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  json j = json::parse(read_file(path));
  if (j.at("format_version").get<int>() != 1)
    throw std::runtime_error("load_checkpoint: unsupported format version");
  Model model;
  const json& cfg = j.at("config");
  model.cfg.variant = variant_from_name(cfg.at("variant").get<std::string>());
  model.cfg.spatial_dim = cfg.at("spatial_dim").get<int>();
  model.cfg.embed_dim = cfg.at("embed_dim").get<int>();
  model.cfg.mlp_hidden = cfg.at("mlp_hidden").get<std::vector<int>>();
  model.cfg.gru_hidden = cfg.at("gru_hidden").get<int>();
  model.cfg.d_th = cfg.at("d_th").get<double>();
  model.cfg.temperature = cfg.at("temperature").get<double>();
  model.cfg.dt = cfg.at("dt").get<double>();
  model.cfg.invmass_max = cfg.at("invmass_max").get<double>();
  model.cfg.k_max = cfg.at("k_max").get<double>();
  model.cfg.c_max = cfg.at("c_max").get<double>();
  model.cfg.equil_max = cfg.at("equil_max").get<double>();
  for (const auto& [name, tj] : j.at("params").items())
    model.params.add(name, tensor_from_json(tj));
  if (meta) {
    const json& m = j.at("meta");
    meta->seed = m.at("seed").get<uint64_t>();
    meta->epochs = m.at("epochs").get<int>();
    meta->final_train_loss = m.at("final_train_loss").get<double>();
    meta->best_val_loss = m.at("best_val_loss").get<double>();
  }
  return model;
}

void save_cost_params(const std::string& path, const cost::CostParams& cp) {
  json j;
  j["format_version"] = 1;
  j["state_dim"] = cp.state_dim;
  j["l_packed"] = cp.l_packed;
  j["log_r"] = cp.log_r;
  j["eps"] = cp.eps;
  write_file_atomic(path, j.dump() + "\n");
}

cost::CostParams load_cost_params(const std::string& path) {
  json j = json::parse(read_file(path));
  cost::CostParams cp;
  cp.state_dim = j.at("state_dim").get<int>();
  cp.l_packed = j.at("l_packed").get<std::vector<double>>();
  cp.log_r = j.at("log_r").get<double>();
  cp.eps = j.at("eps").get<double>();
  return cp;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].find_first_of(",\n") != std::string::npos)
        throw std::invalid_argument("write_csv: field contains a delimiter");
      out << fields[i] << (i + 1 < fields.size() ? "," : "");
    }
    out << "\n";
  };
  emit(header);
  for (const auto& r : rows) emit(r);
  write_file_atomic(path, out.str());
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) return {};
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(cur);
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace gdyn::io
