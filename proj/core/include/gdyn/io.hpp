#pragma once

#include <string>
#include <vector>

#include "gdyn/costlearn.hpp"
#include "gdyn/model.hpp"
#include "gdyn/trainer.hpp"

namespace gdyn::io {

/// Write-temp-then-rename; an interrupted write never leaves a partial file.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

/// JSON-Lines, one trajectory per line:
/// {"dt":..,"nodes":[[[qx,qy,vx,vy]*node]*step],"controls":[[ux,uy]*step],
///  "contacts":[[i,j,t],...]}  (contacts lists the true flags only).
void save_dataset(const std::string& path, const std::vector<graph::GraphTrajectory>& trajs);
std::vector<graph::GraphTrajectory> load_dataset(const std::string& path);

struct CheckpointMeta {
  uint64_t seed = 0;
  int epochs = 0;
  double final_train_loss = 0.0;
  double best_val_loss = 0.0;
};

/// Versioned JSON checkpoint; save -> load -> save is byte-identical
/// (ordered keys, shortest-round-trip doubles).
void save_checkpoint(const std::string& path, const Model& model, const CheckpointMeta& meta);
Model load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

void save_cost_params(const std::string& path, const cost::CostParams& cp);
cost::CostParams load_cost_params(const std::string& path);

/// Minimal CSV (no quoting; fields must not contain commas/newlines).
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
/// Returns rows including the header line; empty if the file is missing.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace gdyn::io
