#pragma once

// Self-describing checkpoint files: a JSON header (model config, seed,
// tensor table, caller metadata) followed by raw float32 tensor bytes.
//
//   "LACKPT01" | u64 header length (little endian) | header JSON | payload

#include <filesystem>

#include "json.hpp"
#include "lesionattn/rann_model.hpp"

namespace lesionattn::model {

struct Checkpoint {
  Rann model{nullptr};
  nlohmann::json metadata;  // free-form, e.g. the training configuration
};

void save_checkpoint(const std::filesystem::path& path, Rann& model, const nlohmann::json& metadata = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Deep copy of all parameters (for best-epoch snapshots).
std::vector<torch::Tensor> snapshot_parameters(Rann& model);
void restore_parameters(Rann& model, const std::vector<torch::Tensor>& snapshot);

}  // namespace lesionattn::model
