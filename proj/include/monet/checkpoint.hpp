#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "monet/adam.hpp"
#include "monet/network.hpp"

namespace monet {

struct CheckpointMeta {
  std::string phase = "init";  // init | pretrain | train
  int epoch = 0;               // epochs completed in `phase`
  bool pretrained = false;
};

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
  std::optional<AdamState> optimizer;
};

nlohmann::json checkpoint_to_json(Model& model, const CheckpointMeta& meta,
                                  const AdamState* optimizer = nullptr);
LoadedCheckpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, Model& model, const CheckpointMeta& meta,
                     const AdamState* optimizer = nullptr);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace monet
