#include "monet/checkpoint.hpp"

#include <stdexcept>

#include "monet/io.hpp"

namespace monet {

namespace {
constexpr const char* kFormat = "monet-checkpoint";
constexpr int kVersion = 1;
}  // namespace

nlohmann::json checkpoint_to_json(Model& model, const CheckpointMeta& meta,
                                  const AdamState* optimizer) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : model.named_parameters()) {
    params[name] = {{"shape", t->shape()},
                    {"data", std::vector<double>(t->data().begin(), t->data().end())}};
  }
  nlohmann::json j = {{"format", kFormat},
                      {"version", kVersion},
                      {"config", model.config()},
                      {"meta", {{"phase", meta.phase}, {"epoch", meta.epoch}, {"pretrained", meta.pretrained}}},
                      {"params", std::move(params)}};
  if (optimizer) {
    j["optimizer"] = {{"step", optimizer->step}, {"m", optimizer->m}, {"v", optimizer->v}};
  }
  return j;
}

LoadedCheckpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kFormat) throw std::runtime_error("not a monet checkpoint");
  if (j.at("version").get<int>() != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + j.at("version").dump());
  LoadedCheckpoint out{Model(j.at("config").get<ModelConfig>()), {}, std::nullopt};
  const auto& meta = j.at("meta");
  out.meta.phase = meta.at("phase").get<std::string>();
  out.meta.epoch = meta.at("epoch").get<int>();
  out.meta.pretrained = meta.at("pretrained").get<bool>();

  const auto& params = j.at("params");
  auto named = out.model.named_parameters();
  if (params.size() != named.size())
    throw std::runtime_error("checkpoint has " + std::to_string(params.size()) +
                             " parameter tensors, model expects " + std::to_string(named.size()));
  for (auto& [name, t] : named) {
    if (!params.contains(name)) throw std::runtime_error("checkpoint is missing parameter " + name);
    const auto& p = params.at(name);
    const auto shape = p.at("shape").get<Shape>();
    if (shape != t->shape())
      throw std::runtime_error("parameter " + name + " has shape " + shape_to_string(shape) +
                               ", model expects " + shape_to_string(t->shape()));
    const auto data = p.at("data").get<std::vector<double>>();
    if (data.size() != t->size())
      throw std::runtime_error("parameter " + name + " has a truncated data array");
    std::copy(data.begin(), data.end(), t->data().begin());
  }
  if (j.contains("optimizer")) {
    AdamState s;
    s.step = j["optimizer"].at("step").get<std::uint64_t>();
    s.m = j["optimizer"].at("m").get<std::vector<std::vector<double>>>();
    s.v = j["optimizer"].at("v").get<std::vector<std::vector<double>>>();
    out.optimizer = std::move(s);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, Model& model, const CheckpointMeta& meta,
                     const AdamState* optimizer) {
  write_file_atomic(path, checkpoint_to_json(model, meta, optimizer).dump());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace monet
