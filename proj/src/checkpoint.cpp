#include "lesionattn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace lesionattn::model {

static_assert(std::endian::native == std::endian::little, "checkpoint payload is written little endian");

namespace {

constexpr std::array<char, 8> kMagic{'L', 'A', 'C', 'K', 'P', 'T', '0', '1'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Rann& model, const nlohmann::json& metadata) {
  if (model.is_empty()) throw Error("cannot save an uninitialized model");
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<torch::Tensor> payload;
  for (const auto& p : model->named_parameters()) {
    auto t = p.value().detach().to(torch::kFloat32).contiguous();
    tensors.push_back({{"name", p.key()}, {"shape", t.sizes().vec()}});
    payload.push_back(t);
  }
  const nlohmann::json header{{"format", "lesionattn-checkpoint"},
                              {"version", 1},
                              {"dtype", "float32"},
                              {"model_config", to_json(model->config())},
                              {"seed", model->config().seed},
                              {"tensors", tensors},
                              {"metadata", metadata}};
  const std::string text = header.dump();
  const std::uint64_t length = text.size();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kMagic.data(), kMagic.size());
    out.write(reinterpret_cast<const char*>(&length), sizeof(length));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : payload) {
      out.write(reinterpret_cast<const char*>(t.data_ptr<float>()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    if (!out) throw Error("write failed for checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  std::uint64_t length = 0;
  in.read(magic.data(), magic.size());
  in.read(reinterpret_cast<char*>(&length), sizeof(length));
  if (!in || magic != kMagic) throw Error(path.string() + " is not a lesionattn checkpoint");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw Error(path.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": corrupt header: " + e.what());
  }

  Checkpoint ckpt;
  ckpt.model = Rann(model_config_from_json(header.at("model_config")));
  ckpt.metadata = header.value("metadata", nlohmann::json::object());
  auto params = ckpt.model->named_parameters();
  const auto& table = header.at("tensors");
  if (table.size() != params.size()) throw Error(path.string() + ": tensor count does not match the model config");

  torch::NoGradGuard no_grad;
  for (const auto& entry : table) {
    const auto name = entry.at("name").get<std::string>();
    auto* slot = params.find(name);
    if (slot == nullptr) throw Error(path.string() + ": unexpected tensor '" + name + "'");
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    if (slot->sizes().vec() != shape) throw Error(path.string() + ": shape mismatch for '" + name + "'");
    auto buffer = torch::empty(shape, torch::kFloat32);
    in.read(reinterpret_cast<char*>(buffer.data_ptr<float>()), static_cast<std::streamsize>(buffer.numel() * sizeof(float)));
    if (!in) throw Error(path.string() + ": truncated payload at '" + name + "'");
    slot->copy_(buffer);
  }
  return ckpt;
}

std::vector<torch::Tensor> snapshot_parameters(Rann& model) {
  std::vector<torch::Tensor> out;
  for (const auto& p : model->parameters()) out.push_back(p.detach().clone());
  return out;
}

void restore_parameters(Rann& model, const std::vector<torch::Tensor>& snapshot) {
  auto params = model->parameters();
  if (params.size() != snapshot.size()) throw Error("parameter snapshot does not match the model");
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(snapshot[i]);
}

}  // namespace lesionattn::model
