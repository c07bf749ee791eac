#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tarmac/nn/param_store.hpp"

// Checkpoint format: manifest.json listing {name, shape, offset} plus one
// params.bin blob of little-endian 32-bit floats concatenated in manifest
// order. Offsets are in bytes.

namespace tarmac {

template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::filesystem::path& dir,
                     const nlohmann::json& meta = {}) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "tarmac-checkpoint-v1";
  manifest["dtype"] = "float32_le";
  manifest["blob"] = "params.bin";
  if (!meta.is_null()) manifest["meta"] = meta;
  auto& entries = manifest["params"] = nlohmann::json::array();

  std::ofstream blob(dir / "params.bin", std::ios::binary | std::ios::trunc);
  if (!blob) throw TensorError("cannot write " + (dir / "params.bin").string());
  std::uint64_t offset = 0;
  for (const auto& p : store.params()) {
    entries.push_back({{"name", p->name}, {"shape", p->data.shape}, {"offset", offset}});
    std::vector<float> row(p->data.value.size());
    for (size_t i = 0; i < row.size(); ++i) row[i] = static_cast<float>(p->data.value[i]);
    blob.write(reinterpret_cast<const char*>(row.data()),
               static_cast<std::streamsize>(row.size() * sizeof(float)));
    offset += row.size() * sizeof(float);
  }
  blob.close();

  std::ofstream mf(dir / "manifest.json", std::ios::trunc);
  mf << manifest.dump(2) << "\n";
}

template <typename T>
nlohmann::json load_checkpoint(ParamStore<T>& store, const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw TensorError("missing checkpoint manifest in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(mf);

  std::ifstream blob(dir / "params.bin", std::ios::binary);
  if (!blob) throw TensorError("missing checkpoint blob in " + dir.string());

  for (const auto& e : manifest.at("params")) {
    const std::string name = e.at("name");
    TensorData<T>* p = store.find(name);
    const Shape shape = e.at("shape").get<Shape>();
    if (shape != p->shape)
      throw TensorError("checkpoint shape mismatch for " + name + ": " + shape_str(shape) +
                        " vs " + shape_str(p->shape));
    blob.seekg(static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
    std::vector<float> row(p->value.size());
    blob.read(reinterpret_cast<char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!blob) throw TensorError("truncated checkpoint blob for " + name);
    for (size_t i = 0; i < row.size(); ++i) p->value[i] = static_cast<T>(row[i]);
  }
  return manifest;
}

}  // namespace tarmac
