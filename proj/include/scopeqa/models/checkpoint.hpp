#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "scopeqa/nn/tensor.hpp"

namespace scopeqa::models {

inline constexpr char kCheckpointMagic[4] = {'S', 'Q', 'A', '1'};
inline constexpr int kCheckpointVersion = 1;

// Layout: "SQA1", u64 little-endian header length, JSON header
// {version, config, metadata, tensors: [{name, shape, offset, count}]},
// then float32 little-endian payloads at the listed byte offsets.
struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, nn::Tensor<float>>> tensors;

  bool has(const std::string& name) const;
  const nn::Tensor<float>& tensor(const std::string& name) const;
  void add(std::string name, nn::Tensor<float> value);
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace scopeqa::models
