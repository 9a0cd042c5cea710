#include "scopeqa/models/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "scopeqa/error.hpp"

namespace scopeqa::models {

namespace fs = std::filesystem;
using nlohmann::json;

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

const nn::Tensor<float>& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  fail(ErrorCode::kIo, "checkpoint has no tensor '" + name + "'");
}

void Checkpoint::add(std::string name, nn::Tensor<float> value) {
  require(!has(name), ErrorCode::kPrecondition, "duplicate checkpoint tensor " + name);
  tensors.emplace_back(std::move(name), std::move(value));
}

namespace {

static_assert(sizeof(float) == 4);

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  json dir = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    dir.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.size()}});
    offset += 4 * std::uint64_t(t.size());
  }
  json header = {{"version", kCheckpointVersion},
                 {"config", ckpt.config},
                 {"metadata", ckpt.metadata},
                 {"tensors", dir}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  const std::uint64_t len = text.size();
  put_u32le(out, std::uint32_t(len));
  put_u32le(out, std::uint32_t(len >> 32));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : ckpt.tensors) {
    for (float v : t.values()) put_u32le(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), kCheckpointMagic, 4) == 0,
          ErrorCode::kIo, "not a checkpoint file (bad magic)");
  const std::uint64_t len =
      std::uint64_t(get_u32le(bytes.data() + 4)) | std::uint64_t(get_u32le(bytes.data() + 8)) << 32;
  require(len <= bytes.size() - 12, ErrorCode::kIo, "corrupt checkpoint: truncated header");
  json header;
  try {
    header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + std::ptrdiff_t(len));
  } catch (const json::exception& ex) {
    fail(ErrorCode::kIo, std::string("corrupt checkpoint header: ") + ex.what());
  }
  Checkpoint ckpt;
  const std::size_t payload = 12 + std::size_t(len);
  try {
    const int version = header.at("version").get<int>();
    require(version == kCheckpointVersion, ErrorCode::kIo,
            "unsupported checkpoint version " + std::to_string(version));
    ckpt.config = header.at("config");
    ckpt.metadata = header.at("metadata");
    for (const auto& entry : header.at("tensors")) {
      const auto shape = entry.at("shape").get<nn::Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto count = entry.at("count").get<std::uint64_t>();
      require(count == nn::shape_size(shape), ErrorCode::kIo,
              "corrupt checkpoint: tensor count/shape mismatch");
      require(offset <= bytes.size() - payload && count * 4 <= bytes.size() - payload - offset,
              ErrorCode::kIo, "corrupt checkpoint: truncated tensor payload");
      std::vector<float> data(count);
      const std::uint8_t* p = bytes.data() + payload + offset;
      for (std::size_t i = 0; i < count; ++i) data[i] = std::bit_cast<float>(get_u32le(p + 4 * i));
      ckpt.add(entry.at("name").get<std::string>(), nn::Tensor<float>(shape, std::move(data)));
    }
  } catch (const json::exception& ex) {
    fail(ErrorCode::kIo, std::string("corrupt checkpoint header: ") + ex.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(bool(out), ErrorCode::kIo, "cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    require(bool(out), ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorCode::kIo, "cannot move checkpoint into place: " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorCode::kIo, "cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes);
}

}  // namespace scopeqa::models
