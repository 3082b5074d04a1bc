#include "dnerf/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "dnerf/common.hpp"

namespace dnerf {

namespace {
constexpr char kMagic[4] = {'D', 'N', 'R', 'A'};
}

const TensorBlob& Checkpoint::require(const std::string& name, const std::string& field) const {
  const TensorBlob* t = find(name);
  if (!t) throw ValidationError(field, "checkpoint is missing tensor: " + name);
  return *t;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck, const std::string& field) {
  std::vector<std::uint8_t> out;
  put_bytes(out, kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, uint32_t(ck.config.size()));
  put_bytes(out, ck.config.data(), ck.config.size());
  put_u32(out, uint32_t(ck.tensors.size()));
  for (const auto& [name, blob] : ck.tensors) {
    put_u32(out, uint32_t(name.size()));
    put_bytes(out, name.data(), name.size());
    const auto bytes = serialize_blob(blob, field + ":" + name);
    put_u32(out, uint32_t(bytes.size()));
    put_bytes(out, bytes.data(), bytes.size());
  }
  return out;
}

Checkpoint parse_checkpoint(const std::uint8_t* data, std::size_t size, const std::string& field) {
  ByteReader r(data, size, field);
  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw ValidationError(field, "bad magic, not a checkpoint");
  const uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw ValidationError(field, "unsupported version " + std::to_string(version));
  Checkpoint ck;
  const uint32_t config_len = r.u32("config length");
  ck.config.resize(config_len);
  if (config_len > 0) r.raw(ck.config.data(), config_len, "config");
  const uint32_t count = r.u32("tensor count");
  ck.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = r.u32("name length");
    std::string name(name_len, '\0');
    if (name_len > 0) r.raw(name.data(), name_len, "name");
    const uint32_t blob_len = r.u32("tensor length");
    std::vector<std::uint8_t> bytes(blob_len);
    r.raw(bytes.data(), blob_len, "tensor");
    TensorBlob blob = parse_blob(bytes.data(), bytes.size(), field + ":" + name);
    ck.tensors.emplace_back(std::move(name), std::move(blob));
  }
  if (r.remaining() != 0) throw ValidationError(field, "trailing bytes after checkpoint");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path, const std::string& field) {
  write_file_atomic(path, serialize_checkpoint(ck, field));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& field) {
  const auto bytes = read_file_bytes(path, field);
  return parse_checkpoint(bytes.data(), bytes.size(), field);
}

std::string checkpoint_kind(const Checkpoint& ck, const std::string& field) {
  nlohmann::json j = nlohmann::json::parse(ck.config, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ValidationError(field, "checkpoint config is not valid JSON");
  if (!j.contains("kind") || !j["kind"].is_string())
    throw ValidationError(field, "checkpoint config lacks a \"kind\" string");
  return j["kind"].get<std::string>();
}

}  // namespace dnerf
