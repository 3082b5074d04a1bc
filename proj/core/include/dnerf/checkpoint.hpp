#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dnerf/tensor_blob.hpp"

namespace dnerf {

// Archive of named tensors plus a JSON config string, used for model
// checkpoints and the analytic-scene descriptor.
//   magic "DNRA" | version u32 (1) | config_len u32 | config bytes |
//   count u32 | { name_len u32 | name | blob bytes (full DNRF record) }*
// Entry order is preserved, so save(load(x)) is byte-identical.
struct Checkpoint {
  std::string config;  // JSON text; "kind" selects the consumer
  std::vector<std::pair<std::string, TensorBlob>> tensors;

  const TensorBlob* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
  // Missing tensors raise ValidationError tagged with `field`.
  const TensorBlob& require(const std::string& name, const std::string& field) const;
  void add(const std::string& name, TensorBlob t) { tensors.emplace_back(name, std::move(t)); }
};

inline constexpr uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck, const std::string& field);
Checkpoint parse_checkpoint(const std::uint8_t* data, std::size_t size, const std::string& field);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path, const std::string& field);
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& field);

// Parses ck.config and returns the "kind" value ("field", "posegen",
// "analytic_scene"); throws ValidationError if absent or malformed.
std::string checkpoint_kind(const Checkpoint& ck, const std::string& field);

}  // namespace dnerf
