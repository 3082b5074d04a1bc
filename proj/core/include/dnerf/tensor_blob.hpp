#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dnerf {

// On-disk layout, little-endian throughout:
//   magic "DNRF" | version u32 (1) | dtype u32 (0 = f32) |
//   ndim u32 | dims u32[ndim] | payload f32, row-major.
struct TensorBlob {
  std::vector<uint32_t> dims;
  std::vector<float> data;

  TensorBlob() = default;
  TensorBlob(std::vector<uint32_t> d, std::vector<float> v) : dims(std::move(d)), data(std::move(v)) {}

  std::size_t elem_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }
};

inline constexpr uint32_t kBlobVersion = 1;
inline constexpr uint32_t kBlobDtypeF32 = 0;

// `field` tags diagnostics, e.g. "pose_blob" or a CLI flag name.
std::vector<std::uint8_t> serialize_blob(const TensorBlob& blob, const std::string& field);
TensorBlob parse_blob(const std::uint8_t* data, std::size_t size, const std::string& field);

void save_blob(const TensorBlob& blob, const std::filesystem::path& path, const std::string& field);
TensorBlob load_blob(const std::filesystem::path& path, const std::string& field);

}  // namespace dnerf
