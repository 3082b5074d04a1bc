#include "dnerf/tensor_blob.hpp"

#include <cmath>
#include <cstring>

#include "dnerf/common.hpp"

namespace dnerf {

namespace {
constexpr char kMagic[4] = {'D', 'N', 'R', 'F'};
}

std::vector<std::uint8_t> serialize_blob(const TensorBlob& blob, const std::string& field) {
  if (blob.dims.empty()) throw ValidationError(field, "tensor has no dimensions");
  std::size_t n = 1;
  for (std::size_t i = 0; i < blob.dims.size(); ++i) {
    if (blob.dims[i] == 0)
      throw ValidationError(field, "zero-length dimension at axis " + std::to_string(i));
    n *= blob.dims[i];
  }
  if (n != blob.data.size())
    throw ValidationError(field, "dims imply " + std::to_string(n) + " elements, payload has " +
                                     std::to_string(blob.data.size()));
  std::vector<std::uint8_t> out;
  out.reserve(16 + 4 * blob.dims.size() + 4 * blob.data.size());
  put_bytes(out, kMagic, 4);
  put_u32(out, kBlobVersion);
  put_u32(out, kBlobDtypeF32);
  put_u32(out, uint32_t(blob.dims.size()));
  for (auto d : blob.dims) put_u32(out, d);
  static_assert(sizeof(float) == 4);
  put_bytes(out, blob.data.data(), 4 * blob.data.size());
  return out;
}

TensorBlob parse_blob(const std::uint8_t* data, std::size_t size, const std::string& field) {
  ByteReader r(data, size, field);
  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw ValidationError(field, "bad magic, not a tensor blob");
  const uint32_t version = r.u32("version");
  if (version != kBlobVersion)
    throw ValidationError(field, "unsupported version " + std::to_string(version));
  const uint32_t dtype = r.u32("dtype");
  if (dtype != kBlobDtypeF32)
    throw ValidationError(field, "unsupported dtype " + std::to_string(dtype));
  const uint32_t ndim = r.u32("ndim");
  if (ndim == 0 || ndim > 8) throw ValidationError(field, "ndim out of range: " + std::to_string(ndim));
  TensorBlob blob;
  blob.dims.resize(ndim);
  std::size_t n = 1;
  for (uint32_t i = 0; i < ndim; ++i) {
    blob.dims[i] = r.u32("dims");
    if (blob.dims[i] == 0)
      throw ValidationError(field, "zero-length dimension at axis " + std::to_string(i));
    if (n > (std::size_t(1) << 40) / blob.dims[i])
      throw ValidationError(field, "tensor too large");
    n *= blob.dims[i];
  }
  if (r.remaining() != 4 * n)
    throw ValidationError(field, "payload size mismatch: expected " + std::to_string(4 * n) +
                                     " bytes, have " + std::to_string(r.remaining()));
  blob.data.resize(n);
  r.raw(blob.data.data(), 4 * n, "payload");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(blob.data[i]))
      throw ValidationError(field, "non-finite value at flat index " + std::to_string(i));
  return blob;
}

void save_blob(const TensorBlob& blob, const std::filesystem::path& path, const std::string& field) {
  write_file_atomic(path, serialize_blob(blob, field));
}

TensorBlob load_blob(const std::filesystem::path& path, const std::string& field) {
  const auto bytes = read_file_bytes(path, field);
  return parse_blob(bytes.data(), bytes.size(), field);
}

}  // namespace dnerf
