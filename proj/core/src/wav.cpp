#include "dnerf/wav.hpp"

#include <cmath>
#include <cstring>

#include "dnerf/common.hpp"

namespace dnerf {

namespace {

uint16_t get_u16(const std::uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }
uint32_t get_u32(const std::uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

void put_u16v(std::vector<std::uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v));
  out.push_back(uint8_t(v >> 8));
}

}  // namespace

WavData load_wav(const std::filesystem::path& path, const std::string& field) {
  const auto bytes = read_file_bytes(path, field);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw ValidationError(field, "not a RIFF/WAVE file: " + path.string());

  bool have_fmt = false;
  uint16_t channels = 0, bits = 0, format = 0;
  uint32_t sample_rate = 0;
  const std::uint8_t* data_ptr = nullptr;
  uint32_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t len = get_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size())
      throw ValidationError(field, "truncated chunk in wav: " + path.string());
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw ValidationError(field, "fmt chunk too short");
      format = get_u16(bytes.data() + body);
      channels = get_u16(bytes.data() + body + 2);
      sample_rate = get_u32(bytes.data() + body + 4);
      bits = get_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_ptr = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }

  if (!have_fmt) throw ValidationError(field, "wav has no fmt chunk");
  if (format != 1) throw ValidationError(field, "wav audio_format must be PCM (1), got " + std::to_string(format));
  if (channels != 1) throw ValidationError(field, "wav must be mono, got " + std::to_string(channels) + " channels");
  if (bits != 16) throw ValidationError(field, "wav must be 16-bit, got " + std::to_string(bits));
  if (sample_rate == 0) throw ValidationError(field, "wav sample rate is zero");
  if (!data_ptr) throw ValidationError(field, "wav has no data chunk");
  if (data_len % 2 != 0) throw ValidationError(field, "wav data chunk has odd length");

  WavData wav;
  wav.sample_rate = int(sample_rate);
  wav.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < wav.samples.size(); ++i) {
    const int16_t s = int16_t(get_u16(data_ptr + 2 * i));
    wav.samples[i] = float(s) / 32768.f;
  }
  return wav;
}

void save_wav(const WavData& wav, const std::filesystem::path& path) {
  if (wav.sample_rate <= 0) throw PipelineError("wav sample rate must be positive");
  const uint32_t data_len = uint32_t(wav.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len);
  put_bytes(out, "RIFF", 4);
  put_u32(out, 36 + data_len);
  put_bytes(out, "WAVE", 4);
  put_bytes(out, "fmt ", 4);
  put_u32(out, 16);
  put_u16v(out, 1);  // PCM
  put_u16v(out, 1);  // mono
  put_u32(out, uint32_t(wav.sample_rate));
  put_u32(out, uint32_t(wav.sample_rate) * 2);  // byte rate
  put_u16v(out, 2);                             // block align
  put_u16v(out, 16);                            // bits
  put_bytes(out, "data", 4);
  put_u32(out, data_len);
  for (float f : wav.samples) {
    long v = std::lrint(double(f) * 32768.0);
    if (v > 32767) v = 32767;
    if (v < -32768) v = -32768;
    put_u16v(out, uint16_t(int16_t(v)));
  }
  write_file_atomic(path, out);
}

}  // namespace dnerf
