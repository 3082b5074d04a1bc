#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dnerf {

// Mono PCM16 audio, samples normalized to [-1, 1) by dividing by 32768.
struct WavData {
  int sample_rate = 0;
  std::vector<float> samples;
};

WavData load_wav(const std::filesystem::path& path, const std::string& field);

// Clamps to [-1, 1], rounds to nearest int16, writes atomically.
void save_wav(const WavData& wav, const std::filesystem::path& path);

}  // namespace dnerf
