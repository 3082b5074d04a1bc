#pragma once

#include <span>
#include <vector>

#include "dnerf/tensor_blob.hpp"
#include "dnerf/wav.hpp"

namespace dnerf {

// Fraction of adjacent sample pairs whose sign differs; zero counts as
// positive. Windows shorter than 2 samples yield 0.
double zero_crossing_rate(std::span<const float> x);

// Root mean square; empty windows yield 0.
double rms(std::span<const float> x);

struct AudioFeatureConfig {
  double window_s = 0.2;  // window centered on the frame timestamp
};

// One (zcr, rms) pair per video frame. Frame i is centered at i/fps; the
// window is clamped to the track, and a window entirely outside it gives
// (0, 0).
struct FrameFeatures {
  std::vector<float> zcr;
  std::vector<float> rms;

  std::size_t size() const { return zcr.size(); }
  TensorBlob to_blob() const;
  static FrameFeatures from_blob(const TensorBlob& blob, const std::string& field);
};

FrameFeatures features_per_frame(const WavData& wav, double fps, int n_frames,
                                 const AudioFeatureConfig& cfg = {});

}  // namespace dnerf
