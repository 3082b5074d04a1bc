#include "dnerf/audio.hpp"

#include <algorithm>
#include <cmath>

#include "dnerf/common.hpp"

namespace dnerf {

double zero_crossing_rate(std::span<const float> x) {
  if (x.size() < 2) return 0.0;
  std::size_t changes = 0;
  bool prev_nonneg = x[0] >= 0.f;
  for (std::size_t i = 1; i < x.size(); ++i) {
    const bool nonneg = x[i] >= 0.f;
    changes += std::size_t(nonneg != prev_nonneg);
    prev_nonneg = nonneg;
  }
  return double(changes) / double(x.size() - 1);
}

double rms(std::span<const float> x) {
  if (x.empty()) return 0.0;
  double acc = 0;
  for (float v : x) acc += double(v) * double(v);
  return std::sqrt(acc / double(x.size()));
}

TensorBlob FrameFeatures::to_blob() const {
  TensorBlob blob;
  blob.dims = {uint32_t(zcr.size()), 2};
  blob.data.reserve(zcr.size() * 2);
  for (std::size_t i = 0; i < zcr.size(); ++i) {
    blob.data.push_back(zcr[i]);
    blob.data.push_back(rms[i]);
  }
  return blob;
}

FrameFeatures FrameFeatures::from_blob(const TensorBlob& blob, const std::string& field) {
  if (blob.dims.size() != 2 || blob.dims[1] != 2)
    throw ValidationError(field, "expected a (frames, 2) feature tensor");
  FrameFeatures f;
  f.zcr.resize(blob.dims[0]);
  f.rms.resize(blob.dims[0]);
  for (std::size_t i = 0; i < f.zcr.size(); ++i) {
    f.zcr[i] = blob.data[2 * i];
    f.rms[i] = blob.data[2 * i + 1];
  }
  return f;
}

FrameFeatures features_per_frame(const WavData& wav, double fps, int n_frames,
                                 const AudioFeatureConfig& cfg) {
  if (!(fps > 0)) throw ValidationError("fps", "fps must be positive");
  if (n_frames < 0) throw ValidationError("frames", "frame count must be non-negative");
  if (!(cfg.window_s > 0)) throw ValidationError("window", "window length must be positive");
  if (wav.sample_rate <= 0) throw ValidationError("audio.sample_rate", "sample rate must be positive");

  FrameFeatures out;
  out.zcr.resize(std::size_t(n_frames), 0.f);
  out.rms.resize(std::size_t(n_frames), 0.f);
  const double sr = double(wav.sample_rate);
  const long n = long(wav.samples.size());
  for (int i = 0; i < n_frames; ++i) {
    const double t = double(i) / fps;
    long lo = std::lround((t - cfg.window_s / 2) * sr);
    long hi = std::lround((t + cfg.window_s / 2) * sr);
    lo = std::max(lo, 0L);
    hi = std::min(hi, n);
    if (lo >= hi) continue;  // fully outside the track
    std::span<const float> win(wav.samples.data() + lo, std::size_t(hi - lo));
    out.zcr[std::size_t(i)] = float(zero_crossing_rate(win));
    out.rms[std::size_t(i)] = float(rms(win));
  }
  return out;
}

}  // namespace dnerf
