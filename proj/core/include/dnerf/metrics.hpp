#pragma once

#include "dnerf/image.hpp"

namespace dnerf {

// Mean squared error over all pixels and channels.
double mse(const Image& a, const Image& b);

// 10*log10(1/MSE) for unit-range images, capped at 100 dB for identical
// inputs.
double psnr(const Image& a, const Image& b);

// Gaussian-window SSIM (11x11, sigma 1.5, C1=0.01^2, C2=0.03^2), computed on
// valid windows only, per channel, channels averaged. Requires
// min(height, width) >= 11.
double ssim(const Image& a, const Image& b);

}  // namespace dnerf
