#include "dnerf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dnerf/common.hpp"

namespace dnerf {

namespace {

void check_same_shape(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw ValidationError("image", "image shapes differ");
  if (a.width <= 0 || a.height <= 0) throw ValidationError("image", "empty image");
}

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kWin);
  double sum = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    k[std::size_t(i)] = std::exp(-d * d / (2 * kSigma * kSigma));
    sum += k[std::size_t(i)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable valid-mode convolution of a single-channel plane.
// in: h x w, out: (h - 10) x (w - 10).
void conv_valid(const std::vector<double>& in, int h, int w, const std::vector<double>& k,
                std::vector<double>& out) {
  const int wo = w - kWin + 1;
  const int ho = h - kWin + 1;
  std::vector<double> tmp(std::size_t(h) * wo);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < wo; ++x) {
      double acc = 0;
      for (int i = 0; i < kWin; ++i) acc += k[std::size_t(i)] * in[std::size_t(y) * w + x + i];
      tmp[std::size_t(y) * wo + x] = acc;
    }
  out.assign(std::size_t(ho) * wo, 0.0);
  for (int y = 0; y < ho; ++y)
    for (int x = 0; x < wo; ++x) {
      double acc = 0;
      for (int i = 0; i < kWin; ++i) acc += k[std::size_t(i)] * tmp[std::size_t(y + i) * wo + x];
      out[std::size_t(y) * wo + x] = acc;
    }
}

}  // namespace

double mse(const Image& a, const Image& b) {
  check_same_shape(a, b);
  double acc = 0;
  for (std::size_t i = 0; i < a.px.size(); ++i) {
    const double d = double(a.px[i]) - double(b.px[i]);
    acc += d * d;
  }
  return acc / double(a.px.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m <= 0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / m));
}

double ssim(const Image& a, const Image& b) {
  check_same_shape(a, b);
  if (std::min(a.width, a.height) < kWin)
    throw ValidationError("image", "ssim requires min(height, width) >= 11");

  static const std::vector<double> kernel = gaussian_kernel();
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const int h = a.height, w = a.width;
  const std::size_t plane = std::size_t(h) * w;

  std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
  std::vector<double> mx, my, mxx, myy, mxy;
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px) {
        const std::size_t i = std::size_t(py) * w + px;
        const double va = a.at(py, px, c), vb = b.at(py, px, c);
        x[i] = va;
        y[i] = vb;
        xx[i] = va * va;
        yy[i] = vb * vb;
        xy[i] = va * vb;
      }
    conv_valid(x, h, w, kernel, mx);
    conv_valid(y, h, w, kernel, my);
    conv_valid(xx, h, w, kernel, mxx);
    conv_valid(yy, h, w, kernel, myy);
    conv_valid(xy, h, w, kernel, mxy);
    double acc = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double mu_x = mx[i], mu_y = my[i];
      const double var_x = mxx[i] - mu_x * mu_x;
      const double var_y = myy[i] - mu_y * mu_y;
      const double cov = mxy[i] - mu_x * mu_y;
      acc += ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) /
             ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2));
    }
    total += acc / double(mx.size());
  }
  return total / 3.0;
}

}  // namespace dnerf
