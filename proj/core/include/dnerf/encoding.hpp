#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace dnerf {

inline constexpr double kPi = 3.14159265358979323846;

struct EncodingConfig {
  int bands = 10;            // L
  bool include_input = false;

  // Encoded size of one scalar component.
  int per_component() const { return 2 * bands + (include_input ? 1 : 0); }
  int encoded_dim(int input_dim) const { return input_dim * per_component(); }
};

// gamma(p), laid out per component: [p (if include_input), sin(2^0 pi p),
// cos(2^0 pi p), ..., sin(2^{L-1} pi p), cos(2^{L-1} pi p)], components
// concatenated. Encoding a vector therefore equals concatenating the
// encodings of its components.
template <typename T>
void positional_encode(const T* p, int input_dim, const EncodingConfig& cfg, T* out) {
  int k = 0;
  for (int c = 0; c < input_dim; ++c) {
    const T v = p[c];
    if (cfg.include_input) out[k++] = v;
    T freq = T(kPi);
    for (int l = 0; l < cfg.bands; ++l) {
      const T a = freq * v;
      out[k++] = std::sin(a);
      out[k++] = std::cos(a);
      freq *= T(2);
    }
  }
}

template <typename T>
std::vector<T> positional_encode(const std::vector<T>& p, const EncodingConfig& cfg) {
  std::vector<T> out(std::size_t(cfg.encoded_dim(int(p.size()))));
  positional_encode(p.data(), int(p.size()), cfg, out.data());
  return out;
}

// Head pose: intrinsic Euler angles applied pitch (x), then yaw (y), then
// roll (z), plus a translation. R = Rx(pitch) * Ry(yaw) * Rz(roll).
struct HeadPose {
  double pitch = 0, yaw = 0, roll = 0;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  std::array<double, 6> flat() const { return {pitch, yaw, roll, translation.x(), translation.y(), translation.z()}; }
  static HeadPose from_flat(const double* v) {
    HeadPose p;
    p.pitch = v[0];
    p.yaw = v[1];
    p.roll = v[2];
    p.translation = Eigen::Vector3d(v[3], v[4], v[5]);
    return p;
  }
};

inline Eigen::Matrix3d euler_to_rotation(double pitch, double yaw, double roll) {
  return (Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()) *
          Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitZ()))
      .toRotationMatrix();
}

inline Eigen::Matrix3d pose_rotation(const HeadPose& p) { return euler_to_rotation(p.pitch, p.yaw, p.roll); }

// Pinhole camera looking down -z in its own frame.
struct CameraIntrinsics {
  double focal = 0;
  double cx = 0, cy = 0;
};

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d dir;  // unit length
  double t_near = 0, t_far = 0;
};

// (u, v) taken literally as pixel coordinates; callers pass u + 0.5 style
// centers themselves if they want them. Camera-space direction before
// rotation is ((u - cx)/f, -(v - cy)/f, -1), normalized after rotation.
Ray generate_ray(const CameraIntrinsics& cam, const HeadPose& pose, double u, double v,
                 double t_near, double t_far);

}  // namespace dnerf
