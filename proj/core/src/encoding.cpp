#include "dnerf/encoding.hpp"

#include "dnerf/common.hpp"

namespace dnerf {

Ray generate_ray(const CameraIntrinsics& cam, const HeadPose& pose, double u, double v,
                 double t_near, double t_far) {
  if (!(cam.focal > 0)) throw ValidationError("focal", "focal length must be positive");
  if (!(t_near >= 0) || !(t_far > t_near))
    throw ValidationError("t_near", "require 0 <= t_near < t_far");
  const Eigen::Vector3d d_cam((u - cam.cx) / cam.focal, -(v - cam.cy) / cam.focal, -1.0);
  Ray ray;
  ray.origin = pose.translation;
  ray.dir = (pose_rotation(pose) * d_cam).normalized();
  ray.t_near = t_near;
  ray.t_far = t_far;
  return ray;
}

}  // namespace dnerf
