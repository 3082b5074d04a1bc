#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "dnerf/checkpoint.hpp"
#include "dnerf/field.hpp"
#include "dnerf/manifest.hpp"
#include "dnerf/render.hpp"
#include "dnerf/wav.hpp"

namespace dnerf {

// Closed-form scene primitive. Gaussian blob:
//   sigma(x) = A_eff * exp(-|o|^2 / (2 r^2)),  o = x - effective center,
//   zero past 5 r. Slab: sigma = A everywhere, flat color.
// A_eff = A * max(0, 1 + cond_gain * f[cond_channel]);
// center_eff = center + euler_gain .* (pitch, yaw, roll)
//                     + trans_gain .* (translation - trans_ref).
// color(x) = clamp01(color_base + color_grad_gain * o
//                    + stripe_gain * sin(stripe_freq * dot(o, stripe_dir))).
struct PrimitiveSpec {
  enum class Kind { kGaussianBlob, kSlab };
  Kind kind = Kind::kGaussianBlob;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.3;
  double amplitude = 5.0;
  Eigen::Vector3d color_base = Eigen::Vector3d::Constant(0.5);
  double color_grad_gain = 0;
  Eigen::Vector3d stripe_dir = Eigen::Vector3d::Zero();
  double stripe_freq = 0;
  double stripe_gain = 0;
  int cond_channel = -1;
  double cond_gain = 0;
  Eigen::Vector3d euler_gain = Eigen::Vector3d::Zero();
  Eigen::Vector3d trans_gain = Eigen::Vector3d::Zero();
  Eigen::Vector3d trans_ref = Eigen::Vector3d::Zero();
};

struct PartScene {
  std::vector<PrimitiveSpec> prims;
};

struct IdentityScene {
  std::string id;
  PartScene head, torso;
};

struct SceneSpec {
  std::string name;
  int oracle_samples = 16384;
  std::vector<IdentityScene> identities;
};

std::string scene_to_json(const SceneSpec& s);
SceneSpec scene_from_json(const std::string& text, const std::string& field);
Checkpoint scene_to_checkpoint(const SceneSpec& s);
SceneSpec scene_from_checkpoint(const Checkpoint& ck, const std::string& field);

// Density and color of one part's field at a point, for a frame described by
// (et, cond row). `cond` may be null when no primitive is condition-coupled.
struct AnalyticSample {
  double sigma = 0;
  Eigen::Vector3d rgb = Eigen::Vector3d::Zero();  // emission-weighted color
};

AnalyticSample eval_part_scene(const PartScene& part, const Eigen::Vector3d& x,
                               const std::array<double, 6>& et, const float* cond, int cond_dim);

// Satisfies the render_frame Backend concept over the analytic field.
struct AnalyticScene {
  SceneSpec spec;

  const IdentityScene& identity(const std::string& id) const;
  void eval(Part part, const PartBatch<float>& batch, MatX<float>& sigma, MatX<float>& rgb) const;
};

// Continuous-limit reference for one pixel: fine midpoint quadrature along
// the merged head/torso medium with exact per-interval attenuation. This is
// the ground-truth route the discrete compositing path is checked against.
Eigen::Vector3d oracle_pixel(const AnalyticScene& scene, const std::string& id,
                             const Ray& head_ray, const Ray& torso_ray,
                             const std::array<double, 6>& et, const float* cond, int cond_dim,
                             const Eigen::Vector3d& background, int n_quadrature);

Image oracle_render_frame(const AnalyticScene& scene, const FrameContext& ctx,
                          const Image& background, int width, int height, int n_quadrature);

// A fully generated clip ready to be written to disk.
struct GeneratedScene {
  SceneSpec scene;
  ClipManifest manifest;  // paths filled relative to the output directory
  std::vector<std::vector<HeadPose>> poses;      // [individual][frame]
  std::vector<MatX<float>> audio_feats;          // [individual], frames x 512
  std::vector<MatX<float>> expr_feats;           // [individual], frames x expr dim
  WavData audio;
  Image background;
  int n_frames = 0;
};

// Known presets: slab, blob, two_identity, torso_motion, dialogue.
// Overrides <= 0 keep the preset default.
GeneratedScene build_preset(const std::string& name, uint64_t seed, int frames_override,
                            int width_override, int height_override);
std::vector<std::string> preset_names();

// Oracle-renders every frame and writes the complete scene directory:
// manifest.json, background.png, audio.wav, pose/feature blobs, frames/,
// scene.ckpt.
void write_scene(const GeneratedScene& gen, const std::filesystem::path& out_dir);

}  // namespace dnerf
