#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dnerf/encoding.hpp"
#include "dnerf/field.hpp"
#include "dnerf/image.hpp"
#include "dnerf/nn.hpp"

namespace dnerf {

struct PartCameraSpec {
  double focal = 0;
  double cx = 0, cy = 0;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();  // torso canonical camera

  CameraIntrinsics intrinsics() const { return CameraIntrinsics{focal, cx, cy}; }
};

struct FeatureBlobRef {
  std::string path;
  int dim = 0;
};

struct IndividualSpec {
  std::string id;
  PartCameraSpec head_cam;
  PartCameraSpec torso_cam;
  double t_near = 0, t_far = 0;
  std::string pose_blob;
  FeatureBlobRef speaker_audio;
  FeatureBlobRef listener_expression;
};

struct RoleSegment {
  double start_s = 0, end_s = 0;
  std::string speaker_id;
};

// Clip-level description; all paths are relative to the manifest location.
struct ClipManifest {
  double fps = 0;
  int width = 0, height = 0;
  std::string frames_dir;
  std::string background_image;
  std::string audio_path;
  int audio_sample_rate = 0;
  std::vector<IndividualSpec> individuals;
  std::vector<RoleSegment> segments;

  std::filesystem::path base_dir;  // set on load, not serialized

  const IndividualSpec& individual(const std::string& id) const;
  std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }
  std::filesystem::path frame_path(const std::string& id, int frame) const;
};

ClipManifest load_manifest(const std::filesystem::path& path);
ClipManifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir);
std::string manifest_to_json(const ClipManifest& m);
void save_manifest(const ClipManifest& m, const std::filesystem::path& path);

enum class FrameRole { kSpeaker, kListener, kSilent };

// Role of `id` at time t: speaker inside its own segments, listener inside
// another's, silent in gaps. Segments are half-open [start_s, end_s).
FrameRole role_at(const ClipManifest& m, const std::string& id, double t);

// Per-frame condition source: speakers read their audio feature row,
// listeners their expression row, silent frames hold the last active
// listener row (or the current row before any).
struct ResolvedCond {
  FrameRole frame_role = FrameRole::kSilent;
  Role role = Role::kListener;  // selects audio vs expression features
  int row = 0;
};

std::vector<ResolvedCond> resolve_conditions(const ClipManifest& m, const std::string& id,
                                             int n_frames);

// Fully loaded clip: images, poses, features, per-frame resolved conditions.
struct IndividualData {
  IndividualSpec spec;
  std::vector<HeadPose> poses;
  MatX<float> audio_feat;  // frames x audio dim
  MatX<float> expr_feat;   // frames x expression dim
  std::vector<Image> frames;
  std::vector<FrameRole> frame_role;
  // Condition actually fed to the field at each frame: speakers use their
  // audio row, listeners their expression row, silent frames hold the last
  // active listener expression row.
  std::vector<Role> cond_role;
  std::vector<int> cond_row;
};

struct ClipDataset {
  ClipManifest manifest;
  Image background;
  std::vector<IndividualData> individuals;
  int n_frames = 0;

  const IndividualData& by_id(const std::string& id) const;
};

// Counts frame files, checks cross-individual consistency, loads and
// validates every referenced asset. load_frames=false skips decoding the
// frame PNGs (pose/feature consumers).
ClipDataset load_dataset(const ClipManifest& m, bool load_frames);

}  // namespace dnerf
