#include "dnerf/manifest.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

#include "dnerf/audio.hpp"
#include "dnerf/common.hpp"
#include "dnerf/tensor_blob.hpp"
#include "dnerf/wav.hpp"

namespace dnerf {

using nlohmann::json;

namespace {

double get_number(const json& j, const char* key, const std::string& field) {
  if (!j.contains(key) || !j.at(key).is_number())
    throw ValidationError(field, "missing or non-numeric field");
  return j.at(key).get<double>();
}

std::string get_string(const json& j, const char* key, const std::string& field) {
  if (!j.contains(key) || !j.at(key).is_string())
    throw ValidationError(field, "missing or non-string field");
  return j.at(key).get<std::string>();
}

PartCameraSpec parse_camera(const json& j, const std::string& field, bool with_translation) {
  PartCameraSpec cam;
  cam.focal = get_number(j, "focal", field + ".focal");
  if (!(cam.focal > 0)) throw ValidationError(field + ".focal", "focal must be positive");
  if (!j.contains("principal") || !j.at("principal").is_array() || j.at("principal").size() != 2)
    throw ValidationError(field + ".principal", "principal must be [cx, cy]");
  cam.cx = j.at("principal")[0].get<double>();
  cam.cy = j.at("principal")[1].get<double>();
  if (with_translation) {
    if (!j.contains("translation") || !j.at("translation").is_array() ||
        j.at("translation").size() != 3)
      throw ValidationError(field + ".translation", "translation must be [x, y, z]");
    for (int k = 0; k < 3; ++k) cam.translation[k] = j.at("translation")[std::size_t(k)].get<double>();
  }
  return cam;
}

json camera_to_json(const PartCameraSpec& cam, bool with_translation) {
  json j{{"focal", cam.focal}, {"principal", {cam.cx, cam.cy}}};
  if (with_translation)
    j["translation"] = {cam.translation.x(), cam.translation.y(), cam.translation.z()};
  return j;
}

FeatureBlobRef parse_feature_ref(const json& j, const std::string& field) {
  if (!j.is_object()) throw ValidationError(field, "feature ref must be an object");
  FeatureBlobRef ref;
  ref.path = get_string(j, "path", field + ".path");
  ref.dim = int(get_number(j, "dim", field + ".dim"));
  if (ref.dim < 1) throw ValidationError(field + ".dim", "feature dim must be >= 1");
  return ref;
}

}  // namespace

const IndividualSpec& ClipManifest::individual(const std::string& id) const {
  for (const auto& ind : individuals)
    if (ind.id == id) return ind;
  throw ValidationError("individuals", "unknown individual id: " + id);
}

std::filesystem::path ClipManifest::frame_path(const std::string& id, int frame) const {
  char name[32];
  std::snprintf(name, sizeof(name), "%05d.png", frame);
  return base_dir / frames_dir / id / name;
}

ClipManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ValidationError("manifest", "not a valid JSON object");

  ClipManifest m;
  m.base_dir = base_dir;
  m.fps = get_number(j, "fps", "fps");
  if (!(m.fps > 0)) throw ValidationError("fps", "fps must be positive");
  if (!j.contains("resolution") || !j.at("resolution").is_array() || j.at("resolution").size() != 2)
    throw ValidationError("resolution", "resolution must be [width, height]");
  m.width = j.at("resolution")[0].get<int>();
  m.height = j.at("resolution")[1].get<int>();
  if (m.width < 1 || m.height < 1)
    throw ValidationError("resolution", "resolution must be at least 1x1");
  m.frames_dir = get_string(j, "frames_dir", "frames_dir");
  m.background_image = get_string(j, "background_image", "background_image");
  if (!j.contains("audio") || !j.at("audio").is_object())
    throw ValidationError("audio", "missing audio object");
  m.audio_path = get_string(j.at("audio"), "path", "audio.path");
  m.audio_sample_rate = int(get_number(j.at("audio"), "sample_rate", "audio.sample_rate"));
  if (m.audio_sample_rate < 1)
    throw ValidationError("audio.sample_rate", "sample rate must be >= 1");

  if (!j.contains("individuals") || !j.at("individuals").is_array() || j.at("individuals").empty())
    throw ValidationError("individuals", "need at least one individual");
  for (std::size_t i = 0; i < j.at("individuals").size(); ++i) {
    const json& ji = j.at("individuals")[i];
    const std::string base = "individuals[" + std::to_string(i) + "]";
    IndividualSpec ind;
    ind.id = get_string(ji, "id", base + ".id");
    if (ind.id.empty() || ind.id.find('/') != std::string::npos)
      throw ValidationError(base + ".id", "id must be a non-empty path-safe token");
    for (const auto& other : m.individuals)
      if (other.id == ind.id) throw ValidationError(base + ".id", "duplicate id: " + ind.id);
    if (!ji.contains("part_cameras") || !ji.at("part_cameras").is_object())
      throw ValidationError(base + ".part_cameras", "missing part_cameras");
    const json& pc = ji.at("part_cameras");
    if (!pc.contains("head")) throw ValidationError(base + ".part_cameras.head", "missing head camera");
    if (!pc.contains("torso"))
      throw ValidationError(base + ".part_cameras.torso", "missing torso camera");
    ind.head_cam = parse_camera(pc.at("head"), base + ".part_cameras.head", false);
    ind.torso_cam = parse_camera(pc.at("torso"), base + ".part_cameras.torso", true);
    ind.t_near = get_number(ji, "t_near", base + ".t_near");
    ind.t_far = get_number(ji, "t_far", base + ".t_far");
    if (!(ind.t_near >= 0) || !(ind.t_far > ind.t_near))
      throw ValidationError(base + ".t_near", "require 0 <= t_near < t_far");
    ind.pose_blob = get_string(ji, "pose_blob", base + ".pose_blob");
    if (!ji.contains("feature_blobs") || !ji.at("feature_blobs").is_object())
      throw ValidationError(base + ".feature_blobs", "missing feature_blobs");
    ind.speaker_audio =
        parse_feature_ref(ji.at("feature_blobs").value("speaker_audio", json()),
                          base + ".feature_blobs.speaker_audio");
    ind.listener_expression =
        parse_feature_ref(ji.at("feature_blobs").value("listener_expression", json()),
                          base + ".feature_blobs.listener_expression");
    m.individuals.push_back(std::move(ind));
  }

  if (!j.contains("role_segments") || !j.at("role_segments").is_array())
    throw ValidationError("role_segments", "missing role_segments array");
  double prev_end = -1;
  for (std::size_t i = 0; i < j.at("role_segments").size(); ++i) {
    const json& js = j.at("role_segments")[i];
    const std::string base = "role_segments[" + std::to_string(i) + "]";
    RoleSegment seg;
    seg.start_s = get_number(js, "start_s", base + ".start_s");
    seg.end_s = get_number(js, "end_s", base + ".end_s");
    seg.speaker_id = get_string(js, "speaker_id", base + ".speaker_id");
    if (!(seg.start_s >= 0)) throw ValidationError(base + ".start_s", "start_s must be >= 0");
    if (!(seg.end_s > seg.start_s))
      throw ValidationError(base + ".end_s", "end_s must exceed start_s");
    if (seg.start_s < prev_end)
      throw ValidationError(base + ".start_s", "segments must be ordered and non-overlapping");
    prev_end = seg.end_s;
    bool known = false;
    for (const auto& ind : m.individuals) known |= (ind.id == seg.speaker_id);
    if (!known) throw ValidationError(base + ".speaker_id", "unknown speaker: " + seg.speaker_id);
    m.segments.push_back(std::move(seg));
  }
  return m;
}

ClipManifest load_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path, "manifest");
  return parse_manifest(std::string(bytes.begin(), bytes.end()),
                        path.has_parent_path() ? path.parent_path() : ".");
}

std::string manifest_to_json(const ClipManifest& m) {
  json inds = json::array();
  for (const auto& ind : m.individuals) {
    inds.push_back(
        {{"id", ind.id},
         {"part_cameras",
          {{"head", camera_to_json(ind.head_cam, false)},
           {"torso", camera_to_json(ind.torso_cam, true)}}},
         {"t_near", ind.t_near},
         {"t_far", ind.t_far},
         {"pose_blob", ind.pose_blob},
         {"feature_blobs",
          {{"speaker_audio", {{"path", ind.speaker_audio.path}, {"dim", ind.speaker_audio.dim}}},
           {"listener_expression",
            {{"path", ind.listener_expression.path}, {"dim", ind.listener_expression.dim}}}}}});
  }
  json segs = json::array();
  for (const auto& s : m.segments)
    segs.push_back({{"start_s", s.start_s}, {"end_s", s.end_s}, {"speaker_id", s.speaker_id}});
  json j{{"fps", m.fps},
         {"resolution", {m.width, m.height}},
         {"frames_dir", m.frames_dir},
         {"background_image", m.background_image},
         {"audio", {{"path", m.audio_path}, {"sample_rate", m.audio_sample_rate}}},
         {"individuals", inds},
         {"role_segments", segs}};
  return j.dump(2) + "\n";
}

void save_manifest(const ClipManifest& m, const std::filesystem::path& path) {
  write_text_atomic(path, manifest_to_json(m));
}

FrameRole role_at(const ClipManifest& m, const std::string& id, double t) {
  for (const auto& seg : m.segments) {
    if (t >= seg.start_s && t < seg.end_s)
      return seg.speaker_id == id ? FrameRole::kSpeaker : FrameRole::kListener;
  }
  return FrameRole::kSilent;
}

std::vector<ResolvedCond> resolve_conditions(const ClipManifest& m, const std::string& id,
                                             int n_frames) {
  std::vector<ResolvedCond> out(static_cast<std::size_t>(n_frames));
  int last_listener = -1;
  for (int f = 0; f < n_frames; ++f) {
    const double t = double(f) / m.fps;
    ResolvedCond& rc = out[std::size_t(f)];
    rc.frame_role = role_at(m, id, t);
    if (rc.frame_role == FrameRole::kSpeaker) {
      rc.role = Role::kSpeaker;
      rc.row = f;
    } else if (rc.frame_role == FrameRole::kListener) {
      rc.role = Role::kListener;
      rc.row = f;
      last_listener = f;
    } else {
      rc.role = Role::kListener;
      rc.row = last_listener >= 0 ? last_listener : f;
    }
  }
  return out;
}

const IndividualData& ClipDataset::by_id(const std::string& id) const {
  for (const auto& ind : individuals)
    if (ind.spec.id == id) return ind;
  throw ValidationError("individuals", "unknown individual id: " + id);
}

namespace {

int count_frames(const ClipManifest& m, const std::string& id, const std::string& field) {
  int n = 0;
  while (std::filesystem::exists(m.frame_path(id, n))) ++n;
  if (n == 0)
    throw ValidationError(field, "no frames found under " +
                                     (m.base_dir / m.frames_dir / id).string());
  return n;
}

MatX<float> load_feature_matrix(const ClipManifest& m, const FeatureBlobRef& ref, int n_frames,
                                const std::string& field) {
  const TensorBlob blob = load_blob(m.resolve(ref.path), field);
  if (blob.dims.size() != 2)
    throw ValidationError(field, "feature blob must be 2-dimensional");
  if (int(blob.dims[0]) != n_frames)
    throw ValidationError(field, "feature blob has " + std::to_string(blob.dims[0]) +
                                     " frames, clip has " + std::to_string(n_frames));
  if (int(blob.dims[1]) != ref.dim)
    throw ValidationError(field, "feature blob dim " + std::to_string(blob.dims[1]) +
                                     " does not match declared dim " + std::to_string(ref.dim));
  MatX<float> out(n_frames, ref.dim);
  std::copy(blob.data.begin(), blob.data.end(), out.data());
  return out;
}

}  // namespace

ClipDataset load_dataset(const ClipManifest& m, bool load_frames) {
  ClipDataset ds;
  ds.manifest = m;

  ds.background = load_png(m.resolve(m.background_image), "background_image");
  if (ds.background.width != m.width || ds.background.height != m.height)
    throw ValidationError("background_image", "background size does not match resolution");

  const WavData wav = load_wav(m.resolve(m.audio_path), "audio.path");
  if (wav.sample_rate != m.audio_sample_rate)
    throw ValidationError("audio.sample_rate",
                          "wav sample rate " + std::to_string(wav.sample_rate) +
                              " does not match manifest " + std::to_string(m.audio_sample_rate));

  ds.n_frames = -1;
  for (std::size_t ii = 0; ii < m.individuals.size(); ++ii) {
    const IndividualSpec& spec = m.individuals[ii];
    const std::string base = "individuals[" + std::to_string(ii) + "]";
    IndividualData ind;
    ind.spec = spec;

    const int frames = count_frames(m, spec.id, base + ".id");
    if (ds.n_frames < 0)
      ds.n_frames = frames;
    else if (frames != ds.n_frames)
      throw ValidationError(base + ".id", "frame count differs across individuals");

    const TensorBlob pose_blob = load_blob(m.resolve(spec.pose_blob), base + ".pose_blob");
    if (pose_blob.dims.size() != 2 || pose_blob.dims[1] != 6)
      throw ValidationError(base + ".pose_blob", "pose blob must be (frames, 6)");
    if (int(pose_blob.dims[0]) != ds.n_frames)
      throw ValidationError(base + ".pose_blob", "pose blob has " +
                                                     std::to_string(pose_blob.dims[0]) +
                                                     " rows, clip has " +
                                                     std::to_string(ds.n_frames) + " frames");
    ind.poses.resize(std::size_t(ds.n_frames));
    for (int f = 0; f < ds.n_frames; ++f) {
      double row[6];
      for (int k = 0; k < 6; ++k) row[k] = double(pose_blob.data[std::size_t(f) * 6 + std::size_t(k)]);
      ind.poses[std::size_t(f)] = HeadPose::from_flat(row);
    }

    ind.audio_feat = load_feature_matrix(m, spec.speaker_audio, ds.n_frames,
                                         base + ".feature_blobs.speaker_audio");
    ind.expr_feat = load_feature_matrix(m, spec.listener_expression, ds.n_frames,
                                        base + ".feature_blobs.listener_expression");

    if (load_frames) {
      ind.frames.resize(std::size_t(ds.n_frames));
      for (int f = 0; f < ds.n_frames; ++f) {
        Image img = load_png(m.frame_path(spec.id, f), base + ".id");
        if (img.width != m.width || img.height != m.height)
          throw ValidationError(base + ".id", "frame size does not match resolution");
        ind.frames[std::size_t(f)] = std::move(img);
      }
    }

    const auto resolved = resolve_conditions(m, spec.id, ds.n_frames);
    ind.frame_role.resize(std::size_t(ds.n_frames));
    ind.cond_role.resize(std::size_t(ds.n_frames));
    ind.cond_row.resize(std::size_t(ds.n_frames));
    for (int f = 0; f < ds.n_frames; ++f) {
      ind.frame_role[std::size_t(f)] = resolved[std::size_t(f)].frame_role;
      ind.cond_role[std::size_t(f)] = resolved[std::size_t(f)].role;
      ind.cond_row[std::size_t(f)] = resolved[std::size_t(f)].row;
    }

    ds.individuals.push_back(std::move(ind));
  }

  // Audio must cover the clip (tail slack of one window is tolerated).
  const double clip_len = double(ds.n_frames) / m.fps;
  const double audio_len = double(wav.samples.size()) / double(wav.sample_rate);
  if (audio_len + 0.25 < clip_len)
    throw ValidationError("audio.path", "audio is shorter than the clip");

  for (const auto& seg : m.segments)
    if (seg.end_s > clip_len + 0.5)
      throw ValidationError("role_segments", "segment extends past the clip end");

  return ds;
}

}  // namespace dnerf
