#include "dnerf/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "dnerf/audio.hpp"
#include "dnerf/tensor_blob.hpp"

namespace dnerf {

namespace {

using nlohmann::json;

json vec3_to_json(const Eigen::Vector3d& v) { return json::array({v[0], v[1], v[2]}); }

Eigen::Vector3d vec3_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3)
    throw ValidationError(field, "expected an array of 3 numbers");
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) {
    if (!j[std::size_t(i)].is_number()) throw ValidationError(field, "expected a number");
    v[i] = j[std::size_t(i)].get<double>();
    if (!std::isfinite(v[i])) throw ValidationError(field, "non-finite value");
  }
  return v;
}

json prim_to_json(const PrimitiveSpec& p) {
  json j;
  j["kind"] = p.kind == PrimitiveSpec::Kind::kSlab ? "slab" : "blob";
  j["center"] = vec3_to_json(p.center);
  j["radius"] = p.radius;
  j["amplitude"] = p.amplitude;
  j["color_base"] = vec3_to_json(p.color_base);
  j["color_grad_gain"] = p.color_grad_gain;
  j["stripe_dir"] = vec3_to_json(p.stripe_dir);
  j["stripe_freq"] = p.stripe_freq;
  j["stripe_gain"] = p.stripe_gain;
  j["cond_channel"] = p.cond_channel;
  j["cond_gain"] = p.cond_gain;
  j["euler_gain"] = vec3_to_json(p.euler_gain);
  j["trans_gain"] = vec3_to_json(p.trans_gain);
  j["trans_ref"] = vec3_to_json(p.trans_ref);
  return j;
}

double num_field(const json& j, const char* key, const std::string& field) {
  if (!j.contains(key) || !j[key].is_number())
    throw ValidationError(field + "." + key, "expected a number");
  const double v = j[key].get<double>();
  if (!std::isfinite(v)) throw ValidationError(field + "." + key, "non-finite value");
  return v;
}

PrimitiveSpec prim_from_json(const json& j, const std::string& field) {
  if (!j.is_object()) throw ValidationError(field, "expected an object");
  PrimitiveSpec p;
  const std::string kind = j.value("kind", "");
  if (kind == "blob")
    p.kind = PrimitiveSpec::Kind::kGaussianBlob;
  else if (kind == "slab")
    p.kind = PrimitiveSpec::Kind::kSlab;
  else
    throw ValidationError(field + ".kind", "expected \"blob\" or \"slab\"");
  p.center = vec3_from_json(j.at("center"), field + ".center");
  p.radius = num_field(j, "radius", field);
  p.amplitude = num_field(j, "amplitude", field);
  if (p.kind == PrimitiveSpec::Kind::kGaussianBlob && !(p.radius > 0))
    throw ValidationError(field + ".radius", "blob radius must be positive");
  if (p.amplitude < 0) throw ValidationError(field + ".amplitude", "amplitude must be >= 0");
  p.color_base = vec3_from_json(j.at("color_base"), field + ".color_base");
  p.color_grad_gain = num_field(j, "color_grad_gain", field);
  p.stripe_dir = vec3_from_json(j.at("stripe_dir"), field + ".stripe_dir");
  p.stripe_freq = num_field(j, "stripe_freq", field);
  p.stripe_gain = num_field(j, "stripe_gain", field);
  if (!j.contains("cond_channel") || !j["cond_channel"].is_number_integer())
    throw ValidationError(field + ".cond_channel", "expected an integer");
  p.cond_channel = j["cond_channel"].get<int>();
  if (p.cond_channel < -1) throw ValidationError(field + ".cond_channel", "must be >= -1");
  p.cond_gain = num_field(j, "cond_gain", field);
  p.euler_gain = vec3_from_json(j.at("euler_gain"), field + ".euler_gain");
  p.trans_gain = vec3_from_json(j.at("trans_gain"), field + ".trans_gain");
  p.trans_ref = vec3_from_json(j.at("trans_ref"), field + ".trans_ref");
  return p;
}

}  // namespace

std::string scene_to_json(const SceneSpec& s) {
  json j;
  j["kind"] = "analytic_scene";
  j["name"] = s.name;
  j["oracle_samples"] = s.oracle_samples;
  json ids = json::array();
  for (const IdentityScene& id : s.identities) {
    json ji;
    ji["id"] = id.id;
    json h = json::array(), t = json::array();
    for (const PrimitiveSpec& p : id.head.prims) h.push_back(prim_to_json(p));
    for (const PrimitiveSpec& p : id.torso.prims) t.push_back(prim_to_json(p));
    ji["head"] = h;
    ji["torso"] = t;
    ids.push_back(ji);
  }
  j["identities"] = ids;
  return j.dump(2) + "\n";
}

SceneSpec scene_from_json(const std::string& text, const std::string& field) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(field, std::string("invalid JSON: ") + e.what());
  }
  try {
    if (j.value("kind", "") != "analytic_scene")
      throw ValidationError(field + ".kind", "expected \"analytic_scene\"");
    SceneSpec s;
    s.name = j.value("name", "");
    if (s.name.empty()) throw ValidationError(field + ".name", "missing scene name");
    if (!j.contains("oracle_samples") || !j["oracle_samples"].is_number_integer())
      throw ValidationError(field + ".oracle_samples", "expected an integer");
    s.oracle_samples = j["oracle_samples"].get<int>();
    if (s.oracle_samples < 1)
      throw ValidationError(field + ".oracle_samples", "must be >= 1");
    if (!j.contains("identities") || !j["identities"].is_array() || j["identities"].empty())
      throw ValidationError(field + ".identities", "expected a non-empty array");
    for (std::size_t i = 0; i < j["identities"].size(); ++i) {
      const json& ji = j["identities"][i];
      const std::string f = field + ".identities[" + std::to_string(i) + "]";
      IdentityScene id;
      id.id = ji.value("id", "");
      if (id.id.empty()) throw ValidationError(f + ".id", "missing identity id");
      for (const IdentityScene& prev : s.identities)
        if (prev.id == id.id) throw ValidationError(f + ".id", "duplicate identity id " + id.id);
      if (!ji.contains("head") || !ji["head"].is_array())
        throw ValidationError(f + ".head", "expected an array");
      if (!ji.contains("torso") || !ji["torso"].is_array())
        throw ValidationError(f + ".torso", "expected an array");
      for (std::size_t k = 0; k < ji["head"].size(); ++k)
        id.head.prims.push_back(
            prim_from_json(ji["head"][k], f + ".head[" + std::to_string(k) + "]"));
      for (std::size_t k = 0; k < ji["torso"].size(); ++k)
        id.torso.prims.push_back(
            prim_from_json(ji["torso"][k], f + ".torso[" + std::to_string(k) + "]"));
      s.identities.push_back(std::move(id));
    }
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(field, std::string("malformed scene description: ") + e.what());
  }
}

Checkpoint scene_to_checkpoint(const SceneSpec& s) {
  Checkpoint ck;
  ck.config = scene_to_json(s);
  return ck;
}

SceneSpec scene_from_checkpoint(const Checkpoint& ck, const std::string& field) {
  return scene_from_json(ck.config, field);
}

AnalyticSample eval_part_scene(const PartScene& part, const Eigen::Vector3d& x,
                               const std::array<double, 6>& et, const float* cond, int cond_dim) {
  AnalyticSample out;
  Eigen::Vector3d emission = Eigen::Vector3d::Zero();
  for (const PrimitiveSpec& p : part.prims) {
    Eigen::Vector3d center = p.center;
    center += p.euler_gain.cwiseProduct(Eigen::Vector3d(et[0], et[1], et[2]));
    center += p.trans_gain.cwiseProduct(Eigen::Vector3d(et[3], et[4], et[5]) - p.trans_ref);
    const Eigen::Vector3d o = x - center;
    double amp = p.amplitude;
    if (p.cond_channel >= 0 && cond != nullptr && p.cond_channel < cond_dim)
      amp *= std::max(0.0, 1.0 + p.cond_gain * double(cond[p.cond_channel]));
    double sigma = 0;
    if (p.kind == PrimitiveSpec::Kind::kSlab) {
      sigma = amp;
    } else {
      const double d2 = o.squaredNorm();
      const double cutoff = 5.0 * p.radius;
      if (d2 <= cutoff * cutoff) sigma = amp * std::exp(-d2 / (2.0 * p.radius * p.radius));
    }
    if (sigma <= 0) continue;
    Eigen::Vector3d c = p.color_base + p.color_grad_gain * o;
    if (p.stripe_gain != 0)
      c.array() += p.stripe_gain * std::sin(p.stripe_freq * o.dot(p.stripe_dir));
    c = c.cwiseMax(0.0).cwiseMin(1.0);
    out.sigma += sigma;
    emission += sigma * c;
  }
  if (out.sigma > 0) out.rgb = emission / out.sigma;
  return out;
}

const IdentityScene& AnalyticScene::identity(const std::string& id) const {
  for (const IdentityScene& s : spec.identities)
    if (s.id == id) return s;
  throw ValidationError("identity", "unknown identity " + id);
}

void AnalyticScene::eval(Part part, const PartBatch<float>& batch, MatX<float>& sigma,
                         MatX<float>& rgb) const {
  const Eigen::Index rows = batch.positions.rows();
  sigma.resize(rows, 1);
  rgb.resize(rows, 3);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const CondSlot<float>& slot = batch.slots[batch.slot_of[std::size_t(batch.ray_of[std::size_t(r)])]];
    const IdentityScene& id = identity(*slot.identity);
    const PartScene& ps = part == Part::kHead ? id.head : id.torso;
    const Eigen::Vector3d x(batch.positions(r, 0), batch.positions(r, 1), batch.positions(r, 2));
    const float* cond = slot.f_cond.size() > 0 ? slot.f_cond.data() : nullptr;
    const AnalyticSample s = eval_part_scene(ps, x, slot.et, cond, int(slot.f_cond.cols()));
    sigma(r, 0) = float(s.sigma);
    for (int c = 0; c < 3; ++c) rgb(r, c) = float(s.rgb[c]);
  }
}

Eigen::Vector3d oracle_pixel(const AnalyticScene& scene, const std::string& id,
                             const Ray& head_ray, const Ray& torso_ray,
                             const std::array<double, 6>& et, const float* cond, int cond_dim,
                             const Eigen::Vector3d& background, int n_quadrature) {
  if (n_quadrature < 1) throw ValidationError("oracle_samples", "need at least one interval");
  const IdentityScene& ident = scene.identity(id);
  const double t0 = head_ray.t_near, t1 = head_ray.t_far;
  const double dt = (t1 - t0) / double(n_quadrature);
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double trans = 1.0;
  for (int i = 0; i < n_quadrature; ++i) {
    const double t = t0 + (double(i) + 0.5) * dt;
    const Eigen::Vector3d xh = head_ray.origin + t * head_ray.dir;
    const Eigen::Vector3d xt = torso_ray.origin + t * torso_ray.dir;
    const AnalyticSample h = eval_part_scene(ident.head, xh, et, cond, cond_dim);
    const AnalyticSample w = eval_part_scene(ident.torso, xt, et, cond, cond_dim);
    const double sig = h.sigma + w.sigma;
    if (sig > 0) {
      const double alpha = 1.0 - std::exp(-sig * dt);
      const Eigen::Vector3d c = (h.sigma * h.rgb + w.sigma * w.rgb) / sig;
      color += trans * alpha * c;
      trans *= 1.0 - alpha;
      if (trans < 1e-9) return color + trans * background;
    }
  }
  return color + trans * background;
}

Image oracle_render_frame(const AnalyticScene& scene, const FrameContext& ctx,
                          const Image& background, int width, int height, int n_quadrature) {
  if (background.width != width || background.height != height)
    throw ValidationError("background_image", "background size must match the render size");
  Image out(width, height);
  const float* cond = ctx.cond.empty() ? nullptr : ctx.cond.data();
  const std::array<double, 6> et = ctx.pose.flat();
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Ray hray =
          generate_ray(ctx.head_cam, ctx.pose, x + 0.5, y + 0.5, ctx.t_near, ctx.t_far);
      const Ray tray =
          generate_ray(ctx.torso_cam, ctx.torso_pose, x + 0.5, y + 0.5, ctx.t_near, ctx.t_far);
      const Eigen::Vector3d bg(background.at(y, x, 0), background.at(y, x, 1),
                               background.at(y, x, 2));
      const Eigen::Vector3d c = oracle_pixel(scene, ctx.identity, hray, tray, et, cond,
                                             int(ctx.cond.size()), bg, n_quadrature);
      for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = float(c[ch]);
    }
  }
  return out;
}

namespace {

constexpr int kAudioFeatDim = 512;
constexpr int kExprFeatDim = 16;
constexpr int kSampleRate = 16000;

struct PresetDefaults {
  int frames = 0, width = 0, height = 0;
  double fps = 25;
};

// Deterministic smooth per-frame feature banks standing in for the ingested
// external embeddings. Channel 0/1 carry the signals scene primitives couple
// to; the rest are incidental texture.
MatX<float> make_audio_feats(int frames, double fps, const std::vector<double>& env,
                             const std::vector<double>& parity, uint64_t seed) {
  Rng rng = Rng::fork(seed, fnv1a("audio_feats"));
  MatX<float> m(frames, kAudioFeatDim);
  for (int f = 0; f < frames; ++f) {
    const double t = double(f) / fps;
    m(f, 0) = float(env[std::size_t(f)]);
    m(f, 1) = float(parity[std::size_t(f)]);
    for (int k = 2; k < kAudioFeatDim; ++k) {
      const double freq = 0.05 + 0.11 * double(k % 9);
      m(f, k) = float(0.25 * std::sin(2.0 * kPi * freq * t + 0.7 * double(k)) +
                      0.01 * rng.normal());
    }
  }
  return m;
}

MatX<float> make_expr_feats(int frames, double fps, double phase, uint64_t seed) {
  Rng rng = Rng::fork(seed, fnv1a("expr_feats"));
  MatX<float> m(frames, kExprFeatDim);
  for (int f = 0; f < frames; ++f) {
    const double t = double(f) / fps;
    m(f, 0) = float(0.5 + 0.35 * std::sin(2.0 * kPi * 0.45 * t + phase));
    m(f, 1) = float(0.5 + 0.30 * std::cos(2.0 * kPi * 0.27 * t + 0.5 * phase));
    for (int k = 2; k < kExprFeatDim; ++k) {
      const double freq = 0.08 + 0.09 * double(k % 5);
      m(f, k) = float(0.2 * std::sin(2.0 * kPi * freq * t + 0.9 * double(k) + phase) +
                      0.01 * rng.normal());
    }
  }
  return m;
}

WavData make_tone(double duration_s, double freq, double amp) {
  WavData w;
  w.sample_rate = kSampleRate;
  const int n = int(std::lround(duration_s * kSampleRate));
  w.samples.resize(std::size_t(n));
  for (int i = 0; i < n; ++i)
    w.samples[std::size_t(i)] = float(amp * std::sin(2.0 * kPi * freq * double(i) / kSampleRate));
  return w;
}

Image make_background(int width, int height, bool uniform) {
  Image bg(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      if (uniform) {
        bg.at(y, x, 0) = 0.20f;
        bg.at(y, x, 1) = 0.25f;
        bg.at(y, x, 2) = 0.35f;
      } else {
        bg.at(y, x, 0) = 0.15f + 0.20f * float(x) / float(std::max(1, width - 1));
        bg.at(y, x, 1) = 0.20f + 0.15f * float(y) / float(std::max(1, height - 1));
        bg.at(y, x, 2) = 0.35f;
      }
    }
  return bg;
}

IndividualSpec make_individual(const std::string& id, double focal, int width, int height,
                               double t_near, double t_far) {
  IndividualSpec ind;
  ind.id = id;
  ind.head_cam.focal = focal;
  ind.head_cam.cx = width / 2.0;
  ind.head_cam.cy = height / 2.0;
  ind.torso_cam = ind.head_cam;
  ind.torso_cam.translation = Eigen::Vector3d::Zero();
  ind.t_near = t_near;
  ind.t_far = t_far;
  ind.pose_blob = "pose_" + id + ".tensor";
  ind.speaker_audio = {"feat_audio_" + id + ".tensor", kAudioFeatDim};
  ind.listener_expression = {"feat_expr_" + id + ".tensor", kExprFeatDim};
  return ind;
}

void finish_manifest(GeneratedScene& g, double fps, int width, int height) {
  g.manifest.fps = fps;
  g.manifest.width = width;
  g.manifest.height = height;
  g.manifest.frames_dir = "frames";
  g.manifest.background_image = "background.png";
  g.manifest.audio_path = "audio.wav";
  g.manifest.audio_sample_rate = kSampleRate;
}

std::vector<HeadPose> wobble_poses(int frames, double fps, double euler_amp, double trans_amp,
                                   double phase, uint64_t seed) {
  Rng rng = Rng::fork(seed, fnv1a("wobble"));
  std::vector<HeadPose> ps(static_cast<std::size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    const double t = double(f) / fps;
    HeadPose& p = ps[std::size_t(f)];
    p.pitch = euler_amp * std::sin(2.0 * kPi * 0.80 * t + phase);
    p.yaw = euler_amp * std::sin(2.0 * kPi * 0.53 * t + 1.1 + phase);
    p.roll = 0.3 * euler_amp * std::sin(2.0 * kPi * 0.31 * t + 2.0 + phase);
    p.translation[0] = trans_amp * std::sin(2.0 * kPi * 0.61 * t + phase);
    p.translation[1] = trans_amp * std::cos(2.0 * kPi * 0.43 * t + 0.4 + phase);
    p.translation[2] = 0;
    p.pitch += 0.002 * rng.normal();
    p.yaw += 0.002 * rng.normal();
    p.roll += 0.002 * rng.normal();
  }
  return ps;
}

PrimitiveSpec blob(const Eigen::Vector3d& center, double radius, double amplitude,
                   const Eigen::Vector3d& color) {
  PrimitiveSpec p;
  p.kind = PrimitiveSpec::Kind::kGaussianBlob;
  p.center = center;
  p.radius = radius;
  p.amplitude = amplitude;
  p.color_base = color;
  return p;
}

GeneratedScene preset_slab(uint64_t seed, int frames, int width, int height) {
  GeneratedScene g;
  g.n_frames = frames;
  g.scene.name = "slab";
  IdentityScene id;
  id.id = "solo";
  PrimitiveSpec slab;
  slab.kind = PrimitiveSpec::Kind::kSlab;
  slab.amplitude = 1.0;
  slab.color_base = Eigen::Vector3d(0.8, 0.6, 0.4);
  id.head.prims.push_back(slab);
  g.scene.identities.push_back(id);

  const double fps = 25;
  finish_manifest(g, fps, width, height);
  g.manifest.individuals.push_back(make_individual("solo", 1.0 * width, width, height, 1.0, 2.0));
  g.manifest.segments.push_back({0.0, frames / fps, "solo"});
  g.poses.push_back(std::vector<HeadPose>(static_cast<std::size_t>(frames)));
  std::vector<double> env(static_cast<std::size_t>(frames), 0.5), parity(static_cast<std::size_t>(frames), 0.0);
  g.audio_feats.push_back(make_audio_feats(frames, fps, env, parity, seed));
  g.expr_feats.push_back(make_expr_feats(frames, fps, 0.0, seed));
  g.audio = make_tone(frames / fps, 220.0, 0.3);
  g.background = make_background(width, height, true);
  return g;
}

GeneratedScene preset_blob(uint64_t seed, int frames, int width, int height) {
  GeneratedScene g;
  g.n_frames = frames;
  g.scene.name = "blob";
  IdentityScene id;
  id.id = "solo";
  PrimitiveSpec head = blob({0.0, 0.1, -2.5}, 0.35, 4.0, {0.75, 0.40, 0.30});
  head.color_grad_gain = 0.25;
  id.head.prims.push_back(head);
  PrimitiveSpec torso = blob({0.0, -0.55, -2.7}, 0.45, 3.0, {0.30, 0.45, 0.70});
  torso.stripe_dir = Eigen::Vector3d(0, 1, 0);
  torso.stripe_freq = 10.0;
  torso.stripe_gain = 0.15;
  id.torso.prims.push_back(torso);
  g.scene.identities.push_back(id);

  const double fps = 25;
  finish_manifest(g, fps, width, height);
  g.manifest.individuals.push_back(make_individual("solo", 25.0 / 16.0 * width, width, height, 1.0, 4.0));
  g.manifest.segments.push_back({0.0, frames / fps, "solo"});
  g.poses.push_back(wobble_poses(frames, fps, 0.05, 0.03, 0.0, seed));
  std::vector<double> env(static_cast<std::size_t>(frames)), parity(static_cast<std::size_t>(frames), 0.0);
  for (int f = 0; f < frames; ++f)
    env[std::size_t(f)] = 0.4 + 0.3 * std::sin(2.0 * kPi * 0.5 * double(f) / fps);
  g.audio_feats.push_back(make_audio_feats(frames, fps, env, parity, seed));
  g.expr_feats.push_back(make_expr_feats(frames, fps, 0.0, seed));
  g.audio = make_tone(frames / fps, 220.0, 0.3);
  g.background = make_background(width, height, false);
  return g;
}

GeneratedScene preset_two_identity(uint64_t seed, int frames, int width, int height) {
  GeneratedScene g;
  g.n_frames = frames;
  g.scene.name = "two_identity";

  IdentityScene alice;
  alice.id = "alice";
  PrimitiveSpec ah = blob({0.0, 0.05, -2.5}, 0.40, 5.0, {0.85, 0.25, 0.20});
  ah.color_grad_gain = 0.2;
  ah.cond_channel = 0;
  ah.cond_gain = 0.5;
  alice.head.prims.push_back(ah);
  alice.torso.prims.push_back(blob({0.0, -0.50, -2.6}, 0.50, 4.0, {0.70, 0.60, 0.20}));

  IdentityScene bob;
  bob.id = "bob";
  PrimitiveSpec bh = blob({0.0, 0.05, -2.5}, 0.28, 5.0, {0.15, 0.40, 0.85});
  bh.stripe_dir = Eigen::Vector3d(1, 0, 0);
  bh.stripe_freq = 14.0;
  bh.stripe_gain = 0.25;
  bh.cond_channel = 1;
  bh.cond_gain = 0.4;
  bob.head.prims.push_back(bh);
  PrimitiveSpec bt = blob({0.0, -0.55, -2.7}, 0.45, 4.0, {0.20, 0.65, 0.60});
  bt.stripe_dir = Eigen::Vector3d(0, 1, 0);
  bt.stripe_freq = 8.0;
  bt.stripe_gain = 0.2;
  bob.torso.prims.push_back(bt);

  g.scene.identities.push_back(alice);
  g.scene.identities.push_back(bob);

  const double fps = 25;
  finish_manifest(g, fps, width, height);
  g.manifest.individuals.push_back(make_individual("alice", 25.0 / 16.0 * width, width, height, 1.0, 4.0));
  g.manifest.individuals.push_back(make_individual("bob", 25.0 / 16.0 * width, width, height, 1.0, 4.0));
  const double dur = frames / fps;
  // Alternating one-second turns.
  double t = 0;
  bool alice_turn = true;
  while (t < dur - 1e-9) {
    const double end = std::min(dur, t + 1.0);
    g.manifest.segments.push_back({t, end, alice_turn ? "alice" : "bob"});
    t = end;
    alice_turn = !alice_turn;
  }
  g.poses.push_back(wobble_poses(frames, fps, 0.04, 0.04, 0.0, seed));
  g.poses.push_back(wobble_poses(frames, fps, 0.04, 0.04, 1.7, seed + 1));
  std::vector<double> env(static_cast<std::size_t>(frames)), parity(static_cast<std::size_t>(frames), 0.0);
  for (int f = 0; f < frames; ++f)
    env[std::size_t(f)] = 0.5 + 0.4 * std::sin(2.0 * kPi * 0.7 * double(f) / fps);
  g.audio_feats.push_back(make_audio_feats(frames, fps, env, parity, seed));
  g.audio_feats.push_back(make_audio_feats(frames, fps, env, parity, seed + 2));
  g.expr_feats.push_back(make_expr_feats(frames, fps, 0.0, seed));
  g.expr_feats.push_back(make_expr_feats(frames, fps, 2.1, seed + 3));
  g.audio = make_tone(dur, 220.0, 0.3);
  g.background = make_background(width, height, false);
  return g;
}

GeneratedScene preset_torso_motion(uint64_t seed, int frames, int width, int height) {
  GeneratedScene g;
  g.n_frames = frames;
  g.scene.name = "torso_motion";
  IdentityScene id;
  id.id = "drift";
  id.head.prims.push_back(blob({0.0, 0.40, -2.5}, 0.25, 1.5, {0.60, 0.50, 0.45}));
  PrimitiveSpec torso = blob({0.0, -0.45, -2.6}, 0.50, 5.0, {0.55, 0.50, 0.35});
  torso.stripe_dir = Eigen::Vector3d(0, 1, 0);
  torso.stripe_freq = 10.0;
  torso.stripe_gain = 0.50;
  torso.trans_gain = Eigen::Vector3d(2.0, 2.0, 0.0);
  id.torso.prims.push_back(torso);
  g.scene.identities.push_back(id);

  const double fps = 25;
  finish_manifest(g, fps, width, height);
  g.manifest.individuals.push_back(make_individual("drift", 25.0 / 16.0 * width, width, height, 1.0, 4.0));
  g.manifest.segments.push_back({0.0, frames / fps, "drift"});
  std::vector<HeadPose> poses(static_cast<std::size_t>(frames));
  Rng rng = Rng::fork(seed, fnv1a("torso_motion"));
  for (int f = 0; f < frames; ++f) {
    const double t = double(f) / fps;
    HeadPose& p = poses[std::size_t(f)];
    p.pitch = 0.04 * std::sin(2.0 * kPi * 0.9 * t);
    p.yaw = 0.04 * std::sin(2.0 * kPi * 0.5 * t + 0.8);
    p.roll = 0.01 * std::sin(2.0 * kPi * 0.3 * t);
    // Translation mixes a slow sway with per-frame jolts so torso states
    // scatter instead of tracing a smooth curve through pose space.
    p.translation[0] = 0.22 * std::sin(2.0 * kPi * 1.1 * t) + 0.15 * rng.normal();
    p.translation[1] = 0.18 * std::sin(2.0 * kPi * 0.7 * t + 1.0) + 0.15 * rng.normal();
    p.translation[2] = 0;
    p.pitch += 0.002 * rng.normal();
  }
  g.poses.push_back(std::move(poses));
  std::vector<double> env(static_cast<std::size_t>(frames)), parity(static_cast<std::size_t>(frames), 0.0);
  for (int f = 0; f < frames; ++f)
    env[std::size_t(f)] = 0.5 + 0.3 * std::sin(2.0 * kPi * 0.6 * double(f) / fps);
  g.audio_feats.push_back(make_audio_feats(frames, fps, env, parity, seed));
  g.expr_feats.push_back(make_expr_feats(frames, fps, 0.0, seed));
  g.audio = make_tone(frames / fps, 220.0, 0.3);
  g.background = make_background(width, height, false);
  return g;
}

// Dialogue preset: audio with a known slow envelope and per-turn carrier
// switch; speaker poses track the acoustics, listener poses track a low-pass
// of the energy plus a lagged coupling to the speaker's yaw. Gives the pose
// forecaster a signal where audio and speaker-pose inputs each carry
// independent information.
GeneratedScene preset_dialogue(uint64_t seed, int frames, int width, int height) {
  GeneratedScene g;
  g.n_frames = frames;
  g.scene.name = "dialogue";

  IdentityScene sam;
  sam.id = "sam";
  PrimitiveSpec sh = blob({0.0, 0.05, -2.5}, 0.35, 4.0, {0.80, 0.30, 0.25});
  sh.cond_channel = 0;
  sh.cond_gain = 0.4;
  sam.head.prims.push_back(sh);
  sam.torso.prims.push_back(blob({0.0, -0.5, -2.6}, 0.45, 3.5, {0.65, 0.55, 0.25}));
  IdentityScene lee;
  lee.id = "lee";
  PrimitiveSpec lh = blob({0.0, 0.05, -2.5}, 0.30, 4.0, {0.25, 0.45, 0.80});
  lh.cond_channel = 1;
  lh.cond_gain = 0.4;
  lee.head.prims.push_back(lh);
  lee.torso.prims.push_back(blob({0.0, -0.5, -2.6}, 0.40, 3.5, {0.25, 0.60, 0.55}));
  g.scene.identities.push_back(sam);
  g.scene.identities.push_back(lee);

  const double fps = 25;
  const double dur = frames / fps;
  finish_manifest(g, fps, width, height);
  g.manifest.individuals.push_back(make_individual("sam", 12.0 / 8.0 * width, width, height, 1.0, 4.0));
  g.manifest.individuals.push_back(make_individual("lee", 12.0 / 8.0 * width, width, height, 1.0, 4.0));

  const double turn = 1.2;
  double t0 = 0;
  bool sam_turn = true;
  while (t0 < dur - 1e-9) {
    const double end = std::min(dur, t0 + turn);
    g.manifest.segments.push_back({t0, end, sam_turn ? "sam" : "lee"});
    t0 = end;
    sam_turn = !sam_turn;
  }

  // Audio: slow envelope, carrier switching between a low tone and a bright
  // noisy mix per turn so ZCR separates turn parity.
  auto env_at = [](double t) {
    const double e =
        0.28 + 0.20 * std::sin(2.0 * kPi * 0.37 * t) + 0.14 * std::sin(2.0 * kPi * 0.11 * t + 0.7);
    return std::max(0.02, e);
  };
  auto seg_index = [&](double t) { return int(t / turn); };
  WavData wav;
  wav.sample_rate = kSampleRate;
  const int n_samples = int(std::lround(dur * kSampleRate));
  wav.samples.resize(std::size_t(n_samples));
  Rng arng = Rng::fork(seed, fnv1a("dialogue_audio"));
  for (int i = 0; i < n_samples; ++i) {
    const double t = double(i) / kSampleRate;
    const bool bright = seg_index(t) % 2 == 1;
    double carrier;
    if (bright)
      carrier = 0.45 * std::sin(2.0 * kPi * 880.0 * t) + 0.55 * (2.0 * arng.uniform() - 1.0);
    else
      carrier = std::sin(2.0 * kPi * 220.0 * t);
    wav.samples[std::size_t(i)] = float(0.8 * env_at(t) * carrier);
  }
  g.audio = wav;

  // Per-frame proxies for what the forecaster will measure.
  std::vector<double> env(static_cast<std::size_t>(frames)), parity(static_cast<std::size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    const double t = double(f) / fps;
    env[std::size_t(f)] = env_at(t);
    parity[std::size_t(f)] = seg_index(t) % 2 == 1 ? 1.0 : 0.0;
  }

  // Speaker rule: yaw follows smoothed energy, pitch follows carrier
  // brightness. Listener rule: pitch = low-pass(energy) minus a lagged
  // coupling to the speaker's yaw delta; yaw couples to the speaker's pitch
  // delta.
  std::vector<double> ema(static_cast<std::size_t>(frames));
  double acc = env[0];
  for (int f = 0; f < frames; ++f) {
    acc = 0.55 * acc + 0.45 * env[std::size_t(f)];
    ema[std::size_t(f)] = acc;
  }
  std::vector<HeadPose> sam_poses(static_cast<std::size_t>(frames)), lee_poses(static_cast<std::size_t>(frames));
  Rng prng = Rng::fork(seed, fnv1a("dialogue_poses"));
  // Speaker yaw must carry information the audio does not: sinusoids at
  // frequencies incommensurate with the envelope plus a seeded random walk.
  // Otherwise a pose-only listener model could reconstruct the acoustic
  // envelope from the speaker pose alone and the input ablations collapse.
  std::vector<double> spk_yaw(static_cast<std::size_t>(frames)), spk_pitch(static_cast<std::size_t>(frames));
  Rng wrng = Rng::fork(seed, fnv1a("dialogue_yaw_walk"));
  double walk = 0;
  for (int f = 0; f < frames; ++f) {
    const double t = double(f) / fps;
    walk = 0.995 * walk + 0.012 * wrng.normal();
    spk_yaw[std::size_t(f)] = 0.22 * std::sin(2.0 * kPi * 0.43 * t + 0.9) +
                              0.18 * std::sin(2.0 * kPi * 0.157 * t) + walk;
    spk_pitch[std::size_t(f)] = 0.45 * (parity[std::size_t(f)] * 0.30 - 0.10) +
                                0.12 * std::sin(2.0 * kPi * 0.9 * double(f) / fps);
  }
  // Segment-start indices for delta references.
  auto seg_start_frame = [&](int f) {
    const double t = double(f) / fps;
    return int(std::floor(t / turn) * turn * fps + 0.5);
  };
  for (int f = 0; f < frames; ++f) {
    const double t = double(f) / fps;
    const bool sam_speaks = seg_index(t) % 2 == 0;
    const int s0 = seg_start_frame(f);
    const int lag2 = std::max(s0, f - 2), lag1 = std::max(s0, f - 1);
    const double yaw_delta = spk_yaw[std::size_t(lag2)] - spk_yaw[std::size_t(s0)];
    const double pitch_delta = spk_pitch[std::size_t(lag1)] - spk_pitch[std::size_t(s0)];
    HeadPose speaker, listener;
    speaker.pitch = spk_pitch[std::size_t(f)] + 0.005 * prng.normal();
    speaker.yaw = spk_yaw[std::size_t(f)] + 0.005 * prng.normal();
    speaker.roll = 0.01 * std::sin(2.0 * kPi * 0.23 * t);
    speaker.translation = {0.02 * std::sin(2.0 * kPi * 0.4 * t), 0.0, 0.0};
    listener.pitch = 0.55 * (ema[std::size_t(f)] - 0.28) - 0.55 * yaw_delta - 0.05 +
                     0.02 * prng.normal();
    listener.yaw = 0.40 * pitch_delta + 0.20 * (ema[std::size_t(f)] - 0.28) +
                   0.02 * prng.normal();
    listener.roll = 0.01 * prng.normal();
    listener.translation = {0.0, 0.01 * std::sin(2.0 * kPi * 0.3 * t), 0.0};
    if (sam_speaks) {
      sam_poses[std::size_t(f)] = speaker;
      lee_poses[std::size_t(f)] = listener;
    } else {
      lee_poses[std::size_t(f)] = speaker;
      sam_poses[std::size_t(f)] = listener;
    }
  }
  g.poses.push_back(std::move(sam_poses));
  g.poses.push_back(std::move(lee_poses));
  g.audio_feats.push_back(make_audio_feats(frames, fps, env, parity, seed));
  g.audio_feats.push_back(make_audio_feats(frames, fps, env, parity, seed + 2));
  g.expr_feats.push_back(make_expr_feats(frames, fps, 0.0, seed));
  g.expr_feats.push_back(make_expr_feats(frames, fps, 2.4, seed + 3));
  g.background = make_background(width, height, false);
  return g;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"slab", "blob", "two_identity", "torso_motion", "dialogue"};
}

GeneratedScene build_preset(const std::string& name, uint64_t seed, int frames_override,
                            int width_override, int height_override) {
  PresetDefaults d;
  if (name == "slab")
    d = {6, 8, 8, 25};
  else if (name == "blob")
    d = {12, 16, 16, 25};
  else if (name == "two_identity")
    d = {50, 16, 16, 25};
  else if (name == "torso_motion")
    d = {60, 16, 16, 25};
  else if (name == "dialogue")
    d = {240, 8, 8, 25};
  else
    throw ValidationError("spec", "unknown scene preset " + name);
  const int frames = frames_override > 0 ? frames_override : d.frames;
  const int width = width_override > 0 ? width_override : d.width;
  const int height = height_override > 0 ? height_override : d.height;
  if (name == "slab") return preset_slab(seed, frames, width, height);
  if (name == "blob") return preset_blob(seed, frames, width, height);
  if (name == "two_identity") return preset_two_identity(seed, frames, width, height);
  if (name == "torso_motion") return preset_torso_motion(seed, frames, width, height);
  return preset_dialogue(seed, frames, width, height);
}

namespace {

TensorBlob poses_to_blob(const std::vector<HeadPose>& poses) {
  TensorBlob b;
  b.dims = {uint32_t(poses.size()), 6};
  b.data.reserve(poses.size() * 6);
  for (const HeadPose& p : poses)
    for (double v : p.flat()) b.data.push_back(float(v));
  return b;
}

TensorBlob mat_blob(const MatX<float>& m) {
  TensorBlob b;
  b.dims = {uint32_t(m.rows()), uint32_t(m.cols())};
  b.data.assign(m.data(), m.data() + m.size());
  return b;
}

}  // namespace

void write_scene(const GeneratedScene& gen, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  const ClipManifest& m = gen.manifest;
  fs::create_directories(out_dir / m.frames_dir);
  save_png(gen.background, out_dir / m.background_image);
  save_wav(gen.audio, out_dir / m.audio_path);

  AnalyticScene scene{gen.scene};
  char buf[32];
  for (std::size_t i = 0; i < m.individuals.size(); ++i) {
    const IndividualSpec& ind = m.individuals[i];
    save_blob(poses_to_blob(gen.poses[i]), out_dir / ind.pose_blob, "out");
    save_blob(mat_blob(gen.audio_feats[i]), out_dir / ind.speaker_audio.path, "out");
    save_blob(mat_blob(gen.expr_feats[i]), out_dir / ind.listener_expression.path, "out");

    const fs::path frame_dir = out_dir / m.frames_dir / ind.id;
    fs::create_directories(frame_dir);
    const std::vector<ResolvedCond> conds = resolve_conditions(m, ind.id, gen.n_frames);
    for (int f = 0; f < gen.n_frames; ++f) {
      FrameContext ctx;
      ctx.identity = ind.id;
      ctx.pose = gen.poses[i][std::size_t(f)];
      ctx.head_cam = ind.head_cam.intrinsics();
      ctx.torso_cam = ind.torso_cam.intrinsics();
      ctx.torso_pose.translation = ind.torso_cam.translation;
      ctx.t_near = ind.t_near;
      ctx.t_far = ind.t_far;
      const ResolvedCond& rc = conds[std::size_t(f)];
      ctx.role = rc.role;
      const MatX<float>& feats =
          rc.role == Role::kSpeaker ? gen.audio_feats[i] : gen.expr_feats[i];
      ctx.cond.assign(feats.row(rc.row).data(), feats.row(rc.row).data() + feats.cols());
      const Image img = oracle_render_frame(scene, ctx, gen.background, m.width, m.height,
                                            gen.scene.oracle_samples);
      std::snprintf(buf, sizeof buf, "%05d.png", f);
      save_png(img, frame_dir / buf);
    }
  }

  save_checkpoint(scene_to_checkpoint(gen.scene), out_dir / "scene.ckpt", "out");
  // Manifest last: a directory with a manifest is complete by construction.
  save_manifest(m, out_dir / "manifest.json");
}

}  // namespace dnerf
