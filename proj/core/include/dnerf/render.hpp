#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dnerf/common.hpp"
#include "dnerf/encoding.hpp"
#include "dnerf/field.hpp"
#include "dnerf/image.hpp"
#include "dnerf/manifest.hpp"

namespace dnerf {

// Depths along one ray plus the cap that closes the last interval:
// delta_i = t_{i+1} - t_i, with the final delta = far_cap - t_{N-1}.
// The background color rides along so merging can check both halves of a
// pixel agree on it.
template <typename T>
struct RaySamples {
  std::vector<T> t;
  T far_cap = T(0);
  std::array<T, 3> background{T(0), T(0), T(0)};
};

// Stratified: one uniform draw per equal-width bin of [t_near, t_far].
// jitter=false puts samples at bin midpoints; both consume identical RNG
// state so downstream draws stay aligned.
template <typename T>
RaySamples<T> sample_stratified(T t_near, T t_far, int n, Rng& rng, bool jitter) {
  if (n < 1) throw ValidationError("samples", "need at least one sample per ray");
  if (!(t_far > t_near)) throw ValidationError("t_near", "require t_near < t_far");
  RaySamples<T> s;
  s.t.resize(std::size_t(n));
  const T bin = (t_far - t_near) / T(n);
  for (int i = 0; i < n; ++i) {
    const T u = T(rng.uniform());
    const T off = jitter ? u : T(0.5);
    s.t[std::size_t(i)] = t_near + bin * (T(i) + off);
  }
  s.far_cap = t_far;
  return s;
}

template <typename T>
struct CompositeResult {
  std::array<T, 3> rgb{T(0), T(0), T(0)};
  std::vector<T> weights;      // w_i = T_i * alpha_i per field sample
  T background_weight = T(0);  // T_N, weight given to the background color
};

// Discrete compositing with the background appended as a final opaque
// sample, so sum(weights) + background_weight == 1 by construction.
// sigma: N, rgb: N x 3 rows in `colors` (row-major, stride 3).
// Depths must not decrease; exact ties are allowed (a tied sample gets
// delta = 0, alpha = 0) because merged head/torso lists can collide.
template <typename T>
CompositeResult<T> composite(const RaySamples<T>& s, const T* sigma, const T* colors) {
  const std::size_t n = s.t.size();
  if (n == 0) throw ValidationError("depths", "compositing needs at least one sample");
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (s.t[i + 1] < s.t[i]) throw ValidationError("depths", "depths must be non-decreasing");
  if (s.far_cap < s.t[n - 1])
    throw ValidationError("far_cap", "far cap must not precede the last sample");
  CompositeResult<T> out;
  out.weights.resize(n);
  T trans = T(1);
  for (std::size_t i = 0; i < n; ++i) {
    const T delta = (i + 1 < n ? s.t[i + 1] - s.t[i] : s.far_cap - s.t[i]);
    const T alpha = T(1) - std::exp(-sigma[i] * delta);
    const T w = trans * alpha;
    out.weights[i] = w;
    for (int c = 0; c < 3; ++c) out.rgb[std::size_t(c)] += w * colors[3 * i + std::size_t(c)];
    trans *= (T(1) - alpha);
  }
  out.background_weight = trans;
  for (int c = 0; c < 3; ++c) out.rgb[std::size_t(c)] += trans * s.background[std::size_t(c)];
  return out;
}

// Reverse-scan backward pass for composite: no division by (1 - alpha), so
// fully opaque samples are safe. d_rgb_out is dL/d(pixel rgb); accumulates
// dL/d(sigma_i) into d_sigma and dL/d(color_ic) into d_colors.
template <typename T>
void composite_backward(const RaySamples<T>& s, const T* sigma, const T* colors,
                        const std::array<T, 3>& d_rgb_out, T* d_sigma, T* d_colors) {
  const std::size_t n = s.t.size();
  // Recompute per-sample alpha and transmittance (cheap relative to storing).
  std::vector<T> alpha(n), trans(n + 1);
  trans[0] = T(1);
  for (std::size_t i = 0; i < n; ++i) {
    const T delta = (i + 1 < n ? s.t[i + 1] - s.t[i] : s.far_cap - s.t[i]);
    alpha[i] = T(1) - std::exp(-sigma[i] * delta);
    trans[i + 1] = trans[i] * (T(1) - alpha[i]);
  }
  // Background term: C += T_N * b, so dL/dT_N starts from it.
  T g_trans = T(0);
  for (int c = 0; c < 3; ++c) g_trans += d_rgb_out[std::size_t(c)] * s.background[std::size_t(c)];
  for (std::size_t ii = n; ii-- > 0;) {
    const T delta = (ii + 1 < n ? s.t[ii + 1] - s.t[ii] : s.far_cap - s.t[ii]);
    T g_dot_c = T(0);
    for (int c = 0; c < 3; ++c) {
      d_colors[3 * ii + std::size_t(c)] += d_rgb_out[std::size_t(c)] * trans[ii] * alpha[ii];
      g_dot_c += d_rgb_out[std::size_t(c)] * colors[3 * ii + std::size_t(c)];
    }
    // dL/d(alpha_ii): direct emission term minus what later samples lose.
    const T g_alpha = g_dot_c * trans[ii] - g_trans * trans[ii];
    // dL/d(T_ii) for the next loop step (ii - 1).
    g_trans = g_dot_c * alpha[ii] + g_trans * (T(1) - alpha[ii]);
    const T dalpha_dsigma = delta * std::exp(-sigma[ii] * delta);
    d_sigma[ii] += g_alpha * dalpha_dsigma;
  }
}

// Merges two sampled segments of the same pixel ray into one ordered set.
// Each stream is treated as a step-function medium (a sample's sigma holds
// until the stream's next sample, exactly as composite treats a single
// list), and the merged medium is their sum. At every union depth ia/ib
// point at the sample whose step is active there, -1 before a stream's
// first sample. This is the only reading under which a fully transparent
// stream drops out of the composite exactly and refining both streams
// converges to the continuous two-field integral.
template <typename T>
struct MergedSamples {
  RaySamples<T> samples;
  std::vector<int> ia, ib;  // active source index per merged depth
};

template <typename T>
MergedSamples<T> merge_samples(const RaySamples<T>& a, const RaySamples<T>& b) {
  if (a.background != b.background)
    throw ValidationError("background", "merged ray segments must share one background color");
  if (a.far_cap != b.far_cap)
    throw ValidationError("far_cap", "merged ray segments must share one far cap");
  MergedSamples<T> m;
  m.samples.background = a.background;
  m.samples.far_cap = a.far_cap;
  const std::size_t total = a.t.size() + b.t.size();
  m.samples.t.reserve(total);
  m.ia.reserve(total);
  m.ib.reserve(total);
  std::size_t i = 0, j = 0;
  while (i < a.t.size() || j < b.t.size()) {
    const bool take_a = j >= b.t.size() || (i < a.t.size() && a.t[i] <= b.t[j]);
    if (take_a) {
      m.samples.t.push_back(a.t[i]);
      ++i;
    } else {
      m.samples.t.push_back(b.t[j]);
      ++j;
    }
    m.ia.push_back(int(i) - 1);
    m.ib.push_back(int(j) - 1);
  }
  return m;
}

// Per-merged-sample density and color: sigma_k = sa + sb over the step
// media, color_k the emission-weighted mix. a_colors/b_colors are row-major
// N x 3 blocks of the source streams.
template <typename T>
void merged_gather(const MergedSamples<T>& m, const T* a_sigma, const T* a_colors,
                   const T* b_sigma, const T* b_colors, T* sigma, T* colors) {
  const std::size_t n = m.samples.t.size();
  for (std::size_t k = 0; k < n; ++k) {
    const int ia = m.ia[k], ib = m.ib[k];
    const T sa = ia >= 0 ? a_sigma[ia] : T(0);
    const T sb = ib >= 0 ? b_sigma[ib] : T(0);
    const T s = sa + sb;
    sigma[k] = s;
    for (int c = 0; c < 3; ++c) {
      const T ca = ia >= 0 ? a_colors[3 * ia + c] : T(0);
      const T cb = ib >= 0 ? b_colors[3 * ib + c] : T(0);
      colors[3 * k + std::size_t(c)] = s > T(0) ? (sa * ca + sb * cb) / s : T(0);
    }
  }
}

// Adjoint of merged_gather: routes d(sigma_k), d(color_k) back to the source
// samples through the sum and the emission-weighted quotient. `sigma` and
// `colors` are the gathered forward values.
template <typename T>
void merged_scatter(const MergedSamples<T>& m, const T* a_sigma, const T* a_colors,
                    const T* b_sigma, const T* b_colors, const T* sigma, const T* colors,
                    const T* d_sigma, const T* d_colors, T* da_sigma, T* da_colors,
                    T* db_sigma, T* db_colors) {
  const std::size_t n = m.samples.t.size();
  for (std::size_t k = 0; k < n; ++k) {
    const int ia = m.ia[k], ib = m.ib[k];
    const T sa = ia >= 0 ? a_sigma[ia] : T(0);
    const T sb = ib >= 0 ? b_sigma[ib] : T(0);
    const T s = sigma[k];
    T ga = d_sigma[k], gb = d_sigma[k];
    if (s > T(0)) {
      for (int c = 0; c < 3; ++c) {
        const T g = d_colors[3 * k + std::size_t(c)];
        const T mix = colors[3 * k + std::size_t(c)];
        if (ia >= 0) {
          da_colors[3 * ia + c] += g * sa / s;
          ga += g * (a_colors[3 * ia + c] - mix) / s;
        }
        if (ib >= 0) {
          db_colors[3 * ib + c] += g * sb / s;
          gb += g * (b_colors[3 * ib + c] - mix) / s;
        }
      }
    }
    if (ia >= 0) da_sigma[ia] += ga;
    if (ib >= 0) db_sigma[ib] += gb;
  }
}

struct RenderConfig {
  int samples_head = 64;
  int samples_torso = 32;
  bool jitter = true;
  uint64_t seed = 0;
  int threads = 1;
  // with jitter, the stratified draw for pixel (x, y) of frame f uses
  // Rng::fork(seed, frame_stream + pixel index) so parallel chunks never
  // share state
};

// Everything frame-specific needed to render one individual's crop.
struct FrameContext {
  std::string identity;
  HeadPose pose;                  // drives head camera and e_t
  CameraIntrinsics head_cam;
  CameraIntrinsics torso_cam;
  HeadPose torso_pose;            // canonical torso camera pose
  double t_near = 0, t_far = 0;
  Role role = Role::kListener;
  std::vector<float> cond;        // raw condition feature row for the frame
  uint64_t frame_stream = 0;      // offset into the per-pixel rng space
};

struct RenderedFrame {
  Image rgb;
  std::vector<float> alpha;  // 1 - background_weight per pixel
};

// Backend concept: void eval(Part, const PartBatch<float>&, MatX<float>&
// sigma, MatX<float>& rgb) const. The neural model and the analytic scene
// both satisfy it, so discrete rendering is shared.
struct NeuralBackend {
  const FieldModel<float>* model = nullptr;
  void eval(Part part, const PartBatch<float>& batch, MatX<float>& sigma,
            MatX<float>& rgb) const {
    PartForward<float> fwd;
    model->forward_part(part, batch, fwd, false);
    sigma = std::move(fwd.sigma);
    rgb = std::move(fwd.rgb);
  }
};

// Renders one frame crop. Chunk = one image row; chunks only touch their own
// pixels and draw from per-pixel forked RNG streams, so the output is
// identical for any thread count.
template <typename Backend>
RenderedFrame render_frame(const Backend& backend, const FrameContext& ctx,
                           const Image& background, int width, int height,
                           const RenderConfig& rc) {
  if (background.width != width || background.height != height)
    throw ValidationError("background_image", "background size must match the render size");
  RenderedFrame out;
  out.rgb = Image(width, height);
  out.alpha.assign(std::size_t(width) * height, 0.f);

  parallel_for_chunks(std::size_t(height), rc.threads, [&](std::size_t chunk) {
    const int y = int(chunk);
    PartBatch<float> head, torso;
    const int nh = rc.samples_head, nt = rc.samples_torso;
    head.positions.resize(Eigen::Index(width) * nh, 3);
    head.dirs.resize(width, 3);
    head.ray_of.resize(std::size_t(width) * nh);
    head.slot_of.assign(std::size_t(width), 0);
    torso.positions.resize(Eigen::Index(width) * nt, 3);
    torso.dirs = MatX<float>::Zero(width, 3);
    torso.ray_of.resize(std::size_t(width) * nt);
    torso.slot_of.assign(std::size_t(width), 0);

    CondSlot<float> slot;
    slot.identity = &ctx.identity;
    slot.role = ctx.role;
    slot.f_cond.resize(1, Eigen::Index(ctx.cond.size()));
    for (std::size_t k = 0; k < ctx.cond.size(); ++k) slot.f_cond(0, Eigen::Index(k)) = ctx.cond[k];
    slot.et = ctx.pose.flat();
    head.slots.push_back(slot);
    torso.slots.push_back(slot);

    std::vector<RaySamples<float>> hs(static_cast<std::size_t>(width)), ts(static_cast<std::size_t>(width));
    for (int x = 0; x < width; ++x) {
      Rng rng = Rng::fork(rc.seed, ctx.frame_stream + uint64_t(y) * uint64_t(width) + uint64_t(x));
      const Ray hray = generate_ray(ctx.head_cam, ctx.pose, x + 0.5, y + 0.5, ctx.t_near, ctx.t_far);
      const Ray tray =
          generate_ray(ctx.torso_cam, ctx.torso_pose, x + 0.5, y + 0.5, ctx.t_near, ctx.t_far);
      hs[std::size_t(x)] = sample_stratified<float>(float(ctx.t_near), float(ctx.t_far), nh, rng,
                                                    rc.jitter);
      ts[std::size_t(x)] = sample_stratified<float>(float(ctx.t_near), float(ctx.t_far), nt, rng,
                                                    rc.jitter);
      const std::array<float, 3> bg = {background.at(y, x, 0), background.at(y, x, 1),
                                       background.at(y, x, 2)};
      hs[std::size_t(x)].background = bg;
      ts[std::size_t(x)].background = bg;
      for (int c = 0; c < 3; ++c) head.dirs(x, c) = float(hray.dir[c]);
      for (int i = 0; i < nh; ++i) {
        const Eigen::Index row = Eigen::Index(x) * nh + i;
        const Eigen::Vector3d p = hray.origin + double(hs[std::size_t(x)].t[std::size_t(i)]) * hray.dir;
        for (int c = 0; c < 3; ++c) head.positions(row, c) = float(p[c]);
        head.ray_of[std::size_t(row)] = x;
      }
      for (int i = 0; i < nt; ++i) {
        const Eigen::Index row = Eigen::Index(x) * nt + i;
        const Eigen::Vector3d p = tray.origin + double(ts[std::size_t(x)].t[std::size_t(i)]) * tray.dir;
        for (int c = 0; c < 3; ++c) torso.positions(row, c) = float(p[c]);
        torso.ray_of[std::size_t(row)] = x;
      }
    }

    MatX<float> hsig, hrgb, tsig, trgb;
    backend.eval(Part::kHead, head, hsig, hrgb);
    backend.eval(Part::kTorso, torso, tsig, trgb);

    std::vector<float> sigma, colors;
    for (int x = 0; x < width; ++x) {
      try {
        const MergedSamples<float> merged = merge_samples(hs[std::size_t(x)], ts[std::size_t(x)]);
        const std::size_t n = merged.samples.t.size();
        sigma.assign(n, 0.f);
        colors.assign(n * 3, 0.f);
        merged_gather(merged, hsig.data() + std::size_t(x) * std::size_t(nh),
                      hrgb.data() + std::size_t(x) * std::size_t(nh) * 3,
                      tsig.data() + std::size_t(x) * std::size_t(nt),
                      trgb.data() + std::size_t(x) * std::size_t(nt) * 3, sigma.data(),
                      colors.data());
        const CompositeResult<float> res = composite(merged.samples, sigma.data(), colors.data());
        for (int c = 0; c < 3; ++c) out.rgb.at(y, x, c) = res.rgb[std::size_t(c)];
        out.alpha[std::size_t(y) * width + std::size_t(x)] = 1.f - res.background_weight;
      } catch (const ValidationError& e) {
        throw ValidationError(e.field(), "pixel (" + std::to_string(x) + ", " +
                                             std::to_string(y) + "): " + e.what());
      }
    }
  });
  return out;
}

struct AnalyticScene;

// Whole-clip rendering: every individual's crop for every frame (or the
// first max_frames), written as <out>/<id>/%05d.png plus an optional f32
// raw dump per frame. When predicted pose streams are given they replace
// the extracted poses by the frame's role: the active speaker takes the
// speaker stream row, everyone else the listener stream row.
struct ClipRenderOptions {
  RenderConfig rc;
  int max_frames = 0;  // 0: all frames
  bool raw = false;
  const MatX<float>* pose_speaker = nullptr;   // T x 6
  const MatX<float>* pose_listener = nullptr;  // T x 6
};

void render_clip(const FieldModel<float>& model, const ClipDataset& ds,
                 const ClipRenderOptions& opt, const std::filesystem::path& out_dir);
void render_clip(const AnalyticScene& scene, const ClipDataset& ds,
                 const ClipRenderOptions& opt, const std::filesystem::path& out_dir);

}  // namespace dnerf
