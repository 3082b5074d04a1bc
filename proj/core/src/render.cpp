#include "dnerf/render.hpp"

#include <cstdio>

#include "dnerf/synthetic.hpp"
#include "dnerf/tensor_blob.hpp"

namespace dnerf {

namespace {

HeadPose pose_from_row(const MatX<float>& m, int row) {
  std::array<double, 6> flat{};
  for (int k = 0; k < 6; ++k) flat[std::size_t(k)] = double(m(row, k));
  return HeadPose::from_flat(flat.data());
}

template <typename Backend>
void render_clip_impl(const Backend& backend, const ClipDataset& ds,
                      const ClipRenderOptions& opt, const std::filesystem::path& out_dir) {
  const ClipManifest& m = ds.manifest;
  const int frames = opt.max_frames > 0 ? std::min(opt.max_frames, ds.n_frames) : ds.n_frames;
  if ((opt.pose_speaker && opt.pose_speaker->rows() < frames) ||
      (opt.pose_listener && opt.pose_listener->rows() < frames))
    throw ValidationError("poses", "predicted pose streams are shorter than the render range");

  char buf[32];
  for (std::size_t i = 0; i < ds.individuals.size(); ++i) {
    const IndividualData& ind = ds.individuals[i];
    const std::filesystem::path dir = out_dir / ind.spec.id;
    std::filesystem::create_directories(dir);
    for (int f = 0; f < frames; ++f) {
      FrameContext ctx;
      ctx.identity = ind.spec.id;
      ctx.pose = ind.poses[std::size_t(f)];
      if (opt.pose_speaker || opt.pose_listener) {
        const bool speaking = ind.frame_role[std::size_t(f)] == FrameRole::kSpeaker;
        if (speaking && opt.pose_speaker)
          ctx.pose = pose_from_row(*opt.pose_speaker, f);
        else if (!speaking && opt.pose_listener)
          ctx.pose = pose_from_row(*opt.pose_listener, f);
      }
      ctx.head_cam = ind.spec.head_cam.intrinsics();
      ctx.torso_cam = ind.spec.torso_cam.intrinsics();
      ctx.torso_pose.translation = ind.spec.torso_cam.translation;
      ctx.t_near = ind.spec.t_near;
      ctx.t_far = ind.spec.t_far;
      ctx.role = ind.cond_role[std::size_t(f)];
      const MatX<float>& feats =
          ctx.role == Role::kSpeaker ? ind.audio_feat : ind.expr_feat;
      const int row = ind.cond_row[std::size_t(f)];
      ctx.cond.assign(feats.row(row).data(), feats.row(row).data() + feats.cols());
      ctx.frame_stream =
          (uint64_t(i) * uint64_t(ds.n_frames) + uint64_t(f)) * uint64_t(m.width) * uint64_t(m.height);

      RenderedFrame frame;
      try {
        frame = render_frame(backend, ctx, ds.background, m.width, m.height, opt.rc);
      } catch (const ValidationError& e) {
        throw ValidationError(e.field(), "frame " + std::to_string(f) + " of " + ind.spec.id +
                                             ": " + e.what());
      }
      std::snprintf(buf, sizeof buf, "%05d.png", f);
      save_png(frame.rgb, dir / buf);
      if (opt.raw) {
        std::snprintf(buf, sizeof buf, "%05d.tensor", f);
        save_blob(image_to_blob(frame.rgb), dir / buf, "out");
      }
    }
  }
}

}  // namespace

void render_clip(const FieldModel<float>& model, const ClipDataset& ds,
                 const ClipRenderOptions& opt, const std::filesystem::path& out_dir) {
  NeuralBackend backend{&model};
  render_clip_impl(backend, ds, opt, out_dir);
}

void render_clip(const AnalyticScene& scene, const ClipDataset& ds,
                 const ClipRenderOptions& opt, const std::filesystem::path& out_dir) {
  render_clip_impl(scene, ds, opt, out_dir);
}

}  // namespace dnerf
