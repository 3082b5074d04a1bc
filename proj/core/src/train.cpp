#include "dnerf/train.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "dnerf/field.hpp"
#include "dnerf/metrics.hpp"

namespace dnerf {

FieldTrainer::FieldTrainer(FieldModel<float>& model, const ClipDataset& ds,
                           const TrainConfig& cfg)
    : model_(model), ds_(ds), cfg_(cfg) {
  if (cfg.ray_batch < 1) throw ValidationError("ray_batch", "ray batch must be >= 1");
  if (!(cfg.adam.lr > 0)) throw ValidationError("lr", "learning rate must be positive");
  if (cfg.iterations < 0) throw ValidationError("iterations", "iterations must be >= 0");
  if (ds.individuals.empty() || ds.n_frames == 0)
    throw ValidationError("dataset", "empty dataset");
  for (const IndividualData& ind : ds.individuals)
    if (int(ind.frames.size()) != ds.n_frames)
      throw PipelineError("dataset for " + ind.spec.id + " was loaded without frame images");
  params_ = model.params();
  adam_.reset(params_);
}

TrainRecord FieldTrainer::step() {
  const int it = iteration_;
  Rng rng = Rng::fork(cfg_.seed, fnv1a("train_iter") + uint64_t(it));

  const int W = ds_.manifest.width, H = ds_.manifest.height;
  const int F = ds_.n_frames;
  const std::size_t n_ind = ds_.individuals.size();
  const uint64_t per_ind = uint64_t(F) * uint64_t(W) * uint64_t(H);
  const int R = cfg_.ray_batch;
  const int nh = cfg_.samples_head, nt = cfg_.samples_torso;

  std::vector<RayEntry<float>> rays(static_cast<std::size_t>(R));
  PartBatch<float> head, torso;
  head.positions.resize(Eigen::Index(R) * nh, 3);
  head.dirs.resize(R, 3);
  head.ray_of.resize(std::size_t(R) * std::size_t(nh));
  head.slot_of.resize(std::size_t(R));
  torso.positions.resize(Eigen::Index(R) * nt, 3);
  torso.dirs = MatX<float>::Zero(R, 3);
  torso.ray_of.resize(std::size_t(R) * std::size_t(nt));
  torso.slot_of.resize(std::size_t(R));

  std::map<std::pair<int, int>, int> slot_index;  // (individual, frame) -> slot
  for (int r = 0; r < R; ++r) {
    const uint64_t u = rng.uniform_index(uint64_t(n_ind) * per_ind);
    const int ii = int(u / per_ind);
    const uint64_t rem = u % per_ind;
    const int f = int(rem / (uint64_t(W) * uint64_t(H)));
    const int p = int(rem % (uint64_t(W) * uint64_t(H)));
    const int y = p / W, x = p % W;
    const IndividualData& ind = ds_.individuals[std::size_t(ii)];

    int slot;
    const auto found = slot_index.find({ii, f});
    if (found == slot_index.end()) {
      slot = int(head.slots.size());
      slot_index.emplace(std::make_pair(ii, f), slot);
      CondSlot<float> cs;
      cs.identity = &ind.spec.id;
      cs.role = ind.cond_role[std::size_t(f)];
      const MatX<float>& feats =
          cs.role == Role::kSpeaker ? ind.audio_feat : ind.expr_feat;
      cs.f_cond = feats.row(ind.cond_row[std::size_t(f)]);
      cs.et = ind.poses[std::size_t(f)].flat();
      head.slots.push_back(cs);
      torso.slots.push_back(std::move(cs));
    } else {
      slot = found->second;
    }
    head.slot_of[std::size_t(r)] = slot;
    torso.slot_of[std::size_t(r)] = slot;

    const HeadPose& pose = ind.poses[std::size_t(f)];
    HeadPose torso_pose;
    torso_pose.translation = ind.spec.torso_cam.translation;
    const Ray hray = generate_ray(ind.spec.head_cam.intrinsics(), pose, x + 0.5, y + 0.5,
                                  ind.spec.t_near, ind.spec.t_far);
    const Ray tray = generate_ray(ind.spec.torso_cam.intrinsics(), torso_pose, x + 0.5, y + 0.5,
                                  ind.spec.t_near, ind.spec.t_far);

    RayEntry<float>& e = rays[std::size_t(r)];
    e.head_s = sample_stratified<float>(float(ind.spec.t_near), float(ind.spec.t_far), nh, rng,
                                        cfg_.jitter);
    e.torso_s = sample_stratified<float>(float(ind.spec.t_near), float(ind.spec.t_far), nt, rng,
                                         cfg_.jitter);
    const std::array<float, 3> bg = {ds_.background.at(y, x, 0), ds_.background.at(y, x, 1),
                                     ds_.background.at(y, x, 2)};
    e.head_s.background = bg;
    e.torso_s.background = bg;
    const Image& target = ind.frames[std::size_t(f)];
    for (int c = 0; c < 3; ++c) e.target[std::size_t(c)] = target.at(y, x, c);

    for (int i = 0; i < nh; ++i) {
      const Eigen::Index row = Eigen::Index(r) * nh + i;
      const Eigen::Vector3d pt = hray.origin + double(e.head_s.t[std::size_t(i)]) * hray.dir;
      for (int c = 0; c < 3; ++c) head.positions(row, c) = float(pt[c]);
      head.ray_of[std::size_t(row)] = r;
    }
    for (int c = 0; c < 3; ++c) head.dirs(r, c) = float(hray.dir[c]);
    for (int i = 0; i < nt; ++i) {
      const Eigen::Index row = Eigen::Index(r) * nt + i;
      const Eigen::Vector3d pt = tray.origin + double(e.torso_s.t[std::size_t(i)]) * tray.dir;
      for (int c = 0; c < 3; ++c) torso.positions(row, c) = float(pt[c]);
      torso.ray_of[std::size_t(row)] = r;
    }
  }

  for (Param<float>* p : params_) p->zero_grad();
  PartForward<float> hfwd, tfwd;
  const BatchResult<float> res =
      batch_forward(model_, head, torso, rays, cfg_.deform_penalty, hfwd, tfwd, true);
  batch_backward(model_, rays, cfg_.deform_penalty, res, hfwd, tfwd);
  adam_step(params_, adam_, cfg_.adam);

  const double total = res.loss();
  if (!std::isfinite(total))
    throw PipelineError("training loss is not finite at iteration " + std::to_string(it));
  if (initial_loss_ < 0) initial_loss_ = total;
  if (total > 10.0 * initial_loss_) {
    if (++divergent_run_ >= cfg_.divergence_patience)
      throw PipelineError("training diverged: loss " + std::to_string(total) + " exceeded 10x " +
                          "the initial loss for " + std::to_string(divergent_run_) +
                          " consecutive iterations, last at iteration " + std::to_string(it));
  } else {
    divergent_run_ = 0;
  }

  TrainRecord rec;
  rec.iteration = it;
  rec.loss = res.l2;
  rec.psnr = res.l2 > 0 ? std::min(100.0, 10.0 * std::log10(1.0 / res.l2)) : 100.0;
  iteration_ = it + 1;
  return rec;
}

namespace {

std::string curve_to_csv(const std::vector<TrainRecord>& curve) {
  std::string out = "iteration,loss,psnr\n";
  char line[96];
  for (const TrainRecord& r : curve) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.6f\n", r.iteration, r.loss, r.psnr);
    out += line;
  }
  return out;
}

std::filesystem::path periodic_path(const std::filesystem::path& final_path, int iteration) {
  char suffix[32];
  std::snprintf(suffix, sizeof suffix, "_it%06d", iteration);
  std::filesystem::path p = final_path;
  const std::string ext = p.extension().string();
  p.replace_extension();
  p += suffix;
  p += ext;
  return p;
}

}  // namespace

std::vector<TrainRecord> train_field(FieldModel<float>& model, const ClipDataset& ds,
                                     const TrainConfig& cfg,
                                     const std::filesystem::path& out_checkpoint,
                                     const std::filesystem::path& loss_csv, int start_iteration,
                                     AdamState<float>* initial_adam) {
  FieldTrainer trainer(model, ds, cfg);
  trainer.set_iteration(start_iteration);
  if (initial_adam) {
    if (initial_adam->m.size() != trainer.adam().m.size())
      throw ValidationError("resume", "optimizer state does not match the model parameters");
    trainer.adam() = std::move(*initial_adam);
  }

  std::vector<TrainRecord> curve;
  while (trainer.iteration() < cfg.iterations) {
    curve.push_back(trainer.step());
    const int done = trainer.iteration();
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.iterations) {
      save_checkpoint(field_to_checkpoint(model, done, &trainer.adam().m, &trainer.adam().v,
                                          trainer.adam().step),
                      periodic_path(out_checkpoint, done), "out");
      if (!loss_csv.empty()) write_text_atomic(loss_csv, curve_to_csv(curve));
    }
  }
  save_checkpoint(field_to_checkpoint(model, cfg.iterations, &trainer.adam().m,
                                      &trainer.adam().v, trainer.adam().step),
                  out_checkpoint, "out");
  if (!loss_csv.empty()) write_text_atomic(loss_csv, curve_to_csv(curve));
  return curve;
}

}  // namespace dnerf
