// dnerf: one binary for the whole desk-scale avatar pipeline. Subcommands
// cover synthetic scene generation, acoustic feature extraction, pose
// forecasting, field training, rendering and metric evaluation; every
// subcommand is deterministic under a fixed --seed and writes outputs
// atomically.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "dnerf/audio.hpp"
#include "dnerf/checkpoint.hpp"
#include "dnerf/common.hpp"
#include "dnerf/field.hpp"
#include "dnerf/image.hpp"
#include "dnerf/manifest.hpp"
#include "dnerf/metrics.hpp"
#include "dnerf/posegen.hpp"
#include "dnerf/render.hpp"
#include "dnerf/synthetic.hpp"
#include "dnerf/tensor_blob.hpp"
#include "dnerf/train.hpp"
#include "dnerf/wav.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dnerf;

namespace {

MatX<float> blob_to_mat(const TensorBlob& b, const std::string& field) {
  if (b.dims.size() != 2)
    throw ValidationError(field, "expected a 2-d tensor, got " + std::to_string(b.dims.size()) +
                                     " dims");
  MatX<float> m(Eigen::Index(b.dims[0]), Eigen::Index(b.dims[1]));
  std::copy(b.data.begin(), b.data.end(), m.data());
  return m;
}

TensorBlob mat_to_blob(const MatX<float>& m) {
  TensorBlob b;
  b.dims = {uint32_t(m.rows()), uint32_t(m.cols())};
  b.data.assign(m.data(), m.data() + m.size());
  return b;
}

// ---- synth make-scene -------------------------------------------------------

struct MakeSceneArgs {
  std::string spec = "blob";
  std::string out;
  uint64_t seed = 0;
  int frames = 0, width = 0, height = 0;
};

void cmd_make_scene(const MakeSceneArgs& a) {
  const GeneratedScene g = build_preset(a.spec, a.seed, a.frames, a.width, a.height);
  write_scene(g, a.out);
  std::cout << a.out << ": " << g.manifest.individuals.size() << " individuals, " << g.n_frames
            << " frames at " << g.manifest.width << "x" << g.manifest.height << "\n";
}

// ---- features extract -------------------------------------------------------

struct FeaturesArgs {
  std::string wav, out;
  double fps = 25.0;
  int frames = 0;
  double window = 0.2;
};

void cmd_features_extract(const FeaturesArgs& a) {
  if (a.fps <= 0) throw ValidationError("fps", "frame rate must be positive");
  if (a.frames <= 0) throw ValidationError("frames", "frame count must be positive");
  const WavData wav = load_wav(a.wav, "wav");
  AudioFeatureConfig afc;
  afc.window_s = a.window;
  const FrameFeatures ff = features_per_frame(wav, a.fps, a.frames, afc);
  save_blob(ff.to_blob(), a.out, "out");
  std::cout << a.out << ": " << a.frames << " frames x 2 (zcr, rms)\n";
}

// ---- posegen train ----------------------------------------------------------

struct PosegenTrainArgs {
  std::string manifest, out, curve;
  std::string mode = "full";
  int epochs = 200;
  double lr = 5e-5;
  double window = 0.2;
  double val_fraction = 0.25;
  uint64_t seed = 0;
};

void cmd_posegen_train(const PosegenTrainArgs& a) {
  PosegenConfig pc;
  pc.mode = listener_mode_from_string(a.mode, "mode");
  if (a.epochs <= 0) throw ValidationError("epochs", "epoch count must be positive");
  if (a.lr <= 0) throw ValidationError("lr", "learning rate must be positive");
  pc.epochs = a.epochs;
  pc.lr = a.lr;
  pc.window_s = a.window;
  pc.val_fraction = a.val_fraction;
  pc.seed = a.seed;

  const ClipManifest m = load_manifest(a.manifest);
  const ClipDataset ds = load_dataset(m, /*load_frames=*/false);
  const std::vector<PoseSeq> seqs = extract_sequences(ds, pc.window_s);
  std::vector<PoseSeq> train, val;
  split_sequences(seqs, pc.val_fraction, train, val);

  PosegenModel model;
  model.init(pc);
  const PosegenTrainResult res = train_posegen(model, train);
  save_checkpoint(posegen_to_checkpoint(model), a.out, "out");

  std::string csv = "epoch,loss\n";
  char line[64];
  for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) {
    std::snprintf(line, sizeof line, "%zu,%.9g\n", e, res.epoch_loss[e]);
    csv += line;
  }
  const fs::path curve_path = a.curve.empty() ? fs::path(a.out + ".loss.csv") : fs::path(a.curve);
  write_text_atomic(curve_path, csv);

  std::cout << a.out << ": " << train.size() << " train / " << val.size() << " val sequences, "
            << pc.epochs << " epochs, final loss "
            << (res.epoch_loss.empty() ? 0.0 : res.epoch_loss.back()) << "\n";
  if (!val.empty()) {
    const PosegenEval ev = eval_posegen(model, val);
    std::cout << "val mse: speaker " << ev.speaker_mse << " (copy-last " << ev.copy_last_speaker_mse
              << "), listener " << ev.listener_mse << " (copy-last " << ev.copy_last_listener_mse
              << ")\n";
  }
}

// ---- posegen predict --------------------------------------------------------

struct PosegenPredictArgs {
  std::string model, features, out;
};

void cmd_posegen_predict(const PosegenPredictArgs& a) {
  const Checkpoint ck = load_checkpoint(a.model, "model");
  PosegenModel model;
  posegen_from_checkpoint(ck, model, "model");

  const TensorBlob fb = load_blob(a.features, "features");
  const MatX<float> feat_f = blob_to_mat(fb, "features");
  if (feat_f.cols() != 2)
    throw ValidationError("features", "expected T x 2 (zcr, rms), got " +
                                          std::to_string(feat_f.cols()) + " columns");
  const MatX<double> feat = feat_f.cast<double>();
  MatX<double> spk, lis;
  model.predict(feat, spk, lis);

  fs::create_directories(a.out);
  save_blob(mat_to_blob(spk.cast<float>()), fs::path(a.out) / "pose_speaker.tensor", "out");
  save_blob(mat_to_blob(lis.cast<float>()), fs::path(a.out) / "pose_listener.tensor", "out");
  std::cout << a.out << ": " << spk.rows() << " frames x 6, speaker and listener\n";
}

// ---- field train ------------------------------------------------------------

struct FieldTrainArgs {
  std::string manifest, config, out, curve, resume;
  uint64_t seed = 0;
};

int json_int(const json& j, const char* key, int dflt, const std::string& field) {
  if (!j.contains(key)) return dflt;
  if (!j[key].is_number_integer())
    throw ValidationError(field, std::string("\"") + key + "\" must be an integer");
  return j[key].get<int>();
}

double json_num(const json& j, const char* key, double dflt, const std::string& field) {
  if (!j.contains(key)) return dflt;
  if (!j[key].is_number())
    throw ValidationError(field, std::string("\"") + key + "\" must be a number");
  return j[key].get<double>();
}

bool json_bool(const json& j, const char* key, bool dflt, const std::string& field) {
  if (!j.contains(key)) return dflt;
  if (!j[key].is_boolean())
    throw ValidationError(field, std::string("\"") + key + "\" must be a boolean");
  return j[key].get<bool>();
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known,
                         const std::string& field) {
  for (const auto& [key, val] : j.items()) {
    (void)val;
    if (std::find_if(known.begin(), known.end(),
                     [&](const char* k) { return key == k; }) == known.end())
      throw ValidationError(field, "unknown key \"" + key + "\"");
  }
}

FieldConfig field_config_from_cli_json(const json& f, const std::string& field) {
  reject_unknown_keys(f,
                      {"pos_bands", "dir_bands", "et_bands", "latent_dim", "cond_width", "depth",
                       "width", "skip", "color_hidden", "deform_depth", "deform_width",
                       "deform_enabled", "act"},
                      field);
  FieldConfig fc;
  fc.pos_enc.bands = json_int(f, "pos_bands", fc.pos_enc.bands, field);
  fc.dir_enc.bands = json_int(f, "dir_bands", fc.dir_enc.bands, field);
  fc.et_enc.bands = json_int(f, "et_bands", fc.et_enc.bands, field);
  fc.latent_dim = json_int(f, "latent_dim", fc.latent_dim, field);
  fc.cond_width = json_int(f, "cond_width", fc.cond_width, field);
  fc.depth = json_int(f, "depth", fc.depth, field);
  fc.width = json_int(f, "width", fc.width, field);
  fc.skip = json_int(f, "skip", fc.skip, field);
  fc.color_hidden = json_int(f, "color_hidden", fc.color_hidden, field);
  fc.deform_depth = json_int(f, "deform_depth", fc.deform_depth, field);
  fc.deform_width = json_int(f, "deform_width", fc.deform_width, field);
  fc.deform_enabled = json_bool(f, "deform_enabled", fc.deform_enabled, field);
  if (f.contains("act")) {
    if (!f["act"].is_string()) throw ValidationError(field, "\"act\" must be a string");
    fc.hidden_act = act_from_string(f["act"].get<std::string>(), field);
  }
  return fc;
}

void cmd_field_train(const FieldTrainArgs& a) {
  const auto cfg_bytes = read_file_bytes(a.config, "config");
  const std::string text(cfg_bytes.begin(), cfg_bytes.end());
  json cfg = json::parse(text, nullptr, false);
  if (cfg.is_discarded()) throw ValidationError("config", "not valid JSON");
  if (!cfg.is_object()) throw ValidationError("config", "top level must be an object");
  reject_unknown_keys(cfg, {"field", "train"}, "config");

  const ClipManifest m = load_manifest(a.manifest);
  const ClipDataset ds = load_dataset(m, /*load_frames=*/true);

  FieldConfig fc = field_config_from_cli_json(cfg.value("field", json::object()), "config.field");
  fc.audio_dim = int(ds.individuals[0].audio_feat.cols());
  fc.expr_dim = int(ds.individuals[0].expr_feat.cols());

  const json t = cfg.value("train", json::object());
  reject_unknown_keys(t,
                      {"iterations", "ray_batch", "lr", "deform_penalty", "samples_head",
                       "samples_torso", "jitter", "checkpoint_every"},
                      "config.train");
  TrainConfig tc;
  tc.iterations = json_int(t, "iterations", tc.iterations, "config.train");
  tc.ray_batch = json_int(t, "ray_batch", tc.ray_batch, "config.train");
  tc.adam.lr = json_num(t, "lr", tc.adam.lr, "config.train");
  tc.deform_penalty = json_num(t, "deform_penalty", tc.deform_penalty, "config.train");
  tc.samples_head = json_int(t, "samples_head", tc.samples_head, "config.train");
  tc.samples_torso = json_int(t, "samples_torso", tc.samples_torso, "config.train");
  tc.jitter = json_bool(t, "jitter", tc.jitter, "config.train");
  tc.checkpoint_every = json_int(t, "checkpoint_every", tc.checkpoint_every, "config.train");
  tc.seed = a.seed;

  std::vector<std::string> ids;
  for (const auto& ind : m.individuals) ids.push_back(ind.id);

  FieldModel<float> model;
  const fs::path curve_path = a.curve.empty() ? fs::path(a.out + ".loss.csv") : fs::path(a.curve);

  if (!a.resume.empty()) {
    const Checkpoint ck = load_checkpoint(a.resume, "resume");
    FieldCheckpointMeta meta;
    std::vector<MatX<float>> am, av;
    int64_t astep = 0;
    field_from_checkpoint(ck, model, meta, &am, &av, &astep, "resume");
    if (meta.identity_ids != ids)
      throw ValidationError("resume", "checkpoint identities do not match the manifest");
    if (!(meta.cfg == fc))
      throw ValidationError("resume", "checkpoint field architecture differs from --config");
    if (meta.iteration >= tc.iterations)
      throw ValidationError("resume", "checkpoint is already at iteration " +
                                          std::to_string(meta.iteration));
    AdamState<float> adam;
    adam.m = std::move(am);
    adam.v = std::move(av);
    adam.step = astep;
    const auto curve =
        train_field(model, ds, tc, a.out, curve_path, int(meta.iteration), &adam);
    std::cout << a.out << ": resumed at " << meta.iteration << ", trained to " << tc.iterations
              << ", final loss " << (curve.empty() ? 0.0 : curve.back().loss) << "\n";
  } else {
    model.init(fc, ids, a.seed);
    const auto curve = train_field(model, ds, tc, a.out, curve_path, 0, nullptr);
    std::cout << a.out << ": " << tc.iterations << " iterations, final loss "
              << (curve.empty() ? 0.0 : curve.back().loss) << ", psnr "
              << (curve.empty() ? 0.0 : curve.back().psnr) << " dB\n";
  }
}

// ---- render -----------------------------------------------------------------

struct RenderArgs {
  std::string checkpoint, manifest, poses, out;
  int samples_head = 64, samples_torso = 32;
  bool jitter = false;
  bool raw = false;
  int threads = 1;
  int max_frames = 0;
  uint64_t seed = 0;
};

void cmd_render(const RenderArgs& a) {
  if (a.samples_head <= 0 || a.samples_torso <= 0)
    throw ValidationError("samples", "sample counts must be positive");
  if (a.threads <= 0) throw ValidationError("threads", "thread count must be positive");

  const Checkpoint ck = load_checkpoint(a.checkpoint, "checkpoint");
  const std::string kind = checkpoint_kind(ck, "checkpoint");
  const ClipManifest m = load_manifest(a.manifest);
  const ClipDataset ds = load_dataset(m, /*load_frames=*/false);

  ClipRenderOptions opt;
  opt.rc.samples_head = a.samples_head;
  opt.rc.samples_torso = a.samples_torso;
  opt.rc.jitter = a.jitter;
  opt.rc.seed = a.seed;
  opt.rc.threads = a.threads;
  opt.max_frames = a.max_frames;
  opt.raw = a.raw;

  MatX<float> ps, pl;
  if (!a.poses.empty()) {
    ps = blob_to_mat(load_blob(fs::path(a.poses) / "pose_speaker.tensor", "poses"), "poses");
    pl = blob_to_mat(load_blob(fs::path(a.poses) / "pose_listener.tensor", "poses"), "poses");
    if (ps.cols() != 6 || pl.cols() != 6)
      throw ValidationError("poses", "pose blobs must be T x 6");
    opt.pose_speaker = &ps;
    opt.pose_listener = &pl;
  }

  if (kind == "field") {
    FieldModel<float> model;
    FieldCheckpointMeta meta;
    field_from_checkpoint(ck, model, meta, nullptr, nullptr, nullptr, "checkpoint");
    render_clip(model, ds, opt, a.out);
  } else if (kind == "analytic_scene") {
    AnalyticScene scene{scene_from_checkpoint(ck, "checkpoint")};
    render_clip(scene, ds, opt, a.out);
  } else {
    throw ValidationError("checkpoint", "cannot render from a \"" + kind + "\" checkpoint");
  }
  const int n = opt.max_frames > 0 ? std::min(opt.max_frames, ds.n_frames) : ds.n_frames;
  std::cout << a.out << ": " << m.individuals.size() << " individuals x " << n << " frames\n";
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string ref, gen, out;
};

void cmd_eval(const EvalArgs& a) {
  if (!fs::is_directory(a.ref)) throw ValidationError("ref", "not a directory: " + a.ref);
  if (!fs::is_directory(a.gen)) throw ValidationError("gen", "not a directory: " + a.gen);

  std::vector<fs::path> rel;
  for (const auto& e : fs::recursive_directory_iterator(a.ref))
    if (e.is_regular_file() && e.path().extension() == ".png")
      rel.push_back(fs::relative(e.path(), a.ref));
  std::sort(rel.begin(), rel.end());
  if (rel.empty()) throw ValidationError("ref", "no PNG frames under " + a.ref);

  std::string csv = "frame,psnr,ssim\n";
  char line[256];
  double psnr_sum = 0, ssim_sum = 0;
  for (const auto& r : rel) {
    const fs::path gp = fs::path(a.gen) / r;
    if (!fs::exists(gp)) throw ValidationError("gen", "missing frame: " + gp.string());
    const Image ref_img = load_png(fs::path(a.ref) / r, "ref");
    const Image gen_img = load_png(gp, "gen");
    const double p = psnr(ref_img, gen_img);
    const double s = ssim(ref_img, gen_img);
    psnr_sum += p;
    ssim_sum += s;
    fs::path name = r;
    name.replace_extension();
    std::snprintf(line, sizeof line, "%s,%.6f,%.6f\n", name.generic_string().c_str(), p, s);
    csv += line;
  }
  const double n = double(rel.size());
  std::snprintf(line, sizeof line, "mean,%.6f,%.6f\n", psnr_sum / n, ssim_sum / n);
  csv += line;
  write_text_atomic(a.out, csv);

  std::printf("%zu frames: psnr %.3f dB, ssim %.4f\n", rel.size(), psnr_sum / n, ssim_sum / n);
  std::printf("cpbd: n/a\nsync: n/a\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dialogue avatar pipeline"};
  app.require_subcommand(1);
  std::string active = "cli";

  // synth make-scene
  auto* synth = app.add_subcommand("synth", "synthetic scene generation");
  synth->require_subcommand(1);
  auto* mks = synth->add_subcommand("make-scene", "generate an analytic scene clip");
  MakeSceneArgs msa;
  mks->add_option("--spec", msa.spec, "preset name (slab, blob, two_identity, torso_motion, dialogue)");
  mks->add_option("--out", msa.out, "output directory")->required();
  mks->add_option("--seed", msa.seed, "generation seed");
  mks->add_option("--frames", msa.frames, "override frame count");
  mks->add_option("--width", msa.width, "override frame width");
  mks->add_option("--height", msa.height, "override frame height");
  mks->callback([&] { active = "synth-make-scene"; cmd_make_scene(msa); });

  // features extract
  auto* feats = app.add_subcommand("features", "acoustic feature extraction");
  feats->require_subcommand(1);
  auto* fex = feats->add_subcommand("extract", "per-frame zcr/rms from a WAV file");
  FeaturesArgs fea;
  fex->add_option("--wav", fea.wav, "input WAV (PCM16 mono)")->required();
  fex->add_option("--fps", fea.fps, "video frame rate");
  fex->add_option("--frames", fea.frames, "number of video frames")->required();
  fex->add_option("--out", fea.out, "output tensor path")->required();
  fex->add_option("--window", fea.window, "analysis window seconds");
  uint64_t fex_seed = 0;
  fex->add_option("--seed", fex_seed, "unused; accepted for uniformity");
  fex->callback([&] { active = "features-extract"; cmd_features_extract(fea); });

  // posegen train / predict
  auto* pg = app.add_subcommand("posegen", "head pose forecasting");
  pg->require_subcommand(1);
  auto* pgt = pg->add_subcommand("train", "train the forecaster on a clip");
  PosegenTrainArgs pta;
  pgt->add_option("--manifest", pta.manifest, "clip manifest JSON")->required();
  pgt->add_option("--out", pta.out, "output checkpoint path")->required();
  pgt->add_option("--mode", pta.mode, "listener inputs: full, audio_only, pose_only");
  pgt->add_option("--epochs", pta.epochs, "training epochs");
  pgt->add_option("--lr", pta.lr, "learning rate");
  pgt->add_option("--window", pta.window, "acoustic window seconds");
  pgt->add_option("--val-fraction", pta.val_fraction, "trailing fraction of segments held out");
  pgt->add_option("--curve", pta.curve, "loss curve CSV path (default <out>.loss.csv)");
  pgt->add_option("--seed", pta.seed, "training seed");
  pgt->callback([&] { active = "posegen-train"; cmd_posegen_train(pta); });

  auto* pgp = pg->add_subcommand("predict", "forecast pose streams from acoustics");
  PosegenPredictArgs ppa;
  pgp->add_option("--model", ppa.model, "forecaster checkpoint")->required();
  pgp->add_option("--features", ppa.features, "T x 2 (zcr, rms) tensor")->required();
  pgp->add_option("--out", ppa.out, "output directory for pose_speaker/pose_listener tensors")
      ->required();
  uint64_t pgp_seed = 0;
  pgp->add_option("--seed", pgp_seed, "unused; accepted for uniformity");
  pgp->callback([&] { active = "posegen-predict"; cmd_posegen_predict(ppa); });

  // field train
  auto* fld = app.add_subcommand("field", "conditional radiance field");
  fld->require_subcommand(1);
  auto* ft = fld->add_subcommand("train", "train the field on a clip");
  FieldTrainArgs fta;
  ft->add_option("--manifest", fta.manifest, "clip manifest JSON")->required();
  ft->add_option("--config", fta.config, "training config JSON")->required();
  ft->add_option("--out", fta.out, "output checkpoint path")->required();
  ft->add_option("--resume", fta.resume, "checkpoint to resume from");
  ft->add_option("--curve", fta.curve, "loss curve CSV path (default <out>.loss.csv)");
  ft->add_option("--seed", fta.seed, "training seed");
  ft->callback([&] { active = "field-train"; cmd_field_train(fta); });

  // render
  auto* rnd = app.add_subcommand("render", "render a clip from a checkpoint");
  RenderArgs ra;
  rnd->add_option("--checkpoint", ra.checkpoint, "field or analytic-scene checkpoint")->required();
  rnd->add_option("--manifest", ra.manifest, "clip manifest JSON")->required();
  rnd->add_option("--poses", ra.poses, "directory of predicted pose tensors");
  rnd->add_option("--out", ra.out, "output directory")->required();
  rnd->add_option("--samples-head", ra.samples_head, "ray samples, head rays");
  rnd->add_option("--samples-torso", ra.samples_torso, "ray samples, torso rays");
  rnd->add_flag("--jitter", ra.jitter, "stratified jitter instead of midpoints");
  rnd->add_flag("--raw", ra.raw, "also dump f32 tensors per frame");
  rnd->add_option("--threads", ra.threads, "render worker threads");
  rnd->add_option("--max-frames", ra.max_frames, "render only the first N frames");
  rnd->add_option("--seed", ra.seed, "jitter seed");
  rnd->callback([&] { active = "render"; cmd_render(ra); });

  // eval
  auto* ev = app.add_subcommand("eval", "psnr/ssim report over two frame trees");
  EvalArgs ea;
  ev->add_option("--ref", ea.ref, "reference frame directory")->required();
  ev->add_option("--gen", ea.gen, "generated frame directory")->required();
  ev->add_option("--out", ea.out, "report CSV path")->required();
  uint64_t ev_seed = 0;
  ev->add_option("--seed", ev_seed, "unused; accepted for uniformity");
  ev->callback([&] { active = "eval"; cmd_eval(ea); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error:" << active << ":flags: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error:" << active << ":" << e.field() << ": " << e.what() << "\n";
    return 1;
  } catch (const PipelineError& e) {
    std::cerr << "error:" << active << ":runtime: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error:" << active << ":internal: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
