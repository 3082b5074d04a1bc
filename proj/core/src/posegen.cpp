#include "dnerf/posegen.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>

#include "dnerf/audio.hpp"

namespace dnerf {

using nlohmann::json;

std::string listener_mode_to_string(ListenerInputMode m) {
  switch (m) {
    case ListenerInputMode::kFull: return "full";
    case ListenerInputMode::kAudioOnly: return "audio_only";
    case ListenerInputMode::kPoseOnly: return "pose_only";
  }
  return "full";
}

ListenerInputMode listener_mode_from_string(const std::string& s, const std::string& field) {
  if (s == "full") return ListenerInputMode::kFull;
  if (s == "audio_only") return ListenerInputMode::kAudioOnly;
  if (s == "pose_only") return ListenerInputMode::kPoseOnly;
  throw ValidationError(field, "expected full, audio_only or pose_only, got " + s);
}

int listener_input_dim(ListenerInputMode m) {
  switch (m) {
    case ListenerInputMode::kFull: return 8;
    case ListenerInputMode::kAudioOnly: return 2;
    case ListenerInputMode::kPoseOnly: return 6;
  }
  return 8;
}

TcnConfig PosegenConfig::speaker_tcn() const {
  TcnConfig c;
  c.input_dim = 2;
  c.output_dim = 6;
  c.kernel = kernel;
  c.levels = levels;
  c.channels = channels;
  c.dilation_base = dilation_base;
  c.act = act;
  return c;
}

TcnConfig PosegenConfig::listener_tcn() const {
  TcnConfig c = speaker_tcn();
  c.input_dim = listener_input_dim(mode);
  return c;
}

std::vector<PoseSeq> extract_sequences(const ClipDataset& ds, double window_s) {
  const ClipManifest& m = ds.manifest;
  const WavData wav = load_wav(m.resolve(m.audio_path), "audio");
  AudioFeatureConfig afc;
  afc.window_s = window_s;
  const FrameFeatures ff = features_per_frame(wav, m.fps, ds.n_frames, afc);

  std::vector<PoseSeq> out;
  for (const RoleSegment& seg : m.segments) {
    const int f0 = std::max(0, int(std::ceil(seg.start_s * m.fps - 1e-9)));
    const int f1 = std::min(ds.n_frames, int(std::ceil(seg.end_s * m.fps - 1e-9)));
    const int steps = f1 - f0;
    if (steps < 2) continue;

    PoseSeq seq;
    seq.tag = seg.speaker_id + "@" + std::to_string(f0);
    seq.speaker_id = seg.speaker_id;
    const IndividualData& spk = ds.by_id(seg.speaker_id);
    const IndividualData* lis = nullptr;
    for (const IndividualData& ind : ds.individuals)
      if (ind.spec.id != seg.speaker_id) {
        lis = &ind;
        break;
      }

    seq.feat.resize(steps, 2);
    seq.spk_delta.resize(steps, 6);
    seq.lis_delta = MatX<double>::Zero(steps, 6);
    const std::array<double, 6> spk0 = spk.poses[std::size_t(f0)].flat();
    std::array<double, 6> lis0{};
    if (lis) {
      lis0 = lis->poses[std::size_t(f0)].flat();
      seq.has_listener = true;
      seq.listener_id = lis->spec.id;
    }
    for (int f = f0; f < f1; ++f) {
      const int r = f - f0;
      seq.feat(r, 0) = double(ff.zcr[std::size_t(f)]);
      seq.feat(r, 1) = double(ff.rms[std::size_t(f)]);
      const std::array<double, 6> ps = spk.poses[std::size_t(f)].flat();
      for (int k = 0; k < 6; ++k) seq.spk_delta(r, k) = ps[std::size_t(k)] - spk0[std::size_t(k)];
      if (lis) {
        const std::array<double, 6> pl = lis->poses[std::size_t(f)].flat();
        for (int k = 0; k < 6; ++k)
          seq.lis_delta(r, k) = pl[std::size_t(k)] - lis0[std::size_t(k)];
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

void split_sequences(const std::vector<PoseSeq>& all, double val_fraction,
                     std::vector<PoseSeq>& train, std::vector<PoseSeq>& val) {
  train.clear();
  val.clear();
  if (all.empty()) return;
  std::size_t n_val = std::size_t(std::floor(val_fraction * double(all.size())));
  if (n_val >= all.size()) n_val = all.size() - 1;
  const std::size_t n_train = all.size() - n_val;
  for (std::size_t i = 0; i < all.size(); ++i)
    (i < n_train ? train : val).push_back(all[i]);
}

void Standardizer::fit(const std::vector<const MatX<double>*>& mats) {
  if (mats.empty() || mats.front()->cols() == 0)
    throw PipelineError("standardizer fitted with no data");
  const Eigen::Index dim = mats.front()->cols();
  mean = Eigen::RowVectorXd::Zero(dim);
  stdev = Eigen::RowVectorXd::Ones(dim);
  double rows = 0;
  for (const auto* m : mats) rows += double(m->rows());
  if (rows == 0) return;
  for (const auto* m : mats)
    for (Eigen::Index r = 0; r < m->rows(); ++r) mean += m->row(r);
  mean /= rows;
  Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(dim);
  for (const auto* m : mats)
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      const Eigen::RowVectorXd d = m->row(r) - mean;
      var += d.cwiseProduct(d);
    }
  var /= rows;
  stdev = var.cwiseSqrt().cwiseMax(1e-6);
}

MatX<double> Standardizer::apply(const MatX<double>& x) const {
  MatX<double> z = x;
  z.rowwise() -= mean;
  z.array().rowwise() /= stdev.array();
  return z;
}

MatX<double> Standardizer::invert(const MatX<double>& z) const {
  MatX<double> x = z;
  x.array().rowwise() *= stdev.array();
  x.rowwise() += mean;
  return x;
}

void PosegenModel::init(const PosegenConfig& c) {
  cfg = c;
  speaker.init(c.speaker_tcn(), "speaker", c.seed);
  listener.init(c.listener_tcn(), "listener", c.seed);
  feat_std.mean = Eigen::RowVectorXd::Zero(2);
  feat_std.stdev = Eigen::RowVectorXd::Ones(2);
  spk_std.mean = Eigen::RowVectorXd::Zero(6);
  spk_std.stdev = Eigen::RowVectorXd::Ones(6);
  lis_std = spk_std;
}

ParamRefs<double> PosegenModel::params() {
  ParamRefs<double> out;
  speaker.collect(out);
  listener.collect(out);
  return out;
}

MatX<double> PosegenModel::listener_input(const MatX<double>& feat_s,
                                          const MatX<double>& spk_s) const {
  switch (cfg.mode) {
    case ListenerInputMode::kAudioOnly: return feat_s;
    case ListenerInputMode::kPoseOnly: return spk_s;
    case ListenerInputMode::kFull: break;
  }
  MatX<double> in(feat_s.rows(), feat_s.cols() + spk_s.cols());
  in << feat_s, spk_s;
  return in;
}

namespace {

double wrap_angle(double a) {
  double w = std::fmod(a + kPi, 2.0 * kPi);
  if (w <= 0) w += 2.0 * kPi;
  return w - kPi;
}

void wrap_euler_columns(MatX<double>& poses) {
  for (Eigen::Index r = 0; r < poses.rows(); ++r)
    for (int c = 0; c < 3; ++c) poses(r, c) = wrap_angle(poses(r, c));
}

}  // namespace

void PosegenModel::predict(const MatX<double>& feat_raw, MatX<double>& spk_delta,
                           MatX<double>& lis_delta) const {
  if (feat_raw.rows() == 0) throw ValidationError("features", "empty input sequence");
  if (feat_raw.cols() != 2)
    throw ValidationError("features", "expected 2 feature columns (zcr, rms), got " +
                                          std::to_string(feat_raw.cols()));
  const MatX<double> z_f = feat_std.apply(feat_raw);
  const MatX<double> spk_s = speaker.forward(z_f, nullptr);
  const MatX<double> lis_s = listener.forward(listener_input(z_f, spk_s), nullptr);
  spk_delta = spk_std.invert(spk_s);
  lis_delta = lis_std.invert(lis_s);
  wrap_euler_columns(spk_delta);
  wrap_euler_columns(lis_delta);
}

PosegenTrainResult train_posegen(PosegenModel& model, const std::vector<PoseSeq>& train_seqs) {
  if (train_seqs.empty()) throw ValidationError("dataset", "no training sequences");
  const int rf = model.cfg.speaker_tcn().receptive_field();
  for (const PoseSeq& s : train_seqs)
    if (s.feat.rows() < rf)
      std::fprintf(stderr,
                   "warning: sequence %s has %d steps, shorter than the receptive field %d\n",
                   s.tag.c_str(), int(s.feat.rows()), rf);

  std::vector<const MatX<double>*> feats, spks, liss;
  for (const PoseSeq& s : train_seqs) {
    feats.push_back(&s.feat);
    spks.push_back(&s.spk_delta);
    if (s.has_listener) liss.push_back(&s.lis_delta);
  }
  model.feat_std.fit(feats);
  model.spk_std.fit(spks);
  if (!liss.empty()) model.lis_std.fit(liss);

  ParamRefs<double> params = model.params();
  AdamState<double> state;
  state.reset(params);
  AdamConfig adam;
  adam.lr = model.cfg.lr;

  PosegenTrainResult result;
  std::vector<std::size_t> order(train_seqs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < model.cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::fork(model.cfg.seed, fnv1a("epoch") + uint64_t(epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = std::size_t(shuffle_rng.uniform_index(uint64_t(i)));
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0;
    for (const std::size_t si : order) {
      const PoseSeq& seq = train_seqs[si];
      const MatX<double> z_f = model.feat_std.apply(seq.feat);
      const MatX<double> z_spk = model.spk_std.apply(seq.spk_delta);

      for (auto* p : params) p->zero_grad();

      TcnTrace<double> spk_tr;
      const MatX<double> spk_pred = model.speaker.forward(z_f, &spk_tr);
      double loss = l2_loss(spk_pred, z_spk);
      MatX<double> d_spk = 2.0 * (spk_pred - z_spk) / double(spk_pred.size());

      if (seq.has_listener) {
        const MatX<double> z_lis = model.lis_std.apply(seq.lis_delta);
        const MatX<double> lis_in = model.listener_input(z_f, z_spk);
        TcnTrace<double> lis_tr;
        const MatX<double> lis_pred = model.listener.forward(lis_in, &lis_tr);
        loss += l2_loss(lis_pred, z_lis);
        const MatX<double> d_lis = 2.0 * (lis_pred - z_lis) / double(lis_pred.size());
        model.listener.backward(d_lis, lis_tr);
      }
      model.speaker.backward(d_spk, spk_tr);

      if (!std::isfinite(loss))
        throw PipelineError("posegen training diverged at epoch " + std::to_string(epoch) +
                            ", sequence " + seq.tag);
      adam_step(params, state, adam);
      epoch_loss += loss;
    }
    result.epoch_loss.push_back(epoch_loss / double(train_seqs.size()));
  }
  return result;
}

PosegenEval eval_posegen(const PosegenModel& model, const std::vector<PoseSeq>& val) {
  PosegenEval ev;
  double spk_se = 0, lis_se = 0, cl_spk_se = 0, cl_lis_se = 0;
  double spk_n = 0, lis_n = 0;
  for (const PoseSeq& seq : val) {
    const MatX<double> z_f = model.feat_std.apply(seq.feat);
    const MatX<double> spk_pred = model.spk_std.invert(model.speaker.forward(z_f, nullptr));
    spk_se += (spk_pred - seq.spk_delta).squaredNorm();
    spk_n += double(seq.spk_delta.size());
    // Copy-last baseline: hold the last observed pose (the sequence seed)
    // for the whole horizon, i.e. predict zero delta everywhere. The model
    // never sees ground-truth poses past the seed either, so this is the
    // like-for-like reference.
    cl_spk_se += seq.spk_delta.squaredNorm();
    if (!seq.has_listener) continue;
    const MatX<double> z_spk = model.spk_std.apply(seq.spk_delta);
    const MatX<double> lis_pred = model.lis_std.invert(
        model.listener.forward(model.listener_input(z_f, z_spk), nullptr));
    lis_se += (lis_pred - seq.lis_delta).squaredNorm();
    lis_n += double(seq.lis_delta.size());
    cl_lis_se += seq.lis_delta.squaredNorm();
  }
  if (spk_n > 0) {
    ev.speaker_mse = spk_se / spk_n;
    ev.copy_last_speaker_mse = cl_spk_se / spk_n;
  }
  if (lis_n > 0) {
    ev.listener_mse = lis_se / lis_n;
    ev.copy_last_listener_mse = cl_lis_se / lis_n;
  }
  return ev;
}

Checkpoint posegen_to_checkpoint(const PosegenModel& model) {
  json j;
  j["kind"] = "posegen";
  j["mode"] = listener_mode_to_string(model.cfg.mode);
  j["kernel"] = model.cfg.kernel;
  j["levels"] = model.cfg.levels;
  j["channels"] = model.cfg.channels;
  j["dilation_base"] = model.cfg.dilation_base;
  j["act"] = act_to_string(model.cfg.act);
  j["epochs"] = model.cfg.epochs;
  j["lr"] = model.cfg.lr;
  j["window_s"] = model.cfg.window_s;
  auto row_to_json = [](const Eigen::RowVectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
  };
  j["stats"] = {{"feat_mean", row_to_json(model.feat_std.mean)},
                {"feat_std", row_to_json(model.feat_std.stdev)},
                {"spk_mean", row_to_json(model.spk_std.mean)},
                {"spk_std", row_to_json(model.spk_std.stdev)},
                {"lis_mean", row_to_json(model.lis_std.mean)},
                {"lis_std", row_to_json(model.lis_std.stdev)}};

  Checkpoint ck;
  ck.config = j.dump(2) + "\n";
  PosegenModel& mut = const_cast<PosegenModel&>(model);
  for (const Param<double>* p : mut.params()) ck.add(p->name, p->to_blob());
  return ck;
}

void posegen_from_checkpoint(const Checkpoint& ck, PosegenModel& model,
                             const std::string& field) {
  json j;
  try {
    j = json::parse(ck.config);
  } catch (const json::exception& e) {
    throw ValidationError(field, std::string("invalid checkpoint config: ") + e.what());
  }
  try {
    if (j.value("kind", "") != "posegen")
      throw ValidationError(field + ".kind", "expected a posegen checkpoint, got \"" +
                                                 j.value("kind", "") + "\"");
    PosegenConfig cfg;
    cfg.mode = listener_mode_from_string(j.at("mode").get<std::string>(), field + ".mode");
    cfg.kernel = j.at("kernel").get<int>();
    cfg.levels = j.at("levels").get<int>();
    cfg.channels = j.at("channels").get<int>();
    cfg.dilation_base = j.at("dilation_base").get<int>();
    cfg.act = act_from_string(j.at("act").get<std::string>(), field + ".act");
    cfg.epochs = j.at("epochs").get<int>();
    cfg.lr = j.at("lr").get<double>();
    cfg.window_s = j.at("window_s").get<double>();
    model.init(cfg);

    auto row_from_json = [&](const json& a, Eigen::Index dim, const std::string& f) {
      if (!a.is_array() || Eigen::Index(a.size()) != dim)
        throw ValidationError(f, "expected an array of " + std::to_string(dim) + " numbers");
      Eigen::RowVectorXd v(dim);
      for (Eigen::Index i = 0; i < dim; ++i) v[i] = a[std::size_t(i)].get<double>();
      return v;
    };
    const json& st = j.at("stats");
    model.feat_std.mean = row_from_json(st.at("feat_mean"), 2, field + ".stats.feat_mean");
    model.feat_std.stdev = row_from_json(st.at("feat_std"), 2, field + ".stats.feat_std");
    model.spk_std.mean = row_from_json(st.at("spk_mean"), 6, field + ".stats.spk_mean");
    model.spk_std.stdev = row_from_json(st.at("spk_std"), 6, field + ".stats.spk_std");
    model.lis_std.mean = row_from_json(st.at("lis_mean"), 6, field + ".stats.lis_mean");
    model.lis_std.stdev = row_from_json(st.at("lis_std"), 6, field + ".stats.lis_std");
  } catch (const json::exception& e) {
    throw ValidationError(field, std::string("malformed checkpoint config: ") + e.what());
  }
  for (Param<double>* p : model.params()) p->from_blob(ck.require(p->name, field), field);
}

}  // namespace dnerf
