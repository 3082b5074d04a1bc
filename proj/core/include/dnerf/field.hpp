#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "dnerf/checkpoint.hpp"
#include "dnerf/encoding.hpp"
#include "dnerf/nn.hpp"

namespace dnerf {

enum class Part { kHead, kTorso };
enum class Role { kSpeaker, kListener };

inline const char* part_name(Part p) { return p == Part::kHead ? "head" : "torso"; }

inline bool operator==(const EncodingConfig& a, const EncodingConfig& b) {
  return a.bands == b.bands && a.include_input == b.include_input;
}

struct FieldConfig {
  EncodingConfig pos_enc{10, false};
  EncodingConfig dir_enc{4, false};
  EncodingConfig et_enc{4, false};  // applied to the 6-d pose vector
  int latent_dim = 64;              // per-part z_s / z_a size
  int cond_width = 64;              // condition projection output
  int audio_dim = 512;              // speaker feature size
  int expr_dim = 64;                // listener feature size
  int depth = 8;
  int width = 256;
  int skip = 4;
  int color_hidden = 128;
  int deform_depth = 4;
  int deform_width = 64;
  bool deform_enabled = true;
  Act hidden_act = Act::kRelu;

  int pos_dim() const { return pos_enc.encoded_dim(3); }
  int dir_dim() const { return dir_enc.encoded_dim(3); }
  int et_dim() const { return et_enc.encoded_dim(6); }

  void validate(const std::string& field) const {
    if (pos_enc.bands < 1 || dir_enc.bands < 1 || et_enc.bands < 1)
      throw ValidationError(field, "encoding bands must be >= 1");
    if (latent_dim < 1 || cond_width < 1 || audio_dim < 1 || expr_dim < 1)
      throw ValidationError(field, "conditioning dims must be >= 1");
    if (depth < 2 || width < 1 || color_hidden < 1)
      throw ValidationError(field, "backbone dims out of range");
    if (skip <= 0 || skip >= depth) throw ValidationError(field, "skip must lie inside the backbone");
    if (deform_depth < 1 || deform_width < 1)
      throw ValidationError(field, "deformation net dims out of range");
  }
};

inline bool operator==(const FieldConfig& a, const FieldConfig& b) {
  return a.pos_enc == b.pos_enc && a.dir_enc == b.dir_enc && a.et_enc == b.et_enc &&
         a.latent_dim == b.latent_dim && a.cond_width == b.cond_width &&
         a.audio_dim == b.audio_dim && a.expr_dim == b.expr_dim && a.depth == b.depth &&
         a.width == b.width && a.skip == b.skip && a.color_hidden == b.color_hidden &&
         a.deform_depth == b.deform_depth && a.deform_width == b.deform_width &&
         a.deform_enabled == b.deform_enabled && a.hidden_act == b.hidden_act;
}

// One radiance sample: density (post-softplus) and color (post-sigmoid).
struct RadianceSample {
  double sigma = 0;
  std::array<double, 3> rgb{0, 0, 0};
};

// Density branch input per sample row:
//   head:  [gamma(x) | z_s | projected condition]
//   torso: [x' | gamma(e_t) | z_s], x' = gamma(x) + deform(gamma(x), gamma(e_t))
// Color branch extra input per sample row:
//   head:  [gamma(d) | z_a]
//   torso: [z_a]
template <typename T>
struct FieldNet {
  Mlp<T> backbone;
  Linear<T> sigma_head;    // width -> 1, raw (softplus applied outside)
  Linear<T> feature;       // width -> width
  Linear<T> color_hidden;  // width + extra -> hidden
  Linear<T> color_out;     // hidden -> 3, raw (sigmoid applied outside)
  Act act = Act::kRelu;

  void init(int density_in, int color_extra, const FieldConfig& cfg, const std::string& name,
            uint64_t seed) {
    act = cfg.hidden_act;
    backbone.init(density_in, cfg.width, cfg.width, cfg.depth, cfg.hidden_act, cfg.skip,
                  name + ".backbone", seed, /*activate_last=*/true);
    sigma_head.init(cfg.width, 1, name + ".sigma", seed);
    feature.init(cfg.width, cfg.width, name + ".feature", seed);
    color_hidden.init(cfg.width + color_extra, cfg.color_hidden, name + ".color_hidden", seed);
    color_out.init(cfg.color_hidden, 3, name + ".color_out", seed);
  }

  struct Trace {
    MlpTrace<T> bb;
    MatX<T> h;        // backbone output
    MatX<T> cin;      // [feature | extra]
    MatX<T> cpre;     // color_hidden pre-activation
    MatX<T> cpost;
    MatX<T> sraw;     // pre-softplus density
    MatX<T> rgbraw;   // pre-sigmoid color
  };

  void forward(const MatX<T>& xd, const MatX<T>& xe, Trace* tr, MatX<T>& sigma,
               MatX<T>& rgb) const {
    MatX<T> h = backbone.forward(xd, tr ? &tr->bb : nullptr);
    MatX<T> sraw = sigma_head.forward(h);
    MatX<T> feat = feature.forward(h);
    MatX<T> cin(feat.rows(), feat.cols() + xe.cols());
    cin << feat, xe;
    MatX<T> cpre = color_hidden.forward(cin);
    MatX<T> cpost = cpre;
    act_apply(act, cpost);
    MatX<T> rgbraw = color_out.forward(cpost);

    sigma.resize(sraw.rows(), 1);
    for (Eigen::Index i = 0; i < sraw.rows(); ++i) sigma(i, 0) = softplus(sraw(i, 0));
    rgb.resize(rgbraw.rows(), 3);
    for (Eigen::Index i = 0; i < rgbraw.rows(); ++i)
      for (Eigen::Index c = 0; c < 3; ++c) rgb(i, c) = sigmoid(rgbraw(i, c));

    if (tr) {
      tr->h = std::move(h);
      tr->cin = std::move(cin);
      tr->cpre = std::move(cpre);
      tr->cpost = std::move(cpost);
      tr->sraw = std::move(sraw);
      tr->rgbraw = std::move(rgbraw);
    }
  }

  // d_sigma/d_rgb are gradients at the post-activation outputs. Returns
  // gradients for the two input blocks.
  void backward(const MatX<T>& d_sigma, const MatX<T>& d_rgb, const Trace& tr, MatX<T>& d_xd,
                MatX<T>& d_xe) {
    MatX<T> d_rgbraw(d_rgb.rows(), 3);
    for (Eigen::Index i = 0; i < d_rgb.rows(); ++i)
      for (Eigen::Index c = 0; c < 3; ++c) {
        const T s = sigmoid(tr.rgbraw(i, c));
        d_rgbraw(i, c) = d_rgb(i, c) * s * (T(1) - s);
      }
    MatX<T> d_cpost = color_out.backward(tr.cpost, d_rgbraw);
    act_backward(act, tr.cpre, d_cpost);
    MatX<T> d_cin = color_hidden.backward(tr.cin, d_cpost);
    const Eigen::Index width = tr.h.cols();
    MatX<T> d_feat = d_cin.leftCols(width);
    d_xe = d_cin.rightCols(d_cin.cols() - width);

    MatX<T> d_sraw(d_sigma.rows(), 1);
    for (Eigen::Index i = 0; i < d_sigma.rows(); ++i)
      d_sraw(i, 0) = d_sigma(i, 0) * sigmoid(tr.sraw(i, 0));

    MatX<T> d_h = feature.backward(tr.h, d_feat);
    d_h += sigma_head.backward(tr.h, d_sraw);
    d_xd = backbone.backward(d_h, tr.bb);
  }

  void collect(ParamRefs<T>& out) {
    backbone.collect(out);
    sigma_head.collect(out);
    feature.collect(out);
    color_hidden.collect(out);
    color_out.collect(out);
  }
};

template <typename T>
struct PartCodes {
  Param<T> zs, za;
};

template <typename T>
struct IdentityCodes {
  PartCodes<T> head, torso;
  PartCodes<T>& part(Part p) { return p == Part::kHead ? head : torso; }
  const PartCodes<T>& part(Part p) const { return p == Part::kHead ? head : torso; }
};

// A slot is one (identity, frame) pairing inside a batch: every ray of the
// slot shares the raw condition feature, its role, and the pose vector e_t.
template <typename T>
struct CondSlot {
  const std::string* identity = nullptr;
  Role role = Role::kListener;
  MatX<T> f_cond;                 // 1 x (audio_dim or expr_dim by role)
  std::array<double, 6> et{};     // pose vector driving torso + deformation
};

// Sample batch for one part. positions are raw 3-d points; dirs are unit
// view directions per ray (used by the head color branch only).
template <typename T>
struct PartBatch {
  MatX<T> positions;            // M x 3
  std::vector<int> ray_of;      // M, sample row -> ray
  MatX<T> dirs;                 // R x 3
  std::vector<int> slot_of;     // R, ray -> slot
  std::vector<CondSlot<T>> slots;
};

template <typename T>
struct PartForward {
  MatX<T> sigma;  // M x 1
  MatX<T> rgb;    // M x 3
  MatX<T> delta;  // torso only: M x pos_dim deformation offsets

  // backward caches, populated when with_trace
  typename FieldNet<T>::Trace net;
  MlpTrace<T> deform_trace;
  MatX<T> cond_proj;               // S x cond_width
  std::vector<const PartCodes<T>*> slot_codes;
  std::vector<Role> slot_roles;
  std::vector<MatX<T>> slot_f;     // raw condition rows
  std::vector<int> ray_of, slot_of;
  Eigen::Index rows = 0;
};

template <typename T>
class FieldModel {
 public:
  FieldConfig cfg;
  FieldNet<T> head_net, torso_net;
  Mlp<T> deform;
  Linear<T> proj_speaker;
  Linear<T> proj_listener;
  std::map<std::string, IdentityCodes<T>> codes;

  void init(const FieldConfig& c, const std::vector<std::string>& identity_ids, uint64_t seed) {
    c.validate("config");
    if (identity_ids.empty()) throw ValidationError("config", "no identities registered");
    cfg = c;
    head_net.init(c.pos_dim() + c.latent_dim + c.cond_width, c.dir_dim() + c.latent_dim, c,
                  "head", seed);
    torso_net.init(c.pos_dim() + c.et_dim() + c.latent_dim, c.latent_dim, c, "torso", seed);
    deform.init(c.pos_dim() + c.et_dim(), c.deform_width, c.pos_dim(), c.deform_depth,
                c.hidden_act, -1, "deform", seed);
    proj_speaker.init(c.audio_dim, c.cond_width, "proj_speaker", seed);
    proj_listener.init(c.expr_dim, c.cond_width, "proj_listener", seed);
    codes.clear();
    for (const auto& id : identity_ids) {
      if (codes.count(id)) throw ValidationError("config", "duplicate identity id: " + id);
      IdentityCodes<T>& ic = codes[id];
      for (Part part : {Part::kHead, Part::kTorso}) {
        PartCodes<T>& pc = ic.part(part);
        const std::string base = "code." + id + "." + part_name(part);
        pc.zs.setup(base + ".zs", 1, c.latent_dim);
        pc.za.setup(base + ".za", 1, c.latent_dim);
        Rng rs = init_rng(seed, pc.zs.name);
        fill_normal(pc.zs.value, rs, 0.01);
        Rng ra = init_rng(seed, pc.za.name);
        fill_normal(pc.za.value, ra, 0.01);
      }
    }
  }

  // Deterministic registry order: networks first, then codes sorted by id.
  ParamRefs<T> params() {
    ParamRefs<T> out;
    head_net.collect(out);
    torso_net.collect(out);
    deform.collect(out);
    proj_speaker.collect(out);
    proj_listener.collect(out);
    for (auto& [id, ic] : codes) {
      out.push_back(&ic.head.zs);
      out.push_back(&ic.head.za);
      out.push_back(&ic.torso.zs);
      out.push_back(&ic.torso.za);
    }
    return out;
  }

  IdentityCodes<T>& lookup_identity(const std::string& id) {
    auto it = codes.find(id);
    if (it == codes.end()) throw ValidationError("identity", "unknown identity: " + id);
    return it->second;
  }
  const IdentityCodes<T>& lookup_identity(const std::string& id) const {
    auto it = codes.find(id);
    if (it == codes.end()) throw ValidationError("identity", "unknown identity: " + id);
    return it->second;
  }

  // gamma(x) + deform(gamma(x), gamma(e_t)); pass-through when deformation is
  // disabled. Inputs are already encoded.
  std::vector<T> warp_torso(const std::vector<T>& gamma_x, const std::vector<T>& gamma_et) const {
    if (int(gamma_x.size()) != cfg.pos_dim())
      throw ValidationError("gamma_x", "expected " + std::to_string(cfg.pos_dim()) + " values");
    if (int(gamma_et.size()) != cfg.et_dim())
      throw ValidationError("gamma_et", "expected " + std::to_string(cfg.et_dim()) + " values");
    if (!cfg.deform_enabled) return gamma_x;
    MatX<T> in(1, cfg.pos_dim() + cfg.et_dim());
    for (int i = 0; i < cfg.pos_dim(); ++i) in(0, i) = gamma_x[std::size_t(i)];
    for (int i = 0; i < cfg.et_dim(); ++i) in(0, cfg.pos_dim() + i) = gamma_et[std::size_t(i)];
    MatX<T> d = deform.forward(in, nullptr);
    std::vector<T> out(gamma_x);
    for (int i = 0; i < cfg.pos_dim(); ++i) out[std::size_t(i)] += d(0, i);
    return out;
  }

  // Batched forward through one part. Encodes positions, assembles the
  // conditioned inputs, runs the network. with_trace keeps everything
  // backward_part needs.
  void forward_part(Part part, const PartBatch<T>& batch, PartForward<T>& fwd,
                    bool with_trace) const {
    PartForward<T>* cache = with_trace ? &fwd : nullptr;
    const Eigen::Index m = batch.positions.rows();
    fwd.rows = m;
    const int pos_dim = cfg.pos_dim();

    MatX<T> gx(m, pos_dim);
    {
      std::vector<T> row(static_cast<std::size_t>(pos_dim));
      for (Eigen::Index i = 0; i < m; ++i) {
        const T p[3] = {batch.positions(i, 0), batch.positions(i, 1), batch.positions(i, 2)};
        positional_encode(p, 3, cfg.pos_enc, row.data());
        for (int k = 0; k < pos_dim; ++k) gx(i, k) = row[std::size_t(k)];
      }
    }

    const Eigen::Index s = Eigen::Index(batch.slots.size());
    MatX<T> cond_proj;
    std::vector<MatX<T>> et_enc(static_cast<std::size_t>(s));
    if (part == Part::kHead) {
      cond_proj.resize(s, cfg.cond_width);
      for (Eigen::Index si = 0; si < s; ++si) {
        const CondSlot<T>& slot = batch.slots[std::size_t(si)];
        const Linear<T>& proj =
            slot.role == Role::kSpeaker ? proj_speaker : proj_listener;
        cond_proj.row(si) = proj.forward(slot.f_cond).row(0);
      }
    } else {
      for (Eigen::Index si = 0; si < s; ++si) {
        const CondSlot<T>& slot = batch.slots[std::size_t(si)];
        MatX<T> enc(1, cfg.et_dim());
        T et[6];
        for (int k = 0; k < 6; ++k) et[k] = T(slot.et[std::size_t(k)]);
        positional_encode(et, 6, cfg.et_enc, enc.data());
        et_enc[std::size_t(si)] = std::move(enc);
      }
    }

    auto codes_of = [&](int si) -> const PartCodes<T>* {
      const CondSlot<T>& slot = batch.slots[std::size_t(si)];
      return &lookup_identity(*slot.identity).part(part);
    };
    std::vector<const PartCodes<T>*> slot_codes(static_cast<std::size_t>(s));
    for (Eigen::Index si = 0; si < s; ++si) slot_codes[std::size_t(si)] = codes_of(int(si));

    const FieldNet<T>& net = part == Part::kHead ? head_net : torso_net;
    const int dz = cfg.latent_dim;

    MatX<T> xd, xe, deform_in, delta;
    if (part == Part::kHead) {
      xd.resize(m, pos_dim + dz + cfg.cond_width);
      xe.resize(m, cfg.dir_dim() + dz);
      MatX<T> dir_enc(batch.dirs.rows(), cfg.dir_dim());
      for (Eigen::Index r = 0; r < batch.dirs.rows(); ++r) {
        const T d[3] = {batch.dirs(r, 0), batch.dirs(r, 1), batch.dirs(r, 2)};
        positional_encode(d, 3, cfg.dir_enc, dir_enc.data() + r * cfg.dir_dim());
      }
      for (Eigen::Index i = 0; i < m; ++i) {
        const int ray = batch.ray_of[std::size_t(i)];
        const int si = batch.slot_of[std::size_t(ray)];
        const PartCodes<T>& pc = *slot_codes[std::size_t(si)];
        xd.block(i, 0, 1, pos_dim) = gx.row(i);
        xd.block(i, pos_dim, 1, dz) = pc.zs.value;
        xd.block(i, pos_dim + dz, 1, cfg.cond_width) = cond_proj.row(si);
        xe.block(i, 0, 1, cfg.dir_dim()) = dir_enc.row(ray);
        xe.block(i, cfg.dir_dim(), 1, dz) = pc.za.value;
      }
    } else {
      const int et_dim = cfg.et_dim();
      deform_in.resize(m, pos_dim + et_dim);
      for (Eigen::Index i = 0; i < m; ++i) {
        const int ray = batch.ray_of[std::size_t(i)];
        const int si = batch.slot_of[std::size_t(ray)];
        deform_in.block(i, 0, 1, pos_dim) = gx.row(i);
        deform_in.block(i, pos_dim, 1, et_dim) = et_enc[std::size_t(si)];
      }
      if (cfg.deform_enabled) {
        delta = deform.forward(deform_in, cache ? &cache->deform_trace : nullptr);
      } else {
        delta = MatX<T>::Zero(m, pos_dim);
      }
      xd.resize(m, pos_dim + et_dim + dz);
      xe.resize(m, dz);
      for (Eigen::Index i = 0; i < m; ++i) {
        const int ray = batch.ray_of[std::size_t(i)];
        const int si = batch.slot_of[std::size_t(ray)];
        const PartCodes<T>& pc = *slot_codes[std::size_t(si)];
        xd.block(i, 0, 1, pos_dim) = gx.row(i) + delta.row(i);
        xd.block(i, pos_dim, 1, et_dim) = et_enc[std::size_t(si)];
        xd.block(i, pos_dim + et_dim, 1, dz) = pc.zs.value;
        xe.block(i, 0, 1, dz) = pc.za.value;
      }
    }

    net.forward(xd, xe, cache ? &cache->net : nullptr, fwd.sigma, fwd.rgb);
    fwd.delta = std::move(delta);

    if (cache) {
      cache->rows = m;
      cache->cond_proj = std::move(cond_proj);
      cache->slot_codes = std::move(slot_codes);
      cache->slot_roles.resize(batch.slots.size());
      cache->slot_f.resize(batch.slots.size());
      for (std::size_t si = 0; si < batch.slots.size(); ++si) {
        cache->slot_roles[si] = batch.slots[si].role;
        cache->slot_f[si] = batch.slots[si].f_cond;
      }
      cache->ray_of = batch.ray_of;
      cache->slot_of = batch.slot_of;
    }
  }

  // Backward through one part. d_delta_extra (may be empty) is an additional
  // gradient on the deformation offsets, e.g. from an offset-norm penalty.
  void backward_part(Part part, const MatX<T>& d_sigma, const MatX<T>& d_rgb,
                     const MatX<T>& d_delta_extra, PartForward<T>& cache) {
    FieldNet<T>& net = part == Part::kHead ? head_net : torso_net;
    MatX<T> d_xd, d_xe;
    net.backward(d_sigma, d_rgb, cache.net, d_xd, d_xe);

    const int pos_dim = cfg.pos_dim();
    const int dz = cfg.latent_dim;
    const Eigen::Index m = cache.rows;

    if (part == Part::kHead) {
      MatX<T> d_cond = MatX<T>::Zero(cache.cond_proj.rows(), cfg.cond_width);
      for (Eigen::Index i = 0; i < m; ++i) {
        const int ray = cache.ray_of[std::size_t(i)];
        const int si = cache.slot_of[std::size_t(ray)];
        PartCodes<T>* pc = const_cast<PartCodes<T>*>(cache.slot_codes[std::size_t(si)]);
        pc->zs.grad += d_xd.block(i, pos_dim, 1, dz);
        pc->za.grad += d_xe.block(i, cfg.dir_dim(), 1, dz);
        d_cond.row(si) += d_xd.block(i, pos_dim + dz, 1, cfg.cond_width);
      }
      for (Eigen::Index si = 0; si < d_cond.rows(); ++si) {
        Linear<T>& proj =
            cache.slot_roles[std::size_t(si)] == Role::kSpeaker ? proj_speaker : proj_listener;
        proj.backward(cache.slot_f[std::size_t(si)], d_cond.row(si));
      }
    } else {
      const int et_dim = cfg.et_dim();
      for (Eigen::Index i = 0; i < m; ++i) {
        const int ray = cache.ray_of[std::size_t(i)];
        const int si = cache.slot_of[std::size_t(ray)];
        PartCodes<T>* pc = const_cast<PartCodes<T>*>(cache.slot_codes[std::size_t(si)]);
        pc->zs.grad += d_xd.block(i, pos_dim + et_dim, 1, dz);
        pc->za.grad += d_xe.block(i, 0, 1, dz);
      }
      if (cfg.deform_enabled) {
        // d(x') flows into the deformation net; the direct gamma(x) path ends
        // at the encoding, which has no parameters.
        MatX<T> d_delta = d_xd.leftCols(pos_dim);
        if (d_delta_extra.size() > 0) d_delta += d_delta_extra;
        deform.backward(d_delta, cache.deform_trace);
      }
    }
  }

  // Single-sample interfaces over encoded inputs, matching the batched path
  // bit for bit (they run through it).
  RadianceSample query_head(const std::vector<T>& x, const std::vector<T>& dir,
                            const MatX<T>& f_cond, Role role, const std::string& identity) const {
    PartBatch<T> b;
    b.positions.resize(1, 3);
    for (int k = 0; k < 3; ++k) b.positions(0, k) = x[std::size_t(k)];
    b.ray_of = {0};
    b.dirs.resize(1, 3);
    for (int k = 0; k < 3; ++k) b.dirs(0, k) = dir[std::size_t(k)];
    b.slot_of = {0};
    CondSlot<T> slot;
    slot.identity = &identity;
    slot.role = role;
    slot.f_cond = f_cond;
    b.slots.push_back(std::move(slot));
    check_cond_dim(role, b.slots[0].f_cond);
    PartForward<T> fwd;
    forward_part(Part::kHead, b, fwd, false);
    return {double(fwd.sigma(0, 0)),
            {double(fwd.rgb(0, 0)), double(fwd.rgb(0, 1)), double(fwd.rgb(0, 2))}};
  }

  RadianceSample query_torso(const std::vector<T>& x, const std::array<double, 6>& et,
                             const std::string& identity) const {
    PartBatch<T> b;
    b.positions.resize(1, 3);
    for (int k = 0; k < 3; ++k) b.positions(0, k) = x[std::size_t(k)];
    b.ray_of = {0};
    b.dirs = MatX<T>::Zero(1, 3);
    b.slot_of = {0};
    CondSlot<T> slot;
    slot.identity = &identity;
    slot.et = et;
    b.slots.push_back(std::move(slot));
    PartForward<T> fwd;
    forward_part(Part::kTorso, b, fwd, false);
    return {double(fwd.sigma(0, 0)),
            {double(fwd.rgb(0, 0)), double(fwd.rgb(0, 1)), double(fwd.rgb(0, 2))}};
  }

  void check_cond_dim(Role role, const MatX<T>& f) const {
    const int want = role == Role::kSpeaker ? cfg.audio_dim : cfg.expr_dim;
    if (f.rows() != 1 || f.cols() != want)
      throw ValidationError("f_cond", "condition row must be 1 x " + std::to_string(want));
  }
};

// Checkpoint glue (json parsing lives in the .cpp, float instantiation only).
struct FieldCheckpointMeta {
  FieldConfig cfg;
  std::vector<std::string> identity_ids;
  int64_t iteration = 0;
};

std::string field_config_to_json(const FieldCheckpointMeta& meta);
FieldCheckpointMeta field_config_from_json(const std::string& json_text, const std::string& field);

Checkpoint field_to_checkpoint(FieldModel<float>& model, int64_t iteration,
                               const std::vector<MatX<float>>* adam_m,
                               const std::vector<MatX<float>>* adam_v, int64_t adam_step);
void field_from_checkpoint(const Checkpoint& ck, FieldModel<float>& model,
                           FieldCheckpointMeta& meta, std::vector<MatX<float>>* adam_m,
                           std::vector<MatX<float>>* adam_v, int64_t* adam_step,
                           const std::string& field);

}  // namespace dnerf
