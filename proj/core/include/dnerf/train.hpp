#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dnerf/manifest.hpp"
#include "dnerf/nn.hpp"
#include "dnerf/render.hpp"

namespace dnerf {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moment estimates per registered tensor; `step` counts
// completed updates and drives bias correction.
template <typename T>
struct AdamState {
  std::vector<MatX<T>> m, v;
  int64_t step = 0;

  void reset(const ParamRefs<T>& params) {
    m.clear();
    v.clear();
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto* p : params) {
      m.push_back(MatX<T>::Zero(p->value.rows(), p->value.cols()));
      v.push_back(MatX<T>::Zero(p->value.rows(), p->value.cols()));
    }
    step = 0;
  }
};

template <typename T>
void adam_step(const ParamRefs<T>& params, AdamState<T>& state, const AdamConfig& cfg) {
  if (state.m.size() != params.size())
    throw PipelineError("adam state does not match parameter registry");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = *params[i];
    if (!p.grad.allFinite())
      throw PipelineError("non-finite gradient in tensor " + p.name);
    MatX<T>& m = state.m[i];
    MatX<T>& v = state.v[i];
    m = T(cfg.beta1) * m + T(1 - cfg.beta1) * p.grad;
    v = (T(cfg.beta2) * v.array() + T(1 - cfg.beta2) * p.grad.array().square()).matrix();
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      const T mhat = m.data()[k] / T(bc1);
      const T vhat = v.data()[k] / T(bc2);
      p.value.data()[k] -= T(cfg.lr) * mhat / (std::sqrt(vhat) + T(cfg.eps));
    }
  }
}

// Mean over elements of squared difference.
template <typename T>
double l2_loss(const MatX<T>& pred, const MatX<T>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw PipelineError("l2_loss shape mismatch");
  if (pred.size() == 0) throw PipelineError("l2_loss on empty tensors");
  double acc = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double d = double(pred.data()[i]) - double(target.data()[i]);
    acc += d * d;
  }
  return acc / double(pred.size());
}

struct GradCheckReport {
  double max_rel_err = 0;
  std::size_t coords_checked = 0;
  std::string worst_tensor;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0, worst_numeric = 0;
};

// Compares analytic gradients against central differences. `loss_fn` must
// recompute the full loss from current parameter values; `grad_fn` must zero
// grads and repopulate them. Checks every coordinate when a tensor has at
// most `max_coords` entries, otherwise a seeded random subset.
template <typename T>
GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           const std::function<void()>& grad_fn, const ParamRefs<T>& params,
                           double h, std::size_t max_coords, uint64_t seed) {
  grad_fn();
  std::vector<MatX<T>> analytic;
  analytic.reserve(params.size());
  for (const auto* p : params) analytic.push_back(p->grad);

  GradCheckReport rep;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param<T>& p = *params[pi];
    std::vector<Eigen::Index> coords;
    const Eigen::Index n = p.value.size();
    if (std::size_t(n) <= max_coords) {
      coords.resize(std::size_t(n));
      for (Eigen::Index i = 0; i < n; ++i) coords[std::size_t(i)] = i;
    } else {
      Rng rng = Rng::fork(seed, fnv1a(p.name));
      coords.resize(max_coords);
      for (auto& c : coords) c = Eigen::Index(rng.uniform_index(uint64_t(n)));
    }
    for (Eigen::Index k : coords) {
      const T saved = p.value.data()[k];
      p.value.data()[k] = saved + T(h);
      const double lp = loss_fn();
      p.value.data()[k] = saved - T(h);
      const double lm = loss_fn();
      p.value.data()[k] = saved;
      const double numeric = (lp - lm) / (2 * h);
      const double exact = double(analytic[pi].data()[k]);
      // floored denominator: below the floor this is an absolute comparison,
      // which keeps near-zero gradient pairs from blowing up the ratio
      const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-3});
      const double rel = std::abs(numeric - exact) / denom;
      rep.coords_checked += 1;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_tensor = p.name;
        rep.worst_index = k;
        rep.worst_analytic = exact;
        rep.worst_numeric = numeric;
      }
    }
  }
  return rep;
}

// ---- ray-batch pipeline ----------------------------------------------------
// One differentiable path shared by the float trainer and the double-precision
// gradient checks: part batches -> field queries -> per-ray merge + composite
// -> reconstruction loss + deformation penalty.

template <typename T>
struct RayEntry {
  RaySamples<T> head_s, torso_s;
  std::array<T, 3> target{T(0), T(0), T(0)};
};

template <typename T>
struct BatchResult {
  double l2 = 0;       // mean squared error over rays x channels
  double penalty = 0;  // lambda * mean squared deformation offset
  double loss() const { return l2 + penalty; }
  MatX<T> pred;  // R x 3
  // per-ray gather caches reused by the backward pass
  std::vector<MergedSamples<T>> merged;
  std::vector<std::vector<T>> sig, col;
};

// `head`/`torso` row layout: ray r owns rows [r*nh, (r+1)*nh) and
// [r*nt, (r+1)*nt). rays.size() == number of rays in both batches.
template <typename T>
BatchResult<T> batch_forward(const FieldModel<T>& model, const PartBatch<T>& head,
                             const PartBatch<T>& torso, const std::vector<RayEntry<T>>& rays,
                             double deform_lambda, PartForward<T>& hfwd, PartForward<T>& tfwd,
                             bool with_trace) {
  model.forward_part(Part::kHead, head, hfwd, with_trace);
  model.forward_part(Part::kTorso, torso, tfwd, with_trace);
  const int R = int(rays.size());
  const int nh = R > 0 ? int(rays[0].head_s.t.size()) : 0;
  const int nt = R > 0 ? int(rays[0].torso_s.t.size()) : 0;
  BatchResult<T> res;
  res.pred.resize(R, 3);
  res.merged.reserve(std::size_t(R));
  res.sig.resize(std::size_t(R));
  res.col.resize(std::size_t(R));
  double se = 0;
  for (int r = 0; r < R; ++r) {
    res.merged.push_back(merge_samples(rays[std::size_t(r)].head_s, rays[std::size_t(r)].torso_s));
    const MergedSamples<T>& m = res.merged.back();
    const std::size_t n = m.samples.t.size();
    std::vector<T>& sig = res.sig[std::size_t(r)];
    std::vector<T>& col = res.col[std::size_t(r)];
    sig.assign(n, T(0));
    col.assign(n * 3, T(0));
    merged_gather(m, hfwd.sigma.data() + std::size_t(r) * std::size_t(nh),
                  hfwd.rgb.data() + std::size_t(r) * std::size_t(nh) * 3,
                  tfwd.sigma.data() + std::size_t(r) * std::size_t(nt),
                  tfwd.rgb.data() + std::size_t(r) * std::size_t(nt) * 3, sig.data(), col.data());
    const CompositeResult<T> cr = composite(m.samples, sig.data(), col.data());
    for (int c = 0; c < 3; ++c) {
      res.pred(r, c) = cr.rgb[std::size_t(c)];
      const double d = double(cr.rgb[std::size_t(c)]) - double(rays[std::size_t(r)].target[std::size_t(c)]);
      se += d * d;
    }
  }
  if (R > 0) res.l2 = se / double(R * 3);
  if (deform_lambda > 0 && tfwd.delta.size() > 0)
    res.penalty = deform_lambda * double(tfwd.delta.squaredNorm()) / double(tfwd.delta.size());
  return res;
}

// Accumulates parameter gradients of l2 + penalty. Caller zeroes grads.
template <typename T>
void batch_backward(FieldModel<T>& model, const std::vector<RayEntry<T>>& rays,
                    double deform_lambda, const BatchResult<T>& res, PartForward<T>& hfwd,
                    PartForward<T>& tfwd) {
  const int R = int(rays.size());
  if (R == 0) return;
  const int nh = int(rays[0].head_s.t.size());
  const int nt = int(rays[0].torso_s.t.size());
  MatX<T> d_hsig = MatX<T>::Zero(hfwd.sigma.rows(), 1);
  MatX<T> d_hrgb = MatX<T>::Zero(hfwd.rgb.rows(), 3);
  MatX<T> d_tsig = MatX<T>::Zero(tfwd.sigma.rows(), 1);
  MatX<T> d_trgb = MatX<T>::Zero(tfwd.rgb.rows(), 3);
  const double scale = 2.0 / double(R * 3);
  std::vector<T> d_sig, d_col;
  for (int r = 0; r < R; ++r) {
    const MergedSamples<T>& m = res.merged[std::size_t(r)];
    const std::size_t n = m.samples.t.size();
    std::array<T, 3> d_out;
    for (int c = 0; c < 3; ++c)
      d_out[std::size_t(c)] =
          T(scale * (double(res.pred(r, c)) - double(rays[std::size_t(r)].target[std::size_t(c)])));
    d_sig.assign(n, T(0));
    d_col.assign(n * 3, T(0));
    composite_backward(m.samples, res.sig[std::size_t(r)].data(), res.col[std::size_t(r)].data(),
                       d_out, d_sig.data(), d_col.data());
    merged_scatter(m, hfwd.sigma.data() + std::size_t(r) * std::size_t(nh),
                   hfwd.rgb.data() + std::size_t(r) * std::size_t(nh) * 3,
                   tfwd.sigma.data() + std::size_t(r) * std::size_t(nt),
                   tfwd.rgb.data() + std::size_t(r) * std::size_t(nt) * 3,
                   res.sig[std::size_t(r)].data(), res.col[std::size_t(r)].data(), d_sig.data(),
                   d_col.data(), d_hsig.data() + std::size_t(r) * std::size_t(nh),
                   d_hrgb.data() + std::size_t(r) * std::size_t(nh) * 3,
                   d_tsig.data() + std::size_t(r) * std::size_t(nt),
                   d_trgb.data() + std::size_t(r) * std::size_t(nt) * 3);
  }
  MatX<T> d_delta_extra;
  if (deform_lambda > 0 && tfwd.delta.size() > 0)
    d_delta_extra = T(2.0 * deform_lambda / double(tfwd.delta.size())) * tfwd.delta;
  model.backward_part(Part::kHead, d_hsig, d_hrgb, MatX<T>(), hfwd);
  model.backward_part(Part::kTorso, d_tsig, d_trgb, d_delta_extra, tfwd);
}

// ---- field trainer ----------------------------------------------------------

struct TrainConfig {
  int iterations = 2000;
  int ray_batch = 2048;
  uint64_t seed = 0;
  AdamConfig adam;  // lr 2e-4
  double deform_penalty = 1e-4;
  int samples_head = 64;
  int samples_torso = 32;
  bool jitter = true;
  int checkpoint_every = 0;  // extra checkpoints every N iterations when > 0
  int divergence_patience = 1000;
};

struct TrainRecord {
  int iteration = 0;
  double loss = 0;  // reconstruction MSE only
  double psnr = 0;
};

// Runs one seeded, resumable iteration at a time so callers can interleave
// their own stopping rules. Per-iteration randomness is derived from
// (seed, iteration), never from trainer state, so resume is bit-exact.
class FieldTrainer {
 public:
  FieldTrainer(FieldModel<float>& model, const ClipDataset& ds, const TrainConfig& cfg);

  TrainRecord step();
  int iteration() const { return iteration_; }
  void set_iteration(int it) { iteration_ = it; }
  AdamState<float>& adam() { return adam_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  FieldModel<float>& model_;
  const ClipDataset& ds_;
  TrainConfig cfg_;
  ParamRefs<float> params_;
  AdamState<float> adam_;
  int iteration_ = 0;
  double initial_loss_ = -1;
  int divergent_run_ = 0;
};

// Full training loop: loss CSV (header iteration,loss,psnr), periodic and
// final checkpoints (final one carries optimizer state for resume). Returns
// the per-iteration curve. Resume by passing the checkpoint's iteration and
// optimizer state; iteration randomness depends only on (seed, iteration),
// so a resumed run reproduces the uninterrupted one bit for bit.
std::vector<TrainRecord> train_field(FieldModel<float>& model, const ClipDataset& ds,
                                     const TrainConfig& cfg,
                                     const std::filesystem::path& out_checkpoint,
                                     const std::filesystem::path& loss_csv,
                                     int start_iteration = 0,
                                     AdamState<float>* initial_adam = nullptr);

}  // namespace dnerf
