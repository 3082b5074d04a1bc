#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "dnerf/common.hpp"
#include "dnerf/tensor_blob.hpp"

namespace dnerf {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Named trainable tensor with an accumulated gradient of the same shape.
template <typename T>
struct Param {
  std::string name;
  MatX<T> value;
  MatX<T> grad;

  void setup(std::string n, Eigen::Index rows, Eigen::Index cols) {
    name = std::move(n);
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
  std::size_t count() const { return std::size_t(value.size()); }

  TensorBlob to_blob() const {
    TensorBlob b;
    b.dims = {uint32_t(value.rows()), uint32_t(value.cols())};
    b.data.resize(std::size_t(value.size()));
    for (Eigen::Index i = 0; i < value.rows(); ++i)
      for (Eigen::Index j = 0; j < value.cols(); ++j)
        b.data[std::size_t(i * value.cols() + j)] = float(value(i, j));
    return b;
  }
  void from_blob(const TensorBlob& b, const std::string& field) {
    if (b.dims.size() != 2 || Eigen::Index(b.dims[0]) != value.rows() ||
        Eigen::Index(b.dims[1]) != value.cols())
      throw ValidationError(field, "shape mismatch for tensor " + name);
    for (Eigen::Index i = 0; i < value.rows(); ++i)
      for (Eigen::Index j = 0; j < value.cols(); ++j)
        value(i, j) = T(b.data[std::size_t(i * value.cols() + j)]);
  }
};

template <typename T>
using ParamRefs = std::vector<Param<T>*>;

// Per-tensor init streams depend only on (seed, tensor name), so adding or
// reordering tensors never shifts another tensor's draw.
inline Rng init_rng(uint64_t seed, const std::string& name) {
  return Rng::fork(seed, fnv1a(name));
}

template <typename T>
void fill_uniform(MatX<T>& m, Rng& rng, double lo, double hi) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = T(rng.uniform(lo, hi));
}

template <typename T>
void fill_normal(MatX<T>& m, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = T(stddev * rng.normal());
}

enum class Act { kRelu, kTanh, kSoftplus, kIdentity };

inline Act act_from_string(const std::string& s, const std::string& field) {
  if (s == "relu") return Act::kRelu;
  if (s == "tanh") return Act::kTanh;
  if (s == "softplus") return Act::kSoftplus;
  if (s == "identity") return Act::kIdentity;
  throw ValidationError(field, "unknown activation: " + s);
}

inline const char* act_to_string(Act a) {
  switch (a) {
    case Act::kRelu: return "relu";
    case Act::kTanh: return "tanh";
    case Act::kSoftplus: return "softplus";
    case Act::kIdentity: return "identity";
  }
  return "relu";
}

template <typename T>
T softplus(T x) {
  if (x > T(20)) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
void act_apply(Act a, MatX<T>& m) {
  switch (a) {
    case Act::kRelu:
      m = m.cwiseMax(T(0));
      break;
    case Act::kTanh:
      // elementwise std::tanh, matching act_backward exactly (Eigen's packet
      // tanh is a different approximation)
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::tanh(m.data()[i]);
      break;
    case Act::kSoftplus:
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = softplus(m.data()[i]);
      break;
    case Act::kIdentity:
      break;
  }
}

// d(post)/d(pre) given the pre-activation, multiplied into d in place.
template <typename T>
void act_backward(Act a, const MatX<T>& pre, MatX<T>& d) {
  switch (a) {
    case Act::kRelu:
      for (Eigen::Index i = 0; i < d.size(); ++i)
        if (pre.data()[i] <= T(0)) d.data()[i] = T(0);
      break;
    case Act::kTanh:
      for (Eigen::Index i = 0; i < d.size(); ++i) {
        const T t = std::tanh(pre.data()[i]);
        d.data()[i] *= (T(1) - t * t);
      }
      break;
    case Act::kSoftplus:
      for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] *= sigmoid(pre.data()[i]);
      break;
    case Act::kIdentity:
      break;
  }
}

// Dense layer y = x W^T + b operating on row-batched inputs.
template <typename T>
struct Linear {
  Param<T> W;  // out x in
  Param<T> b;  // 1 x out

  void init(int in, int out, const std::string& name, uint64_t seed) {
    W.setup(name + ".weight", out, in);
    b.setup(name + ".bias", 1, out);
    const double bound = 1.0 / std::sqrt(double(in));
    Rng rw = init_rng(seed, W.name);
    fill_uniform(W.value, rw, -bound, bound);
    Rng rb = init_rng(seed, b.name);
    fill_uniform(b.value, rb, -bound, bound);
  }

  int in_dim() const { return int(W.value.cols()); }
  int out_dim() const { return int(W.value.rows()); }

  MatX<T> forward(const MatX<T>& x) const {
    if (x.cols() != W.value.cols())
      throw ValidationError(W.name, "input has " + std::to_string(x.cols()) +
                                        " features, expected " + std::to_string(W.value.cols()));
    MatX<T> y = x * W.value.transpose();
    y.rowwise() += b.value.row(0);
    return y;
  }

  // Accumulates dW, db; returns dx.
  MatX<T> backward(const MatX<T>& x, const MatX<T>& dy) {
    W.grad.noalias() += dy.transpose() * x;
    b.grad.row(0) += dy.colwise().sum();
    return dy * W.value;
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

template <typename T>
struct MlpTrace {
  std::vector<MatX<T>> inputs;  // input fed to each linear (after any concat)
  std::vector<MatX<T>> pre;     // pre-activation outputs
};

// Plain MLP: `depth` linear layers with `act` between them; act_last controls
// whether the final layer is also activated. With skip_layer in (0, depth),
// the original input is concatenated onto the hidden state entering that
// layer.
template <typename T>
struct Mlp {
  std::vector<Linear<T>> layers;
  Act act = Act::kRelu;
  int skip_layer = -1;
  int input_dim = 0;
  bool act_last = false;

  void init(int in, int width, int out, int depth, Act a, int skip, const std::string& name,
            uint64_t seed, bool activate_last = false) {
    if (depth < 1) throw ValidationError(name, "mlp depth must be >= 1");
    if (skip >= 0 && (skip == 0 || skip >= depth))
      throw ValidationError(name, "skip layer index out of range");
    act = a;
    skip_layer = skip;
    input_dim = in;
    act_last = activate_last;
    layers.resize(std::size_t(depth));
    for (int l = 0; l < depth; ++l) {
      int li = (l == 0) ? in : width;
      if (l == skip) li += in;
      const int lo = (l == depth - 1) ? out : width;
      layers[std::size_t(l)].init(li, lo, name + ".l" + std::to_string(l), seed);
    }
  }

  MatX<T> forward(const MatX<T>& x, MlpTrace<T>* trace) const {
    if (trace) {
      trace->inputs.assign(layers.size(), {});
      trace->pre.assign(layers.size(), {});
    }
    MatX<T> h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      MatX<T> in;
      if (int(l) == skip_layer) {
        in.resize(h.rows(), h.cols() + x.cols());
        in << h, x;
      } else {
        in = std::move(h);
      }
      MatX<T> pre = layers[l].forward(in);
      if (trace) {
        trace->inputs[l] = std::move(in);
        trace->pre[l] = pre;
      }
      if (l + 1 < layers.size() || act_last) act_apply(act, pre);
      h = std::move(pre);
    }
    return h;
  }

  // dout is the gradient at the MLP output; returns dx. Requires a trace.
  MatX<T> backward(const MatX<T>& dout, const MlpTrace<T>& trace) {
    MatX<T> d = dout;
    MatX<T> dx_skip;
    for (int l = int(layers.size()) - 1; l >= 0; --l) {
      if (l + 1 < int(layers.size()) || act_last)
        act_backward(act, trace.pre[std::size_t(l)], d);
      MatX<T> din = layers[std::size_t(l)].backward(trace.inputs[std::size_t(l)], d);
      if (l == skip_layer) {
        const Eigen::Index hid = din.cols() - input_dim;
        dx_skip = din.rightCols(input_dim);
        d = din.leftCols(hid);
      } else {
        d = std::move(din);
      }
    }
    if (dx_skip.size() > 0) d += dx_skip;
    return d;
  }

  void collect(ParamRefs<T>& out) {
    for (auto& l : layers) l.collect(out);
  }
};

template <typename T>
std::size_t param_count(const ParamRefs<T>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->count();
  return n;
}

template <typename T>
void zero_grads(const ParamRefs<T>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace dnerf
