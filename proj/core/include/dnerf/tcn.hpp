#pragma once

#include <string>
#include <vector>

#include "dnerf/nn.hpp"

namespace dnerf {

struct TcnConfig {
  int input_dim = 2;
  int output_dim = 6;
  int kernel = 3;
  int levels = 4;       // residual blocks; block i uses dilation base^i
  int channels = 32;
  int dilation_base = 2;
  Act act = Act::kRelu;

  // Frames of history that can influence one output step:
  // 1 + (k-1) * sum_i 2 * base^i.
  int receptive_field() const {
    int rf = 1;
    int d = 1;
    for (int i = 0; i < levels; ++i) {
      rf += (kernel - 1) * 2 * d;
      d *= dilation_base;
    }
    return rf;
  }
};

// Causal dilated 1-D convolution on rows = time steps. Output at time t sees
// inputs at t, t-d, ..., t-(k-1)d only; earlier-than-start taps read zeros.
// Implemented as im2col followed by a dense product.
template <typename T>
struct CausalConv {
  Param<T> W;  // out_ch x (in_ch * kernel), tap-major: [tap0 | tap1 | ...]
  Param<T> b;  // 1 x out_ch
  int in_ch = 0, out_ch = 0, kernel = 1, dilation = 1;

  void init(int in, int out, int k, int d, const std::string& name, uint64_t seed) {
    in_ch = in;
    out_ch = out;
    kernel = k;
    dilation = d;
    W.setup(name + ".weight", out, in * k);
    b.setup(name + ".bias", 1, out);
    const double bound = 1.0 / std::sqrt(double(in * k));
    Rng rw = init_rng(seed, W.name);
    fill_uniform(W.value, rw, -bound, bound);
    Rng rb = init_rng(seed, b.name);
    fill_uniform(b.value, rb, -bound, bound);
  }

  // Tap j (0-based) reads the input lagged by (kernel-1-j)*dilation, so the
  // last tap is the current frame.
  MatX<T> im2col(const MatX<T>& x) const {
    const Eigen::Index steps = x.rows();
    MatX<T> cols = MatX<T>::Zero(steps, Eigen::Index(in_ch) * kernel);
    for (int j = 0; j < kernel; ++j) {
      const Eigen::Index lag = Eigen::Index(kernel - 1 - j) * dilation;
      if (lag >= steps) continue;
      cols.block(lag, Eigen::Index(j) * in_ch, steps - lag, in_ch) =
          x.topRows(steps - lag);
    }
    return cols;
  }

  MatX<T> forward(const MatX<T>& x) const {
    if (x.cols() != in_ch)
      throw ValidationError(W.name, "input has " + std::to_string(x.cols()) +
                                        " channels, expected " + std::to_string(in_ch));
    MatX<T> y = im2col(x) * W.value.transpose();
    y.rowwise() += b.value.row(0);
    return y;
  }

  MatX<T> backward(const MatX<T>& x, const MatX<T>& dy) {
    const MatX<T> cols = im2col(x);
    W.grad.noalias() += dy.transpose() * cols;
    b.grad.row(0) += dy.colwise().sum();
    const MatX<T> dcols = dy * W.value;
    MatX<T> dx = MatX<T>::Zero(x.rows(), x.cols());
    const Eigen::Index steps = x.rows();
    for (int j = 0; j < kernel; ++j) {
      const Eigen::Index lag = Eigen::Index(kernel - 1 - j) * dilation;
      if (lag >= steps) continue;
      dx.topRows(steps - lag) += dcols.block(lag, Eigen::Index(j) * in_ch, steps - lag, in_ch);
    }
    return dx;
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

template <typename T>
struct TcnBlockTrace {
  MatX<T> x, pre1, post1, pre2, res, sum;
};

// Residual block: act(conv2(act(conv1(x))) + downsample(x)), downsample being
// a 1x1 projection when channel counts differ, identity otherwise.
template <typename T>
struct TcnBlock {
  CausalConv<T> conv1, conv2;
  Linear<T> down;
  bool has_down = false;
  Act act = Act::kRelu;

  void init(int in, int out, int kernel, int dilation, Act a, const std::string& name, uint64_t seed) {
    act = a;
    conv1.init(in, out, kernel, dilation, name + ".conv1", seed);
    conv2.init(out, out, kernel, dilation, name + ".conv2", seed);
    has_down = (in != out);
    if (has_down) down.init(in, out, name + ".down", seed);
  }

  MatX<T> forward(const MatX<T>& x, TcnBlockTrace<T>* tr) const {
    MatX<T> pre1 = conv1.forward(x);
    MatX<T> post1 = pre1;
    act_apply(act, post1);
    MatX<T> pre2 = conv2.forward(post1);
    MatX<T> res = has_down ? down.forward(x) : x;
    MatX<T> sum = pre2 + res;
    if (tr) {
      tr->x = x;
      tr->pre1 = std::move(pre1);
      tr->post1 = post1;
      tr->pre2 = std::move(pre2);
      tr->res = res;
      tr->sum = sum;
    }
    act_apply(act, sum);
    return sum;
  }

  MatX<T> backward(const MatX<T>& dout, const TcnBlockTrace<T>& tr) {
    MatX<T> dsum = dout;
    act_backward(act, tr.sum, dsum);
    MatX<T> dpost1 = conv2.backward(tr.post1, dsum);
    act_backward(act, tr.pre1, dpost1);
    MatX<T> dx = conv1.backward(tr.x, dpost1);
    if (has_down)
      dx += down.backward(tr.x, dsum);
    else
      dx += dsum;
    return dx;
  }

  void collect(ParamRefs<T>& out) {
    conv1.collect(out);
    conv2.collect(out);
    if (has_down) down.collect(out);
  }
};

template <typename T>
struct TcnTrace {
  std::vector<TcnBlockTrace<T>> blocks;
  MatX<T> backbone_out;
};

// Stack of residual blocks with exponentially growing dilation, then a
// per-step linear head. Input and output are (time steps) x (channels).
template <typename T>
struct Tcn {
  TcnConfig cfg;
  std::vector<TcnBlock<T>> blocks;
  Linear<T> head;

  void init(const TcnConfig& c, const std::string& name, uint64_t seed) {
    if (c.kernel < 2) throw ValidationError(name, "tcn kernel must be >= 2");
    if (c.levels < 1) throw ValidationError(name, "tcn needs at least one level");
    if (c.dilation_base < 1) throw ValidationError(name, "dilation base must be >= 1");
    cfg = c;
    blocks.resize(std::size_t(c.levels));
    int d = 1;
    for (int i = 0; i < c.levels; ++i) {
      const int in = (i == 0) ? c.input_dim : c.channels;
      blocks[std::size_t(i)].init(in, c.channels, c.kernel, d, c.act,
                                  name + ".block" + std::to_string(i), seed);
      d *= c.dilation_base;
    }
    head.init(c.channels, c.output_dim, name + ".head", seed);
  }

  MatX<T> forward(const MatX<T>& x, TcnTrace<T>* tr) const {
    if (tr) tr->blocks.assign(blocks.size(), {});
    MatX<T> h = x;
    for (std::size_t i = 0; i < blocks.size(); ++i)
      h = blocks[i].forward(h, tr ? &tr->blocks[i] : nullptr);
    if (tr) tr->backbone_out = h;
    return head.forward(h);
  }

  MatX<T> backward(const MatX<T>& dout, const TcnTrace<T>& tr) {
    MatX<T> d = head.backward(tr.backbone_out, dout);
    for (int i = int(blocks.size()) - 1; i >= 0; --i)
      d = blocks[std::size_t(i)].backward(d, tr.blocks[std::size_t(i)]);
    return d;
  }

  void collect(ParamRefs<T>& out) {
    for (auto& b : blocks) b.collect(out);
    head.collect(out);
  }
};

}  // namespace dnerf
