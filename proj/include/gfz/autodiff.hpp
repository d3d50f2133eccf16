#pragma once

// Define-by-run reverse-mode differentiation over dense tensors.
//
// A Tape records every primitive applied during one forward pass. Leaves are
// either constants or parameters bound to caller-owned tensors; backward()
// walks the tape in reverse and accumulates into the bound parameters' grad
// buffers. Ops whose inputs need no gradient record no backward closure, so
// frozen prefixes of a network cost nothing on the way back.

#include <cmath>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gfz/tensor.hpp"

namespace gfz {

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const Tensor<Scalar>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
};

template <typename Scalar>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  struct Node {
    std::string op;
    Tensor<Scalar> value;
    Tensor<Scalar>* param = nullptr;
    std::vector<int> inputs;
    bool requires_grad = false;
    BackwardFn backward;
    std::vector<Scalar> grad;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Tensor<Scalar> t) {
    Node n;
    n.op = "constant";
    n.value = std::move(t);
    return push(std::move(n));
  }

  /// Binds `t` as a leaf. With requires_grad the tensor's grad buffer receives
  /// d(output)/d(t) on backward(); otherwise it is never touched.
  Var<Scalar> parameter(Tensor<Scalar>& t, bool requires_grad = true) {
    Node n;
    n.op = "parameter";
    n.param = &t;
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  /// Appends an op output. The node requires grad iff any input does; the
  /// closure is dropped otherwise.
  Var<Scalar> record(std::string_view op, Tensor<Scalar> value, std::vector<int> inputs,
                     BackwardFn backward) {
    Node n;
    n.op = std::string(op);
    n.value = std::move(value);
    for (int i : inputs) n.requires_grad = n.requires_grad || nodes_.at(i).requires_grad;
    n.inputs = std::move(inputs);
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
  }

  const Tensor<Scalar>& value(int id) const {
    const Node& n = nodes_.at(id);
    return n.param ? *n.param : n.value;
  }
  bool requires_grad(int id) const { return nodes_.at(id).requires_grad; }
  const Node& node(int id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of node `id`, allocated as zeros on first use.
  std::span<Scalar> grad(int id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad.assign(value(id).size(), Scalar(0));
    return n.grad;
  }

  /// Fills grad buffers of every bound parameter reachable from `output`.
  /// Repeated calls accumulate into the parameter buffers.
  void backward(Var<Scalar> output) {
    if (output.tape != this) throw ConfigError("backward: output belongs to another tape");
    if (value(output.id).size() != 1) {
      throw ShapeError("backward: output must be scalar, got shape " +
                       shape_string(value(output.id).shape()));
    }
    for (Node& n : nodes_) n.grad.clear();
    if (!nodes_[output.id].requires_grad) return;
    grad(output.id)[0] = Scalar(1);
    for (int id = output.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.param) {
        auto dst = n.param->ensure_grad();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
      } else if (n.backward) {
        n.backward(*this, id);
      }
    }
  }

 private:
  Var<Scalar> push(Node n) {
    nodes_.push_back(std::move(n));
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
};

/// Runs `program(tape, inputs)` with each input bound as a constant leaf.
template <typename Scalar, typename Program>
Var<Scalar> forward_eval(Tape<Scalar>& tape, const std::vector<Tensor<Scalar>>& inputs,
                         Program&& program) {
  std::vector<Var<Scalar>> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return std::forward<Program>(program)(tape, vars);
}

template <typename Scalar>
void backpropagate(Tape<Scalar>& tape, Var<Scalar> output) {
  tape.backward(output);
}

namespace detail {

inline void require(bool ok, std::string_view op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

template <typename Scalar>
Tape<Scalar>& same_tape(Var<Scalar> a, Var<Scalar> b, std::string_view op) {
  if (a.tape != b.tape) throw ConfigError(std::string(op) + ": operands on different tapes");
  return *a.tape;
}

template <typename Scalar>
void im2col(const Scalar* x, int channels, int height, int width, int kh, int kw, int stride,
            int pad, int out_h, int out_w, Scalar* col) {
  const int patch = out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        Scalar* row = col + ((c * kh + ky) * kw + kx) * patch;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            row[oy * out_w + ox] = (iy >= 0 && iy < height && ix >= 0 && ix < width)
                                       ? x[(c * height + iy) * width + ix]
                                       : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const Scalar* col, int channels, int height, int width, int kh, int kw,
                int stride, int pad, int out_h, int out_w, Scalar* dx) {
  const int patch = out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const Scalar* row = col + ((c * kh + ky) * kw + kx) * patch;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= width) continue;
            dx[(c * height + iy) * width + ix] += row[oy * out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  auto& tape = detail::same_tape(a, b, "add");
  detail::require(a.shape() == b.shape(), "add",
                  "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor<Scalar> out(a.shape());
  out.vec() = a.value().vec() + b.value().vec();
  return tape.record("add", std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape<Scalar>& t, int self) {
    const auto& g = t.node(self).grad;
    for (int in : {a, b}) {
      if (!t.requires_grad(in)) continue;
      auto d = t.grad(in);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  auto& tape = detail::same_tape(a, b, "mul");
  detail::require(a.shape() == b.shape(), "mul",
                  "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor<Scalar> out(a.shape());
  out.vec() = a.value().vec().cwiseProduct(b.value().vec());
  return tape.record("mul", std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape<Scalar>& t, int self) {
    const auto& g = t.node(self).grad;
    if (t.requires_grad(a)) {
      auto d = t.grad(a);
      const auto& other = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * other[i];
    }
    if (t.requires_grad(b)) {
      auto d = t.grad(b);
      const auto& other = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * other[i];
    }
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar factor) {
  Tensor<Scalar> out(a.shape());
  out.vec() = a.value().vec() * factor;
  return a.tape->record("scale", std::move(out), {a.id}, [a = a.id, factor](Tape<Scalar>& t, int self) {
    const auto& g = t.node(self).grad;
    auto d = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
  });
}

/// x [N,C] or [N,C,H,W] plus per-channel bias [C].
template <typename Scalar>
Var<Scalar> add_bias(Var<Scalar> x, Var<Scalar> bias) {
  auto& tape = detail::same_tape(x, bias, "add_bias");
  const Shape& xs = x.shape();
  detail::require((xs.size() == 2 || xs.size() == 4) && bias.shape().size() == 1 &&
                      bias.shape()[0] == xs[1],
                  "add_bias", "cannot add bias " + shape_string(bias.shape()) + " to " +
                                  shape_string(xs));
  const int n = xs[0], c = xs[1];
  const int inner = xs.size() == 4 ? xs[2] * xs[3] : 1;
  Tensor<Scalar> out = x.value();
  const auto& b = bias.value();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      Scalar* p = out.data().data() + (static_cast<std::size_t>(i) * c + j) * inner;
      for (int k = 0; k < inner; ++k) p[k] += b[j];
    }
  return tape.record("add_bias", std::move(out), {x.id, bias.id},
                     [x = x.id, bid = bias.id, n, c, inner](Tape<Scalar>& t, int self) {
                       const auto& g = t.node(self).grad;
                       if (t.requires_grad(x)) {
                         auto d = t.grad(x);
                         for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                       }
                       if (t.requires_grad(bid)) {
                         auto d = t.grad(bid);
                         for (int i = 0; i < n; ++i)
                           for (int j = 0; j < c; ++j) {
                             const Scalar* p = g.data() + (static_cast<std::size_t>(i) * c + j) * inner;
                             double acc = 0.0;
                             for (int k = 0; k < inner; ++k) acc += p[k];
                             d[j] += static_cast<Scalar>(acc);
                           }
                       }
                     });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> x) {
  Tensor<Scalar> out(x.shape());
  out.vec() = x.value().vec().cwiseMax(Scalar(0));
  return x.tape->record("relu", std::move(out), {x.id}, [x = x.id](Tape<Scalar>& t, int self) {
    const auto& g = t.node(self).grad;
    const auto& in = t.value(x);
    auto d = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in[i] > Scalar(0)) d[i] += g[i];
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> x) {
  Tensor<Scalar> out(x.shape());
  const auto& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const Scalar v = in[i];
    out[i] = v >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-v)) : std::exp(v) / (Scalar(1) + std::exp(v));
  }
  return x.tape->record("sigmoid", std::move(out), {x.id}, [x = x.id](Tape<Scalar>& t, int self) {
    const auto& node = t.node(self);
    auto d = t.grad(x);
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      const Scalar s = node.value[i];
      d[i] += node.grad[i] * s * (Scalar(1) - s);
    }
  });
}

template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> x, Shape shape) {
  detail::require(shape_size(shape) == x.value().size(), "reshape",
                  "cannot reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  const auto& src = x.value().data();
  Tensor<Scalar> out(std::move(shape), std::vector<Scalar>(src.begin(), src.end()));
  return x.tape->record("reshape", std::move(out), {x.id}, [x = x.id](Tape<Scalar>& t, int self) {
    const auto& g = t.node(self).grad;
    auto d = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

/// [M,K] x [K,N] -> [M,N].
template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  auto& tape = detail::same_tape(a, b, "matmul");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  detail::require(as.size() == 2 && bs.size() == 2 && as[1] == bs[0], "matmul",
                  "incompatible shapes " + shape_string(as) + " x " + shape_string(bs));
  const int m = as[0], k = as[1], n = bs[1];
  using Mat = RowMatrixX<Scalar>;
  Tensor<Scalar> out(Shape{m, n});
  Eigen::Map<Mat>(out.data().data(), m, n).noalias() =
      Eigen::Map<const Mat>(a.value().data().data(), m, k) *
      Eigen::Map<const Mat>(b.value().data().data(), k, n);
  return tape.record("matmul", std::move(out), {a.id, b.id},
                     [a = a.id, b = b.id, m, k, n](Tape<Scalar>& t, int self) {
                       Eigen::Map<const Mat> g(t.node(self).grad.data(), m, n);
                       if (t.requires_grad(a)) {
                         Eigen::Map<Mat> da(t.grad(a).data(), m, k);
                         da.noalias() += g * Eigen::Map<const Mat>(t.value(b).data().data(), k, n).transpose();
                       }
                       if (t.requires_grad(b)) {
                         Eigen::Map<Mat> db(t.grad(b).data(), k, n);
                         db.noalias() += Eigen::Map<const Mat>(t.value(a).data().data(), m, k).transpose() * g;
                       }
                     });
}

/// Cross-correlation of x [N,Cin,H,W] with kernel [Cout,Cin,Kh,Kw], zero padding.
template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> kernel, int stride = 1, int pad = 0) {
  auto& tape = detail::same_tape(x, kernel, "conv2d");
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  detail::require(xs.size() == 4 && ks.size() == 4, "conv2d",
                  "expected rank-4 input and kernel, got " + shape_string(xs) + " and " +
                      shape_string(ks));
  detail::require(xs[1] == ks[1], "conv2d",
                  "input " + shape_string(xs) + " has " + std::to_string(xs[1]) +
                      " channels but kernel " + shape_string(ks) + " expects " +
                      std::to_string(ks[1]));
  detail::require(stride >= 1 && pad >= 0, "conv2d", "stride must be >= 1 and pad >= 0");
  const int n = xs[0], cin = xs[1], h = xs[2], w = xs[3];
  const int cout = ks[0], kh = ks[2], kw = ks[3];
  detail::require(h + 2 * pad >= kh && w + 2 * pad >= kw, "conv2d",
                  "kernel " + shape_string(ks) + " larger than padded input " + shape_string(xs));
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;
  const int kdim = cin * kh * kw, patch = oh * ow;

  using Mat = RowMatrixX<Scalar>;
  Tensor<Scalar> out(Shape{n, cout, oh, ow});
  std::vector<Scalar> col(static_cast<std::size_t>(kdim) * patch);
  Eigen::Map<const Mat> wm(kernel.value().data().data(), cout, kdim);
  for (int s = 0; s < n; ++s) {
    detail::im2col(x.value().data().data() + static_cast<std::size_t>(s) * cin * h * w, cin, h, w,
                   kh, kw, stride, pad, oh, ow, col.data());
    Eigen::Map<Mat>(out.data().data() + static_cast<std::size_t>(s) * cout * patch, cout, patch)
        .noalias() = wm * Eigen::Map<const Mat>(col.data(), kdim, patch);
  }
  return tape.record(
      "conv2d", std::move(out), {x.id, kernel.id},
      [=, x = x.id, kid = kernel.id](Tape<Scalar>& t, int self) {
        const auto& g = t.node(self).grad;
        const auto& xv = t.value(x);
        Eigen::Map<const Mat> wmat(t.value(kid).data().data(), cout, kdim);
        const bool need_x = t.requires_grad(x), need_w = t.requires_grad(kid);
        std::vector<Scalar> colbuf(static_cast<std::size_t>(kdim) * patch);
        std::vector<Scalar> dcol(need_x ? colbuf.size() : 0);
        for (int s = 0; s < n; ++s) {
          Eigen::Map<const Mat> gs(g.data() + static_cast<std::size_t>(s) * cout * patch, cout, patch);
          if (need_w) {
            detail::im2col(xv.data().data() + static_cast<std::size_t>(s) * cin * h * w, cin, h, w, kh,
                           kw, stride, pad, oh, ow, colbuf.data());
            Eigen::Map<Mat> dw(t.grad(kid).data(), cout, kdim);
            dw.noalias() += gs * Eigen::Map<const Mat>(colbuf.data(), kdim, patch).transpose();
          }
          if (need_x) {
            Eigen::Map<Mat>(dcol.data(), kdim, patch).noalias() = wmat.transpose() * gs;
            detail::col2im_add(dcol.data(), cin, h, w, kh, kw, stride, pad, oh, ow,
                               t.grad(x).data() + static_cast<std::size_t>(s) * cin * h * w);
          }
        }
      });
}

/// Max over non-overlapping-or-strided windows of x [N,C,H,W]; first maximum wins ties.
template <typename Scalar>
Var<Scalar> max_pool2d(Var<Scalar> x, int window = 2, int stride = 2) {
  const Shape& xs = x.shape();
  detail::require(xs.size() == 4, "max_pool2d", "expected rank-4 input, got " + shape_string(xs));
  detail::require(window >= 1 && stride >= 1 && xs[2] >= window && xs[3] >= window, "max_pool2d",
                  "window " + std::to_string(window) + " does not fit input " + shape_string(xs));
  const int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const int oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  Tensor<Scalar> out(Shape{n, c, oh, ow});
  std::vector<int> argmax(out.size());
  const auto& in = x.value();
  std::size_t o = 0;
  for (int p = 0; p < n * c; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * h * w;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox, ++o) {
        int best = static_cast<int>(base) + (oy * stride) * w + ox * stride;
        for (int ky = 0; ky < window; ++ky)
          for (int kx = 0; kx < window; ++kx) {
            const int idx = static_cast<int>(base) + (oy * stride + ky) * w + ox * stride + kx;
            if (in[idx] > in[best]) best = idx;
          }
        argmax[o] = best;
        out[o] = in[best];
      }
  }
  return x.tape->record("max_pool2d", std::move(out), {x.id},
                        [x = x.id, argmax = std::move(argmax)](Tape<Scalar>& t, int self) {
                          const auto& g = t.node(self).grad;
                          auto d = t.grad(x);
                          for (std::size_t i = 0; i < g.size(); ++i) d[argmax[i]] += g[i];
                        });
}

/// [N,C,H,W] -> [N,C] mean over spatial positions.
template <typename Scalar>
Var<Scalar> global_avg_pool(Var<Scalar> x) {
  const Shape& xs = x.shape();
  detail::require(xs.size() == 4, "global_avg_pool", "expected rank-4 input, got " + shape_string(xs));
  const int n = xs[0], c = xs[1], inner = xs[2] * xs[3];
  Tensor<Scalar> out(Shape{n, c});
  const auto& in = x.value();
  for (int p = 0; p < n * c; ++p) {
    double acc = 0.0;
    for (int k = 0; k < inner; ++k) acc += in[static_cast<std::size_t>(p) * inner + k];
    out[p] = static_cast<Scalar>(acc / inner);
  }
  return x.tape->record("global_avg_pool", std::move(out), {x.id},
                        [x = x.id, inner](Tape<Scalar>& t, int self) {
                          const auto& g = t.node(self).grad;
                          auto d = t.grad(x);
                          const Scalar s = Scalar(1) / static_cast<Scalar>(inner);
                          for (std::size_t p = 0; p < g.size(); ++p)
                            for (int k = 0; k < inner; ++k) d[p * inner + k] += g[p] * s;
                        });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x) {
  double acc = 0.0;
  for (Scalar v : x.value().data()) acc += v;
  return x.tape->record("sum", Tensor<Scalar>::scalar(static_cast<Scalar>(acc)), {x.id},
                        [x = x.id](Tape<Scalar>& t, int self) {
                          const Scalar g = t.node(self).grad[0];
                          for (Scalar& d : t.grad(x)) d += g;
                        });
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> x) {
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.value().size()));
}

/// Mean over batch and classes of -y log s(x) - (1-y) log(1-s(x)), evaluated as
/// softplus(x) - y x. `targets` must be 0/1 with the logits' shape.
template <typename Scalar>
Var<Scalar> multilabel_bce(Var<Scalar> logits, const Tensor<Scalar>& targets) {
  detail::require(logits.shape() == targets.shape(), "multilabel_bce",
                  "logits " + shape_string(logits.shape()) + " vs targets " +
                      shape_string(targets.shape()));
  for (Scalar y : targets.data()) {
    detail::require(y == Scalar(0) || y == Scalar(1), "multilabel_bce", "targets must be 0 or 1");
  }
  const auto& x = logits.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    acc += std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))) - targets[i] * v;
  }
  const double count = static_cast<double>(x.size());
  return logits.tape->record(
      "multilabel_bce", Tensor<Scalar>::scalar(static_cast<Scalar>(acc / count)), {logits.id},
      [id = logits.id, targets, count](Tape<Scalar>& t, int self) {
        const double g = t.node(self).grad[0];
        const auto& xv = t.value(id);
        auto d = t.grad(id);
        for (std::size_t i = 0; i < d.size(); ++i) {
          const double v = xv[i];
          const double s = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
          d[i] += static_cast<Scalar>(g * (s - targets[i]) / count);
        }
      });
}

/// sum |x - ref|; the subgradient at zero is 0.
template <typename Scalar>
Var<Scalar> l1_distance(Var<Scalar> x, const Tensor<Scalar>& ref) {
  detail::require(x.shape() == ref.shape(), "l1_distance",
                  shape_string(x.shape()) + " vs reference " + shape_string(ref.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) acc += std::abs(double(x.value()[i]) - ref[i]);
  return x.tape->record("l1_distance", Tensor<Scalar>::scalar(static_cast<Scalar>(acc)), {x.id},
                        [id = x.id, ref](Tape<Scalar>& t, int self) {
                          const Scalar g = t.node(self).grad[0];
                          const auto& xv = t.value(id);
                          auto d = t.grad(id);
                          for (std::size_t i = 0; i < d.size(); ++i) {
                            const Scalar diff = xv[i] - ref[i];
                            if (diff > 0) d[i] += g;
                            else if (diff < 0) d[i] -= g;
                          }
                        });
}

/// sum (x - ref)^2.
template <typename Scalar>
Var<Scalar> sq_distance(Var<Scalar> x, const Tensor<Scalar>& ref) {
  detail::require(x.shape() == ref.shape(), "sq_distance",
                  shape_string(x.shape()) + " vs reference " + shape_string(ref.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double diff = double(x.value()[i]) - ref[i];
    acc += diff * diff;
  }
  return x.tape->record("sq_distance", Tensor<Scalar>::scalar(static_cast<Scalar>(acc)), {x.id},
                        [id = x.id, ref](Tape<Scalar>& t, int self) {
                          const Scalar g = t.node(self).grad[0];
                          const auto& xv = t.value(id);
                          auto d = t.grad(id);
                          for (std::size_t i = 0; i < d.size(); ++i) d[i] += Scalar(2) * g * (xv[i] - ref[i]);
                        });
}

}  // namespace gfz
