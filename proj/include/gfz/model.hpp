#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gfz/autodiff.hpp"
#include "gfz/rng.hpp"

namespace gfz {

enum class LayerKind { Conv, Dense };
enum class Architecture { MiniResNet, Mlp };

std::string architecture_tag(Architecture arch);
Architecture parse_architecture(const std::string& tag);

/// One parameter-bearing module: a 3x3 convolution or a dense map, bias included.
/// Activations and pooling carry no layer.
template <typename Scalar>
struct Layer {
  std::string name;
  LayerKind kind = LayerKind::Dense;
  Tensor<Scalar> weight;  // conv: [out, in, 3, 3]; dense: [in, out]
  Tensor<Scalar> bias;    // [out]
  bool frozen = false;
  double base_lr = 1e-4;
  double effective_lr = 1e-4;

  std::array<Tensor<Scalar>*, 2> params() { return {&weight, &bias}; }
  std::array<const Tensor<Scalar>*, 2> params() const { return {&weight, &bias}; }
  std::size_t param_count() const { return weight.size() + bias.size(); }
};

/// Ordered, disjoint groups of layer indices covering every layer.
struct BlockPartition {
  std::vector<std::vector<int>> blocks;

  std::size_t block_count() const { return blocks.size(); }
  int block_of(int layer) const;
  /// Throws ConfigError unless the blocks cover 0..layer_count-1 exactly once, in order.
  void validate(int layer_count) const;
};

template <typename Scalar>
struct BasicModel {
  Architecture architecture = Architecture::MiniResNet;
  std::vector<Layer<Scalar>> layers;
  BlockPartition partition;
  int input_channels = 3;

  int layer_count() const { return static_cast<int>(layers.size()); }
  int classifier_index() const { return layer_count() - 1; }
  int class_count() const { return layers.back().weight.dim(1); }

  std::vector<bool> trainable_mask() const {
    std::vector<bool> mask;
    for (const auto& l : layers) mask.push_back(!l.frozen);
    return mask;
  }
  int trainable_count() const {
    int n = 0;
    for (const auto& l : layers) n += l.frozen ? 0 : 1;
    return n;
  }
  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
  }
  /// Weight and bias of each layer, in layer order.
  std::vector<Tensor<Scalar>*> parameters() {
    std::vector<Tensor<Scalar>*> out;
    for (auto& l : layers)
      for (auto* p : l.params()) out.push_back(p);
    return out;
  }
  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }
  void drop_grads() {
    for (auto* p : parameters()) p->drop_grad();
  }
};

using Model = BasicModel<float>;

namespace detail {

template <typename Scalar>
Tensor<Scalar> he_uniform(Shape shape, int fan_in, Rng& rng) {
  Tensor<Scalar> t(std::move(shape));
  const double bound = std::sqrt(6.0 / fan_in);
  for (auto& v : t.data()) v = static_cast<Scalar>(rng.uniform(-bound, bound));
  return t;
}

template <typename Scalar>
Layer<Scalar> conv_layer(std::string name, int in, int out, Rng& rng) {
  Layer<Scalar> l;
  l.name = std::move(name);
  l.kind = LayerKind::Conv;
  l.weight = he_uniform<Scalar>(Shape{out, in, 3, 3}, in * 9, rng);
  l.bias = Tensor<Scalar>(Shape{out});
  return l;
}

template <typename Scalar>
Layer<Scalar> dense_layer(std::string name, int in, int out, Rng& rng) {
  Layer<Scalar> l;
  l.name = std::move(name);
  l.kind = LayerKind::Dense;
  l.weight = he_uniform<Scalar>(Shape{in, out}, in, rng);
  l.bias = Tensor<Scalar>(Shape{out});
  return l;
}

}  // namespace detail

/// Stem conv, three residual blocks of two 3x3 convs, global average pool and a
/// dense classifier. Within a block the second conv is wrapped by an identity
/// shortcut: y = relu(conv1(x)); out = relu(conv2(y) + y). A 2x2 max pool
/// follows the stem and precedes blocks 2 and 3, so inputs must be at least 8x8.
/// Functional blocks: {stem}, {block1}, {block2}, {block3}, {classifier}.
template <typename Scalar = float>
BasicModel<Scalar> build_mini_resnet(int class_count, const std::vector<int>& channel_widths,
                                     std::uint64_t seed, int input_channels = 3) {
  if (class_count < 1) throw ConfigError("build_mini_resnet: class_count must be >= 1");
  if (channel_widths.empty()) throw ConfigError("build_mini_resnet: channel_widths must be nonempty");
  for (int w : channel_widths)
    if (w < 1) throw ConfigError("build_mini_resnet: channel widths must be positive");
  if (input_channels < 1) throw ConfigError("build_mini_resnet: input_channels must be >= 1");

  auto width = [&](std::size_t b) { return channel_widths[std::min(b, channel_widths.size() - 1)]; };
  BasicModel<Scalar> m;
  m.architecture = Architecture::MiniResNet;
  m.input_channels = input_channels;
  Rng rng(seed, "init");
  m.layers.push_back(detail::conv_layer<Scalar>("stem", input_channels, width(0), rng));
  int prev = width(0);
  for (std::size_t b = 0; b < 3; ++b) {
    const std::string prefix = "block" + std::to_string(b + 1);
    m.layers.push_back(detail::conv_layer<Scalar>(prefix + ".conv1", prev, width(b), rng));
    m.layers.push_back(detail::conv_layer<Scalar>(prefix + ".conv2", width(b), width(b), rng));
    prev = width(b);
  }
  m.layers.push_back(detail::dense_layer<Scalar>("classifier", prev, class_count, rng));
  m.partition.blocks = {{0}, {1, 2}, {3, 4}, {5, 6}, {7}};
  m.partition.validate(m.layer_count());
  return m;
}

/// Fully connected relu network over flattened inputs; every layer is its own block.
template <typename Scalar = float>
BasicModel<Scalar> build_mlp(int input_dim, const std::vector<int>& hidden, int class_count,
                             std::uint64_t seed) {
  if (input_dim < 1 || class_count < 1) throw ConfigError("build_mlp: dimensions must be >= 1");
  BasicModel<Scalar> m;
  m.architecture = Architecture::Mlp;
  m.input_channels = input_dim;
  Rng rng(seed, "init");
  int prev = input_dim;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (hidden[i] < 1) throw ConfigError("build_mlp: hidden widths must be positive");
    m.layers.push_back(detail::dense_layer<Scalar>("dense" + std::to_string(i + 1), prev, hidden[i], rng));
    prev = hidden[i];
  }
  m.layers.push_back(detail::dense_layer<Scalar>("classifier", prev, class_count, rng));
  for (int i = 0; i < m.layer_count(); ++i) m.partition.blocks.push_back({i});
  return m;
}

/// Copy of `model` with a fresh n_out-way classifier (seeded He-uniform weights,
/// zero bias). The new classifier is trainable, every other layer frozen.
template <typename Scalar>
BasicModel<Scalar> replace_classifier(const BasicModel<Scalar>& model, int n_out, std::uint64_t seed) {
  if (n_out < 1) throw ConfigError("replace_classifier: n_out must be >= 1");
  if (model.layers.empty() || model.layers.back().kind != LayerKind::Dense)
    throw ConfigError("replace_classifier: model has no dense classifier");
  BasicModel<Scalar> out = model;
  auto& head = out.layers.back();
  Rng rng(seed, "classifier");
  const int in = head.weight.dim(0);
  Layer<Scalar> fresh = detail::dense_layer<Scalar>(head.name, in, n_out, rng);
  fresh.base_lr = head.base_lr;
  fresh.effective_lr = head.base_lr;
  head = std::move(fresh);
  for (auto& l : out.layers) l.frozen = true;
  head.frozen = false;
  return out;
}

template <typename Scalar>
void set_frozen(BasicModel<Scalar>& model, const std::vector<int>& layer_indices, bool frozen) {
  for (int i : layer_indices)
    if (i < 0 || i >= model.layer_count())
      throw ConfigError("set_frozen: unknown layer index " + std::to_string(i));
  for (int i : layer_indices) model.layers[i].frozen = frozen;
}

template <typename Scalar>
void set_all_frozen(BasicModel<Scalar>& model, bool frozen) {
  for (auto& l : model.layers) l.frozen = frozen;
}

template <typename Scalar>
void set_base_lr(BasicModel<Scalar>& model, double lr) {
  if (!(lr > 0.0)) throw ConfigError("set_base_lr: base learning rate must be > 0");
  for (auto& l : model.layers) {
    l.base_lr = lr;
    l.effective_lr = lr;
  }
}

/// Logits [N, class_count]. `input` is [N, C, H, W] for MiniResNet, [N, D] (or any
/// shape with N leading) for MLP. Frozen layers, and every layer when
/// `with_grad` is false, enter the tape without gradients.
template <typename Scalar>
Var<Scalar> forward(BasicModel<Scalar>& model, Tape<Scalar>& tape, Var<Scalar> input, bool with_grad = true) {
  auto bind = [&](Layer<Scalar>& l) {
    const bool g = with_grad && !l.frozen;
    return std::pair{tape.parameter(l.weight, g), tape.parameter(l.bias, g)};
  };
  auto conv = [&](Layer<Scalar>& l, Var<Scalar> x) {
    auto [w, b] = bind(l);
    return add_bias(conv2d(x, w, 1, 1), b);
  };
  auto dense = [&](Layer<Scalar>& l, Var<Scalar> x) {
    auto [w, b] = bind(l);
    return add_bias(matmul(x, w), b);
  };

  if (model.architecture == Architecture::Mlp) {
    const int n = input.shape()[0];
    Var<Scalar> h = reshape(input, Shape{n, static_cast<int>(input.value().size()) / n});
    for (int i = 0; i + 1 < model.layer_count(); ++i) h = relu(dense(model.layers[i], h));
    return dense(model.layers.back(), h);
  }

  if (input.shape().size() != 4 || input.shape()[1] != model.input_channels)
    throw ShapeError("forward: expected input [N," + std::to_string(model.input_channels) +
                     ",H,W], got " + shape_string(input.shape()));
  Var<Scalar> h = max_pool2d(relu(conv(model.layers[0], input)));
  for (int b = 0; b < 3; ++b) {
    if (b > 0) h = max_pool2d(h);
    Var<Scalar> y = relu(conv(model.layers[1 + 2 * b], h));
    h = relu(add(conv(model.layers[2 + 2 * b], y), y));
  }
  return dense(model.layers.back(), global_avg_pool(h));
}

template <typename To, typename From>
BasicModel<To> cast_model(const BasicModel<From>& src) {
  BasicModel<To> out;
  out.architecture = src.architecture;
  out.partition = src.partition;
  out.input_channels = src.input_channels;
  for (const auto& l : src.layers) {
    Layer<To> c;
    c.name = l.name;
    c.kind = l.kind;
    c.weight = l.weight.template cast<To>();
    c.bias = l.bias.template cast<To>();
    c.frozen = l.frozen;
    c.base_lr = l.base_lr;
    c.effective_lr = l.effective_lr;
    out.layers.push_back(std::move(c));
  }
  return out;
}

}  // namespace gfz
