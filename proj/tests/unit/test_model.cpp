#include <doctest.h>

#include <cmath>

#include "gfz/gradcheck.hpp"
#include "gfz/model.hpp"
#include "gfz/optimizer.hpp"

using namespace gfz;

namespace {

TensorF random_images(int n, int c, int size, std::uint64_t seed) {
  TensorF x({n, c, size, size});
  Rng rng(seed);
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return x;
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

TEST_CASE("MiniResNet layout") {
  const auto m = build_mini_resnet(7, {8, 16, 32}, 1);
  // stem + 3 blocks x 2 convs + classifier
  CHECK(m.layer_count() == 1 + 3 * 2 + 1);
  CHECK(m.partition.block_count() == 5);
  CHECK(m.classifier_index() == 7);
  CHECK(m.partition.block_of(7) == 4);
  CHECK(m.partition.blocks[1] == std::vector<int>{1, 2});
  CHECK(m.layers[0].weight.shape() == Shape{8, 3, 3, 3});
  CHECK(m.layers[3].weight.shape() == Shape{16, 8, 3, 3});
  CHECK(m.layers[7].weight.shape() == Shape{32, 7});
  for (const auto& l : m.layers)
    for (float b : l.bias.data()) CHECK(b == 0.0f);

  const auto one = build_mini_resnet(1, {8, 16, 32}, 1);
  CHECK(one.layers.back().weight.shape() == Shape{32, 1});
  CHECK(one.class_count() == 1);
}

TEST_CASE("initialisation is seeded and bounded") {
  const auto a = build_mini_resnet(7, {8, 16, 32}, 5);
  const auto b = build_mini_resnet(7, {8, 16, 32}, 5);
  const auto c = build_mini_resnet(7, {8, 16, 32}, 6);
  bool differs = false;
  for (int i = 0; i < a.layer_count(); ++i) {
    CHECK(a.layers[i].weight.same_values(b.layers[i].weight));
    differs = differs || !a.layers[i].weight.same_values(c.layers[i].weight);
    const double bound = std::sqrt(6.0 / (a.layers[i].weight.size() / a.layers[i].bias.size()));
    for (float w : a.layers[i].weight.data()) CHECK(std::abs(w) <= bound);
  }
  CHECK(differs);
}

TEST_CASE("model construction errors") {
  CHECK_THROWS_AS(build_mini_resnet(0, {8}, 1), ConfigError);
  CHECK_THROWS_AS(build_mini_resnet(3, {}, 1), ConfigError);
  BlockPartition gap{{{0}, {2}}};
  CHECK_THROWS_AS(gap.validate(3), ConfigError);
  BlockPartition twice{{{0, 1}, {1, 2}}};
  CHECK_THROWS_AS(twice.validate(3), ConfigError);
  BlockPartition ok{{{0, 1}, {2}}};
  CHECK_NOTHROW(ok.validate(3));
}

TEST_CASE("forward output has one logit per class") {
  auto m = build_mini_resnet(5, {4, 6, 8}, 2);
  Tape<float> tape;
  auto y = forward(m, tape, tape.constant(random_images(3, 3, 8, 1)));
  CHECK(y.shape() == Shape{3, 5});
  CHECK_THROWS_AS(forward(m, tape, tape.constant(random_images(1, 2, 8, 1))), ShapeError);

  auto mlp = build_mlp(12, {6}, 4, 3);
  Tape<float> t2;
  CHECK(forward(mlp, t2, t2.constant(TensorF({2, 12}, 0.5f))).shape() == Shape{2, 4});
}

TEST_CASE("replace_classifier") {
  const auto pre = build_mini_resnet(4, {4, 6, 8}, 3);
  const auto a = replace_classifier(pre, 7, 11);
  const auto b = replace_classifier(pre, 7, 11);
  CHECK(a.layers.back().weight.shape() == Shape{8, 7});
  for (int i = 0; i + 1 < pre.layer_count(); ++i) {
    CHECK(a.layers[i].weight.same_values(pre.layers[i].weight));
    CHECK(a.layers[i].bias.same_values(pre.layers[i].bias));
    CHECK(a.layers[i].frozen);
  }
  CHECK_FALSE(a.layers.back().frozen);
  CHECK(a.layers.back().weight.same_values(b.layers.back().weight));
  for (float v : a.layers.back().bias.data()) CHECK(v == 0.0f);

  const auto same_width = replace_classifier(pre, 4, 11);
  CHECK_FALSE(same_width.layers.back().weight.same_values(pre.layers.back().weight));
  CHECK_THROWS_AS(replace_classifier(pre, 0, 1), ConfigError);
}

TEST_CASE("multilabel BCE values") {
  Tape<float> tape;
  CHECK(multilabel_bce(tape.constant(TensorF({1, 1}, 0.0f)), TensorF({1, 1}, 1.0f)).value()[0] ==
        doctest::Approx(0.693147).epsilon(1e-6));
  // softplus(-20)
  const double tiny = multilabel_bce(tape.constant(TensorF({1, 1}, 20.0f)), TensorF({1, 1}, 1.0f)).value()[0];
  CHECK(tiny == doctest::Approx(2.06e-9).epsilon(0.01));
  CHECK(tiny == doctest::Approx(softplus(-20.0)).epsilon(1e-5));

  const float l1 = multilabel_bce(tape.constant(TensorF({1, 1}, 1.3f)), TensorF({1, 1}, 0.0f)).value()[0];
  const float l2 = multilabel_bce(tape.constant(TensorF({1, 1}, -0.4f)), TensorF({1, 1}, 1.0f)).value()[0];
  const float both = multilabel_bce(tape.constant(TensorF({2, 1}, {1.3f, -0.4f})), TensorF({2, 1}, {0.0f, 1.0f})).value()[0];
  CHECK(both == doctest::Approx((l1 + l2) / 2).epsilon(1e-6));

  // Large logits stay finite in both directions.
  const float extreme = multilabel_bce(tape.constant(TensorF({1, 2}, {500.0f, -500.0f})), TensorF({1, 2}, {0.0f, 1.0f})).value()[0];
  CHECK(extreme == doctest::Approx(500.0).epsilon(1e-6));
}

TEST_CASE("BCE is nonnegative and its gradient is (sigma - y) / (N * C)") {
  Rng rng(4);
  TensorF x({4, 3});
  TensorF y({4, 3});
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-6.0, 6.0));
  for (auto& v : y.data()) v = rng.bernoulli(0.5) ? 1.0f : 0.0f;
  Tape<float> tape;
  auto loss = multilabel_bce(tape.parameter(x), y);
  CHECK(loss.value()[0] >= 0.0f);
  tape.backward(loss);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-double(x[i])));
    CHECK(std::abs(x.grad()[i] - (s - y[i]) / 12.0) <= 1e-6);
  }
}

TEST_CASE("set_frozen") {
  auto m = build_mini_resnet(3, {4, 4, 4}, 1);
  set_all_frozen(m, true);
  set_all_frozen(m, false);
  CHECK(m.trainable_count() == m.layer_count());
  CHECK_THROWS_AS(set_frozen(m, {8}, true), ConfigError);
  CHECK_THROWS_AS(set_frozen(m, {-1}, true), ConfigError);
}

TEST_CASE("frozen layers stay bit-identical through a training step") {
  auto m = build_mini_resnet(3, {4, 6, 8}, 9);
  const auto before = m;
  set_frozen(m, {1, 2}, true);
  AdamState adam = AdamState::for_model(m);
  Tape<float> tape;
  TensorF y({2, 3}, {1, 0, 1, 0, 1, 0});
  for (auto& l : m.layers)
    for (auto* p : l.params())
      if (!l.frozen) p->ensure_grad();
  tape.backward(multilabel_bce(forward(m, tape, tape.constant(random_images(2, 3, 8, 2))), y));
  adam_step(m, adam);
  for (int i = 0; i < m.layer_count(); ++i) {
    const bool same = m.layers[i].weight.same_values(before.layers[i].weight);
    if (i == 1 || i == 2)
      CHECK(same);
    else
      CHECK_FALSE(same);
  }

  // Classifier alone frozen.
  auto h = build_mini_resnet(3, {4, 6, 8}, 9);
  set_frozen(h, {h.classifier_index()}, true);
  AdamState a2 = AdamState::for_model(h);
  Tape<float> t2;
  for (auto& l : h.layers)
    for (auto* p : l.params())
      if (!l.frozen) p->ensure_grad();
  t2.backward(multilabel_bce(forward(h, t2, t2.constant(random_images(2, 3, 8, 2))), y));
  adam_step(h, a2);
  CHECK(h.layers.back().weight.same_values(before.layers.back().weight));
  CHECK(h.layers.back().bias.same_values(before.layers.back().bias));
}

TEST_CASE("an all-frozen model is a pure function of its weights") {
  auto m = build_mini_resnet(3, {4, 6, 8}, 10);
  set_all_frozen(m, true);
  const auto x = random_images(2, 3, 8, 3);
  Tape<float> a, b;
  auto ya = forward(m, a, a.constant(x));
  auto yb = forward(m, b, b.constant(x));
  CHECK(ya.value().same_values(yb.value()));
  CHECK_FALSE(a.requires_grad(ya.id));
}

TEST_CASE("MLP gradients match finite differences") {
  auto m = build_mlp<double>(5, {4, 3}, 2, 12);
  Tensor<double> x({3, 5});
  Rng rng(13);
  for (auto& v : x.data()) v = rng.uniform(-1.0, 1.0);
  // Nonzero biases keep pre-activations off the relu kink.
  for (auto& l : m.layers)
    for (auto& v : l.bias.data()) v = rng.uniform(0.1, 0.5) * (rng.bernoulli(0.5) ? 1 : -1);
  Tensor<double> y({3, 2}, {1, 0, 0, 1, 1, 1});
  GradCheckOptions opts;
  opts.step = 1e-6;
  auto r = check_gradients<double>(
      [&](Tape<double>& t) { return multilabel_bce(forward(m, t, t.constant(x)), y); }, m.parameters(), opts);
  INFO("max relative error " << r.max_relative_error << ", failures " << r.failures);
  CHECK(r.passed);
  CHECK(r.checked == m.param_count());
}

TEST_CASE("cast_model keeps structure") {
  const auto m = build_mini_resnet(2, {4}, 1);
  const auto d = cast_model<double>(m);
  CHECK(d.layer_count() == m.layer_count());
  CHECK(d.layers[3].weight[5] == static_cast<double>(m.layers[3].weight[5]));
  CHECK(architecture_tag(d.architecture) == "mini-resnet");
  CHECK(parse_architecture("mlp") == Architecture::Mlp);
  CHECK_THROWS_AS(parse_architecture("vgg"), ConfigError);
}
