#include <doctest.h>

#include <cmath>

#include "gfz/optimizer.hpp"

using namespace gfz;

namespace {

// One dense layer with `n` inputs and one output.
Model scalar_model(int n, float w0 = 0.0f) {
  Model m = build_mlp(n, {}, 1, 1);
  for (auto& v : m.layers[0].weight.data()) v = w0;
  for (auto* p : m.layers[0].params()) p->ensure_grad();
  return m;
}

void fill_grads(Model& m, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& l : m.layers)
    for (auto* p : l.params()) {
      p->ensure_grad();
      for (auto& g : p->grad()) g = static_cast<float>(rng.uniform(-1.0, 1.0));
    }
}

// Reference single Adam step from zero moments, written out in full.
double first_adam_update(double lr, double g, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
  const double m = (1 - b1) * g, v = (1 - b2) * g * g;
  return -lr * (m / (1 - b1)) / (std::sqrt(v / (1 - b2)) + eps);
}

}  // namespace

TEST_CASE("zero gradient leaves parameters unchanged") {
  Model m = build_mini_resnet(3, {4, 4, 4}, 1);
  const Model before = m;
  for (auto* p : m.parameters()) p->ensure_grad();
  AdamState s = AdamState::for_model(m);
  adam_step(m, s);
  for (int i = 0; i < m.layer_count(); ++i) CHECK(m.layers[i].weight.same_values(before.layers[i].weight));
}

TEST_CASE("first step with lr 1e-3 and gradient 0.5") {
  Model m = scalar_model(1);
  m.layers[0].effective_lr = 1e-3;
  m.layers[0].weight.grad()[0] = 0.5f;
  AdamState s = AdamState::for_model(m);
  adam_step(m, s);
  const double expected = first_adam_update(1e-3, 0.5);
  CHECK(expected == doctest::Approx(-9.99998e-4).epsilon(1e-6));
  CHECK(m.layers[0].weight[0] == static_cast<float>(expected));
  CHECK(s.step == 1);
}

TEST_CASE("zero learning rate makes a layer inert") {
  Model m = scalar_model(3, 0.25f);
  const Model before = m;
  fill_grads(m, 3);
  set_layer_lr(m, 0, 0.0);
  AdamState s = AdamState::for_model(m);
  adam_step(m, s);
  CHECK(m.layers[0].weight.same_values(before.layers[0].weight));
}

TEST_CASE("set_layer_lr") {
  Model m = scalar_model(1);
  set_layer_lr(m, 0, 2.5e-4);
  CHECK(m.layers[0].effective_lr == 2.5e-4);
  m.layers[0].base_lr = 5e-4;
  set_layer_lr(m, 0, 0.5 * m.layers[0].base_lr);
  CHECK(m.layers[0].effective_lr == 2.5e-4);
  CHECK_THROWS_AS(set_layer_lr(m, 0, -1e-5), ConfigError);
  CHECK_THROWS_AS(set_layer_lr(m, 4, 1e-5), ConfigError);
}

TEST_CASE("missing gradient on a trainable layer is an error") {
  Model m = scalar_model(2);
  m.layers[0].bias.drop_grad();
  AdamState s = AdamState::for_model(m);
  CHECK_THROWS_AS(adam_step(m, s), ConfigError);
  m.layers[0].frozen = true;
  CHECK_NOTHROW(adam_step(m, s));
}

TEST_CASE("frozen layers: parameters and moments untouched, step counter still advances") {
  Model m = build_mini_resnet(3, {4, 4, 4}, 2);
  fill_grads(m, 4);
  AdamState s = AdamState::for_model(m);
  adam_step(m, s);
  const Model before = m;
  const AdamState moments = s;
  set_frozen(m, {0, 5}, true);
  fill_grads(m, 5);
  adam_step(m, s);
  CHECK(s.step == 2);
  for (int i : {0, 5}) {
    CHECK(m.layers[i].weight.same_values(before.layers[i].weight));
    CHECK(m.layers[i].bias.same_values(before.layers[i].bias));
    CHECK(s.first_moment[2 * i] == moments.first_moment[2 * i]);
    CHECK(s.second_moment[2 * i + 1] == moments.second_moment[2 * i + 1]);
  }
  CHECK_FALSE(m.layers[1].weight.same_values(before.layers[1].weight));
}

TEST_CASE("identical inputs give identical steps") {
  Model a = build_mini_resnet(3, {4, 4, 4}, 3);
  fill_grads(a, 6);
  Model b = a;
  for (std::size_t k = 0; k < a.parameters().size(); ++k) {
    b.parameters()[k]->ensure_grad();
    std::copy(a.parameters()[k]->grad().begin(), a.parameters()[k]->grad().end(), b.parameters()[k]->grad().begin());
  }
  AdamState sa = AdamState::for_model(a), sb = AdamState::for_model(b);
  adam_step(a, sa);
  adam_step(b, sb);
  for (int i = 0; i < a.layer_count(); ++i) CHECK(a.layers[i].weight.same_values(b.layers[i].weight));
}

TEST_CASE("scaling a layer's rate scales its first displacement") {
  // Parameters start at zero so the displacement is the update itself.
  for (double c : {0.5, 0.25, 2.0}) {
    Model a = scalar_model(4), b = scalar_model(4);
    Rng rng(7);
    for (std::size_t i = 0; i < 4; ++i) {
      const float g = static_cast<float>(rng.uniform(-1.0, 1.0));
      a.layers[0].weight.grad()[i] = g;
      b.layers[0].weight.grad()[i] = g;
    }
    a.layers[0].effective_lr = 1e-3;
    b.layers[0].effective_lr = c * 1e-3;
    AdamState sa = AdamState::for_model(a), sb = AdamState::for_model(b);
    adam_step(a, sa);
    adam_step(b, sb);
    for (std::size_t i = 0; i < 4; ++i) {
      const double da = a.layers[0].weight[i], db = b.layers[0].weight[i];
      CHECK(db == doctest::Approx(c * da).epsilon(1e-6));
    }
  }
}
