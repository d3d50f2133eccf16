#include <doctest.h>

#include <cmath>
#include <limits>

#include "gfz/baselines.hpp"
#include "support.hpp"

using namespace gfz;
using gfz::testing::tiny_pretrained;
using gfz::testing::tiny_settings;
using gfz::testing::tiny_task;

namespace {

struct Snapshots {
  std::vector<Model> models;
  RunHooks hooks() {
    RunHooks h;
    h.on_epoch_end = [this](int, const Model& m, const MetricsRecord&) { models.push_back(m); };
    return h;
  }
};

// Scalar "network": two single-weight layers, the second one the classifier.
Model two_scalars(float w0, float w1) {
  Model m = build_mlp(1, {1}, 1, 1);
  m.layers[0].weight[0] = w0;
  m.layers[1].weight[0] = w1;
  return m;
}

}  // namespace

TEST_CASE("strategy names and validation") {
  CHECK(strategy_name(FullFT{}) == "full");
  CHECK(strategy_name(LpFt{}) == "lp-ft");
  CHECK(strategy_name(GradualUnfreezeFirstLast{}) == "g-fl");
  CHECK(strategy_name(AutoRGN{}) == "auto-rgn");
  CHECK_THROWS_AS(validate_strategy(L2SP{-0.1, 0.0}), ConfigError);
  CHECK_THROWS_AS(validate_strategy(L1SP{0.1, -1.0}), ConfigError);
  CHECK_THROWS_AS(validate_strategy(GradualUnfreezeLastFirst{0}), ConfigError);
  CHECK_NOTHROW(validate_strategy(L2SP{0.0, 0.0}));
}

TEST_CASE("linear probing never touches the backbone") {
  const TaskData task = tiny_task();
  const Model pre = tiny_pretrained();
  Snapshots snaps;
  const auto r = apply_strategy(replace_classifier(pre, 3, 2), task, LinearProbe{}, tiny_settings(4), snaps.hooks());
  REQUIRE(snaps.models.size() == r.records.size());
  for (const auto& m : snaps.models)
    for (int i = 0; i + 1 < m.layer_count(); ++i) {
      CHECK(m.layers[i].weight.same_values(pre.layers[i].weight));
      CHECK(m.layers[i].bias.same_values(pre.layers[i].bias));
    }
  for (const auto& rec : r.records) CHECK(rec.trainable_layer_count == 1);
}

TEST_CASE("gradual unfreezing opens one block per step") {
  const TaskData task = tiny_task();
  TrainSettings s = tiny_settings(6);
  s.patience = 10;
  const Model start = replace_classifier(tiny_pretrained(), 3, 2);

  const auto lf = apply_strategy(start, task, GradualUnfreezeLastFirst{1}, s);
  std::vector<int> blocks_open;
  for (const auto& rec : lf.records) {
    int open = 0;
    for (const auto& b : start.partition.blocks) open += rec.trained[b.front()] ? 1 : 0;
    blocks_open.push_back(open);
  }
  CHECK(blocks_open == std::vector<int>{1, 2, 3, 4, 5, 5});
  CHECK(lf.records[0].trained == std::vector<bool>{false, false, false, false, false, false, false, true});
  CHECK(lf.records[1].trained == std::vector<bool>{false, false, false, false, false, true, true, true});

  const auto fl = apply_strategy(start, task, GradualUnfreezeFirstLast{2}, s);
  CHECK(fl.records[0].trained == std::vector<bool>{true, false, false, false, false, false, false, false});
  CHECK(fl.records[1].trained == fl.records[0].trained);
  CHECK(fl.records[2].trained == std::vector<bool>{true, true, true, false, false, false, false, false});
  CHECK(fl.records[5].trainable_layer_count == 5);
}

TEST_CASE("LP-FT switches to full training after the probe stage") {
  const TaskData task = tiny_task();
  const auto r = apply_strategy(replace_classifier(tiny_pretrained(), 3, 2), task, LpFt{2}, tiny_settings(4));
  CHECK(r.records[0].trainable_layer_count == 1);
  CHECK(r.records[1].trainable_layer_count == 1);
  CHECK(r.records[2].trainable_layer_count == 8);
  CHECK(r.records[0].phase == "linear-probe");
  CHECK(r.records[2].phase == "full");
}

TEST_CASE("Auto-RGN rescales rates and never freezes") {
  const TaskData task = tiny_task();
  const auto r = apply_strategy(replace_classifier(tiny_pretrained(), 3, 2), task, AutoRGN{}, tiny_settings(4));
  for (const auto& rec : r.records) {
    CHECK(rec.trainable_layer_count == 8);
    CHECK(*std::max_element(rec.alpha.begin(), rec.alpha.end()) == 1.0);
    for (std::size_t i = 0; i < rec.alpha.size(); ++i)
      CHECK(rec.effective_lr[i] == doctest::Approx(rec.alpha[i] * 1e-3));
  }
}

TEST_CASE("strategies share the data order") {
  const TaskData task = tiny_task();
  const Model start = replace_classifier(tiny_pretrained(), 3, 2);
  const auto lp = apply_strategy(start, task, LinearProbe{}, tiny_settings(2));
  const auto lpft = apply_strategy(start, task, LpFt{2}, tiny_settings(2));
  CHECK(lp.records[1].train_loss == lpft.records[1].train_loss);
  CHECK(lp.records[1].val_map == lpft.records[1].val_map);
}

TEST_CASE("SP penalty values") {
  Model m = two_scalars(1.0f, 0.0f);
  SpReference ref = SpReference::from_model(m);
  CHECK(sp_penalty_value(m, ref, SpNorm::L2, 0.3, 0.7) == 0.0);

  m.layers[0].weight[0] = 2.0f;  // deviation 1
  Tape<float> tape;
  CHECK(sp_penalty(m, tape, ref, SpNorm::L2, 0.1, 0.0).value()[0] == doctest::Approx(0.1).epsilon(1e-7));

  Model two = build_mlp(2, {1}, 1, 1);
  for (auto& v : two.layers[0].weight.data()) v = 0.0f;
  const SpReference r2 = SpReference::from_model(two);
  two.layers[0].weight[0] = 0.5f;
  two.layers[0].weight[1] = -0.5f;
  Tape<float> t2;
  CHECK(sp_penalty(two, t2, r2, SpNorm::L1, 1.0, 0.0).value()[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sp_penalty_value(two, r2, SpNorm::L1, 1.0, 0.0) == 1.0);
}

TEST_CASE("L2-SP penalty gradient is 2a(w - w0) and 2b w on the head") {
  Model m = tiny_pretrained();
  const SpReference ref = SpReference::from_model(m);
  Rng rng(8);
  for (auto* p : m.parameters())
    for (auto& v : p->data()) v += static_cast<float>(rng.uniform(-0.2, 0.2));
  const double a = 0.37, b = 0.05;
  Tape<float> tape;
  for (auto* p : m.parameters()) p->ensure_grad();
  tape.backward(sp_penalty(m, tape, ref, SpNorm::L2, a, b));
  double worst = 0.0;
  for (int i = 0; i < m.layer_count(); ++i)
    for (int k = 0; k < 2; ++k) {
      const auto& p = *m.layers[i].params()[k];
      for (std::size_t e = 0; e < p.size(); ++e) {
        const double expect = i + 1 < m.layer_count() ? 2.0 * a * (double(p[e]) - ref.params[2 * i + k][e])
                                                       : 2.0 * b * double(p[e]);
        worst = std::max(worst, std::abs(p.grad()[e] - expect));
      }
    }
  CHECK(worst <= 1e-6);

  // Frozen layers enter as constants.
  m.drop_grads();
  set_frozen(m, {0}, true);
  Tape<float> t2;
  t2.backward(sp_penalty(m, t2, ref, SpNorm::L2, a, b));
  CHECK_FALSE(m.layers[0].weight.has_grad());
  CHECK(m.layers[1].weight.has_grad());
}

TEST_CASE("SP reference must match the model") {
  Model m = tiny_pretrained();
  const SpReference ref = SpReference::from_model(build_mini_resnet(3, {4, 8, 8}, 1));
  Tape<float> tape;
  CHECK_THROWS_AS(sp_penalty(m, tape, ref, SpNorm::L2, 0.1, 0.0), ShapeError);
  SpReference truncated = SpReference::from_model(m);
  truncated.params.pop_back();
  CHECK_THROWS_AS(sp_penalty_value(m, truncated, SpNorm::L1, 0.1, 0.0), ShapeError);
}

TEST_CASE("L2-SP keeps the backbone closer to the reference as a grows") {
  const TaskData task = tiny_task();
  const Model start = replace_classifier(tiny_pretrained(), 3, 2);
  const SpReference ref = SpReference::from_model(start);
  TrainSettings s = tiny_settings(3);
  s.base_lr = 3e-3;
  double previous = std::numeric_limits<double>::infinity();
  for (double a : {0.0, 0.01, 0.1, 1.0}) {
    double d = 0.0;
    RunHooks hooks;
    hooks.on_epoch_end = [&](int, const Model& m, const MetricsRecord&) { d = distance_from_reference(m, ref); };
    apply_strategy(start, task, L2SP{a, 0.0}, s, hooks);
    CHECK(d <= previous);
    previous = d;
  }
}
