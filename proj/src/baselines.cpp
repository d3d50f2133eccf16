#include "gfz/baselines.hpp"

#include <cmath>

#include "gfz/scheduler.hpp"

namespace gfz {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

void require_reference(const Model& model, const SpReference& ref) {
  const auto expected = static_cast<std::size_t>(2 * (model.layer_count() - 1));
  if (ref.params.size() != expected)
    throw ShapeError("SP reference holds " + std::to_string(ref.params.size()) + " tensors, model needs " +
                     std::to_string(expected));
  for (int i = 0; i + 1 < model.layer_count(); ++i) {
    const auto ps = model.layers[i].params();
    for (int k = 0; k < 2; ++k)
      if (ps[k]->shape() != ref.params[2 * i + k].shape())
        throw ShapeError("SP reference shape mismatch at layer " + model.layers[i].name + ": " +
                         shape_string(ps[k]->shape()) + " vs " + shape_string(ref.params[2 * i + k].shape()));
  }
}

}  // namespace

std::string strategy_name(const StrategySpec& spec) {
  return std::visit(Overloaded{[](const FullFT&) { return std::string("full"); },
                               [](const LinearProbe&) { return std::string("lp"); },
                               [](const LpFt&) { return std::string("lp-ft"); },
                               [](const GradualUnfreezeLastFirst&) { return std::string("g-lf"); },
                               [](const GradualUnfreezeFirstLast&) { return std::string("g-fl"); },
                               [](const L1SP&) { return std::string("l1sp"); },
                               [](const L2SP&) { return std::string("l2sp"); },
                               [](const AutoRGN&) { return std::string("auto-rgn"); }},
                    spec);
}

void validate_strategy(const StrategySpec& spec) {
  std::visit(Overloaded{[](const LpFt& s) {
                          if (s.lp_epochs < 0) throw ConfigError("lp_epochs must be >= 0");
                        },
                        [](const GradualUnfreezeLastFirst& s) {
                          if (s.step_epochs < 1) throw ConfigError("unfreeze step must be >= 1");
                        },
                        [](const GradualUnfreezeFirstLast& s) {
                          if (s.step_epochs < 1) throw ConfigError("unfreeze step must be >= 1");
                        },
                        [](const L1SP& s) {
                          if (!(s.a >= 0.0 && s.b >= 0.0)) throw ConfigError("SP coefficients must be >= 0");
                        },
                        [](const L2SP& s) {
                          if (!(s.a >= 0.0 && s.b >= 0.0)) throw ConfigError("SP coefficients must be >= 0");
                        },
                        [](const auto&) {}},
             spec);
}

SpReference SpReference::from_model(const Model& pretrained) {
  SpReference ref;
  for (int i = 0; i + 1 < pretrained.layer_count(); ++i)
    for (const auto* p : pretrained.layers[i].params()) ref.params.push_back(*p);
  for (auto& t : ref.params) t.drop_grad();
  return ref;
}

Var<float> sp_penalty(Model& model, Tape<float>& tape, const SpReference& ref, SpNorm norm, double a, double b) {
  require_reference(model, ref);
  auto dist = [&](Var<float> x, const Tensor<float>& r) {
    return norm == SpNorm::L1 ? l1_distance(x, r) : sq_distance(x, r);
  };
  Var<float> deviation = tape.constant(Tensor<float>::scalar(0.0f));
  for (int i = 0; i + 1 < model.layer_count(); ++i) {
    auto& l = model.layers[i];
    for (int k = 0; k < 2; ++k) {
      auto* p = l.params()[k];
      deviation = add(deviation, dist(tape.parameter(*p, !l.frozen), ref.params[2 * i + k]));
    }
  }
  Var<float> head = tape.constant(Tensor<float>::scalar(0.0f));
  auto& cls = model.layers.back();
  for (auto* p : cls.params())
    head = add(head, dist(tape.parameter(*p, !cls.frozen), Tensor<float>(p->shape())));
  return add(scale(deviation, static_cast<float>(a)), scale(head, static_cast<float>(b)));
}

double sp_penalty_value(const Model& model, const SpReference& ref, SpNorm norm, double a, double b) {
  require_reference(model, ref);
  auto term = [&](double d) { return norm == SpNorm::L1 ? std::abs(d) : d * d; };
  double deviation = 0.0, head = 0.0;
  for (int i = 0; i + 1 < model.layer_count(); ++i)
    for (int k = 0; k < 2; ++k) {
      const auto& p = *model.layers[i].params()[k];
      const auto& r = ref.params[2 * i + k];
      for (std::size_t e = 0; e < p.size(); ++e) deviation += term(double(p[e]) - r[e]);
    }
  for (const auto* p : model.layers.back().params())
    for (float v : p->data()) head += term(v);
  return a * deviation + b * head;
}

double distance_from_reference(const Model& model, const SpReference& ref) {
  require_reference(model, ref);
  double acc = 0.0;
  for (int i = 0; i + 1 < model.layer_count(); ++i)
    for (int k = 0; k < 2; ++k) {
      const auto& p = *model.layers[i].params()[k];
      const auto& r = ref.params[2 * i + k];
      for (std::size_t e = 0; e < p.size(); ++e) {
        const double d = double(p[e]) - r[e];
        acc += d * d;
      }
    }
  return std::sqrt(acc);
}

namespace {

void unfreeze_all(Model& model) {
  set_all_frozen(model, false);
  for (auto& l : model.layers) l.effective_lr = l.base_lr;
}

void probe_only(Model& model) {
  set_all_frozen(model, true);
  model.layers.back().frozen = false;
  for (auto& l : model.layers) l.effective_lr = l.frozen ? 0.0 : l.base_lr;
}

}  // namespace

void FullFtSchedule::begin(Model& model) { unfreeze_all(model); }

void LinearProbeSchedule::begin(Model& model) { probe_only(model); }

void LpFtSchedule::begin(Model& model) {
  if (lp_epochs_ > 0)
    probe_only(model);
  else
    unfreeze_all(model);
}

void LpFtSchedule::before_epoch(int epoch, Model& model) {
  if (epoch == lp_epochs_ + 1) unfreeze_all(model);
}

void GradualUnfreezeSchedule::begin(Model& model) { before_epoch(1, model); }

void GradualUnfreezeSchedule::before_epoch(int epoch, Model& model) {
  const auto& blocks = model.partition.blocks;
  const auto open = std::min(blocks.size(), static_cast<std::size_t>((epoch - 1) / step_ + 1));
  set_all_frozen(model, true);
  for (std::size_t k = 0; k < open; ++k) {
    const auto& block = last_first_ ? blocks[blocks.size() - 1 - k] : blocks[k];
    set_frozen(model, block, false);
  }
  for (auto& l : model.layers) l.effective_lr = l.frozen ? 0.0 : l.base_lr;
}

void SpSchedule::begin(Model& model) {
  require_reference(model, ref_);
  unfreeze_all(model);
}

std::optional<Var<float>> SpSchedule::penalty(Model& model, Tape<float>& tape) {
  if (a_ == 0.0 && b_ == 0.0) return std::nullopt;
  return sp_penalty(model, tape, ref_, norm_, a_, b_);
}

void AutoRgnSchedule::begin(Model& model) { unfreeze_all(model); }

void AutoRgnSchedule::after_epoch(int, Model& model, const std::vector<double>& rgn) {
  alpha_ = compute_alpha(rgn, model.trainable_mask());
  update_learning_rates(model, alpha_);
}

RunResult apply_strategy(Model model, const TaskData& data, const StrategySpec& spec, const TrainSettings& settings,
                         const RunHooks& hooks) {
  validate_strategy(spec);
  auto run = [&](Schedule& s) { return run_schedule(std::move(model), data, settings, s, hooks); };
  return std::visit(
      Overloaded{[&](const FullFT&) {
                   FullFtSchedule s;
                   return run(s);
                 },
                 [&](const LinearProbe&) {
                   LinearProbeSchedule s;
                   return run(s);
                 },
                 [&](const LpFt& v) {
                   LpFtSchedule s(v.lp_epochs);
                   return run(s);
                 },
                 [&](const GradualUnfreezeLastFirst& v) {
                   GradualUnfreezeSchedule s(v.step_epochs, true);
                   return run(s);
                 },
                 [&](const GradualUnfreezeFirstLast& v) {
                   GradualUnfreezeSchedule s(v.step_epochs, false);
                   return run(s);
                 },
                 [&](const L1SP& v) {
                   SpSchedule s(SpReference::from_model(model), SpNorm::L1, v.a, v.b);
                   return run(s);
                 },
                 [&](const L2SP& v) {
                   SpSchedule s(SpReference::from_model(model), SpNorm::L2, v.a, v.b);
                   return run(s);
                 },
                 [&](const AutoRGN&) {
                   AutoRgnSchedule s;
                   return run(s);
                 }},
      spec);
}

}  // namespace gfz
