#include "gfz/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gfz {
namespace {

bool eligible(const Model& model, int layer, bool classifier_exempt) {
  return !model.layers[layer].frozen && !(classifier_exempt && layer == model.classifier_index());
}

}  // namespace

std::string policy_name(const FreezePolicy& policy) {
  if (std::holds_alternative<LayerPercent>(policy)) return "gfz-l";
  if (std::holds_alternative<BlockOne>(policy)) return "gfz-b1";
  return "gfz-b2";
}

void validate_policy(const FreezePolicy& policy) {
  if (const auto* lp = std::get_if<LayerPercent>(&policy); lp && !(lp->ratio > 0.0 && lp->ratio < 1.0))
    throw ConfigError("freeze ratio must lie strictly between 0 and 1");
}

void GfzSettings::validate(int patience) const {
  validate_policy(policy);
  if (epsilon_cond < 0) throw ConfigError("epsilon_cond must be >= 0");
  if (epsilon_step < 1) throw ConfigError("epsilon_step must be >= 1");
  if (epsilon_step > patience)
    throw ConfigError("epsilon_step (" + std::to_string(epsilon_step) + ") must be <= patience (" +
                      std::to_string(patience) + ") so that early stopping cannot fire before the next freezing step");
}

std::vector<double> compute_rgn(const Model& model) {
  std::vector<double> r(model.layers.size(), 0.0);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    if (layer.frozen) continue;
    double g2 = 0.0, w2 = 0.0;
    bool any_grad = false;
    for (const auto* p : layer.params()) {
      for (float w : p->data()) w2 += static_cast<double>(w) * w;
      if (p->has_grad()) {
        any_grad = true;
        for (float g : p->grad()) g2 += static_cast<double>(g) * g;
      }
    }
    if (any_grad) r[i] = std::sqrt(g2) / std::max(std::sqrt(w2), 1e-12);
  }
  return r;
}

std::vector<double> compute_alpha(std::span<const double> rgn, const std::vector<bool>& trainable) {
  if (rgn.size() != trainable.size()) throw ConfigError("compute_alpha: rgn and trainable mask differ in length");
  double r_max = 0.0;
  for (std::size_t i = 0; i < rgn.size(); ++i) {
    if (rgn[i] < 0.0) throw ConfigError("compute_alpha: negative RGN");
    if (trainable[i]) r_max = std::max(r_max, rgn[i]);
  }
  std::vector<double> alpha(rgn.size(), 0.0);
  for (std::size_t i = 0; i < rgn.size(); ++i)
    if (trainable[i]) alpha[i] = r_max > 0.0 ? rgn[i] / r_max : 1.0;
  return alpha;
}

void update_learning_rates(Model& model, std::span<const double> alpha) {
  if (alpha.size() != model.layers.size()) throw ConfigError("update_learning_rates: one alpha per layer expected");
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    auto& l = model.layers[i];
    l.effective_lr = l.frozen ? 0.0 : std::clamp(alpha[i], 0.0, 1.0) * l.base_lr;
  }
}

std::vector<std::optional<double>> compute_importance(std::span<const double> rgn, const BlockPartition& partition,
                                                      const std::vector<bool>& trainable) {
  std::vector<std::optional<double>> out;
  for (const auto& block : partition.blocks) {
    double acc = 0.0;
    int n = 0;
    for (int i : block)
      if (trainable.at(i)) {
        acc += rgn[i];
        ++n;
      }
    out.push_back(n ? std::optional<double>(acc / n) : std::nullopt);
  }
  return out;
}

std::vector<double> block_average_alpha(std::span<const double> alpha, const BlockPartition& partition,
                                        const std::vector<bool>& trainable) {
  std::vector<double> out(alpha.begin(), alpha.end());
  for (const auto& block : partition.blocks) {
    double acc = 0.0;
    int n = 0;
    for (int i : block)
      if (trainable.at(i)) {
        acc += alpha[i];
        ++n;
      }
    for (int i : block)
      if (trainable[i]) out[i] = acc / n;
  }
  return out;
}

std::vector<int> select_freeze_targets(std::span<const double> rgn, const Model& model, const FreezePolicy& policy,
                                       bool classifier_freeze_exempt) {
  if (rgn.size() != model.layers.size()) throw ConfigError("select_freeze_targets: one RGN per layer expected");
  std::vector<int> targets;

  if (const auto* lp = std::get_if<LayerPercent>(&policy)) {
    std::vector<int> candidates;
    for (int i = 0; i < model.layer_count(); ++i)
      if (eligible(model, i, classifier_freeze_exempt)) candidates.push_back(i);
    const auto n = candidates.size();
    if (n <= 1) return targets;
    auto k = static_cast<std::size_t>(std::ceil(lp->ratio * static_cast<double>(n) - 1e-12));
    k = std::clamp<std::size_t>(k, 1, n - 1);
    std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) { return rgn[a] < rgn[b]; });
    targets.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(targets.begin(), targets.end());
    return targets;
  }

  const auto importance = compute_importance(rgn, model.partition, model.trainable_mask());
  std::vector<int> candidate_blocks;
  for (std::size_t j = 0; j < model.partition.blocks.size(); ++j)
    for (int i : model.partition.blocks[j])
      if (eligible(model, i, classifier_freeze_exempt)) {
        candidate_blocks.push_back(static_cast<int>(j));
        break;
      }
  if (candidate_blocks.size() <= 1) return targets;
  int best = candidate_blocks.front();
  for (int j : candidate_blocks)
    if (*importance[j] < *importance[best]) best = j;
  for (int i : model.partition.blocks[best])
    if (eligible(model, i, classifier_freeze_exempt)) targets.push_back(i);
  return targets;
}

GfzSchedule::GfzSchedule(GfzSettings settings, int patience) : settings_(std::move(settings)) {
  settings_.validate(patience);
  state_.epsilon_cond = settings_.epsilon_cond;
  state_.epsilon_step = settings_.epsilon_step;
  state_.patience = patience;
}

void GfzSchedule::begin(Model& model) {
  set_all_frozen(model, true);
  model.layers.back().frozen = false;
  for (auto& l : model.layers) l.effective_lr = l.frozen ? 0.0 : l.base_lr;
  state_.phase = SchedulerPhase::PreConditioning;
  state_.frozen_set.clear();
}

void GfzSchedule::before_epoch(int epoch, Model& model) {
  state_.epoch = epoch;
  if (epoch == settings_.epsilon_cond + 1) {
    set_all_frozen(model, false);
    for (auto& l : model.layers) l.effective_lr = l.base_lr;
    state_.phase = SchedulerPhase::GradualFreezing;
  }
}

void GfzSchedule::after_epoch(int epoch, Model& model, const std::vector<double>& rgn) {
  if (state_.phase != SchedulerPhase::GradualFreezing) return;
  const auto trainable = model.trainable_mask();
  state_.rgn = rgn;
  state_.alpha = compute_alpha(rgn, trainable);
  if (std::holds_alternative<BlockOneAveragedLr>(settings_.policy))
    state_.alpha = block_average_alpha(state_.alpha, model.partition, trainable);
  update_learning_rates(model, state_.alpha);
  state_.importance = compute_importance(rgn, model.partition, trainable);

  if ((epoch - settings_.epsilon_cond) % settings_.epsilon_step != 0) return;
  const auto targets = select_freeze_targets(rgn, model, settings_.policy, settings_.classifier_freeze_exempt);
  set_frozen(model, targets, true);
  for (int i : targets) model.layers[i].effective_lr = 0.0;
  state_.frozen_set.insert(state_.frozen_set.end(), targets.begin(), targets.end());
  std::sort(state_.frozen_set.begin(), state_.frozen_set.end());
}

std::string GfzSchedule::phase(int epoch) const {
  return epoch <= settings_.epsilon_cond ? "pre-conditioning" : "gradual-freezing";
}

const std::vector<double>* GfzSchedule::last_alpha() const {
  return state_.phase == SchedulerPhase::GradualFreezing && !state_.alpha.empty() ? &state_.alpha : nullptr;
}

void GfzSchedule::observe_validation(const EarlyStopping& stopper) {
  state_.best_val = stopper.best();
  state_.no_improve = stopper.no_improve();
}

RunResult run_gfz(Model model, const TaskData& data, const TrainSettings& settings, const GfzSettings& gfz,
                  const RunHooks& hooks) {
  GfzSchedule schedule(gfz, settings.patience);
  return run_schedule(std::move(model), data, settings, schedule, hooks);
}

}  // namespace gfz
