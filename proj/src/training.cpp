#include "gfz/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gfz/scheduler.hpp"

namespace gfz {

void TrainSettings::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be >= 1");
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

bool EarlyStopping::update(double metric, bool active) {
  if (metric > best_) {
    best_ = metric;
    no_improve_ = 0;
    return true;
  }
  if (active) ++no_improve_;
  return false;
}

PredictionSet predict(Model& model, const Dataset& data, int batch_size) {
  PredictionSet out;
  const int n = data.count();
  out.scores.resize(n, data.class_count);
  out.labels.resize(n, data.class_count);
  std::vector<int> idx;
  for (int start = 0; start < n; start += batch_size) {
    idx.resize(static_cast<std::size_t>(std::min(batch_size, n - start)));
    std::iota(idx.begin(), idx.end(), start);
    Tape<float> tape;
    auto logits = sigmoid(forward(model, tape, tape.constant(image_batch(data, idx)), false));
    const auto& v = logits.value();
    for (std::size_t b = 0; b < idx.size(); ++b)
      for (int c = 0; c < data.class_count; ++c) {
        out.scores(start + static_cast<int>(b), c) = v[b * data.class_count + c];
        out.labels(start + static_cast<int>(b), c) = data.label_row(start + static_cast<int>(b))[c];
      }
  }
  return out;
}

RunResult run_schedule(Model model, const TaskData& data, const TrainSettings& settings, Schedule& schedule,
                       const RunHooks& hooks) {
  settings.validate();
  if (data.train.count() == 0 || data.val.count() == 0)
    throw ConfigError("training needs nonempty train and validation splits");
  if (data.train.class_count != model.class_count())
    throw ConfigError("dataset has " + std::to_string(data.train.class_count) + " classes, model outputs " +
                      std::to_string(model.class_count()));

  for (auto& l : model.layers) {
    l.base_lr = settings.base_lr;
    l.effective_lr = settings.base_lr;
  }
  schedule.begin(model);
  AdamState adam = AdamState::for_model(model);
  EarlyStopping stopper(settings.patience);
  RunResult result;
  result.model = model;
  std::uint64_t cumulative = 0;

  const int n_train = data.train.count();
  std::vector<int> order(static_cast<std::size_t>(n_train));
  const auto params = model.parameters();
  std::vector<std::vector<double>> grad_sum(params.size());

  for (int epoch = 1; epoch <= settings.max_epochs; ++epoch) {
    schedule.before_epoch(epoch, model);
    MetricsRecord rec;
    rec.epoch = epoch;
    rec.phase = schedule.phase(epoch);
    rec.trained = model.trainable_mask();
    rec.trainable_layer_count = model.trainable_count();

    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(settings.seed, "data-order", static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order.begin(), order.end());
    Rng augment_rng(settings.seed, "augment", static_cast<std::uint64_t>(epoch));

    for (std::size_t k = 0; k < params.size(); ++k) grad_sum[k].assign(params[k]->size(), 0.0);
    std::size_t trainable_elements = 0;
    for (const auto& l : model.layers)
      if (!l.frozen) trainable_elements += l.param_count();

    double loss_sum = 0.0;
    int batches = 0;
    for (int start = 0; start < n_train; start += settings.batch_size) {
      const std::span<const int> idx(order.data() + start,
                                     static_cast<std::size_t>(std::min(settings.batch_size, n_train - start)));
      for (auto& l : model.layers)
        for (auto* p : l.params()) {
          if (l.frozen) {
            p->drop_grad();
          } else {
            p->ensure_grad();
            p->zero_grad();
          }
        }
      Tape<float> tape;
      auto x = tape.constant(image_batch(data.train, idx, settings.augment ? &augment_rng : nullptr));
      auto bce = multilabel_bce(forward(model, tape, x), label_batch(data.train, idx));
      auto loss = bce;
      if (auto extra = schedule.penalty(model, tape)) loss = add(loss, *extra);
      tape.backward(loss);
      loss_sum += static_cast<double>(bce.value()[0]) * static_cast<double>(idx.size());

      for (std::size_t k = 0; k < params.size(); ++k)
        if (params[k]->has_grad()) {
          auto g = params[k]->grad();
          for (std::size_t i = 0; i < g.size(); ++i) grad_sum[k][i] += g[i];
        }
      adam_step(model, adam);
      cumulative += trainable_elements;
      ++batches;
    }
    if (!std::isfinite(loss_sum)) throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch));

    // Epoch-mean gradient on every trainable parameter.
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (!params[k]->has_grad()) continue;
      auto g = params[k]->grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<float>(grad_sum[k][i] / batches);
    }
    rec.rgn = compute_rgn(model);
    schedule.after_epoch(epoch, model, rec.rgn);

    rec.train_loss = loss_sum / n_train;
    rec.effective_lr.resize(model.layers.size());
    rec.alpha.resize(model.layers.size());
    const auto* alpha = schedule.last_alpha();
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      const auto& l = model.layers[i];
      rec.effective_lr[i] = l.effective_lr;
      rec.alpha[i] = alpha ? (*alpha)[i] : (l.frozen ? 0.0 : l.effective_lr / l.base_lr);
    }
    rec.cumulative_updates = cumulative;

    const auto preds = predict(model, data.val, settings.eval_batch_size);
    const auto ap = mean_average_precision_detail(preds);
    rec.val_map = ap.mean;
    rec.class_ap = ap.per_class;
    rec.val_auc = mean_roc_auc(preds);

    const double signal = hooks.validation_metric ? hooks.validation_metric(epoch, model) : rec.val_map;
    if (stopper.update(signal, schedule.early_stop_active(epoch))) {
      result.best_epoch = epoch;
      result.best_val_map = rec.val_map;
      result.model = model;
    }
    schedule.observe_validation(stopper);
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model, rec);
    result.records.push_back(std::move(rec));
    if (stopper.should_stop()) {
      result.early_stopped = true;
      break;
    }
  }
  result.model.drop_grads();
  return result;
}

}  // namespace gfz
