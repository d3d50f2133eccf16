#include "gfz/optimizer.hpp"

#include <cmath>

namespace gfz {

AdamState AdamState::for_model(const Model& model) {
  AdamState s;
  for (const auto& l : model.layers)
    for (const auto* p : l.params()) {
      s.first_moment.emplace_back(p->size(), 0.0);
      s.second_moment.emplace_back(p->size(), 0.0);
    }
  return s;
}

void adam_step(Model& model, AdamState& state) {
  const std::size_t expected = model.parameters().size();
  if (state.first_moment.size() != expected || state.second_moment.size() != expected)
    throw ConfigError("adam_step: optimizer state does not match model");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);

  std::size_t slot = 0;
  for (auto& layer : model.layers) {
    for (auto* p : layer.params()) {
      const std::size_t k = slot++;
      if (layer.frozen) continue;
      if (!p->has_grad())
        throw ConfigError("adam_step: missing gradient on trainable layer '" + layer.name + "'");
      auto& m = state.first_moment[k];
      auto& v = state.second_moment[k];
      if (m.size() != p->size()) throw ConfigError("adam_step: moment shape mismatch on '" + layer.name + "'");
      auto data = p->data();
      auto grad = p->grad();
      const double lr = layer.effective_lr;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double g = grad[i];
        m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
        v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
        const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.epsilon);
        data[i] = static_cast<float>(data[i] - update);
      }
    }
  }
}

void set_layer_lr(Model& model, int layer_index, double lr) {
  if (layer_index < 0 || layer_index >= model.layer_count())
    throw ConfigError("set_layer_lr: unknown layer index " + std::to_string(layer_index));
  if (!(lr >= 0.0)) throw ConfigError("set_layer_lr: learning rate must be >= 0");
  model.layers[layer_index].effective_lr = lr;
}

}  // namespace gfz
