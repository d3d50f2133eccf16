#pragma once

#include <cstdint>
#include <vector>

#include "gfz/model.hpp"

namespace gfz {

/// Adam moments for every parameter tensor of a model, in Model::parameters() order.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  static AdamState for_model(const Model& model);
};

/// Advances the step counter and applies a bias-corrected Adam update with
/// step size effective_lr to every unfrozen layer. Frozen layers, including
/// their moments, are left untouched.
void adam_step(Model& model, AdamState& state);

void set_layer_lr(Model& model, int layer_index, double lr);

}  // namespace gfz
