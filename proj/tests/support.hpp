#pragma once

#include "gfz/config.hpp"
#include "gfz/harness.hpp"

namespace gfz::testing {

inline DatasetSpec tiny_spec(std::uint64_t seed, int count = 160, int classes = 3) {
  DatasetSpec s;
  s.image_size = 16;
  s.class_count = classes;
  s.prevalence.assign(static_cast<std::size_t>(classes), 0.4);
  s.sample_count = count;
  s.seed = seed;
  return s;
}

inline TaskData tiny_task(std::uint64_t seed = 3, int count = 160, int classes = 3) {
  return make_task(tiny_spec(seed, count, classes), {0.6, 0.2, 0.2});
}

inline Model tiny_pretrained(int classes = 3, std::uint64_t seed = 1) {
  return build_mini_resnet(classes, {4, 6, 8}, seed);
}

inline TrainSettings tiny_settings(int epochs = 6, std::uint64_t seed = 1) {
  TrainSettings s;
  s.base_lr = 1e-3;
  s.batch_size = 32;
  s.max_epochs = epochs;
  s.patience = 5;
  s.seed = seed;
  return s;
}

/// Small but complete experiment configuration for harness tests.
inline ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.widths = {4, 6, 8};
  c.source = tiny_spec(5, 120);
  c.target = tiny_spec(6, 120);
  c.target.shift = DomainShift{30.0, 0.9, 0.02, 1};
  c.train = tiny_settings(5);
  c.pretrain_epochs = 2;
  c.seeds = {1, 2};
  return c;
}

}  // namespace gfz::testing
