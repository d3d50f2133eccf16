#pragma once

// Comparison fine-tuning strategies run through the shared training loop.

#include <string>
#include <variant>
#include <vector>

#include "gfz/training.hpp"

namespace gfz {

struct FullFT {};
struct LinearProbe {};
struct LpFt {
  int lp_epochs = 3;
};
struct GradualUnfreezeLastFirst {
  int step_epochs = 1;
};
struct GradualUnfreezeFirstLast {
  int step_epochs = 1;
};
struct L1SP {
  double a = 0.1;
  double b = 0.01;
};
struct L2SP {
  double a = 0.1;
  double b = 0.01;
};
struct AutoRGN {};

using StrategySpec =
    std::variant<FullFT, LinearProbe, LpFt, GradualUnfreezeLastFirst, GradualUnfreezeFirstLast, L1SP, L2SP, AutoRGN>;

std::string strategy_name(const StrategySpec& spec);  // full, lp, lp-ft, g-lf, g-fl, l1sp, l2sp, auto-rgn
void validate_strategy(const StrategySpec& spec);

/// Pretrained values of every non-classifier layer, [weight, bias] per layer.
struct SpReference {
  std::vector<Tensor<float>> params;

  static SpReference from_model(const Model& pretrained);
};

enum class SpNorm { L1, L2 };

/// a * dist(w, w0) over the non-classifier layers plus b * norm(classifier),
/// with dist/norm the L1 norm or the squared L2 norm. Frozen layers enter as
/// constants.
Var<float> sp_penalty(Model& model, Tape<float>& tape, const SpReference& ref, SpNorm norm, double a, double b);

/// The same quantity evaluated in double precision without a tape.
double sp_penalty_value(const Model& model, const SpReference& ref, SpNorm norm, double a, double b);

/// L2 distance of the non-classifier parameters from the reference.
double distance_from_reference(const Model& model, const SpReference& ref);

class FullFtSchedule final : public Schedule {
 public:
  void begin(Model& model) override;
  std::string phase(int) const override { return "full"; }
};

class LinearProbeSchedule final : public Schedule {
 public:
  void begin(Model& model) override;
  std::string phase(int) const override { return "linear-probe"; }
};

class LpFtSchedule final : public Schedule {
 public:
  explicit LpFtSchedule(int lp_epochs) : lp_epochs_(lp_epochs) {}
  void begin(Model& model) override;
  void before_epoch(int epoch, Model& model) override;
  std::string phase(int epoch) const override { return epoch <= lp_epochs_ ? "linear-probe" : "full"; }
  bool early_stop_active(int epoch) const override { return epoch > lp_epochs_; }

 private:
  int lp_epochs_;
};

/// Unfreezes one functional block every `step_epochs`, starting with the last
/// block (last_first) or the first one.
class GradualUnfreezeSchedule final : public Schedule {
 public:
  GradualUnfreezeSchedule(int step_epochs, bool last_first) : step_(step_epochs), last_first_(last_first) {}
  void begin(Model& model) override;
  void before_epoch(int epoch, Model& model) override;
  std::string phase(int) const override { return "gradual-unfreeze"; }

 private:
  int step_;
  bool last_first_;
};

class SpSchedule final : public Schedule {
 public:
  SpSchedule(SpReference ref, SpNorm norm, double a, double b)
      : ref_(std::move(ref)), norm_(norm), a_(a), b_(b) {}
  void begin(Model& model) override;
  std::string phase(int) const override { return norm_ == SpNorm::L1 ? "l1-sp" : "l2-sp"; }
  std::optional<Var<float>> penalty(Model& model, Tape<float>& tape) override;

 private:
  SpReference ref_;
  SpNorm norm_;
  double a_, b_;
};

/// All layers trainable; every epoch each layer's rate becomes (r_i / r_max) * base_lr.
class AutoRgnSchedule final : public Schedule {
 public:
  void begin(Model& model) override;
  void after_epoch(int epoch, Model& model, const std::vector<double>& rgn) override;
  std::string phase(int) const override { return "auto-rgn"; }
  const std::vector<double>* last_alpha() const override { return alpha_.empty() ? nullptr : &alpha_; }

 private:
  std::vector<double> alpha_;
};

/// `model` is the pretrained network with its fresh classifier already in place.
RunResult apply_strategy(Model model, const TaskData& data, const StrategySpec& spec, const TrainSettings& settings,
                         const RunHooks& hooks = {});

}  // namespace gfz
