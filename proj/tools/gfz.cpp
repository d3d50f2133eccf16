#include <CLI11.hpp>

#include <iostream>

#include "gfz/config.hpp"
#include "gfz/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Gradual-freezing fine-tuning experiments on synthetic multi-label image data"};
  app.require_subcommand(1);

  std::string config_path, strategy, out, checkpoint, axis;
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seeds, "run seed; repeat for several seeds");
  };
  auto add_strategy = [&](CLI::App* sub) {
    sub->add_option("--strategy", strategy, "fine-tuning strategy")
        ->check(CLI::IsMember(gfz::strategy_names()));
  };

  auto* pre = app.add_subcommand("pretrain", "train the backbone on the source domain and write a checkpoint");
  add_common(pre);
  pre->add_option("--out", out, "checkpoint path")->required();

  auto* fine = app.add_subcommand("finetune", "fine-tune a checkpoint on the target domain, once per seed");
  add_common(fine);
  add_strategy(fine);
  fine->add_option("--checkpoint", checkpoint, "GFZC checkpoint from pretrain")->required()->check(CLI::ExistingFile);
  fine->add_option("--out", out, "output directory; results go to <out>/<strategy>/")->required();

  auto* sweep = app.add_subcommand("sweep", "fine-tune over a grid of one gradual-freezing setting");
  add_common(sweep);
  add_strategy(sweep);
  sweep->add_option("--checkpoint", checkpoint, "GFZC checkpoint from pretrain")->required()->check(CLI::ExistingFile);
  sweep->add_option("--axis", axis, "epsilon_cond, epsilon_step or freeze_ratio")
      ->required()
      ->check(CLI::IsMember({"epsilon_cond", "epsilon_step", "freeze_ratio"}));
  sweep->add_option("--values", values, "grid values (default: the axis' standard grid)")->delimiter(',');
  sweep->add_option("--out", out, "output directory")->required();

  auto* report = app.add_subcommand("report", "render relative mAP, heatmaps and PR points for a finetune directory");
  report->add_option("--out", out, "directory holding <strategy>/summary.json subdirectories")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    auto load = [&] {
      gfz::ExperimentConfig cfg = config_path.empty() ? gfz::ExperimentConfig{} : gfz::load_config(config_path);
      if (!strategy.empty()) cfg.strategy = strategy;
      if (!seeds.empty()) cfg.seeds = seeds;
      cfg.validate();
      return cfg;
    };
    if (pre->parsed()) {
      auto cfg = load();
      if (!seeds.empty()) cfg.pretrain_seed = seeds.front();
      gfz::cmd_pretrain(cfg, out, std::cout);
    } else if (fine->parsed()) {
      gfz::cmd_finetune(load(), checkpoint, out, std::cout);
    } else if (sweep->parsed()) {
      const auto a = gfz::parse_sweep_axis(axis);
      gfz::cmd_sweep(load(), checkpoint, a, values.empty() ? gfz::default_sweep_values(a) : values, out, std::cout);
    } else if (report->parsed()) {
      gfz::cmd_report(out, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
