#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gfz/checkpoint.hpp"
#include "gfz/config.hpp"
#include "gfz/harness.hpp"
#include "support.hpp"

using namespace gfz;
using gfz::testing::tiny_config;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("gfz_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream s(text);
  for (std::string line; std::getline(s, line);) out.push_back(line);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream s(line);
  for (std::string cell; std::getline(s, cell, ',');) out.push_back(cell);
  return out;
}

const Model& tiny_checkpoint_model() {
  static const Model m = gfz::testing::tiny_pretrained(3, 2);
  return m;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = parse_config(
      "# desk run\n"
      "strategy = gfz-b1\n"
      "gfz.epsilon_step = 2\n"
      "train.base_lr = 5e-4\n"
      "seeds = 4, 5\n"
      "model.widths = 4,8,8\n"
      "target.shift.hue = 45\n"
      "\n");
  CHECK(cfg.strategy == "gfz-b1");
  CHECK(cfg.epsilon_step == 2);
  CHECK(cfg.train.base_lr == 5e-4);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(cfg.widths == std::vector<int>{4, 8, 8});
  CHECK(cfg.target.shift.hue_degrees == 45.0);
  CHECK(cfg.epsilon_cond == 3);
  CHECK(cfg.train.batch_size == 64);
  CHECK(cfg.train.max_epochs == 50);
  CHECK(cfg.train.patience == 5);
  CHECK(cfg.freeze_ratio == 0.4);

  try {
    parse_config("strategy = full\ntrain.momentum = 0.9\n");
    FAIL("unknown key accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("strategy = sgd\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("train.batch_size = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("train.batch_size\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/gfz.cfg"), ConfigError);
}

TEST_CASE("epsilon_step above patience is rejected") {
  ExperimentConfig cfg;
  try {
    sweep_point(cfg, SweepAxis::EpsilonStep, 6);
    FAIL("accepted epsilon_step 6");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("patience") != std::string::npos);
  }
  CHECK(sweep_point(cfg, SweepAxis::EpsilonStep, 5).epsilon_step == 5);
  CHECK_THROWS_AS(sweep_point(cfg, SweepAxis::EpsilonCond, 2.5), ConfigError);
  CHECK_THROWS_AS(sweep_point(cfg, SweepAxis::FreezeRatio, 1.5), ConfigError);
  cfg.strategy = "full";
  CHECK_THROWS_AS(sweep_point(cfg, SweepAxis::EpsilonCond, 3), ConfigError);
  CHECK(parse_sweep_axis("epsilon_cond") == SweepAxis::EpsilonCond);
  CHECK(default_sweep_values(SweepAxis::EpsilonCond) == std::vector<double>{0, 3, 6, 9, 12});
  CHECK(default_sweep_values(SweepAxis::EpsilonStep).size() == 5u);
}

TEST_CASE("strategy names map to schedules") {
  ExperimentConfig cfg;
  CHECK(strategy_names().size() == 11u);
  for (const auto& name : strategy_names()) {
    if (is_gfz_strategy(name))
      CHECK_NOTHROW(gfz_settings(cfg, name));
    else
      CHECK(strategy_name(baseline_spec(cfg, name)) == name);
  }
  CHECK(std::holds_alternative<BlockOneAveragedLr>(gfz_settings(cfg, "gfz-b2").policy));
  CHECK(std::get<LayerPercent>(gfz_settings(cfg, "gfz-l").policy).ratio == 0.4);
  CHECK_THROWS_AS(baseline_spec(cfg, "gfz-l"), ConfigError);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const Model m = build_mini_resnet(5, {4, 6, 8}, 3);
  const auto bytes = encode_checkpoint(m);
  const Model back = decode_checkpoint(bytes);
  REQUIRE(back.layer_count() == m.layer_count());
  for (int i = 0; i < m.layer_count(); ++i) {
    CHECK(back.layers[i].name == m.layers[i].name);
    CHECK(back.layers[i].kind == m.layers[i].kind);
    CHECK(back.layers[i].weight.same_values(m.layers[i].weight));
    CHECK(back.layers[i].bias.same_values(m.layers[i].bias));
  }
  CHECK(back.partition.blocks == m.partition.blocks);
  CHECK(encode_checkpoint(back) == bytes);

  const auto dir = fresh_dir("ckpt");
  save_checkpoint(dir / "m.gfzc", m);
  CHECK(encode_checkpoint(load_checkpoint(dir / "m.gfzc")) == bytes);

  const Model mlp = build_mlp(6, {5}, 2, 4);
  CHECK(encode_checkpoint(decode_checkpoint(encode_checkpoint(mlp))) == encode_checkpoint(mlp));
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto bytes = encode_checkpoint(build_mini_resnet(3, {4, 4, 4}, 1));
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad[4] = 9;  // version
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  CHECK_THROWS_AS(decode_checkpoint({}), FormatError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.gfzc"), FormatError);
}

TEST_CASE("architecture mismatch") {
  ExperimentConfig cfg = tiny_config();
  CHECK_NOTHROW(check_architecture(cfg, gfz::testing::tiny_pretrained()));
  cfg.widths = {8, 16, 32};
  CHECK_THROWS_AS(check_architecture(cfg, gfz::testing::tiny_pretrained()), ConfigError);
}

TEST_CASE("finetune summaries and reports") {
  ExperimentConfig cfg = tiny_config();
  cfg.train.max_epochs = 4;
  const TaskData task = make_task(cfg.target, cfg.split);
  const Model& pre = tiny_checkpoint_model();
  const std::vector<std::uint64_t> seeds{1, 2, 3};

  const auto gfz = finetune(cfg, pre, task, "gfz-l", seeds, 1);
  REQUIRE(gfz.runs.size() == 3u);
  double mean = 0.0;
  for (const auto& r : gfz.runs) mean += r.run.best_val_map;
  mean /= 3.0;
  double var = 0.0;
  for (const auto& r : gfz.runs) var += (r.run.best_val_map - mean) * (r.run.best_val_map - mean);
  CHECK(gfz.mean_val_map == doctest::Approx(mean).epsilon(1e-12));
  CHECK(gfz.std_val_map == doctest::Approx(std::sqrt(var / 2.0)).epsilon(1e-9));

  // Heatmap rows reproduce the trainable-layer counts.
  for (const auto& r : gfz.runs) {
    const auto rows = lines_of(heatmap_csv(r.run));
    REQUIRE(rows.size() == r.run.records.size() + 1);
    CHECK(split_csv(rows[0]).size() == 1u + 8u);
    for (std::size_t e = 0; e < r.run.records.size(); ++e) {
      const auto cells = split_csv(rows[e + 1]);
      int sum = 0;
      for (std::size_t k = 1; k < cells.size(); ++k) sum += std::stoi(cells[k]);
      CHECK(sum == r.run.records[e].trainable_layer_count);
    }
  }

  // Same inputs, same bytes.
  const auto again = finetune(cfg, pre, task, "gfz-l", seeds, 1);
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    CHECK(epochs_csv(again.runs[k].run) == epochs_csv(gfz.runs[k].run));
    CHECK(pr_curve_csv(again.runs[k]) == pr_curve_csv(gfz.runs[k]));
  }
  CHECK(summary_json(again) == summary_json(gfz));

  // Worker count does not change results.
  const auto parallel = finetune(cfg, pre, task, "gfz-l", seeds, 3);
  for (std::size_t k = 0; k < seeds.size(); ++k)
    CHECK(epochs_csv(parallel.runs[k].run) == epochs_csv(gfz.runs[k].run));

  const auto dir = fresh_dir("report");
  write_finetune_outputs(gfz, dir / "gfz-l");
  CHECK(fs::exists(dir / "gfz-l" / "epochs_seed2.csv"));
  CHECK(fs::exists(dir / "gfz-l" / "summary.json"));

  std::ostringstream log;
  auto rows = cmd_report(dir, log);
  REQUIRE(rows.size() == 1u);
  CHECK_FALSE(rows[0].relative);
  CHECK(log.str().find("warning") != std::string::npos);

  const auto full = finetune(cfg, pre, task, "full", seeds, 1);
  write_finetune_outputs(full, dir / "full");
  rows = cmd_report(dir, log);
  REQUIRE(rows.size() == 2u);
  for (const auto& r : rows) {
    REQUIRE(r.relative);
    if (r.strategy == "full")
      CHECK(*r.relative == 0.0);
    else
      CHECK(*r.relative == doctest::Approx(relative_map(gfz.mean_val_map, full.mean_val_map)));
  }
  CHECK(lines_of(slurp(dir / "report" / "relative_map.csv")).size() == 3u);

  std::vector<std::string> names;
  const auto matrix = read_heatmap_matrix(dir / "gfz-l" / "heatmap_seed1.csv", &names);
  CHECK(matrix.size() == 8u);
  CHECK(names.size() == 8u);
  CHECK(matrix[0].size() == gfz.runs[0].run.records.size());
  CHECK(fs::exists(dir / "report" / "heatmap_gfz-l.svg"));
  CHECK(slurp(dir / "report" / "heatmap_gfz-l.svg").rfind("<svg", 0) == 0);

  fs::remove_all(dir / "gfz-l");
  fs::remove_all(dir / "full");
  fs::remove_all(dir / "report");
  CHECK_THROWS(cmd_report(dir, log));
}

TEST_CASE("report with only full fine-tuning") {
  ExperimentConfig cfg = tiny_config();
  cfg.train.max_epochs = 2;
  const TaskData task = make_task(cfg.target, cfg.split);
  const auto full = finetune(cfg, tiny_checkpoint_model(), task, "full", {1}, 1);
  const auto dir = fresh_dir("report_full");
  write_finetune_outputs(full, dir / "full");
  std::ostringstream log;
  const auto rows = cmd_report(dir, log);
  REQUIRE(rows.size() == 1u);
  CHECK(*rows[0].relative == 0.0);
}

TEST_CASE("linear probing leaves the checkpoint backbone intact") {
  ExperimentConfig cfg = tiny_config();
  cfg.train.max_epochs = 3;
  const TaskData task = make_task(cfg.target, cfg.split);
  const Model& pre = tiny_checkpoint_model();
  const auto lp = finetune(cfg, pre, task, "lp", {1, 2}, 1);
  for (const auto& r : lp.runs)
    for (int i = 0; i + 1 < pre.layer_count(); ++i) {
      CHECK(r.run.model.layers[i].weight.same_values(pre.layers[i].weight));
      CHECK(r.run.model.layers[i].bias.same_values(pre.layers[i].bias));
    }
}

TEST_CASE("sweep runs every grid point for every seed") {
  ExperimentConfig cfg = tiny_config();
  cfg.train.max_epochs = 1;
  cfg.seeds = {1, 2, 3};
  const auto dir = fresh_dir("sweep");
  save_checkpoint(dir / "pre.gfzc", tiny_checkpoint_model());
  std::ostringstream log;
  const auto rows = cmd_sweep(cfg, dir / "pre.gfzc", SweepAxis::EpsilonCond,
                              default_sweep_values(SweepAxis::EpsilonCond), dir / "out", log);
  REQUIRE(rows.size() == 5u);
  std::size_t runs = 0;
  for (const auto& r : rows) runs += r.summary.runs.size();
  CHECK(runs == 15u);
  const auto table = lines_of(slurp(dir / "out" / "sweep_epsilon_cond.csv"));
  CHECK(table.size() == 6u);
  CHECK(table[0].rfind("epsilon_cond,", 0) == 0);
  CHECK(sweep_csv(SweepAxis::EpsilonCond, rows) == slurp(dir / "out" / "sweep_epsilon_cond.csv"));

  const auto rerun = cmd_sweep(cfg, dir / "pre.gfzc", SweepAxis::EpsilonCond,
                               default_sweep_values(SweepAxis::EpsilonCond), dir / "out2", log);
  CHECK(sweep_csv(SweepAxis::EpsilonCond, rerun) == sweep_csv(SweepAxis::EpsilonCond, rows));
}

TEST_CASE("parallel_for") {
  std::vector<int> hits(20, 0);
  parallel_for(20, 4, [&](int i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(5, 2, [](int i) {
                    if (i == 3) throw ConfigError("boom");
                  }),
                  ConfigError);
}
