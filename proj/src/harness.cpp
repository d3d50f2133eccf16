#include "gfz/harness.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gfz/checkpoint.hpp"

namespace gfz {
namespace {

std::string num(double v) { return fmt::format("{:.9g}", v); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

TaskData make_task(const DatasetSpec& spec, const std::array<double, 3>& split) {
  const Dataset all = generate_dataset(spec);
  const auto idx = split_dataset(all.count(), split, spec.seed);
  return TaskData{all.subset(idx.train), all.subset(idx.val), all.subset(idx.test)};
}

int thread_budget() {
  const char* env = std::getenv("GFZ_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError(std::string("GFZ_THREADS must be a positive integer, got '") + env + "'");
  return static_cast<int>(std::min<long>(v, 256));
}

void parallel_for(int n, int threads, const std::function<void(int)>& job) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

PretrainOutcome pretrain(const ExperimentConfig& cfg, std::ostream& log) {
  const TaskData task = make_task(cfg.source, cfg.split);
  Model model = build_mini_resnet(cfg.source.class_count, cfg.widths, cfg.pretrain_seed, cfg.source.channels);
  TrainSettings settings = cfg.train;
  settings.base_lr = cfg.pretrain_lr;
  settings.max_epochs = cfg.pretrain_epochs;
  settings.patience = cfg.pretrain_epochs;
  settings.seed = cfg.pretrain_seed;

  RunHooks hooks;
  hooks.on_epoch_end = [&log](int epoch, const Model&, const MetricsRecord& r) {
    log << fmt::format("pretrain epoch {:3d}  loss {:.4f}  val mAP {:.4f}\n", epoch, r.train_loss, r.val_map);
  };
  FullFtSchedule schedule;
  PretrainOutcome out;
  out.run = run_schedule(model, task, settings, schedule, hooks);
  out.model = out.run.model;
  out.val_map = out.run.best_val_map;

  PredictionSet prior;
  prior.scores.resize(task.val.count(), task.val.class_count);
  prior.labels.resize(task.val.count(), task.val.class_count);
  for (int c = 0; c < task.val.class_count; ++c) {
    double positives = 0.0;
    for (int i = 0; i < task.train.count(); ++i) positives += task.train.label_row(i)[c];
    for (int i = 0; i < task.val.count(); ++i) {
      prior.scores(i, c) = positives / task.train.count();
      prior.labels(i, c) = task.val.label_row(i)[c];
    }
  }
  out.prior_map = mean_average_precision(prior);
  log << fmt::format("pretrain done: best val mAP {:.4f} at epoch {}, prevalence-only mAP {:.4f}\n", out.val_map,
                     out.run.best_epoch, out.prior_map);
  return out;
}

PretrainOutcome cmd_pretrain(const ExperimentConfig& cfg, const std::filesystem::path& out_path, std::ostream& log) {
  auto out = pretrain(cfg, log);
  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  save_checkpoint(out_path, out.model);
  log << "checkpoint written to " << out_path.string() << "\n";
  return out;
}

void check_architecture(const ExperimentConfig& cfg, const Model& pretrained) {
  const Model expected = build_mini_resnet(cfg.source.class_count, cfg.widths, 0, cfg.source.channels);
  bool same = pretrained.architecture == expected.architecture && pretrained.layer_count() == expected.layer_count();
  for (int i = 0; same && i + 1 < expected.layer_count(); ++i)
    same = pretrained.layers[i].weight.shape() == expected.layers[i].weight.shape();
  if (same) same = pretrained.layers.back().weight.dim(0) == expected.layers.back().weight.dim(0);
  if (!same)
    throw ConfigError("checkpoint architecture does not match the configured model (model.widths, source.channels)");
  if (cfg.target.channels != pretrained.input_channels)
    throw ConfigError("target images have " + std::to_string(cfg.target.channels) + " channels, checkpoint expects " +
                      std::to_string(pretrained.input_channels));
}

FinetuneSummary finetune(const ExperimentConfig& cfg, const Model& pretrained, const TaskData& task,
                         const std::string& strategy, const std::vector<std::uint64_t>& seeds, int threads) {
  if (seeds.empty()) throw ConfigError("finetune: no seeds given");
  const bool gfz = is_gfz_strategy(strategy);
  const auto gfz_cfg = gfz ? std::optional(gfz_settings(cfg, strategy)) : std::nullopt;
  const auto baseline = gfz ? std::nullopt : std::optional(baseline_spec(cfg, strategy));

  FinetuneSummary summary;
  summary.strategy = strategy;
  summary.runs.resize(seeds.size());
  parallel_for(static_cast<int>(seeds.size()), threads, [&](int k) {
    SeedRun& out = summary.runs[k];
    out.seed = seeds[k];
    TrainSettings settings = cfg.train;
    settings.seed = seeds[k];
    Model model = replace_classifier(pretrained, task.train.class_count, seeds[k]);
    out.run = gfz ? run_gfz(std::move(model), task, settings, *gfz_cfg)
                  : apply_strategy(std::move(model), task, *baseline, settings);

    const auto preds = predict(out.run.model, task.test, settings.eval_batch_size);
    const auto ap = mean_average_precision_detail(preds);
    out.test_map = ap.mean;
    out.test_auc = mean_roc_auc(preds);
    for (int c = 0; c < preds.class_count(); ++c) {
      const auto s = preds.class_scores(c);
      const auto l = preds.class_labels(c);
      out.test_pr.push_back(pr_curve(s, l));
    }
    std::set<int> skipped(ap.skipped_classes.begin(), ap.skipped_classes.end());
    for (const auto& rec : out.run.records)
      for (std::size_t c = 0; c < rec.class_ap.size(); ++c)
        if (!rec.class_ap[c]) skipped.insert(static_cast<int>(c));
    out.skipped_classes.assign(skipped.begin(), skipped.end());
  });

  std::vector<double> val, test;
  for (const auto& r : summary.runs) {
    val.push_back(r.run.best_val_map);
    test.push_back(r.test_map);
  }
  std::tie(summary.mean_val_map, summary.std_val_map) = mean_std(val);
  std::tie(summary.mean_test_map, summary.std_test_map) = mean_std(test);
  return summary;
}

std::string epochs_csv(const RunResult& run) {
  const auto& layers = run.model.layers;
  const std::size_t classes = run.records.empty() ? 0 : run.records.front().class_ap.size();
  std::string out = "epoch,phase,train_loss,val_map,val_auc,trainable_layer_count,cumulative_updates";
  for (const char* group : {"trained", "rgn", "alpha", "lr"})
    for (const auto& l : layers) out += fmt::format(",{}.{}", group, l.name);
  for (std::size_t c = 0; c < classes; ++c) out += fmt::format(",ap.class{}", c);
  out += '\n';
  for (const auto& r : run.records) {
    out += fmt::format("{},{},{},{},{},{},{}", r.epoch, r.phase, num(r.train_loss), num(r.val_map), num(r.val_auc),
                       r.trainable_layer_count, r.cumulative_updates);
    for (bool t : r.trained) out += t ? ",1" : ",0";
    for (double v : r.rgn) out += "," + num(v);
    for (double v : r.alpha) out += "," + num(v);
    for (double v : r.effective_lr) out += "," + num(v);
    for (const auto& ap : r.class_ap) out += "," + (ap ? num(*ap) : std::string());
    out += '\n';
  }
  return out;
}

std::string heatmap_csv(const RunResult& run) {
  std::string out = "epoch";
  for (const auto& l : run.model.layers) out += "," + l.name;
  out += '\n';
  for (const auto& r : run.records) {
    out += std::to_string(r.epoch);
    for (bool t : r.trained) out += t ? ",1" : ",0";
    out += '\n';
  }
  return out;
}

std::string pr_curve_csv(const SeedRun& run) {
  std::string out = "class,recall,precision\n";
  for (std::size_t c = 0; c < run.test_pr.size(); ++c) {
    if (!run.test_pr[c]) continue;
    for (const auto& p : *run.test_pr[c]) out += fmt::format("{},{},{}\n", c, num(p.recall), num(p.precision));
  }
  return out;
}

std::string summary_json(const FinetuneSummary& summary) {
  nlohmann::ordered_json j;
  j["strategy"] = summary.strategy;
  j["seeds"] = nlohmann::ordered_json::array();
  j["final_val_map"] = {{"mean", summary.mean_val_map}, {"std", summary.std_val_map}};
  j["test_map"] = {{"mean", summary.mean_test_map}, {"std", summary.std_test_map}};
  j["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : summary.runs) {
    j["seeds"].push_back(r.seed);
    const auto& last = r.run.records.back();
    j["runs"].push_back({{"seed", r.seed},
                         {"final_val_map", r.run.best_val_map},
                         {"best_epoch", r.run.best_epoch},
                         {"epochs_run", static_cast<int>(r.run.records.size())},
                         {"early_stopped", r.run.early_stopped},
                         {"test_map", r.test_map},
                         {"test_auc", r.test_auc},
                         {"cumulative_updates", last.cumulative_updates},
                         {"skipped_classes", r.skipped_classes}});
  }
  return j.dump(2) + "\n";
}

void write_finetune_outputs(const FinetuneSummary& summary, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const auto& r : summary.runs) {
    write_text(out_dir / fmt::format("epochs_seed{}.csv", r.seed), epochs_csv(r.run));
    write_text(out_dir / fmt::format("heatmap_seed{}.csv", r.seed), heatmap_csv(r.run));
    write_text(out_dir / fmt::format("pr_curve_seed{}.csv", r.seed), pr_curve_csv(r));
  }
  write_text(out_dir / "summary.json", summary_json(summary));
}

FinetuneSummary cmd_finetune(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                             const std::filesystem::path& out_dir, std::ostream& log) {
  const Model pretrained = load_checkpoint(checkpoint);
  check_architecture(cfg, pretrained);
  const TaskData task = make_task(cfg.target, cfg.split);
  const auto summary = finetune(cfg, pretrained, task, cfg.strategy, cfg.seeds, thread_budget());
  write_finetune_outputs(summary, out_dir / cfg.strategy);
  for (const auto& r : summary.runs) {
    log << fmt::format("{} seed {}: val mAP {:.4f} (epoch {}), test mAP {:.4f}{}\n", cfg.strategy, r.seed,
                       r.run.best_val_map, r.run.best_epoch, r.test_map, r.run.early_stopped ? ", early stop" : "");
    if (!r.skipped_classes.empty()) {
      std::string list;
      for (int c : r.skipped_classes) list += (list.empty() ? "" : " ") + std::to_string(c);
      log << "  warning: AP undefined (no positives) for classes " << list << "; excluded from the mean\n";
    }
  }
  log << fmt::format("{}: val mAP {:.4f} +- {:.4f} over {} seeds\n", cfg.strategy, summary.mean_val_map,
                     summary.std_val_map, summary.runs.size());
  return summary;
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "epsilon_cond") return SweepAxis::EpsilonCond;
  if (name == "epsilon_step") return SweepAxis::EpsilonStep;
  if (name == "freeze_ratio") return SweepAxis::FreezeRatio;
  throw ConfigError("unknown sweep axis '" + name + "' (epsilon_cond, epsilon_step, freeze_ratio)");
}

std::string sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::EpsilonCond: return "epsilon_cond";
    case SweepAxis::EpsilonStep: return "epsilon_step";
    case SweepAxis::FreezeRatio: return "freeze_ratio";
  }
  return {};
}

std::vector<double> default_sweep_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::EpsilonCond: return {0, 3, 6, 9, 12};
    case SweepAxis::EpsilonStep: return {1, 2, 3, 4, 5};
    case SweepAxis::FreezeRatio: return {0.2, 0.3, 0.4, 0.5, 0.6};
  }
  return {};
}

ExperimentConfig sweep_point(const ExperimentConfig& cfg, SweepAxis axis, double value) {
  if (!is_gfz_strategy(cfg.strategy))
    throw ConfigError("sweeps apply to gradual-freezing strategies, got '" + cfg.strategy + "'");
  ExperimentConfig point = cfg;
  auto as_int = [&](double v) {
    if (v != std::floor(v)) throw ConfigError(sweep_axis_name(axis) + " values must be integers, got " + num(v));
    return static_cast<int>(v);
  };
  switch (axis) {
    case SweepAxis::EpsilonCond: point.epsilon_cond = as_int(value); break;
    case SweepAxis::EpsilonStep: point.epsilon_step = as_int(value); break;
    case SweepAxis::FreezeRatio: point.freeze_ratio = value; break;
  }
  point.validate();
  gfz_settings(point, point.strategy);
  return point;
}

std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows) {
  std::string out = sweep_axis_name(axis) + ",runs,mean_val_map,std_val_map,mean_test_map,std_test_map\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{},{},{}\n", num(r.value), r.summary.runs.size(), num(r.summary.mean_val_map),
                       num(r.summary.std_val_map), num(r.summary.mean_test_map), num(r.summary.std_test_map));
  return out;
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, SweepAxis axis,
                                const std::vector<double>& values, const std::filesystem::path& out_dir,
                                std::ostream& log) {
  std::vector<ExperimentConfig> points;
  for (double v : values) points.push_back(sweep_point(cfg, axis, v));
  const Model pretrained = load_checkpoint(checkpoint);
  check_architecture(cfg, pretrained);
  const TaskData task = make_task(cfg.target, cfg.split);

  std::vector<SweepRow> rows(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) rows[k].value = values[k];
  const auto seeds = cfg.seeds;
  const int jobs = static_cast<int>(values.size() * seeds.size());
  std::vector<FinetuneSummary> single(static_cast<std::size_t>(jobs));
  parallel_for(jobs, thread_budget(), [&](int j) {
    const auto p = static_cast<std::size_t>(j) / seeds.size();
    single[j] = finetune(points[p], pretrained, task, cfg.strategy, {seeds[j % seeds.size()]}, 1);
  });
  for (std::size_t p = 0; p < values.size(); ++p) {
    auto& s = rows[p].summary;
    s.strategy = cfg.strategy;
    std::vector<double> val, test;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      s.runs.push_back(std::move(single[p * seeds.size() + k].runs.front()));
      val.push_back(s.runs.back().run.best_val_map);
      test.push_back(s.runs.back().test_map);
    }
    std::tie(s.mean_val_map, s.std_val_map) = mean_std(val);
    std::tie(s.mean_test_map, s.std_test_map) = mean_std(test);
    write_finetune_outputs(s, out_dir / fmt::format("{}_{}", sweep_axis_name(axis), num(rows[p].value)));
    log << fmt::format("{} = {}: val mAP {:.4f} +- {:.4f}\n", sweep_axis_name(axis), num(rows[p].value),
                       s.mean_val_map, s.std_val_map);
  }
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / fmt::format("sweep_{}.csv", sweep_axis_name(axis)), sweep_csv(axis, rows));
  return rows;
}

std::vector<std::vector<int>> read_heatmap_matrix(const std::filesystem::path& heatmap_csv,
                                                  std::vector<std::string>* layer_names) {
  std::istringstream in(read_text(heatmap_csv));
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty heatmap file '" + heatmap_csv.string() + "'");
  auto header = split_csv_line(line);
  if (header.size() < 2 || header.front() != "epoch")
    throw FormatError("heatmap file '" + heatmap_csv.string() + "' lacks an epoch,<layers> header");
  header.erase(header.begin());
  std::vector<std::vector<int>> matrix(header.size());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size() + 1)
      throw FormatError("heatmap file '" + heatmap_csv.string() + "' has a ragged row");
    for (std::size_t i = 0; i < header.size(); ++i) matrix[i].push_back(cells[i + 1] == "1" ? 1 : 0);
  }
  if (layer_names) *layer_names = header;
  return matrix;
}

std::string heatmap_svg(const std::vector<std::vector<int>>& matrix, const std::vector<std::string>& layer_names) {
  const int cell = 14, left = 110, top = 10;
  const int epochs = matrix.empty() ? 0 : static_cast<int>(matrix.front().size());
  const int width = left + epochs * cell + 10;
  const int height = top + static_cast<int>(matrix.size()) * cell + 30;
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"monospace\" "
      "font-size=\"10\">\n",
      width, height);
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    const int y = top + static_cast<int>(i) * cell;
    out += fmt::format("<text x=\"4\" y=\"{}\">{}</text>\n", y + cell - 3, layer_names.at(i));
    for (int e = 0; e < epochs; ++e)
      out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"#ffffff\"/>\n",
                         left + e * cell, y, cell, cell, matrix[i][e] ? "#2b6cb0" : "#e2e8f0");
  }
  out += fmt::format("<text x=\"{}\" y=\"{}\">epoch 1..{}</text>\n", left, height - 8, epochs);
  out += "</svg>\n";
  return out;
}

std::vector<ReportRow> cmd_report(const std::filesystem::path& run_dir, std::ostream& log) {
  if (!std::filesystem::is_directory(run_dir)) throw FormatError("run directory '" + run_dir.string() + "' not found");
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(run_dir))
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "summary.json")) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw FormatError("no <strategy>/summary.json found under '" + run_dir.string() + "'");

  const auto report_dir = run_dir / "report";
  std::filesystem::create_directories(report_dir);
  std::vector<ReportRow> rows;
  for (const auto& dir : dirs) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text(dir / "summary.json"));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("cannot parse '" + (dir / "summary.json").string() + "': " + e.what());
    }
    ReportRow row;
    row.strategy = j.at("strategy").get<std::string>();
    row.mean_val_map = j.at("final_val_map").at("mean").get<double>();
    row.std_val_map = j.at("final_val_map").at("std").get<double>();
    rows.push_back(row);

    const auto seed = j.at("seeds").at(0).get<std::uint64_t>();
    std::vector<std::string> names;
    const auto matrix = read_heatmap_matrix(dir / fmt::format("heatmap_seed{}.csv", seed), &names);
    std::string csv = "layer";
    for (std::size_t e = 0; e < (matrix.empty() ? 0 : matrix.front().size()); ++e) csv += fmt::format(",e{}", e + 1);
    csv += '\n';
    for (std::size_t i = 0; i < matrix.size(); ++i) {
      csv += names[i];
      for (int v : matrix[i]) csv += fmt::format(",{}", v);
      csv += '\n';
    }
    write_text(report_dir / fmt::format("heatmap_{}.csv", row.strategy), csv);
    write_text(report_dir / fmt::format("heatmap_{}.svg", row.strategy), heatmap_svg(matrix, names));
    write_text(report_dir / fmt::format("pr_{}.csv", row.strategy),
               read_text(dir / fmt::format("pr_curve_seed{}.csv", seed)));
  }

  const auto full = std::find_if(rows.begin(), rows.end(), [](const ReportRow& r) { return r.strategy == "full"; });
  if (full != rows.end()) {
    const double base = full->mean_val_map;
    for (auto& r : rows) r.relative = r.strategy == "full" ? 0.0 : relative_map(r.mean_val_map, base);
  } else {
    log << "warning: no full fine-tuning run in " << run_dir.string() << "; relative mAP left empty\n";
  }
  std::string csv = "strategy,mean_val_map,std_val_map,relative_map\n";
  for (const auto& r : rows)
    csv += fmt::format("{},{},{},{}\n", r.strategy, num(r.mean_val_map), num(r.std_val_map),
                       r.relative ? num(*r.relative) : std::string());
  write_text(report_dir / "relative_map.csv", csv);
  for (const auto& r : rows)
    log << fmt::format("{:<9} val mAP {:.4f} +- {:.4f}  relative {}\n", r.strategy, r.mean_val_map, r.std_val_map,
                       r.relative ? fmt::format("{:+.4f}", *r.relative) : std::string("-"));
  return rows;
}

}  // namespace gfz
