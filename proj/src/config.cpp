#include "gfz/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace gfz {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& text, const std::string& key) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty())
    throw ConfigError("key '" + key + "': cannot parse '" + text + "' as a number");
  return value;
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + text + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& key) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(trim(item), key));
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

template <typename T, typename Field>
Setter number(Field field) {
  return [field](ExperimentConfig& c, const std::string& v, const std::string& k) { field(c) = parse_number<T>(v, k); };
}

void add_dataset_keys(std::map<std::string, Setter>& keys, const std::string& prefix,
                      DatasetSpec ExperimentConfig::*member) {
  auto ds = [member](ExperimentConfig& c) -> DatasetSpec& { return c.*member; };
  keys[prefix + ".image_size"] = number<int>([ds](ExperimentConfig& c) -> int& { return ds(c).image_size; });
  keys[prefix + ".class_count"] = number<int>([ds](ExperimentConfig& c) -> int& { return ds(c).class_count; });
  keys[prefix + ".sample_count"] = number<int>([ds](ExperimentConfig& c) -> int& { return ds(c).sample_count; });
  keys[prefix + ".seed"] =
      number<std::uint64_t>([ds](ExperimentConfig& c) -> std::uint64_t& { return ds(c).seed; });
  keys[prefix + ".prevalence"] = [ds](ExperimentConfig& c, const std::string& v, const std::string& k) {
    ds(c).prevalence = parse_list<double>(v, k);
  };
  keys[prefix + ".shift.hue"] = number<double>([ds](ExperimentConfig& c) -> double& { return ds(c).shift.hue_degrees; });
  keys[prefix + ".shift.brightness"] =
      number<double>([ds](ExperimentConfig& c) -> double& { return ds(c).shift.brightness; });
  keys[prefix + ".shift.noise"] =
      number<double>([ds](ExperimentConfig& c) -> double& { return ds(c).shift.noise_sigma; });
  keys[prefix + ".shift.texture"] = number<int>([ds](ExperimentConfig& c) -> int& { return ds(c).shift.texture; });
  keys[prefix + ".cooccurrence"] = [ds](ExperimentConfig& c, const std::string& v, const std::string& k) {
    const auto p = parse_number<double>(v, k);
    if (p == 0.0)
      ds(c).cooccurrence.reset();
    else
      ds(c).cooccurrence = Cooccurrence{0, 2, p};
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> k;
    k["strategy"] = [](ExperimentConfig& c, const std::string& v, const std::string&) { c.strategy = v; };
    k["gfz.epsilon_cond"] = number<int>([](ExperimentConfig& c) -> int& { return c.epsilon_cond; });
    k["gfz.epsilon_step"] = number<int>([](ExperimentConfig& c) -> int& { return c.epsilon_step; });
    k["gfz.freeze_ratio"] = number<double>([](ExperimentConfig& c) -> double& { return c.freeze_ratio; });
    k["gfz.classifier_freeze_exempt"] = [](ExperimentConfig& c, const std::string& v, const std::string& key) {
      c.classifier_freeze_exempt = parse_bool(v, key);
    };
    k["train.base_lr"] = number<double>([](ExperimentConfig& c) -> double& { return c.train.base_lr; });
    k["train.batch_size"] = number<int>([](ExperimentConfig& c) -> int& { return c.train.batch_size; });
    k["train.max_epochs"] = number<int>([](ExperimentConfig& c) -> int& { return c.train.max_epochs; });
    k["train.patience"] = number<int>([](ExperimentConfig& c) -> int& { return c.train.patience; });
    k["train.eval_batch_size"] = number<int>([](ExperimentConfig& c) -> int& { return c.train.eval_batch_size; });
    k["train.augment"] = [](ExperimentConfig& c, const std::string& v, const std::string& key) {
      c.train.augment = parse_bool(v, key);
    };
    k["seeds"] = [](ExperimentConfig& c, const std::string& v, const std::string& key) {
      c.seeds = parse_list<std::uint64_t>(v, key);
    };
    k["model.widths"] = [](ExperimentConfig& c, const std::string& v, const std::string& key) {
      c.widths = parse_list<int>(v, key);
    };
    k["baseline.lp_epochs"] = number<int>([](ExperimentConfig& c) -> int& { return c.lp_epochs; });
    k["baseline.unfreeze_step"] = number<int>([](ExperimentConfig& c) -> int& { return c.unfreeze_step; });
    k["baseline.sp_a"] = number<double>([](ExperimentConfig& c) -> double& { return c.sp_a; });
    k["baseline.sp_b"] = number<double>([](ExperimentConfig& c) -> double& { return c.sp_b; });
    k["pretrain.epochs"] = number<int>([](ExperimentConfig& c) -> int& { return c.pretrain_epochs; });
    k["pretrain.lr"] = number<double>([](ExperimentConfig& c) -> double& { return c.pretrain_lr; });
    k["pretrain.seed"] = number<std::uint64_t>([](ExperimentConfig& c) -> std::uint64_t& { return c.pretrain_seed; });
    k["split"] = [](ExperimentConfig& c, const std::string& v, const std::string& key) {
      const auto f = parse_list<double>(v, key);
      if (f.size() != 3) throw ConfigError("key 'split': expected three fractions train,val,test");
      c.split = {f[0], f[1], f[2]};
    };
    add_dataset_keys(k, "source", &ExperimentConfig::source);
    add_dataset_keys(k, "target", &ExperimentConfig::target);
    return k;
  }();
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (std::find(strategy_names().begin(), strategy_names().end(), strategy) == strategy_names().end())
    throw ConfigError("unknown strategy '" + strategy + "'");
  train.validate();
  GfzSettings{LayerPercent{freeze_ratio}, epsilon_cond, epsilon_step, classifier_freeze_exempt}.validate(
      train.patience);
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (widths.empty()) throw ConfigError("model.widths must be nonempty");
  for (int w : widths)
    if (w < 1) throw ConfigError("model.widths must be positive");
  if (lp_epochs < 0) throw ConfigError("baseline.lp_epochs must be >= 0");
  if (unfreeze_step < 1) throw ConfigError("baseline.unfreeze_step must be >= 1");
  if (!(sp_a >= 0.0 && sp_b >= 0.0)) throw ConfigError("SP coefficients must be >= 0");
  if (pretrain_epochs < 1) throw ConfigError("pretrain.epochs must be >= 1");
  if (!(pretrain_lr > 0.0)) throw ConfigError("pretrain.lr must be > 0");
  source.validate();
  target.validate();
  double total = 0.0;
  for (double f : split) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be > 0");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("line " + std::to_string(number) + ": unknown key '" + key + "'");
    try {
      it->second(cfg, value, key);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names{"gfz-l", "gfz-b1", "gfz-b2", "full", "lp",      "lp-ft",
                                              "g-lf",  "g-fl",   "l1sp",   "l2sp", "auto-rgn"};
  return names;
}

bool is_gfz_strategy(const std::string& name) { return name == "gfz-l" || name == "gfz-b1" || name == "gfz-b2"; }

GfzSettings gfz_settings(const ExperimentConfig& cfg, const std::string& name) {
  GfzSettings s;
  if (name == "gfz-l")
    s.policy = LayerPercent{cfg.freeze_ratio};
  else if (name == "gfz-b1")
    s.policy = BlockOne{};
  else if (name == "gfz-b2")
    s.policy = BlockOneAveragedLr{};
  else
    throw ConfigError("'" + name + "' is not a gradual-freezing strategy");
  s.epsilon_cond = cfg.epsilon_cond;
  s.epsilon_step = cfg.epsilon_step;
  s.classifier_freeze_exempt = cfg.classifier_freeze_exempt;
  s.validate(cfg.train.patience);
  return s;
}

StrategySpec baseline_spec(const ExperimentConfig& cfg, const std::string& name) {
  StrategySpec spec;
  if (name == "full")
    spec = FullFT{};
  else if (name == "lp")
    spec = LinearProbe{};
  else if (name == "lp-ft")
    spec = LpFt{cfg.lp_epochs};
  else if (name == "g-lf")
    spec = GradualUnfreezeLastFirst{cfg.unfreeze_step};
  else if (name == "g-fl")
    spec = GradualUnfreezeFirstLast{cfg.unfreeze_step};
  else if (name == "l1sp")
    spec = L1SP{cfg.sp_a, cfg.sp_b};
  else if (name == "l2sp")
    spec = L2SP{cfg.sp_a, cfg.sp_b};
  else if (name == "auto-rgn")
    spec = AutoRGN{};
  else
    throw ConfigError("'" + name + "' is not a baseline strategy");
  validate_strategy(spec);
  return spec;
}

}  // namespace gfz
