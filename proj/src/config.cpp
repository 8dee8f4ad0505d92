#include "gsfl/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "gsfl/binio.hpp"

namespace gsfl {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// A blank value is an empty list; "1,,2" keeps the empty item so it fails to parse.
std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    out.push_back(trim(std::string_view(s).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_integer(const std::string& s, T& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& source) {
  KeyValueConfig cfg;
  cfg.source_ = source;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (t.empty()) continue;
    const auto where = source + ":" + std::to_string(line_no);
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) fail(ErrorKind::kUsage, where + ": bad section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) fail(ErrorKind::kUsage, where + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) fail(ErrorKind::kUsage, where + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.has(full)) fail(ErrorKind::kUsage, where + ": duplicate key " + full);
    cfg.entries_.emplace_back(full, value);
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  const auto bytes = binio::read_file(path);
  return parse(std::string(bytes.begin(), bytes.end()), path);
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void KeyValueConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    fail(ErrorKind::kUsage, "override \"" + assignment + "\" is not key=value");
  }
  set(trim(std::string_view(assignment).substr(0, eq)),
      trim(std::string_view(assignment).substr(eq + 1)));
}

bool KeyValueConfig::has(const std::string& key) const { return get(key).has_value(); }

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

void KeyValueConfig::bad_value(const std::string& key, const std::string& expected) const {
  fail(ErrorKind::kUsage, (source_.empty() ? std::string("config") : source_) + ": key " + key +
                              " = \"" + get(key).value_or("") + "\" is not " + expected);
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  char* end = nullptr;
  const double d = std::strtod(v->c_str(), &end);
  if (v->empty() || end != v->c_str() + v->size()) bad_value(key, "a number");
  return d;
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::int64_t out = 0;
  if (!parse_integer(*v, out)) bad_value(key, "an integer");
  return out;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  if (!parse_integer(*v, out)) bad_value(key, "a nonnegative integer");
  return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  bad_value(key, "a boolean");
}

std::vector<std::uint32_t> KeyValueConfig::get_u32_list(const std::string& key,
                                                        std::vector<std::uint32_t> fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::vector<std::uint32_t> out;
  for (const auto& item : split_list(*v)) {
    std::uint32_t x = 0;
    if (!parse_integer(item, x)) bad_value(key, "a comma-separated list of nonnegative integers");
    out.push_back(x);
  }
  return out;
}

std::vector<std::uint64_t> KeyValueConfig::get_u64_list(const std::string& key,
                                                        std::vector<std::uint64_t> fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(*v)) {
    std::uint64_t x = 0;
    if (!parse_integer(item, x)) bad_value(key, "a comma-separated list of nonnegative integers");
    out.push_back(x);
  }
  return out;
}

void KeyValueConfig::require_known(const std::vector<std::string>& allowed,
                                   const std::vector<std::string>& dynamic_prefixes) const {
  for (const auto& [k, v] : entries_) {
    if (std::find(allowed.begin(), allowed.end(), k) != allowed.end()) continue;
    bool dynamic = false;
    for (const auto& p : dynamic_prefixes) dynamic = dynamic || k.rfind(p, 0) == 0;
    if (!dynamic) fail(ErrorKind::kUsage, "unknown configuration key \"" + k + "\"");
  }
}

std::vector<std::string> KeyValueConfig::sections_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (k.rfind(prefix, 0) != 0) continue;
    const auto dot = k.rfind('.');
    if (dot == std::string::npos || dot < prefix.size()) continue;
    std::string section = k.substr(0, dot);
    if (std::find(out.begin(), out.end(), section) == out.end()) out.push_back(section);
  }
  return out;
}

const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys = {
      "data.train", "data.test", "data.groups",
      "net.code_dim", "net.hidden", "net.activation", "net.topology",
      "loss.preset", "loss.alpha1", "loss.alpha2", "loss.alpha3", "loss.weight_decay",
      "loss.reduction",
      "centers.eta", "centers.divisor_mode",
      "train.batch_size", "train.epochs", "train.lr", "train.seed", "train.optimizer",
      "train.beta1", "train.beta2", "train.eps", "train.momentum", "train.schedule",
      "train.decay_factor", "train.decay_every", "train.decay_after", "train.patience",
      "train.freeze_extractor_phase", "train.freeze_epochs", "train.finetune_lr",
      "train.convergence_margin",
      "extractor.out_dim", "extractor.hidden", "extractor.activation",
      "output.checkpoint", "output.log"};
  return keys;
}

const std::vector<std::string>& ablation_run_keys() {
  static const std::vector<std::string> keys = {"variant", "groups", "num_groups", "toggles",
                                                "classes", "class_growth", "class_order_seed", "seeds",
                                                "kmeans_max_iters"};
  return keys;
}

TrainConfig train_config_from(const KeyValueConfig& cfg) {
  TrainConfig tc;
  // Two weight presets: heads on directly-used VGG features, and heads on other
  // extractors (stronger center terms, lighter weight decay).
  const auto preset = cfg.get_string("loss.preset", "vgg_direct");
  if (preset == "vgg_direct") {
    tc.loss_weights = {0.01, 0.01, 0.01, 1e-4};
  } else if (preset == "external_backbone") {
    tc.loss_weights = {0.01, 0.1, 0.1, 1e-5};
  } else {
    fail(ErrorKind::kUsage, "loss.preset must be vgg_direct or external_backbone");
  }
  tc.loss_weights.alpha1 = cfg.get_double("loss.alpha1", tc.loss_weights.alpha1);
  tc.loss_weights.alpha2 = cfg.get_double("loss.alpha2", tc.loss_weights.alpha2);
  tc.loss_weights.alpha3 = cfg.get_double("loss.alpha3", tc.loss_weights.alpha3);
  tc.loss_weights.weight_decay = cfg.get_double("loss.weight_decay", tc.loss_weights.weight_decay);
  const auto reduction = cfg.get_string("loss.reduction", "sum");
  if (reduction == "sum") {
    tc.reduction = CenterReduction::kSum;
  } else if (reduction == "mean") {
    tc.reduction = CenterReduction::kMean;
  } else {
    fail(ErrorKind::kUsage, "loss.reduction must be sum or mean");
  }

  tc.net.code_dim = static_cast<std::uint32_t>(cfg.get_int("net.code_dim", 0));
  tc.net.hidden_dims = cfg.get_u32_list("net.hidden", {64});
  tc.net.activation = parse_activation(cfg.get_string("net.activation", "rectifier"));
  const auto topo = cfg.get_string("net.topology", "full");
  if (topo == "full") {
    tc.net.topology = Topology::kFull;
  } else if (topo == "dis_only") {
    tc.net.topology = Topology::kDiscriminativeOnly;
  } else {
    fail(ErrorKind::kUsage, "net.topology must be full or dis_only");
  }

  tc.eta = cfg.get_double("centers.eta", 0.01);
  tc.divisor_mode = parse_divisor_mode(cfg.get_string("centers.divisor_mode", "group_size"));

  const auto batch = cfg.get_int("train.batch_size", 32);
  if (batch < 1) fail(ErrorKind::kUsage, "train.batch_size must be >= 1");
  tc.batch_size = static_cast<std::size_t>(batch);
  tc.epochs = static_cast<int>(cfg.get_int("train.epochs", 50));
  tc.lr = cfg.get_double("train.lr", 1e-3);
  tc.seed = cfg.get_u64("train.seed", 0);
  const auto opt = cfg.get_string("train.optimizer", "adam");
  if (opt == "adam") {
    tc.optimizer.kind = OptimizerConfig::Kind::kAdam;
  } else if (opt == "sgd") {
    tc.optimizer.kind = OptimizerConfig::Kind::kSgd;
  } else {
    fail(ErrorKind::kUsage, "train.optimizer must be adam or sgd");
  }
  tc.optimizer.adam.beta1 = cfg.get_double("train.beta1", 0.9);
  tc.optimizer.adam.beta2 = cfg.get_double("train.beta2", 0.999);
  tc.optimizer.adam.eps = cfg.get_double("train.eps", 1e-8);
  tc.optimizer.momentum = cfg.get_double("train.momentum", 0.9);

  const auto sched = cfg.get_string("train.schedule", "constant");
  if (sched == "constant") {
    tc.schedule.kind = LrSchedule::Kind::kConstant;
  } else if (sched == "step") {
    tc.schedule.kind = LrSchedule::Kind::kStepDecay;
  } else if (sched == "plateau") {
    tc.schedule.kind = LrSchedule::Kind::kPlateau;
    tc.schedule.factor = 0.1;
  } else {
    fail(ErrorKind::kUsage, "train.schedule must be constant, step or plateau");
  }
  tc.schedule.factor = cfg.get_double("train.decay_factor", tc.schedule.factor);
  tc.schedule.every = static_cast<int>(cfg.get_int("train.decay_every", 10));
  tc.schedule.after = static_cast<int>(cfg.get_int("train.decay_after", 20));
  tc.schedule.patience = static_cast<int>(cfg.get_int("train.patience", 6));
  tc.freeze_extractor_phase = cfg.get_bool("train.freeze_extractor_phase", false);
  tc.freeze_epochs = static_cast<int>(cfg.get_int("train.freeze_epochs", tc.epochs / 2));
  tc.finetune_lr = cfg.get_double("train.finetune_lr", 1e-4);
  tc.convergence_margin = cfg.get_double("train.convergence_margin", 0.0025);

  tc.extractor.out_dim = static_cast<std::uint32_t>(cfg.get_int("extractor.out_dim", 0));
  tc.extractor.hidden_dims = cfg.get_u32_list("extractor.hidden", {});
  tc.extractor.activation = parse_activation(cfg.get_string("extractor.activation", "rectifier"));

  try {
    tc.validate();
    tc.net.input_dim = 1;
    tc.net.num_classes = 1;
    tc.net.validate();
    tc.net.input_dim = 0;
    tc.net.num_classes = 0;
  } catch (const Error& e) {
    fail(ErrorKind::kUsage, e.what());
  }
  return tc;
}

std::vector<AblationSpec> ablation_plan_from(const KeyValueConfig& cfg,
                                             std::uint32_t num_classes) {
  std::vector<std::string> allowed = train_config_keys();
  std::vector<AblationSpec> plan;
  for (const auto& section : cfg.sections_with_prefix("run.")) {
    for (const auto& k : ablation_run_keys()) allowed.push_back(section + "." + k);
  }
  cfg.require_known(allowed);

  for (const auto& section : cfg.sections_with_prefix("run.")) {
    const auto key = [&section](const char* k) { return section + "." + k; };
    AblationSpec spec;
    spec.name = section.substr(4);
    spec.variant = parse_variant(cfg.get_string(key("variant"), "full"));
    spec.group_source = parse_group_source(cfg.get_string(key("groups"), "kmeans"));
    spec.num_groups = static_cast<std::uint32_t>(
        cfg.get_int(key("num_groups"), spec.group_source == GroupSource::kSingle ? 1 : 5));
    const auto toggles = cfg.get_u32_list(key("toggles"), {1, 1, 1});
    if (toggles.size() != 3) fail(ErrorKind::kUsage, key("toggles") + " needs three 0/1 entries");
    for (std::size_t i = 0; i < 3; ++i) spec.loss_toggles[i] = toggles[i] != 0;
    for (auto c : cfg.get_u32_list(key("classes"), {})) spec.class_subset.push_back(static_cast<int>(c));
    spec.seeds = cfg.get_u64_list(key("seeds"), {0});
    spec.kmeans_max_iters = static_cast<int>(cfg.get_int(key("kmeans_max_iters"), 300));
    try {
      spec.validate();
    } catch (const Error& e) {
      fail(ErrorKind::kUsage, e.what());
    }

    const auto growth = cfg.get_u32_list(key("class_growth"), {});
    if (growth.empty()) {
      plan.push_back(std::move(spec));
      continue;
    }
    if (!spec.class_subset.empty()) {
      fail(ErrorKind::kUsage, section + ": classes and class_growth are exclusive");
    }
    std::vector<std::vector<int>> subsets;
    try {
      subsets = class_growth_subsets(num_classes, growth, cfg.get_u64(key("class_order_seed"), 0));
    } catch (const Error& e) {
      fail(ErrorKind::kUsage, section + ": " + e.what());
    }
    for (std::size_t i = 0; i < growth.size(); ++i) {
      AblationSpec g = spec;
      g.name = spec.name + "/c" + std::to_string(growth[i]);
      g.class_subset = subsets[i];
      plan.push_back(std::move(g));
    }
  }
  if (plan.empty()) fail(ErrorKind::kUsage, "ablation spec defines no [run.NAME] sections");
  return plan;
}

}  // namespace gsfl
