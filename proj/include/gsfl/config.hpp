#pragma once

// Flat `key = value` configuration with `[section]` headers. Keys are stored
// as "section.key"; unknown keys are rejected before any work starts.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gsfl/evalab.hpp"
#include "gsfl/trainer.hpp"

namespace gsfl {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& source);
  static KeyValueConfig load(const std::string& path);

  // Later assignments win; used for command-line overrides.
  void set(const std::string& key, const std::string& value);
  // "section.key=value"
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::uint32_t> get_u32_list(const std::string& key,
                                          std::vector<std::uint32_t> fallback) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                          std::vector<std::uint64_t> fallback) const;

  // Throws kUsage naming the first key that is neither listed nor under one of
  // the allowed dynamic section prefixes (e.g. "run.").
  void require_known(const std::vector<std::string>& allowed,
                     const std::vector<std::string>& dynamic_prefixes = {}) const;

  // Distinct section names starting with `prefix`, in first-appearance order.
  std::vector<std::string> sections_with_prefix(const std::string& prefix) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept {
    return entries_;
  }

 private:
  [[noreturn]] void bad_value(const std::string& key, const std::string& expected) const;

  std::string source_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Every key train_config_from understands.
const std::vector<std::string>& train_config_keys();
// Keys valid inside a [run.NAME] section of an ablation spec.
const std::vector<std::string>& ablation_run_keys();

TrainConfig train_config_from(const KeyValueConfig& cfg);

// One AblationSpec per [run.NAME] section; a `class_growth` list expands a run
// into nested class-subset runs named NAME/cK drawn from `num_classes`.
std::vector<AblationSpec> ablation_plan_from(const KeyValueConfig& cfg, std::uint32_t num_classes);

}  // namespace gsfl
