#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "pollenstack/baseline_clf.hpp"
#include "pollenstack/canonicalize.hpp"
#include "pollenstack/focus_select.hpp"
#include "pollenstack/stack_core.hpp"

namespace pollenstack {

// Environment variable that replaces the built-in default seed.
inline constexpr const char* kSeedEnvVar = "POLLENSTACK_SEED";
inline constexpr std::uint64_t kDefaultSeed = 42;

// Every tunable of the pipeline. Defaults follow the reference training
// setup: 10 folds, 30 epochs, learning rate 1e-4, augmentation threshold
// 0.5, 6 layers, batch size 16 for training and validation.
struct PipelineConfig {
  int folds = 10;
  int epochs = 30;
  double learning_rate = 1e-4;
  double augmentation_threshold = 0.5;
  int layers = 6;
  int train_batch = 16;
  int val_batch = 16;
  std::uint64_t seed = kDefaultSeed;
  double test_fraction = 0.10;
  PadMode pad_mode = PadMode::PerLayer;
  int pool_grid = 16;
  CannyParams canny;
  unsigned workers = 0;  // 0 = all available cores
  LabelSource label_source = LabelSource::DirectoryPerClass;
  std::string sidecar = "labels.tsv";

  // Throws ConfigError for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  // Applies "key = value" lines ('#' starts a comment) on top of the
  // current values.
  void apply_text(std::string_view text);
  // Every key, one "key = value" line each; apply_text() restores it exactly.
  std::string to_text() const;

  void validate() const;

  TrainConfig train_config() const;
  AugmentConfig augment_config() const;
  LabelingRule labeling_rule() const;

  bool operator==(const PipelineConfig&) const = default;
};

struct ConfigKey {
  std::string_view name;
  std::string_view help;
};

std::span<const ConfigKey> config_keys();

// Built-in defaults with POLLENSTACK_SEED applied when set.
PipelineConfig default_config();

// One line per key: name, default and description.
std::string config_reference();

}  // namespace pollenstack
