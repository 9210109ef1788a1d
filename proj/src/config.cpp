#include "pollenstack/config.hpp"

#include <array>
#include <cstdlib>
#include <sstream>

#include "pollenstack/error.hpp"
#include "text_util.hpp"

namespace pollenstack {

namespace {

constexpr std::array<ConfigKey, 18> kKeys = {{
    {"folds", "cross-validation folds"},
    {"epochs", "training epochs"},
    {"learning_rate", "learning rate"},
    {"augmentation_threshold", "flip probability per axis on training samples"},
    {"layers", "layers kept around the focal layer"},
    {"train_batch", "training batch size"},
    {"val_batch", "validation batch size"},
    {"seed", "seed for splits, shuffling and augmentation"},
    {"test_fraction", "fraction held out as the test set"},
    {"pad_mode", "padding value source: per-layer or per-stack"},
    {"pool_grid", "baseline feature grid per layer"},
    {"canny_sigma", "Gaussian sigma before edge detection"},
    {"canny_kernel", "Gaussian kernel size (odd)"},
    {"canny_high_quantile", "high threshold quantile of nonzero suppressed magnitudes"},
    {"canny_low_ratio", "low threshold as a fraction of the high one"},
    {"workers", "worker threads, 0 = all cores"},
    {"label_source", "directory (one folder per class) or sidecar"},
    {"sidecar", "label file for label_source = sidecar"},
}};

std::string pad_mode_name(PadMode mode) {
  return mode == PadMode::PerStack ? "per-stack" : "per-layer";
}

template <typename Int>
Int parse_int_value(std::string_view key, std::string_view value) {
  const auto v = text::parse_int<Int>(value);
  if (!v) throw ConfigError("config: " + std::string(key) + " expects an integer, got '" + std::string(value) + "'");
  return *v;
}

double parse_double_value(std::string_view key, std::string_view value) {
  const auto v = text::parse_double(value);
  if (!v) throw ConfigError("config: " + std::string(key) + " expects a number, got '" + std::string(value) + "'");
  return *v;
}

}  // namespace

std::span<const ConfigKey> config_keys() { return kKeys; }

void PipelineConfig::set(std::string_view key, std::string_view raw) {
  const std::string_view value = text::trim(raw);
  if (key == "folds") {
    folds = parse_int_value<int>(key, value);
  } else if (key == "epochs") {
    epochs = parse_int_value<int>(key, value);
  } else if (key == "learning_rate") {
    learning_rate = parse_double_value(key, value);
  } else if (key == "augmentation_threshold") {
    augmentation_threshold = parse_double_value(key, value);
  } else if (key == "layers") {
    layers = parse_int_value<int>(key, value);
  } else if (key == "train_batch") {
    train_batch = parse_int_value<int>(key, value);
  } else if (key == "val_batch") {
    val_batch = parse_int_value<int>(key, value);
  } else if (key == "seed") {
    seed = parse_int_value<std::uint64_t>(key, value);
  } else if (key == "test_fraction") {
    test_fraction = parse_double_value(key, value);
  } else if (key == "pad_mode") {
    if (value == "per-layer") {
      pad_mode = PadMode::PerLayer;
    } else if (value == "per-stack") {
      pad_mode = PadMode::PerStack;
    } else {
      throw ConfigError("config: pad_mode must be per-layer or per-stack");
    }
  } else if (key == "pool_grid") {
    pool_grid = parse_int_value<int>(key, value);
  } else if (key == "canny_sigma") {
    canny.gaussian_sigma = parse_double_value(key, value);
  } else if (key == "canny_kernel") {
    canny.gaussian_kernel = parse_int_value<int>(key, value);
  } else if (key == "canny_high_quantile") {
    canny.high_threshold_quantile = parse_double_value(key, value);
  } else if (key == "canny_low_ratio") {
    canny.low_high_ratio = parse_double_value(key, value);
  } else if (key == "workers") {
    workers = parse_int_value<unsigned>(key, value);
  } else if (key == "label_source") {
    if (value == "directory") {
      label_source = LabelSource::DirectoryPerClass;
    } else if (value == "sidecar") {
      label_source = LabelSource::Sidecar;
    } else {
      throw ConfigError("config: label_source must be directory or sidecar");
    }
  } else if (key == "sidecar") {
    sidecar = std::string(value);
  } else {
    throw ConfigError("config: unknown key '" + std::string(key) + "'");
  }
}

std::string PipelineConfig::get(std::string_view key) const {
  if (key == "folds") return std::to_string(folds);
  if (key == "epochs") return std::to_string(epochs);
  if (key == "learning_rate") return text::format_double(learning_rate);
  if (key == "augmentation_threshold") return text::format_double(augmentation_threshold);
  if (key == "layers") return std::to_string(layers);
  if (key == "train_batch") return std::to_string(train_batch);
  if (key == "val_batch") return std::to_string(val_batch);
  if (key == "seed") return std::to_string(seed);
  if (key == "test_fraction") return text::format_double(test_fraction);
  if (key == "pad_mode") return pad_mode_name(pad_mode);
  if (key == "pool_grid") return std::to_string(pool_grid);
  if (key == "canny_sigma") return text::format_double(canny.gaussian_sigma);
  if (key == "canny_kernel") return std::to_string(canny.gaussian_kernel);
  if (key == "canny_high_quantile") return text::format_double(canny.high_threshold_quantile);
  if (key == "canny_low_ratio") return text::format_double(canny.low_high_ratio);
  if (key == "workers") return std::to_string(workers);
  if (key == "label_source") return label_source == LabelSource::Sidecar ? "sidecar" : "directory";
  if (key == "sidecar") return sidecar;
  throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

void PipelineConfig::apply_text(std::string_view contents) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= contents.size()) {
    auto end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    ++line_no;
    std::string_view line = contents.substr(start, end - start);
    start = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    set(text::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

std::string PipelineConfig::to_text() const {
  std::string out;
  for (const auto& key : kKeys) {
    out += std::string(key.name) + " = " + get(key.name) + "\n";
  }
  return out;
}

void PipelineConfig::validate() const {
  if (folds < 2) throw ConfigError("folds must be >= 2");
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must be in [0, 1)");
  if (pool_grid < 1 || kCanonicalSide % pool_grid != 0) {
    throw ConfigError("pool_grid must divide " + std::to_string(kCanonicalSide));
  }
  if (sidecar.empty()) throw ConfigError("sidecar must not be empty");
  canny.validate();
  train_config().validate();
}

TrainConfig PipelineConfig::train_config() const {
  TrainConfig t;
  t.learning_rate = learning_rate;
  t.epochs = epochs;
  t.batch_size = train_batch;
  t.eval_batch_size = val_batch;
  t.seed = seed;
  t.p_flip = augmentation_threshold;
  return t;
}

AugmentConfig PipelineConfig::augment_config() const { return {augmentation_threshold, seed}; }

LabelingRule PipelineConfig::labeling_rule() const { return {label_source, sidecar}; }

PipelineConfig default_config() {
  PipelineConfig cfg;
  if (const char* env = std::getenv(kSeedEnvVar); env != nullptr && *env != '\0') {
    const auto seed = text::parse_int<std::uint64_t>(text::trim(env));
    if (!seed) throw ConfigError(std::string(kSeedEnvVar) + " is not an unsigned integer");
    cfg.seed = *seed;
  }
  return cfg;
}

std::string config_reference() {
  const PipelineConfig defaults;
  std::ostringstream out;
  out << "Configuration keys (config file 'key = value', or --key VALUE; "
         "flags > file > defaults):\n";
  for (const auto& key : kKeys) {
    out << "  " << key.name << " = " << defaults.get(key.name) << "\n      " << key.help << "\n";
  }
  out << "Environment: " << kSeedEnvVar << " overrides the default seed.\n";
  return out.str();
}

}  // namespace pollenstack
