#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pollenstack/stack_core.hpp"

namespace pollenstack {

struct RunMetadata {
  std::string model;
  std::optional<int> fold;
  std::optional<int> epochs;
  bool pretrained = false;
  std::optional<double> seconds_per_epoch;
  std::optional<int> layers;

  bool operator==(const RunMetadata&) const = default;
};

using Probabilities = std::array<double, kNumClasses>;

struct PredictionRow {
  std::string id;
  Probabilities probs{};

  bool operator==(const PredictionRow&) const = default;
};

struct PredictionSet {
  RunMetadata meta;
  std::vector<PredictionRow> rows;

  bool operator==(const PredictionSet&) const = default;
};

// Prediction file: "#key=value" metadata lines, then the header
// "id<TAB>p0<TAB>p1<TAB>p2", then one row per sample.
void write_predictions(std::ostream& out, const PredictionSet& predictions);
// Validates every row (probabilities >= 0 summing to 1 within 1e-6, unique
// ids); errors carry `source` and the line number.
PredictionSet read_predictions(std::istream& in, std::string_view source = "predictions");

// Argmax with ties going to the lowest class id.
int predicted_class(const Probabilities& probs) noexcept;

using TruthMap = std::unordered_map<std::string, ClassLabel>;
// confusion[truth][predicted]
using ConfusionMatrix = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;

struct EvalReport {
  double loss = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::array<double, kNumClasses> class_f1{};
  ConfusionMatrix confusion{};
  std::array<std::size_t, kNumClasses> support{};
  std::optional<double> seconds_per_epoch;

  std::size_t total() const noexcept;
};

inline constexpr double kProbabilityFloor = 1e-12;

// loss = mean(-ln(max(p_true, 1e-12))); macro F1 = unweighted mean of
// per-class F1 with F1 = 0 when precision + recall = 0.
// Throws InputError for ids missing from `truth` or invalid rows.
EvalReport score(const PredictionSet& predictions, const TruthMap& truth);

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;
};

struct CvSummary {
  std::size_t folds = 0;
  MetricSummary loss;
  MetricSummary accuracy;
  MetricSummary macro_f1;
  std::optional<MetricSummary> seconds_per_epoch;

  // The means as a report (confusion matrices summed over folds).
  EvalReport mean_report() const;
  ConfusionMatrix pooled_confusion{};
};

// Unweighted mean and population standard deviation across folds.
// Throws std::invalid_argument for an empty list.
CvSummary aggregate_cv(std::span<const EvalReport> reports);

enum class TableStyle {
  Layers,  // Layers | loss | F1-score | accuracy | Time
  Epochs,  // <title> | loss | F1-score | accuracy
  Models,  // Model | loss | F1-score | accuracy
};

struct TableRow {
  std::string label;
  // A row without a report renders as a section heading with empty cells.
  std::optional<EvalReport> report;
  bool pretrained = false;  // appends "*" to the label
};

// Pipe-separated text table, metrics to three decimals.
std::string render_table(std::span<const TableRow> rows, TableStyle style,
                         std::string_view title = {});

// Machine-readable TSV of every metric (section rows are skipped).
void write_metrics_tsv(std::ostream& out, std::span<const TableRow> rows);

std::optional<TableStyle> parse_table_style(std::string_view name);

}  // namespace pollenstack
