#include "pollenstack/eval_kit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "pollenstack/error.hpp"
#include "text_util.hpp"

namespace pollenstack {

namespace {

constexpr std::string_view kPredictionColumns = "id\tp0\tp1\tp2";
constexpr double kSumTolerance = 1e-6;

// Empty when the row is valid.
std::string row_problem(const Probabilities& p) {
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) return "probabilities must be finite and >= 0";
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    return "probabilities sum to " + text::format_double(sum) + ", expected 1";
  }
  return {};
}

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

// Shifted by the first value so identical inputs give exactly that mean and 0 spread.
MetricSummary summarize(std::span<const double> values) {
  MetricSummary s;
  const double shift = values.front();
  for (double v : values) s.mean += v - shift;
  s.mean = shift + s.mean / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

std::string rtrim(std::string s) {
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

}  // namespace

void write_predictions(std::ostream& out, const PredictionSet& predictions) {
  const auto& m = predictions.meta;
  out << "#model=" << m.model << '\n';
  if (m.fold) out << "#fold=" << *m.fold << '\n';
  if (m.epochs) out << "#epochs=" << *m.epochs << '\n';
  out << "#pretrained=" << (m.pretrained ? "true" : "false") << '\n';
  if (m.seconds_per_epoch) out << "#seconds_per_epoch=" << text::format_double(*m.seconds_per_epoch) << '\n';
  if (m.layers) out << "#layers=" << *m.layers << '\n';
  out << kPredictionColumns << '\n';
  for (const auto& row : predictions.rows) {
    out << row.id;
    for (double p : row.probs) out << '\t' << text::format_double(p);
    out << '\n';
  }
}

PredictionSet read_predictions(std::istream& in, std::string_view source) {
  PredictionSet set;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    return FormatError(FormatErrorKind::Malformed,
                       std::string(source) + ":" + std::to_string(line_no) + ": " + what);
  };
  bool have_header = false;
  while (text::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.front() != '#') {
      if (line != kPredictionColumns) throw fail("expected header 'id\\tp0\\tp1\\tp2'");
      have_header = true;
      break;
    }
    const std::string_view body = std::string_view(line).substr(1);
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) continue;  // free-form comment
    const auto key = text::trim(body.substr(0, eq));
    const auto value = text::trim(body.substr(eq + 1));
    auto int_value = [&] {
      const auto v = text::parse_int<int>(value);
      if (!v) throw fail("bad integer for " + std::string(key));
      return *v;
    };
    if (key == "model") {
      set.meta.model = std::string(value);
    } else if (key == "fold") {
      set.meta.fold = int_value();
    } else if (key == "epochs") {
      set.meta.epochs = int_value();
    } else if (key == "layers") {
      set.meta.layers = int_value();
    } else if (key == "pretrained") {
      if (value == "true" || value == "1") {
        set.meta.pretrained = true;
      } else if (value == "false" || value == "0") {
        set.meta.pretrained = false;
      } else {
        throw fail("bad boolean for pretrained");
      }
    } else if (key == "seconds_per_epoch") {
      const auto v = text::parse_double(value);
      if (!v) throw fail("bad number for seconds_per_epoch");
      set.meta.seconds_per_epoch = *v;
    }
    // Unknown keys are kept out of the metadata but tolerated.
  }
  if (!have_header) throw fail("missing header 'id\\tp0\\tp1\\tp2'");

  std::unordered_set<std::string> seen;
  while (text::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = text::split(line);
    if (f.size() != 4 || f[0].empty()) throw fail("expected 4 tab-separated fields");
    PredictionRow row;
    row.id = std::string(f[0]);
    for (int c = 0; c < kNumClasses; ++c) {
      const auto v = text::parse_double(text::trim(f[c + 1]));
      if (!v) throw fail("bad probability '" + std::string(f[c + 1]) + "'");
      row.probs[c] = *v;
    }
    if (const auto problem = row_problem(row.probs); !problem.empty()) throw fail(problem);
    if (!seen.insert(row.id).second) throw fail("duplicate id " + row.id);
    set.rows.push_back(std::move(row));
  }
  return set;
}

int predicted_class(const Probabilities& probs) noexcept {
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::size_t EvalReport::total() const noexcept {
  std::size_t n = 0;
  for (auto s : support) n += s;
  return n;
}

EvalReport score(const PredictionSet& predictions, const TruthMap& truth) {
  if (predictions.rows.empty()) throw InputError("score: no prediction rows");
  EvalReport report;
  report.seconds_per_epoch = predictions.meta.seconds_per_epoch;
  std::unordered_set<std::string_view> seen;
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < predictions.rows.size(); ++i) {
    const auto& row = predictions.rows[i];
    if (const auto problem = row_problem(row.probs); !problem.empty()) {
      throw InputError("score: row " + std::to_string(i + 1) + " (" + row.id + "): " + problem);
    }
    if (!seen.insert(row.id).second) throw InputError("score: duplicate id " + row.id);
    const auto it = truth.find(row.id);
    if (it == truth.end()) throw InputError("score: id " + row.id + " has no ground truth");
    const int t = class_id(it->second);
    const int p = predicted_class(row.probs);
    ++report.confusion[t][p];
    ++report.support[t];
    loss_sum += -std::log(std::max(row.probs[t], kProbabilityFloor));
  }
  const auto n = static_cast<double>(predictions.rows.size());
  report.loss = loss_sum / n;

  std::size_t correct = 0;
  double f1_sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    const std::size_t tp = report.confusion[c][c];
    correct += tp;
    std::size_t predicted = 0;
    for (int t = 0; t < kNumClasses; ++t) predicted += report.confusion[t][c];
    const double precision = predicted ? static_cast<double>(tp) / predicted : 0.0;
    const double recall = report.support[c] ? static_cast<double>(tp) / report.support[c] : 0.0;
    report.class_f1[c] =
        precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    f1_sum += report.class_f1[c];
  }
  report.accuracy = static_cast<double>(correct) / n;
  report.macro_f1 = f1_sum / kNumClasses;
  return report;
}

CvSummary aggregate_cv(std::span<const EvalReport> reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate_cv: no reports");
  CvSummary s;
  s.folds = reports.size();
  std::vector<double> loss, acc, f1, secs;
  for (const auto& r : reports) {
    loss.push_back(r.loss);
    acc.push_back(r.accuracy);
    f1.push_back(r.macro_f1);
    if (r.seconds_per_epoch) secs.push_back(*r.seconds_per_epoch);
    for (int t = 0; t < kNumClasses; ++t) {
      for (int p = 0; p < kNumClasses; ++p) s.pooled_confusion[t][p] += r.confusion[t][p];
    }
  }
  s.loss = summarize(loss);
  s.accuracy = summarize(acc);
  s.macro_f1 = summarize(f1);
  if (secs.size() == reports.size()) s.seconds_per_epoch = summarize(secs);
  return s;
}

EvalReport CvSummary::mean_report() const {
  EvalReport r;
  r.loss = loss.mean;
  r.accuracy = accuracy.mean;
  r.macro_f1 = macro_f1.mean;
  r.confusion = pooled_confusion;
  for (int t = 0; t < kNumClasses; ++t) {
    for (int p = 0; p < kNumClasses; ++p) r.support[t] += pooled_confusion[t][p];
  }
  if (seconds_per_epoch) r.seconds_per_epoch = seconds_per_epoch->mean;
  return r;
}

std::optional<TableStyle> parse_table_style(std::string_view name) {
  if (name == "layers") return TableStyle::Layers;
  if (name == "epochs") return TableStyle::Epochs;
  if (name == "models") return TableStyle::Models;
  return std::nullopt;
}

std::string render_table(std::span<const TableRow> rows, TableStyle style, std::string_view title) {
  std::string first_header(title);
  if (first_header.empty()) {
    first_header = style == TableStyle::Layers ? "Layers"
                   : style == TableStyle::Epochs ? "Epochs"
                                                 : "Model";
  }
  std::vector<std::vector<std::string>> cells;
  cells.push_back({first_header, "loss", "F1-score", "accuracy"});
  if (style == TableStyle::Layers) cells.back().push_back("Time");
  const std::size_t columns = cells.back().size();

  for (const auto& row : rows) {
    std::string label = row.label;
    if (row.pretrained && (label.empty() || label.back() != '*')) label += '*';
    std::vector<std::string> line(columns);
    line[0] = label;
    if (row.report) {
      line[1] = fixed3(row.report->loss);
      line[2] = fixed3(row.report->macro_f1);
      line[3] = fixed3(row.report->accuracy);
      if (style == TableStyle::Layers && row.report->seconds_per_epoch) {
        line[4] = fixed3(*row.report->seconds_per_epoch);
      }
    }
    cells.push_back(std::move(line));
  }

  std::vector<std::size_t> widths(columns, 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < columns; ++c) widths[c] = std::max(widths[c], line[c].size());
  }
  auto format_line = [&](const std::vector<std::string>& line) {
    std::string s;
    for (std::size_t c = 0; c < columns; ++c) {
      if (c > 0) s += " | ";
      s += line[c];
      s.append(widths[c] - line[c].size(), ' ');
    }
    return rtrim(std::move(s)) + "\n";
  };

  std::string out = format_line(cells.front());
  for (std::size_t c = 0; c < columns; ++c) {
    if (c > 0) out += "-+-";
    out.append(widths[c], '-');
  }
  out += '\n';
  for (std::size_t i = 1; i < cells.size(); ++i) out += format_line(cells[i]);
  return out;
}

void write_metrics_tsv(std::ostream& out, std::span<const TableRow> rows) {
  out << "label\tpretrained\tloss\taccuracy\tmacro_f1\tf1_0\tf1_1\tf1_2\tsupport_0\tsupport_1"
         "\tsupport_2\tseconds_per_epoch\n";
  for (const auto& row : rows) {
    if (!row.report) continue;
    const auto& r = *row.report;
    out << row.label << '\t' << (row.pretrained ? "true" : "false") << '\t'
        << text::format_double(r.loss) << '\t' << text::format_double(r.accuracy) << '\t'
        << text::format_double(r.macro_f1);
    for (double f : r.class_f1) out << '\t' << text::format_double(f);
    for (auto s : r.support) out << '\t' << s;
    out << '\t' << (r.seconds_per_epoch ? text::format_double(*r.seconds_per_epoch) : "") << '\n';
  }
}

}  // namespace pollenstack
