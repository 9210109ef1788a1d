#include "pollenstack/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>

#include "pollenstack/baseline_clf.hpp"
#include "pollenstack/canonicalize.hpp"
#include "pollenstack/config.hpp"
#include "pollenstack/dataset_kit.hpp"
#include "pollenstack/error.hpp"
#include "pollenstack/eval_kit.hpp"
#include "pollenstack/focus_select.hpp"
#include "pollenstack/image_io.hpp"
#include "pollenstack/parallel.hpp"
#include "pollenstack/stack_core.hpp"

namespace pollenstack::cli {

namespace fs = std::filesystem;

namespace {

std::string flag_name(std::string_view key) {
  std::string name(key);
  std::replace(name.begin(), name.end(), '_', '-');
  return "--" + name;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << contents;
  out.close();
  if (!out) throw Error("cannot write " + path.string());
}

// --config FILE plus one --<key> flag per configuration key.
struct ConfigOptions {
  std::string file;
  CLI::App* app = nullptr;

  void attach(CLI::App* sub) {
    app = sub;
    sub->add_option("--config", file, "configuration file of 'key = value' lines");
    const PipelineConfig defaults;
    for (const auto& key : config_keys()) {
      sub->add_option(flag_name(key.name))
          ->description(std::string(key.help) + " (default: " + defaults.get(key.name) + ")")
          ->type_name("VALUE");
    }
  }

  PipelineConfig resolve() const {
    PipelineConfig cfg = default_config();
    if (!file.empty()) {
      std::string contents;
      try {
        contents = read_file(file);
      } catch (const InputError& e) {
        throw ConfigError(e.what());
      }
      cfg.apply_text(contents);
    }
    for (const auto& key : config_keys()) {
      const CLI::Option* opt = app->get_option(flag_name(key.name));
      if (opt->count() > 0) cfg.set(key.name, opt->as<std::string>());
    }
    cfg.validate();
    return cfg;
  }
};

DatasetManifest ingest(const fs::path& root, const PipelineConfig& cfg, std::ostream& err) {
  DatasetManifest manifest = ingest_directory(root, cfg.labeling_rule(), cfg.workers);
  for (const auto& e : manifest.errors) {
    err << "warning: skipped " << e.id << " (" << e.path.generic_string() << "): " << e.message
        << '\n';
  }
  return manifest;
}

void require_depth(const DatasetManifest& manifest, int layers) {
  for (const auto& r : manifest.records) {
    if (layers > r.depth) {
      throw ConfigError("window exceeds stack depth: layers = " + std::to_string(layers) +
                        " but " + r.id + " has " + std::to_string(r.depth) + " layers");
    }
  }
}

void print_counts(std::ostream& out, const DatasetManifest& manifest) {
  const auto counts = manifest.class_counts();
  out << "samples: " << manifest.records.size() << " (skipped " << manifest.errors.size() << ")\n";
  for (ClassLabel label : kAllClasses) {
    out << "  class " << class_id(label) << " " << class_name(label) << ": "
        << counts[class_id(label)] << '\n';
  }
}

// Runs focal selection (unless `focal` is already filled), cuts the windows
// and streams the canonical samples into a PSTK dataset.
void pack_windows(const DatasetManifest& manifest, const SplitPlan& plan, const PipelineConfig& cfg,
                  int layers, const fs::path& stem, std::vector<int>& focal) {
  const bool have_focal = focal.size() == manifest.records.size();
  if (!have_focal) focal.assign(manifest.records.size(), 0);
  PackWriter writer(stem, plan, layers);
  parallel_for(manifest.records.size(), cfg.workers, [&](std::size_t i) {
    const ZStack stack = load_stack(manifest.records[i]);
    if (!have_focal) focal[i] = select_focal(stack, cfg.canny).focal_index;
    const LayerWindow window = extract_window(stack.depth(), focal[i], layers);
    writer.add(canonicalize(stack, focal[i], window, cfg.pad_mode));
  });
  writer.finish();
}

void print_focal_histogram(std::ostream& out, const std::vector<int>& focal) {
  std::map<int, std::size_t> histogram;
  for (int f : focal) ++histogram[f];
  out << "focal layer histogram (layer: stacks):\n";
  for (const auto& [layer, count] : histogram) out << "  " << layer << ": " << count << '\n';
}

TruthMap load_truth(const fs::path& truth) {
  fs::path index_path = truth;
  if (truth.string().size() < 10 || truth.string().substr(truth.string().size() - 10) != ".index.tsv") {
    index_path = DatasetFiles::for_stem(truth).index;
  }
  std::ifstream in(index_path);
  if (!in) throw InputError("cannot open " + index_path.string());
  TruthMap map;
  for (const auto& e : read_index(in)) map.emplace(e.id, e.label);
  return map;
}

std::string row_label(const RunMetadata& meta, TableStyle style) {
  if (style == TableStyle::Layers && meta.layers) return std::to_string(*meta.layers) + " layers";
  if (style == TableStyle::Epochs && meta.epochs) return std::to_string(*meta.epochs) + " epochs";
  return meta.model.empty() ? "model" : meta.model;
}

// --- subcommands ------------------------------------------------------------

int cmd_prep(const std::string& root, const std::string& out_stem, const PipelineConfig& cfg,
             std::ostream& out, std::ostream& err) {
  const DatasetManifest manifest = ingest(root, cfg, err);
  require_depth(manifest, cfg.layers);
  const SplitPlan plan = make_split(manifest, cfg.seed, cfg.test_fraction, cfg.folds);

  std::ostringstream manifest_text;
  write_manifest(manifest_text, manifest);
  write_file(out_stem + ".manifest.tsv", manifest_text.str());

  std::vector<int> focal;
  pack_windows(manifest, plan, cfg, cfg.layers, out_stem, focal);

  print_counts(out, manifest);
  print_focal_histogram(out, focal);
  const auto files = DatasetFiles::for_stem(out_stem);
  out << "test: " << plan.test_ids.size() << ", folds: " << plan.k << '\n'
      << "wrote " << files.blob.generic_string() << ", " << files.index.generic_string() << ", "
      << files.split.generic_string() << '\n';
  return kExitOk;
}

int cmd_split(const std::string& root, const std::string& out_path, const PipelineConfig& cfg,
              std::ostream& out, std::ostream& err) {
  const DatasetManifest manifest = ingest(root, cfg, err);
  const SplitPlan plan = make_split(manifest, cfg.seed, cfg.test_fraction, cfg.folds);
  std::ostringstream text;
  write_split(text, plan);
  write_file(out_path, text.str());
  print_counts(out, manifest);
  out << "test: " << plan.test_ids.size() << '\n';
  for (int f = 0; f < plan.k; ++f) out << "fold " << f << ": " << plan.folds[f].size() << '\n';
  out << "wrote " << out_path << '\n';
  return kExitOk;
}

int cmd_inspect(const std::string& root, const std::string& out_path, const std::string& edges_dir,
                const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
  const DatasetManifest manifest = ingest(root, cfg, err);
  if (!edges_dir.empty()) fs::create_directories(edges_dir);
  std::vector<std::string> dumps(manifest.records.size());
  parallel_for(manifest.records.size(), cfg.workers, [&](std::size_t i) {
    const ZStack stack = load_stack(manifest.records[i]);
    FocusProfile profile = select_focal(stack, cfg.canny);
    if (cfg.layers <= stack.depth()) {
      profile.window = extract_window(stack.depth(), profile.focal_index, cfg.layers);
    }
    std::ostringstream dump;
    write_focus_profile(dump, stack.id, profile);
    dumps[i] = dump.str();
    if (!edges_dir.empty()) {
      const EdgeMap edges = canny_edges(stack.layers[profile.focal_index], cfg.canny);
      GrayImage image(edges.edges.height(), edges.edges.width());
      for (std::size_t p = 0; p < image.size(); ++p) image.pixels()[p] = edges.edges.pixels()[p] ? 255 : 0;
      std::string name = stack.id;
      std::replace(name.begin(), name.end(), '/', '_');
      io::write_png(fs::path(edges_dir) / (name + ".focal_edges.png"), image);
    }
  });
  std::string all;
  for (const auto& d : dumps) all += d;
  if (out_path.empty()) {
    out << all;
  } else {
    write_file(out_path, all);
    out << "wrote " << manifest.records.size() << " focus profiles to " << out_path << '\n';
  }
  return kExitOk;
}

int cmd_baseline(const std::string& stem, int fold, const std::string& prefix, bool timing,
                 const PipelineConfig& cfg, std::ostream& out) {
  const PackedDataset dataset = read_packed(stem);
  FoldRoles roles;
  try {
    roles = fold_roles(dataset.split(), fold);
  } catch (const std::out_of_range& e) {
    throw ConfigError(e.what());
  }
  const FeatureSpec spec{cfg.pool_grid};
  const TrainResult result = train(dataset, roles, cfg.train_config(), spec, cfg.workers);

  RunMetadata meta;
  meta.model = kBaselineModelName;
  meta.fold = fold;
  meta.epochs = cfg.epochs;
  meta.layers = dataset.header().n_layers;
  if (timing) meta.seconds_per_epoch = result.mean_epoch_seconds();

  const PredictionSet val = predict(result.model, dataset, roles.val, meta, cfg.workers);
  const PredictionSet test = predict(result.model, dataset, roles.test, meta, cfg.workers);
  std::ostringstream val_text, test_text, log_text;
  write_predictions(val_text, val);
  write_predictions(test_text, test);
  write_epoch_log(log_text, result.log);
  write_file(prefix + ".val.pred.tsv", val_text.str());
  write_file(prefix + ".test.pred.tsv", test_text.str());
  write_file(prefix + ".log.tsv", log_text.str());

  TruthMap truth;
  for (const auto& e : dataset.index()) truth.emplace(e.id, e.label);
  std::vector<TableRow> rows;
  if (!val.rows.empty()) rows.push_back({"validation (fold " + std::to_string(fold) + ")", score(val, truth)});
  if (!test.rows.empty()) rows.push_back({"test", score(test, truth)});
  out << "train " << roles.train.size() << ", val " << roles.val.size() << ", test "
      << roles.test.size() << "; initial loss " << result.initial_loss << '\n'
      << render_table(rows, TableStyle::Models, "Split")
      << "wrote " << prefix << ".{val.pred,test.pred,log}.tsv\n";
  return kExitOk;
}

int cmd_eval(const std::vector<std::string>& files, const std::string& truth_path,
             const std::string& style_name, const std::string& title, bool aggregate,
             const std::string& tsv_path, std::ostream& out) {
  const auto style = parse_table_style(style_name);
  if (!style) throw ConfigError("unknown table style '" + style_name + "' (layers, epochs, models)");
  const TruthMap truth = load_truth(truth_path);

  std::vector<TableRow> rows;
  std::vector<std::vector<EvalReport>> groups;
  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot open " + file);
    const PredictionSet predictions = read_predictions(in, file);
    const EvalReport report = score(predictions, truth);
    const std::string label = row_label(predictions.meta, *style);
    if (aggregate) {
      auto it = std::find_if(rows.begin(), rows.end(), [&](const TableRow& r) {
        return r.label == label && r.pretrained == predictions.meta.pretrained;
      });
      if (it == rows.end()) {
        rows.push_back({label, std::nullopt, predictions.meta.pretrained});
        groups.emplace_back();
        it = rows.end() - 1;
      }
      groups[static_cast<std::size_t>(it - rows.begin())].push_back(report);
    } else {
      rows.push_back({label, report, predictions.meta.pretrained});
    }
  }
  if (aggregate) {
    for (std::size_t g = 0; g < rows.size(); ++g) {
      const CvSummary summary = aggregate_cv(groups[g]);
      rows[g].report = summary.mean_report();
      out << rows[g].label << (rows[g].pretrained ? "*" : "") << ": " << summary.folds
          << " runs, sd loss " << summary.loss.sd << ", sd F1 " << summary.macro_f1.sd
          << ", sd accuracy " << summary.accuracy.sd << '\n';
    }
  }
  out << render_table(rows, *style, title);
  if (!tsv_path.empty()) {
    std::ostringstream tsv;
    write_metrics_tsv(tsv, rows);
    write_file(tsv_path, tsv.str());
  }
  return kExitOk;
}

int cmd_layer_study(const std::string& root, const std::string& work_dir, std::vector<int> layers,
                    int fold, const std::string& tsv_path, const PipelineConfig& cfg,
                    std::ostream& out, std::ostream& err) {
  if (layers.empty()) throw ConfigError("layer-study: empty layer list");
  for (int n : layers) {
    if (n < 1) throw ConfigError("layer-study: layer counts must be >= 1");
  }
  if (fold < 0 || fold >= cfg.folds) throw ConfigError("fold index outside [0, folds)");

  const DatasetManifest manifest = ingest(root, cfg, err);
  for (int n : layers) require_depth(manifest, n);
  const SplitPlan plan = make_split(manifest, cfg.seed, cfg.test_fraction, cfg.folds);
  const FoldRoles roles = fold_roles(plan, fold);

  // Focal layers do not depend on the window size; compute them once.
  std::vector<int> focal(manifest.records.size());
  parallel_for(manifest.records.size(), cfg.workers, [&](std::size_t i) {
    focal[i] = select_focal(load_stack(manifest.records[i]), cfg.canny).focal_index;
  });

  std::vector<TableRow> rows;
  for (int n : layers) {
    const fs::path stem = fs::path(work_dir) / ("layers_" + std::to_string(n));
    pack_windows(manifest, plan, cfg, n, stem, focal);
    const PackedDataset dataset = read_packed(stem);
    const FeatureSpec spec{cfg.pool_grid};
    const TrainResult result = train(dataset, roles, cfg.train_config(), spec, cfg.workers);

    RunMetadata meta;
    meta.model = kBaselineModelName;
    meta.fold = fold;
    meta.epochs = cfg.epochs;
    meta.layers = n;
    meta.seconds_per_epoch = result.mean_epoch_seconds();
    const PredictionSet test = predict(result.model, dataset, roles.test, meta, cfg.workers);
    std::ostringstream pred_text;
    write_predictions(pred_text, test);
    write_file(stem.string() + ".test.pred.tsv", pred_text.str());

    TruthMap truth;
    for (const auto& e : dataset.index()) truth.emplace(e.id, e.label);
    rows.push_back({std::to_string(n) + " layers", score(test, truth)});
  }

  out << render_table(rows, TableStyle::Layers);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double prev = *rows[i - 1].report->seconds_per_epoch;
    const double cur = *rows[i].report->seconds_per_epoch;
    if (cur < prev) {
      out << "note: epoch time of " << rows[i].label << " is below that of " << rows[i - 1].label
          << '\n';
    }
  }
  if (!tsv_path.empty()) {
    std::ostringstream tsv;
    write_metrics_tsv(tsv, rows);
    write_file(tsv_path, tsv.str());
  }
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"pollenstack: z-stack pollen classification pipeline"};
  app.name("pollenstack");
  app.require_subcommand(1);
  app.footer(config_reference());

  std::string root, stem, out_path, edges_dir, truth, style = "models", title, tsv_path, work_dir;
  std::vector<std::string> pred_files;
  std::vector<int> layer_list;
  int fold = 0;
  bool aggregate = false;
  bool timing = false;

  ConfigOptions prep_cfg, split_cfg, inspect_cfg, baseline_cfg, study_cfg;

  auto* prep = app.add_subcommand("prep", "ingest stacks, select focal layers, pad, split and pack");
  prep->add_option("root", root, "dataset root directory")->required();
  prep->add_option("-o,--out", stem, "output stem (<stem>.pstk, .index.tsv, .split.tsv)")->required();
  prep_cfg.attach(prep);

  auto* split = app.add_subcommand("split", "write the test/fold split plan only");
  split->add_option("root", root, "dataset root directory")->required();
  split->add_option("-o,--out", out_path, "output split file")->required();
  split_cfg.attach(split);

  auto* inspect = app.add_subcommand("inspect", "dump per-layer focus profiles");
  inspect->add_option("root", root, "dataset root directory")->required();
  inspect->add_option("-o,--out", out_path, "profile output file (default: stdout)");
  inspect->add_option("--edges", edges_dir, "directory for focal-layer edge mask PNGs");
  inspect_cfg.attach(inspect);

  auto* baseline = app.add_subcommand("baseline", "train and apply the logistic-regression baseline");
  baseline->add_option("dataset", stem, "packed dataset stem")->required();
  baseline->add_option("--fold", fold, "validation fold index")->capture_default_str();
  baseline->add_option("-o,--out", out_path, "output prefix for predictions and log")->required();
  baseline->add_flag("--timing", timing, "record seconds per epoch in the prediction files");
  baseline_cfg.attach(baseline);

  auto* eval = app.add_subcommand("eval", "score prediction files and render a report table");
  eval->add_option("predictions", pred_files, "prediction files")->required();
  eval->add_option("--truth", truth, "packed dataset stem or .index.tsv with the labels")->required();
  eval->add_option("--style", style, "table layout: models, layers or epochs")->capture_default_str();
  eval->add_option("--title", title, "header of the first column");
  eval->add_flag("--aggregate", aggregate, "average runs sharing a row label (cross-validation mean)");
  eval->add_option("--tsv", tsv_path, "also write all metrics as TSV");

  auto* study = app.add_subcommand("layer-study", "baseline metrics and epoch time per window size");
  study->add_option("root", root, "dataset root directory")->required();
  study->add_option("--work", work_dir, "directory for the per-size datasets")->required();
  study->add_option("--layer-list", layer_list, "window sizes, comma separated")
      ->delimiter(',')
      ->default_str("4,6,8,10,20");
  study->add_option("--fold", fold, "validation fold index")->capture_default_str();
  study->add_option("--tsv", tsv_path, "also write all metrics as TSV");
  study_cfg.attach(study);

  bool layers_given = false;
  try {
    app.parse(argc, argv);
    layers_given = study->count("--layer-list") > 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (prep->parsed()) return cmd_prep(root, stem, prep_cfg.resolve(), out, err);
    if (split->parsed()) return cmd_split(root, out_path, split_cfg.resolve(), out, err);
    if (inspect->parsed()) return cmd_inspect(root, out_path, edges_dir, inspect_cfg.resolve(), out, err);
    if (baseline->parsed()) return cmd_baseline(stem, fold, out_path, timing, baseline_cfg.resolve(), out);
    if (eval->parsed()) return cmd_eval(pred_files, truth, style, title, aggregate, tsv_path, out);
    if (study->parsed()) {
      if (!layers_given) layer_list = {4, 6, 8, 10, 20};
      return cmd_layer_study(root, work_dir, layer_list, fold, tsv_path, study_cfg.resolve(), out, err);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternalError;
  }
  return kExitInternalError;
}

}  // namespace pollenstack::cli
