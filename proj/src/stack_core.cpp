#include "pollenstack/stack_core.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include "pollenstack/error.hpp"
#include "pollenstack/image_io.hpp"
#include "pollenstack/parallel.hpp"
#include "text_util.hpp"

namespace pollenstack {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kManifestVersion = "#manifest-v1";
constexpr std::string_view kManifestColumns = "id\tpath\tlabel\tdepth\theight\twidth";

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> entries;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!name.empty() && name.front() == '.') continue;
    entries.push_back(entry.path());
  }
  std::sort(entries.begin(), entries.end());
  return entries;
}

std::vector<fs::path> layer_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& path : sorted_entries(dir)) {
    if (fs::is_regular_file(path) && io::is_image_path(path)) files.push_back(path);
  }
  return files;
}

// Decodes every layer of a stack source in z order.
std::vector<GrayImage> decode_layers(const fs::path& source) {
  if (!fs::is_directory(source)) return io::read_pages(source);
  const auto files = layer_files(source);
  if (files.empty()) throw InputError("no layer images in " + source.string());
  std::vector<GrayImage> layers;
  layers.reserve(files.size());
  for (const auto& file : files) {
    auto pages = io::read_pages(file);
    if (pages.size() != 1) {
      throw InputError("layer file " + file.filename().string() + " has " +
                       std::to_string(pages.size()) + " pages, expected 1");
    }
    layers.push_back(std::move(pages.front()));
  }
  return layers;
}

std::string shape_text(int h, int w) { return std::to_string(h) + "x" + std::to_string(w); }

// Returns an error message, or empty when the stack is well formed.
std::string check_layers(const std::vector<GrayImage>& layers) {
  if (layers.empty()) return "stack has no layers";
  const int h = layers.front().height();
  const int w = layers.front().width();
  for (std::size_t z = 1; z < layers.size(); ++z) {
    if (layers[z].height() != h || layers[z].width() != w) {
      return "layer " + std::to_string(z) + " is " +
             shape_text(layers[z].height(), layers[z].width()) + ", expected " +
             shape_text(h, w);
    }
  }
  if (h < 1 || w < 1) return "empty layer";
  if (h > kMaxLayerSide || w > kMaxLayerSide) {
    return "layer size " + shape_text(h, w) + " exceeds " +
           shape_text(kMaxLayerSide, kMaxLayerSide);
  }
  return {};
}

struct Candidate {
  std::string id;
  fs::path path;
  ClassLabel label;
};

bool is_sample_entry(const fs::path& path) {
  return fs::is_directory(path) || (fs::is_regular_file(path) && io::is_image_path(path));
}

std::string sample_name(const fs::path& path) {
  return fs::is_directory(path) ? path.filename().string() : path.stem().string();
}

void discover_per_class(const fs::path& root, std::vector<Candidate>& candidates,
                        std::vector<RecordError>& errors) {
  for (const auto& class_dir : sorted_entries(root)) {
    if (!fs::is_directory(class_dir)) continue;
    const std::string class_dir_name = class_dir.filename().string();
    const auto label = parse_class(class_dir_name);
    if (!label) {
      errors.push_back({class_dir_name, class_dir, "unrecognised class directory"});
      continue;
    }
    for (const auto& entry : sorted_entries(class_dir)) {
      if (!is_sample_entry(entry)) continue;
      candidates.push_back({class_dir_name + "/" + sample_name(entry), entry, *label});
    }
  }
}

void discover_sidecar(const fs::path& root, const fs::path& sidecar_rel,
                      std::vector<Candidate>& candidates, std::vector<RecordError>& errors) {
  const fs::path sidecar = sidecar_rel.is_absolute() ? sidecar_rel : root / sidecar_rel;
  std::ifstream in(sidecar);
  if (!in) throw InputError("cannot open label sidecar " + sidecar.string());

  std::map<std::string, ClassLabel> labels;
  std::string line;
  int line_no = 0;
  while (text::read_line(in, line)) {
    ++line_no;
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto fields = text::split(trimmed);
    const auto label = fields.size() == 2 ? parse_class(text::trim(fields[1])) : std::nullopt;
    if (!label) {
      throw InputError(sidecar.string() + ":" + std::to_string(line_no) +
                       ": expected 'sample<TAB>label'");
    }
    labels[std::string(text::trim(fields[0]))] = *label;
  }

  std::set<std::string> seen;
  for (const auto& entry : sorted_entries(root)) {
    if (!is_sample_entry(entry)) continue;
    if (fs::equivalent(entry, sidecar)) continue;
    const std::string name = sample_name(entry);
    const auto it = labels.find(name);
    if (it == labels.end()) {
      errors.push_back({name, entry, "no label in sidecar"});
      continue;
    }
    seen.insert(name);
    candidates.push_back({name, entry, it->second});
  }
  for (const auto& [name, label] : labels) {
    if (!seen.contains(name)) errors.push_back({name, root / name, "listed in sidecar but not found"});
  }
}

}  // namespace

std::string_view class_name(ClassLabel label) noexcept {
  switch (label) {
    case ClassLabel::Urtica:
      return "Urtica";
    case ClassLabel::Parietaria:
      return "Parietaria";
    case ClassLabel::UrticaMembranacea:
      return "Urtica membranacea";
  }
  return "unknown";
}

ClassLabel class_from_id(int id) {
  if (id < 0 || id >= kNumClasses) {
    throw InputError("class id " + std::to_string(id) + " out of range [0, 2]");
  }
  return static_cast<ClassLabel>(id);
}

std::optional<ClassLabel> parse_class(std::string_view text) {
  const std::string name = lowercase(text);
  if (name == "0" || name == "urtica") return ClassLabel::Urtica;
  if (name == "1" || name == "parietaria") return ClassLabel::Parietaria;
  if (name == "2" || name == "membranacea" || name == "urtica_membranacea" ||
      name == "urtica-membranacea" || name == "urtica membranacea") {
    return ClassLabel::UrticaMembranacea;
  }
  return std::nullopt;
}

ClassCounts DatasetManifest::class_counts() const noexcept {
  ClassCounts counts{};
  for (const auto& record : records) ++counts[class_id(record.label)];
  return counts;
}

DatasetManifest ingest_directory(const fs::path& root, const LabelingRule& rule,
                                 unsigned workers) {
  if (!fs::is_directory(root)) {
    throw InputError("input root " + root.string() + " is not a directory");
  }
  DatasetManifest manifest;
  std::vector<Candidate> candidates;
  if (rule.source == LabelSource::DirectoryPerClass) {
    discover_per_class(root, candidates, manifest.errors);
  } else {
    discover_sidecar(root, rule.sidecar, candidates, manifest.errors);
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) { return a.id < b.id; });

  // Validate every candidate; slots keep the result independent of scheduling.
  std::vector<std::optional<ManifestRecord>> records(candidates.size());
  std::vector<std::string> problems(candidates.size());
  parallel_for(candidates.size(), workers, [&](std::size_t i) {
    const Candidate& c = candidates[i];
    try {
      const auto layers = decode_layers(c.path);
      problems[i] = check_layers(layers);
      if (problems[i].empty()) {
        records[i] = ManifestRecord{c.id, c.path, c.label,
                                    static_cast<int>(layers.size()),
                                    layers.front().height(), layers.front().width()};
      }
    } catch (const Error& e) {
      problems[i] = e.what();
    }
  });

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (i > 0 && candidates[i].id == candidates[i - 1].id) {
      manifest.errors.push_back({candidates[i].id, candidates[i].path, "duplicate sample id"});
      continue;
    }
    if (records[i]) {
      manifest.records.push_back(std::move(*records[i]));
    } else {
      manifest.errors.push_back({candidates[i].id, candidates[i].path, problems[i]});
    }
  }
  std::sort(manifest.errors.begin(), manifest.errors.end(),
            [](const RecordError& a, const RecordError& b) { return a.id < b.id; });

  if (manifest.records.empty()) {
    throw InputError("no samples found under " + root.string());
  }
  return manifest;
}

ZStack load_stack(const ManifestRecord& record) {
  ZStack stack;
  stack.id = record.id;
  stack.label = record.label;
  try {
    stack.layers = decode_layers(record.path);
  } catch (const Error& e) {
    throw InputError("record " + record.id + ": " + e.what());
  }
  if (const auto problem = check_layers(stack.layers); !problem.empty()) {
    throw InputError("record " + record.id + ": " + problem);
  }
  if (stack.depth() != record.depth || stack.height() != record.height ||
      stack.width() != record.width) {
    throw InputError("record " + record.id + ": decoded shape " +
                     std::to_string(stack.depth()) + "x" +
                     shape_text(stack.height(), stack.width()) +
                     " differs from manifest " + std::to_string(record.depth) + "x" +
                     shape_text(record.height, record.width));
  }
  return stack;
}

void write_manifest(std::ostream& out, const DatasetManifest& manifest) {
  out << kManifestVersion << '\n' << kManifestColumns << '\n';
  for (const auto& r : manifest.records) {
    out << r.id << '\t' << r.path.generic_string() << '\t' << class_id(r.label) << '\t'
        << r.depth << '\t' << r.height << '\t' << r.width << '\n';
  }
}

DatasetManifest read_manifest(std::istream& in) {
  std::string line;
  if (!text::read_line(in, line) || line != kManifestVersion) {
    throw FormatError(FormatErrorKind::VersionMismatch, "manifest: expected header " +
                                                            std::string(kManifestVersion));
  }
  if (!text::read_line(in, line) || line != kManifestColumns) {
    throw FormatError(FormatErrorKind::Malformed, "manifest: bad column header");
  }
  DatasetManifest manifest;
  int line_no = 2;
  while (text::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = text::split(line);
    auto bad = [&] {
      return FormatError(FormatErrorKind::Malformed,
                         "manifest line " + std::to_string(line_no) + ": malformed record");
    };
    if (f.size() != 6) throw bad();
    const auto label = text::parse_int<int>(f[2]);
    const auto depth = text::parse_int<int>(f[3]);
    const auto height = text::parse_int<int>(f[4]);
    const auto width = text::parse_int<int>(f[5]);
    if (!label || !depth || !height || !width || *label < 0 || *label >= kNumClasses) {
      throw bad();
    }
    manifest.records.push_back({std::string(f[0]), fs::path(std::string(f[1])),
                                static_cast<ClassLabel>(*label), *depth, *height, *width});
  }
  for (std::size_t i = 1; i < manifest.records.size(); ++i) {
    if (manifest.records[i - 1].id >= manifest.records[i].id) {
      throw FormatError(FormatErrorKind::Inconsistent,
                        "manifest: ids not unique and sorted at " + manifest.records[i].id);
    }
  }
  return manifest;
}

}  // namespace pollenstack
