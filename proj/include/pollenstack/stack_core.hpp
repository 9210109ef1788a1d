#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pollenstack/image.hpp"

namespace pollenstack {

// The three classes of the problem:
//   Urtica            - U. urens and U. dioica
//   Parietaria        - P. judaica and P. officinalis
//   UrticaMembranacea - U. membranacea on its own
enum class ClassLabel : std::uint8_t {
  Urtica = 0,
  Parietaria = 1,
  UrticaMembranacea = 2,
};

inline constexpr int kNumClasses = 3;
inline constexpr std::array<ClassLabel, kNumClasses> kAllClasses = {
    ClassLabel::Urtica, ClassLabel::Parietaria, ClassLabel::UrticaMembranacea};

// Largest accepted layer side; also the canonical tensor side.
inline constexpr int kMaxLayerSide = 224;
// Layers per scanned stack in the reference acquisition protocol.
inline constexpr int kNominalDepth = 20;
// Size of the reference Urticaceae collection.
inline constexpr std::size_t kReferenceDatasetSize = 6472;

constexpr int class_id(ClassLabel label) noexcept { return static_cast<int>(label); }

std::string_view class_name(ClassLabel label) noexcept;

// Throws InputError for ids outside {0, 1, 2}.
ClassLabel class_from_id(int id);

// Accepts a numeric id or a class name (case-insensitive); "urtica",
// "parietaria", "membranacea" and "urtica_membranacea" are recognised.
std::optional<ClassLabel> parse_class(std::string_view text);

using ClassCounts = std::array<std::size_t, kNumClasses>;

struct ZStack {
  std::string id;
  std::vector<GrayImage> layers;
  ClassLabel label = ClassLabel::Urtica;

  int depth() const noexcept { return static_cast<int>(layers.size()); }
  int height() const noexcept { return layers.empty() ? 0 : layers.front().height(); }
  int width() const noexcept { return layers.empty() ? 0 : layers.front().width(); }
};

struct ManifestRecord {
  std::string id;
  std::filesystem::path path;
  ClassLabel label = ClassLabel::Urtica;
  int depth = 0;
  int height = 0;
  int width = 0;

  bool operator==(const ManifestRecord&) const = default;
};

struct RecordError {
  std::string id;
  std::filesystem::path path;
  std::string message;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;  // sorted by id
  std::vector<RecordError> errors;      // sorted by id; not serialized

  ClassCounts class_counts() const noexcept;
};

enum class LabelSource {
  // root/<class>/<sample>; the class directory names the label.
  DirectoryPerClass,
  // root/<sample> plus a "sample<TAB>label" sidecar file.
  Sidecar,
};

struct LabelingRule {
  LabelSource source = LabelSource::DirectoryPerClass;
  // Relative paths resolve against the ingest root.
  std::filesystem::path sidecar = "labels.tsv";
};

// Scans `root` for stacks. A stack is either a directory of single-page
// layer images (layers ordered by filename) or one multi-page TIFF. Every
// stack is decoded once to validate it, but nothing is kept in memory.
// Per-stack problems land in `errors`; a tree without any valid stack throws
// InputError("no samples found ...").
DatasetManifest ingest_directory(const std::filesystem::path& root,
                                 const LabelingRule& rule = {},
                                 unsigned workers = 1);

// Throws InputError naming the record if the source vanished, no longer
// decodes, or no longer matches the recorded shape.
ZStack load_stack(const ManifestRecord& record);

// Line-oriented TSV, header "#manifest-v1" followed by the column names.
void write_manifest(std::ostream& out, const DatasetManifest& manifest);
DatasetManifest read_manifest(std::istream& in);

}  // namespace pollenstack
