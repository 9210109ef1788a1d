#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pollenstack/canonicalize.hpp"
#include "pollenstack/stack_core.hpp"

namespace pollenstack {

// ---------------------------------------------------------------------------
// Splitting

inline constexpr double kDefaultTestFraction = 0.10;
inline constexpr int kDefaultFolds = 10;

struct LabeledId {
  std::string id;
  ClassLabel label = ClassLabel::Urtica;
};

// Every id is either in the test holdout or in exactly one of k folds.
// All id lists are sorted.
struct SplitPlan {
  std::uint64_t seed = 0;
  int k = kDefaultFolds;
  double test_fraction = kDefaultTestFraction;
  std::vector<std::string> test_ids;
  std::vector<std::vector<std::string>> folds;

  std::size_t total() const noexcept;
  // All ids of the plan in sorted order.
  std::vector<std::string> all_ids() const;

  bool operator==(const SplitPlan&) const = default;
};

// round(test_fraction * N), half up.
std::size_t test_count(std::size_t n, double test_fraction);

// Stratified holdout plus k-fold assignment.
//
// The test size is round(test_fraction * N), apportioned over classes by
// largest remainder so each class is within one sample of its exact share.
// Within a class, the sorted ids are shuffled by the stream keyed
// (seed, split tag, class id); the first ones go to test and the rest are
// dealt round-robin over the folds, the dealing position carrying over from
// one class to the next. Input order does not matter.
//
// Throws InputError when a present class has fewer than k samples and
// ConfigError when k or the fraction is out of range.
SplitPlan make_split(std::span<const LabeledId> samples, std::uint64_t seed,
                     double test_fraction = kDefaultTestFraction, int k = kDefaultFolds);
SplitPlan make_split(const DatasetManifest& manifest, std::uint64_t seed,
                     double test_fraction = kDefaultTestFraction, int k = kDefaultFolds);

struct FoldRoles {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

// Validation = fold[fold_index], train = the other folds, test = holdout.
// Throws std::out_of_range for a bad fold index.
FoldRoles fold_roles(const SplitPlan& plan, int fold_index);

// "#split-v1<TAB>seed=..<TAB>k=..<TAB>test_fraction=.." then "id<TAB>assignment"
// rows sorted by id, where assignment is "test" or the fold number.
void write_split(std::ostream& out, const SplitPlan& plan);
SplitPlan read_split(std::istream& in);

// ---------------------------------------------------------------------------
// Packing
//
// <stem>.pstk: 32-byte little-endian header
//   0  char[4] "PSTK"
//   4  u16     format version (1)
//   6  u8      dtype (0 = u8)
//   7  u8      reserved (0)
//   8  u32     sample count
//   12 u16     n_layers
//   14 u16     height
//   16 u16     width
//   18 ..31    zero
// followed by the samples in sorted id order, each n_layers x height x width
// bytes, layer-major, rows top to bottom.
// <stem>.index.tsv: "#index-v1" then "id label offset n_layers height width".
// <stem>.split.tsv: the split plan.

inline constexpr std::uint16_t kPackFormatVersion = 1;
inline constexpr std::size_t kPackHeaderBytes = 32;
inline constexpr std::uint8_t kDtypeU8 = 0;

struct PackHeader {
  std::uint16_t version = kPackFormatVersion;
  std::uint8_t dtype = kDtypeU8;
  std::uint32_t count = 0;
  std::uint16_t n_layers = 0;
  std::uint16_t height = kCanonicalSide;
  std::uint16_t width = kCanonicalSide;

  std::size_t sample_bytes() const noexcept {
    return static_cast<std::size_t>(n_layers) * height * width;
  }
  bool operator==(const PackHeader&) const = default;
};

std::array<std::uint8_t, kPackHeaderBytes> encode_header(const PackHeader& header);
// Throws FormatError (BadMagic / VersionMismatch) on a foreign header.
PackHeader decode_header(std::span<const std::uint8_t> bytes);

struct IndexEntry {
  std::string id;
  ClassLabel label = ClassLabel::Urtica;
  std::uint64_t offset = 0;
  int n_layers = 0;
  int height = 0;
  int width = 0;

  bool operator==(const IndexEntry&) const = default;
};

void write_index(std::ostream& out, std::span<const IndexEntry> entries);
std::vector<IndexEntry> read_index(std::istream& in);

struct DatasetFiles {
  std::filesystem::path blob;
  std::filesystem::path index;
  std::filesystem::path split;

  static DatasetFiles for_stem(const std::filesystem::path& stem);
};

// Streams samples into a dataset whose id set is fixed by the split plan.
// Each sample's offset follows from its rank among the sorted ids, so
// samples may arrive in any order (and from several threads) while the files
// come out byte-identical.
class PackWriter {
 public:
  PackWriter(const std::filesystem::path& stem, SplitPlan plan, int n_layers,
             int height = kCanonicalSide, int width = kCanonicalSide);
  ~PackWriter();

  PackWriter(const PackWriter&) = delete;
  PackWriter& operator=(const PackWriter&) = delete;

  // Throws InputError for ids outside the plan, duplicates and shape mismatches.
  void add(const CanonicalSample& sample);

  // Writes the index and split files. Throws if any planned id is missing.
  void finish();

 private:
  DatasetFiles files_;
  SplitPlan plan_;
  PackHeader header_;
  std::vector<std::string> ids_;
  std::vector<std::optional<ClassLabel>> labels_;
  std::unique_ptr<std::ofstream> blob_;
  std::mutex mutex_;
  bool finished_ = false;
};

class PackedDataset {
 public:
  // Loads header, index and split and cross-checks them. Distinct
  // FormatErrorKinds: BadMagic, VersionMismatch, Truncated (blob shorter than
  // declared), Inconsistent (index/blob/split disagree).
  static PackedDataset open(const std::filesystem::path& stem);

  const DatasetFiles& files() const noexcept { return files_; }
  const PackHeader& header() const noexcept { return header_; }
  const std::vector<IndexEntry>& index() const noexcept { return index_; }
  const SplitPlan& split() const noexcept { return split_; }

  std::optional<std::size_t> find(std::string_view id) const;

  // Random access by index position; reads only that sample's bytes and is
  // safe to call concurrently.
  std::vector<std::uint8_t> load_tensor(std::size_t position) const;
  CanonicalSample load(std::size_t position) const;
  CanonicalSample load(std::string_view id) const;

 private:
  DatasetFiles files_;
  PackHeader header_;
  std::vector<IndexEntry> index_;
  SplitPlan split_;
};

PackedDataset pack(std::span<const CanonicalSample> samples, const SplitPlan& plan,
                   const std::filesystem::path& stem);

inline PackedDataset read_packed(const std::filesystem::path& stem) {
  return PackedDataset::open(stem);
}

}  // namespace pollenstack
