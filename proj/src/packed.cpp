#include <algorithm>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "pollenstack/dataset_kit.hpp"
#include "pollenstack/error.hpp"
#include "text_util.hpp"

namespace pollenstack {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 4> kMagic = {'P', 'S', 'T', 'K'};
constexpr std::string_view kIndexVersion = "#index-v1";
constexpr std::string_view kIndexColumns = "id\tlabel\toffset\tn_layers\theight\twidth";

void put_u16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v & 0xff);
  p[1] = static_cast<std::uint8_t>(v >> 8);
}

void put_u32(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xff);
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

FormatError inconsistent(const std::string& what) {
  return FormatError(FormatErrorKind::Inconsistent, "index/blob inconsistency: " + what);
}

std::ifstream open_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

void write_text_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << contents;
  out.close();
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace

std::array<std::uint8_t, kPackHeaderBytes> encode_header(const PackHeader& header) {
  std::array<std::uint8_t, kPackHeaderBytes> bytes{};
  std::memcpy(bytes.data(), kMagic.data(), kMagic.size());
  put_u16(bytes.data() + 4, header.version);
  bytes[6] = header.dtype;
  bytes[7] = 0;
  put_u32(bytes.data() + 8, header.count);
  put_u16(bytes.data() + 12, header.n_layers);
  put_u16(bytes.data() + 14, header.height);
  put_u16(bytes.data() + 16, header.width);
  return bytes;
}

PackHeader decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size()) {
    throw FormatError(FormatErrorKind::Truncated, "truncated blob: header incomplete");
  }
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw FormatError(FormatErrorKind::BadMagic, "bad magic: not a PSTK blob");
  }
  if (bytes.size() < kPackHeaderBytes) {
    throw FormatError(FormatErrorKind::Truncated, "truncated blob: header incomplete");
  }
  PackHeader h;
  h.version = get_u16(bytes.data() + 4);
  if (h.version != kPackFormatVersion) {
    throw FormatError(FormatErrorKind::VersionMismatch,
                      "version mismatch: PSTK version " + std::to_string(h.version) +
                          ", expected " + std::to_string(kPackFormatVersion));
  }
  h.dtype = bytes[6];
  if (h.dtype != kDtypeU8) {
    throw FormatError(FormatErrorKind::VersionMismatch,
                      "version mismatch: unsupported dtype code " + std::to_string(h.dtype));
  }
  h.count = get_u32(bytes.data() + 8);
  h.n_layers = get_u16(bytes.data() + 12);
  h.height = get_u16(bytes.data() + 14);
  h.width = get_u16(bytes.data() + 16);
  return h;
}

void write_index(std::ostream& out, std::span<const IndexEntry> entries) {
  out << kIndexVersion << '\n' << kIndexColumns << '\n';
  for (const auto& e : entries) {
    out << e.id << '\t' << class_id(e.label) << '\t' << e.offset << '\t' << e.n_layers << '\t'
        << e.height << '\t' << e.width << '\n';
  }
}

std::vector<IndexEntry> read_index(std::istream& in) {
  std::string line;
  if (!text::read_line(in, line) || line != kIndexVersion) {
    throw FormatError(FormatErrorKind::VersionMismatch,
                      "version mismatch: index header is not " + std::string(kIndexVersion));
  }
  if (!text::read_line(in, line) || line != kIndexColumns) {
    throw FormatError(FormatErrorKind::Malformed, "index: bad column header");
  }
  std::vector<IndexEntry> entries;
  int line_no = 2;
  while (text::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = text::split(line);
    const auto label = f.size() == 6 ? text::parse_int<int>(f[1]) : std::nullopt;
    const auto offset = f.size() == 6 ? text::parse_int<std::uint64_t>(f[2]) : std::nullopt;
    const auto n = f.size() == 6 ? text::parse_int<int>(f[3]) : std::nullopt;
    const auto h = f.size() == 6 ? text::parse_int<int>(f[4]) : std::nullopt;
    const auto w = f.size() == 6 ? text::parse_int<int>(f[5]) : std::nullopt;
    if (!label || !offset || !n || !h || !w || *label < 0 || *label >= kNumClasses || f[0].empty()) {
      throw FormatError(FormatErrorKind::Malformed,
                        "index line " + std::to_string(line_no) + ": malformed entry");
    }
    entries.push_back({std::string(f[0]), static_cast<ClassLabel>(*label), *offset, *n, *h, *w});
  }
  return entries;
}

DatasetFiles DatasetFiles::for_stem(const fs::path& stem) {
  const std::string base = stem.string();
  return {fs::path(base + ".pstk"), fs::path(base + ".index.tsv"), fs::path(base + ".split.tsv")};
}

// ---------------------------------------------------------------------------

PackWriter::PackWriter(const fs::path& stem, SplitPlan plan, int n_layers, int height, int width)
    : files_(DatasetFiles::for_stem(stem)), plan_(std::move(plan)) {
  if (n_layers < 1 || n_layers > 0xffff || height < 1 || height > 0xffff || width < 1 ||
      width > 0xffff) {
    throw ConfigError("pack: tensor shape out of range");
  }
  ids_ = plan_.all_ids();
  if (std::adjacent_find(ids_.begin(), ids_.end()) != ids_.end()) {
    throw InputError("pack: split plan lists an id twice");
  }
  header_.count = static_cast<std::uint32_t>(ids_.size());
  header_.n_layers = static_cast<std::uint16_t>(n_layers);
  header_.height = static_cast<std::uint16_t>(height);
  header_.width = static_cast<std::uint16_t>(width);
  labels_.resize(ids_.size());

  if (files_.blob.has_parent_path()) fs::create_directories(files_.blob.parent_path());
  blob_ = std::make_unique<std::ofstream>(files_.blob, std::ios::binary | std::ios::trunc);
  if (!*blob_) throw Error("cannot write " + files_.blob.string());
  const auto bytes = encode_header(header_);
  blob_->write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

PackWriter::~PackWriter() = default;

void PackWriter::add(const CanonicalSample& sample) {
  if (sample.n_layers != header_.n_layers || sample.height != header_.height ||
      sample.width != header_.width || sample.tensor.size() != header_.sample_bytes()) {
    throw InputError("pack: sample " + sample.id + " has shape " + std::to_string(sample.n_layers) +
                     "x" + std::to_string(sample.height) + "x" + std::to_string(sample.width) +
                     ", expected " + std::to_string(header_.n_layers) + "x" +
                     std::to_string(header_.height) + "x" + std::to_string(header_.width));
  }
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), sample.id);
  if (it == ids_.end() || *it != sample.id) {
    throw InputError("pack: sample " + sample.id + " is not in the split plan");
  }
  const auto position = static_cast<std::size_t>(it - ids_.begin());
  const std::uint64_t offset = kPackHeaderBytes + position * header_.sample_bytes();

  std::lock_guard lock(mutex_);
  if (finished_) throw Error("pack: writer already finished");
  if (labels_[position]) throw InputError("pack: duplicate sample id " + sample.id);
  labels_[position] = sample.label;
  blob_->seekp(static_cast<std::streamoff>(offset));
  blob_->write(reinterpret_cast<const char*>(sample.tensor.data()),
               static_cast<std::streamsize>(sample.tensor.size()));
  if (!*blob_) throw Error("pack: write failed for " + files_.blob.string());
}

void PackWriter::finish() {
  std::lock_guard lock(mutex_);
  if (finished_) return;
  std::vector<IndexEntry> entries;
  entries.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!labels_[i]) throw InputError("pack: no sample provided for " + ids_[i]);
    entries.push_back({ids_[i], *labels_[i], kPackHeaderBytes + i * header_.sample_bytes(),
                       header_.n_layers, header_.height, header_.width});
  }
  blob_->close();
  if (!*blob_) throw Error("pack: write failed for " + files_.blob.string());

  std::ostringstream index;
  write_index(index, entries);
  write_text_file(files_.index, index.str());
  std::ostringstream split;
  write_split(split, plan_);
  write_text_file(files_.split, split.str());
  finished_ = true;
}

PackedDataset pack(std::span<const CanonicalSample> samples, const SplitPlan& plan,
                   const fs::path& stem) {
  if (samples.empty()) throw InputError("pack: no samples");
  const auto& first = samples.front();
  PackWriter writer(stem, plan, first.n_layers, first.height, first.width);
  for (const auto& sample : samples) writer.add(sample);
  writer.finish();
  return PackedDataset::open(stem);
}

// ---------------------------------------------------------------------------

PackedDataset PackedDataset::open(const fs::path& stem) {
  PackedDataset ds;
  ds.files_ = DatasetFiles::for_stem(stem);

  std::ifstream blob(ds.files_.blob, std::ios::binary);
  if (!blob) throw InputError("cannot open " + ds.files_.blob.string());
  std::array<std::uint8_t, kPackHeaderBytes> raw{};
  blob.read(reinterpret_cast<char*>(raw.data()), raw.size());
  ds.header_ = decode_header(std::span<const std::uint8_t>(raw.data(), static_cast<std::size_t>(blob.gcount())));

  const auto actual = fs::file_size(ds.files_.blob);
  const std::uint64_t expected =
      kPackHeaderBytes + static_cast<std::uint64_t>(ds.header_.count) * ds.header_.sample_bytes();
  if (actual < expected) {
    throw FormatError(FormatErrorKind::Truncated,
                      "truncated blob: " + std::to_string(actual) + " bytes, header declares " +
                          std::to_string(expected));
  }
  if (actual > expected) {
    throw inconsistent("blob has " + std::to_string(actual - expected) + " trailing bytes");
  }

  {
    auto in = open_text(ds.files_.index);
    ds.index_ = read_index(in);
  }
  if (ds.index_.size() != ds.header_.count) {
    throw inconsistent("index lists " + std::to_string(ds.index_.size()) +
                       " samples, blob header declares " + std::to_string(ds.header_.count));
  }
  for (std::size_t i = 0; i < ds.index_.size(); ++i) {
    const auto& e = ds.index_[i];
    if (e.n_layers != ds.header_.n_layers || e.height != ds.header_.height ||
        e.width != ds.header_.width) {
      throw inconsistent("shape of " + e.id + " differs from blob header");
    }
    if (e.offset != kPackHeaderBytes + i * ds.header_.sample_bytes()) {
      throw inconsistent("offset of " + e.id + " is " + std::to_string(e.offset));
    }
    if (i > 0 && ds.index_[i - 1].id >= e.id) {
      throw inconsistent("ids not unique and sorted at " + e.id);
    }
  }

  {
    auto in = open_text(ds.files_.split);
    ds.split_ = read_split(in);
  }
  const auto planned = ds.split_.all_ids();
  if (planned.size() != ds.index_.size() ||
      !std::equal(planned.begin(), planned.end(), ds.index_.begin(),
                  [](const std::string& id, const IndexEntry& e) { return id == e.id; })) {
    throw inconsistent("split plan and index list different ids");
  }
  return ds;
}

std::optional<std::size_t> PackedDataset::find(std::string_view id) const {
  const auto it = std::lower_bound(index_.begin(), index_.end(), id,
                                   [](const IndexEntry& e, std::string_view v) { return e.id < v; });
  if (it == index_.end() || it->id != id) return std::nullopt;
  return static_cast<std::size_t>(it - index_.begin());
}

std::vector<std::uint8_t> PackedDataset::load_tensor(std::size_t position) const {
  if (position >= index_.size()) throw std::out_of_range("packed dataset position out of range");
  std::ifstream blob(files_.blob, std::ios::binary);
  if (!blob) throw InputError("cannot open " + files_.blob.string());
  std::vector<std::uint8_t> tensor(header_.sample_bytes());
  blob.seekg(static_cast<std::streamoff>(index_[position].offset));
  blob.read(reinterpret_cast<char*>(tensor.data()), static_cast<std::streamsize>(tensor.size()));
  if (blob.gcount() != static_cast<std::streamsize>(tensor.size())) {
    throw FormatError(FormatErrorKind::Truncated, "truncated blob while reading " + index_[position].id);
  }
  return tensor;
}

CanonicalSample PackedDataset::load(std::size_t position) const {
  CanonicalSample s;
  s.tensor = load_tensor(position);
  const auto& e = index_[position];
  s.id = e.id;
  s.label = e.label;
  s.n_layers = e.n_layers;
  s.height = e.height;
  s.width = e.width;
  return s;
}

CanonicalSample PackedDataset::load(std::string_view id) const {
  const auto position = find(id);
  if (!position) throw InputError("packed dataset has no sample " + std::string(id));
  return load(*position);
}

}  // namespace pollenstack
