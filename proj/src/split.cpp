#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

#include "pollenstack/dataset_kit.hpp"
#include "pollenstack/error.hpp"
#include "pollenstack/random.hpp"
#include "text_util.hpp"

namespace pollenstack {

namespace {

constexpr std::string_view kSplitVersion = "#split-v1";
constexpr std::string_view kSplitColumns = "id\tassignment";

FormatError split_error(FormatErrorKind kind, const std::string& what) {
  return FormatError(kind, "split: " + what);
}

}  // namespace

std::size_t SplitPlan::total() const noexcept {
  std::size_t n = test_ids.size();
  for (const auto& fold : folds) n += fold.size();
  return n;
}

std::vector<std::string> SplitPlan::all_ids() const {
  std::vector<std::string> ids = test_ids;
  for (const auto& fold : folds) ids.insert(ids.end(), fold.begin(), fold.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::size_t test_count(std::size_t n, double test_fraction) {
  // The epsilon absorbs representation error such as 0.1 * 30 = 3.0000000000000004.
  return static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n) + 0.5 + 1e-9));
}

SplitPlan make_split(std::span<const LabeledId> samples, std::uint64_t seed,
                     double test_fraction, int k) {
  if (k < 1) throw ConfigError("split: fold count must be >= 1");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("split: test fraction must be in [0, 1)");
  }

  std::array<std::vector<std::string>, kNumClasses> by_class;
  for (const auto& s : samples) by_class[class_id(s.label)].push_back(s.id);
  std::set<std::string> seen;
  for (auto& ids : by_class) {
    std::sort(ids.begin(), ids.end());
    for (const auto& id : ids) {
      if (!seen.insert(id).second) throw InputError("split: duplicate id " + id);
    }
  }
  for (ClassLabel label : kAllClasses) {
    const auto n = by_class[class_id(label)].size();
    if (n > 0 && n < static_cast<std::size_t>(k)) {
      throw InputError("split: class " + std::string(class_name(label)) + " has " +
                       std::to_string(n) + " samples, needs at least " + std::to_string(k));
    }
  }

  // Largest-remainder apportionment of the test size over classes.
  const std::size_t total = samples.size();
  const std::size_t test_total = test_count(total, test_fraction);
  std::array<std::size_t, kNumClasses> test_per_class{};
  std::array<std::size_t, kNumClasses> remainder{};
  std::size_t assigned = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const std::size_t scaled = test_total * by_class[c].size();
    test_per_class[c] = total == 0 ? 0 : scaled / total;
    remainder[c] = total == 0 ? 0 : scaled % total;
    assigned += test_per_class[c];
  }
  std::array<int, kNumClasses> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (int i = 0; assigned < test_total; ++i, ++assigned) ++test_per_class[order[i % kNumClasses]];

  SplitPlan plan;
  plan.seed = seed;
  plan.k = k;
  plan.test_fraction = test_fraction;
  plan.folds.resize(static_cast<std::size_t>(k));
  std::size_t deal = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    auto ids = by_class[c];
    rng::CounterStream stream{seed, rng::kTagSplit, static_cast<std::uint64_t>(c)};
    for (std::size_t i = ids.size(); i > 1; --i) {
      std::swap(ids[i - 1], ids[stream.next_below(i)]);
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i < test_per_class[c]) {
        plan.test_ids.push_back(ids[i]);
      } else {
        plan.folds[deal++ % static_cast<std::size_t>(k)].push_back(ids[i]);
      }
    }
  }
  std::sort(plan.test_ids.begin(), plan.test_ids.end());
  for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
  return plan;
}

SplitPlan make_split(const DatasetManifest& manifest, std::uint64_t seed, double test_fraction,
                     int k) {
  std::vector<LabeledId> samples;
  samples.reserve(manifest.records.size());
  for (const auto& r : manifest.records) samples.push_back({r.id, r.label});
  return make_split(samples, seed, test_fraction, k);
}

FoldRoles fold_roles(const SplitPlan& plan, int fold_index) {
  if (fold_index < 0 || fold_index >= plan.k ||
      fold_index >= static_cast<int>(plan.folds.size())) {
    throw std::out_of_range("fold index " + std::to_string(fold_index) + " outside [0, " +
                            std::to_string(plan.k) + ")");
  }
  FoldRoles roles;
  roles.val = plan.folds[fold_index];
  for (int f = 0; f < static_cast<int>(plan.folds.size()); ++f) {
    if (f == fold_index) continue;
    roles.train.insert(roles.train.end(), plan.folds[f].begin(), plan.folds[f].end());
  }
  std::sort(roles.train.begin(), roles.train.end());
  roles.test = plan.test_ids;
  return roles;
}

void write_split(std::ostream& out, const SplitPlan& plan) {
  std::vector<std::pair<std::string, int>> rows;
  for (const auto& id : plan.test_ids) rows.emplace_back(id, -1);
  for (int f = 0; f < static_cast<int>(plan.folds.size()); ++f) {
    for (const auto& id : plan.folds[f]) rows.emplace_back(id, f);
  }
  std::sort(rows.begin(), rows.end());
  out << kSplitVersion << "\tseed=" << plan.seed << "\tk=" << plan.k
      << "\ttest_fraction=" << text::format_double(plan.test_fraction) << '\n'
      << kSplitColumns << '\n';
  for (const auto& [id, fold] : rows) {
    out << id << '\t';
    if (fold < 0) {
      out << "test";
    } else {
      out << fold;
    }
    out << '\n';
  }
}

SplitPlan read_split(std::istream& in) {
  std::string line;
  if (!text::read_line(in, line)) throw split_error(FormatErrorKind::Truncated, "empty file");
  const auto header = text::split(line);
  if (header.empty() || header[0] != kSplitVersion) {
    throw split_error(FormatErrorKind::VersionMismatch, "expected header " + std::string(kSplitVersion));
  }
  SplitPlan plan;
  bool have_seed = false;
  bool have_k = false;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const auto eq = header[i].find('=');
    if (eq == std::string_view::npos) throw split_error(FormatErrorKind::Malformed, "bad header field");
    const auto key = header[i].substr(0, eq);
    const auto value = header[i].substr(eq + 1);
    if (key == "seed") {
      const auto v = text::parse_int<std::uint64_t>(value);
      if (!v) throw split_error(FormatErrorKind::Malformed, "bad seed");
      plan.seed = *v;
      have_seed = true;
    } else if (key == "k") {
      const auto v = text::parse_int<int>(value);
      if (!v || *v < 1) throw split_error(FormatErrorKind::Malformed, "bad k");
      plan.k = *v;
      have_k = true;
    } else if (key == "test_fraction") {
      const auto v = text::parse_double(value);
      if (!v) throw split_error(FormatErrorKind::Malformed, "bad test_fraction");
      plan.test_fraction = *v;
    } else {
      throw split_error(FormatErrorKind::Malformed, "unknown header field " + std::string(key));
    }
  }
  if (!have_seed || !have_k) throw split_error(FormatErrorKind::Malformed, "header lacks seed or k");
  if (!text::read_line(in, line) || line != kSplitColumns) {
    throw split_error(FormatErrorKind::Malformed, "bad column header");
  }
  plan.folds.resize(static_cast<std::size_t>(plan.k));
  std::string previous;
  int line_no = 2;
  while (text::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = text::split(line);
    if (f.size() != 2 || f[0].empty()) {
      throw split_error(FormatErrorKind::Malformed, "line " + std::to_string(line_no) + " malformed");
    }
    std::string id(f[0]);
    if (!previous.empty() && id <= previous) {
      throw split_error(FormatErrorKind::Inconsistent, "ids not unique and sorted at " + id);
    }
    if (f[1] == "test") {
      plan.test_ids.push_back(id);
    } else {
      const auto fold = text::parse_int<int>(f[1]);
      if (!fold || *fold < 0 || *fold >= plan.k) {
        throw split_error(FormatErrorKind::Malformed, "line " + std::to_string(line_no) + " bad fold");
      }
      plan.folds[*fold].push_back(id);
    }
    previous = std::move(id);
  }
  return plan;
}

}  // namespace pollenstack
