#include <filesystem>
#include <fstream>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "doctest.h"
#include "pollenstack/error.hpp"
#include "pollenstack/image_io.hpp"
#include "pollenstack/stack_core.hpp"
#include "synthetic.hpp"

using namespace pollenstack;
namespace fs = std::filesystem;

namespace {

GrayImage ramp(int h, int w, int offset = 0) {
  GrayImage img(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) img(r, c) = static_cast<std::uint8_t>((r * 7 + c * 3 + offset) % 256);
  }
  return img;
}

void write_layer_dir(const fs::path& dir, int depth, int h, int w) {
  fs::create_directories(dir);
  for (int z = 0; z < depth; ++z) {
    char name[16];
    std::snprintf(name, sizeof(name), "%02d.png", z);
    io::write_png(dir / name, ramp(h, w, z));
  }
}

}  // namespace

TEST_CASE("class id and name form a fixed bijection") {
  CHECK(kNumClasses == 3);
  CHECK(class_name(ClassLabel::Urtica) == "Urtica");
  CHECK(class_name(ClassLabel::Parietaria) == "Parietaria");
  CHECK(class_name(ClassLabel::UrticaMembranacea) == "Urtica membranacea");
  for (ClassLabel label : kAllClasses) {
    CHECK(class_from_id(class_id(label)) == label);
    CHECK(parse_class(class_name(label)) == label);
    CHECK(parse_class(std::to_string(class_id(label))) == label);
  }
  CHECK(parse_class("MEMBRANACEA") == ClassLabel::UrticaMembranacea);
  CHECK_FALSE(parse_class("ficus").has_value());
  CHECK_THROWS_AS(class_from_id(3), InputError);
  CHECK_THROWS_AS(class_from_id(-1), InputError);
}

TEST_CASE("ingest counts stacks per class directory") {
  const fs::path root = testing::scratch_dir("ingest_counts");
  write_layer_dir(root / "urtica" / "a", 3, 20, 30);
  write_layer_dir(root / "urtica" / "b", 3, 20, 30);
  write_layer_dir(root / "parietaria" / "c", 3, 20, 30);
  write_layer_dir(root / "membranacea" / "d", 3, 20, 30);

  const auto manifest = ingest_directory(root);
  REQUIRE(manifest.records.size() == 4);
  CHECK(manifest.errors.empty());
  CHECK(manifest.class_counts() == ClassCounts{2, 1, 1});
  CHECK(manifest.records[0].id == "membranacea/d");
  CHECK(manifest.records[1].id == "parietaria/c");
  CHECK(manifest.records[2].id == "urtica/a");
  for (const auto& r : manifest.records) {
    CHECK(r.depth == 3);
    CHECK(r.height == 20);
    CHECK(r.width == 30);
  }
}

TEST_CASE("empty root is fatal") {
  const fs::path root = testing::scratch_dir("ingest_empty");
  try {
    ingest_directory(root);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("no samples found") != std::string::npos);
  }
  CHECK_THROWS_AS(ingest_directory(root / "missing"), InputError);
}

TEST_CASE("a stack with a mismatched layer is rejected on its own") {
  const fs::path root = testing::scratch_dir("ingest_mismatch");
  write_layer_dir(root / "urtica" / "good", 10, 120, 120);
  write_layer_dir(root / "urtica" / "bad", 10, 120, 120);
  io::write_png(root / "urtica" / "bad" / "07.png", ramp(100, 100));

  const auto manifest = ingest_directory(root);
  REQUIRE(manifest.records.size() == 1);
  CHECK(manifest.records[0].id == "urtica/good");
  REQUIRE(manifest.errors.size() == 1);
  CHECK(manifest.errors[0].id == "urtica/bad");
  CHECK(manifest.errors[0].message.find("layer 7") != std::string::npos);
}

TEST_CASE("oversized and unreadable stacks become record errors") {
  const fs::path root = testing::scratch_dir("ingest_oversize");
  write_layer_dir(root / "parietaria" / "ok", 2, 224, 224);
  write_layer_dir(root / "parietaria" / "huge", 2, 225, 10);
  fs::create_directories(root / "parietaria" / "junk");
  std::ofstream(root / "parietaria" / "junk" / "00.png") << "not a png";

  const auto manifest = ingest_directory(root);
  REQUIRE(manifest.records.size() == 1);
  CHECK(manifest.records[0].id == "parietaria/ok");
  CHECK(manifest.errors.size() == 2);
}

TEST_CASE("multi-page files load in page order") {
  const fs::path root = testing::scratch_dir("ingest_tiff");
  fs::create_directories(root / "urtica");
  std::vector<GrayImage> pages;
  for (int z = 0; z < kNominalDepth; ++z) pages.push_back(ramp(40, 50, z * 11));
  io::write_tiff_pages(root / "urtica" / "deep.tif", pages);
  io::write_png(root / "urtica" / "single.png", ramp(40, 50));

  const auto manifest = ingest_directory(root);
  REQUIRE(manifest.records.size() == 2);
  const ZStack deep = load_stack(manifest.records[0]);
  CHECK(deep.id == "urtica/deep");
  CHECK(deep.depth() == 20);
  for (int z = 0; z < 20; ++z) CHECK(deep.layers[z] == pages[z]);

  const ZStack single = load_stack(manifest.records[1]);
  CHECK(single.depth() == 1);
  CHECK(single.layers[0] == ramp(40, 50));
}

TEST_CASE("gray RGB input decodes to the same gray values") {
  const fs::path root = testing::scratch_dir("ingest_rgb");
  fs::create_directories(root / "membranacea" / "rgb");
  const GrayImage gray = ramp(16, 24);
  cv::Mat bgr(16, 24, CV_8UC3);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 24; ++c) {
      const auto v = gray(r, c);
      bgr.at<cv::Vec3b>(r, c) = cv::Vec3b(v, v, v);
    }
  }
  REQUIRE(cv::imwrite((root / "membranacea" / "rgb" / "00.png").string(), bgr));

  const auto manifest = ingest_directory(root);
  REQUIRE(manifest.records.size() == 1);
  CHECK(load_stack(manifest.records[0]).layers[0] == gray);
}

TEST_CASE("ingest and load roundtrip bit-exact and deterministically") {
  const fs::path root = testing::scratch_dir("ingest_roundtrip");
  testing::TreeSpec spec;
  spec.per_class = 2;
  spec.depth = 5;
  spec.min_side = 30;
  spec.max_side = 60;
  testing::write_synthetic_tree(root, spec);

  const auto a = ingest_directory(root, {}, 1);
  const auto b = ingest_directory(root, {}, 4);
  CHECK(a.records == b.records);
  for (const auto& record : a.records) {
    const ZStack stack = load_stack(record);
    CHECK(stack.depth() == record.depth);
    for (const auto& layer : stack.layers) {
      CHECK(layer.height() == record.height);
      CHECK(layer.width() == record.width);
    }
    const auto direct = io::read_pages(record.path / "03.png");
    CHECK(stack.layers[3] == direct.front());
  }
}

TEST_CASE("load_stack names the record when its source vanished") {
  const fs::path root = testing::scratch_dir("ingest_vanish");
  write_layer_dir(root / "urtica" / "gone", 2, 8, 8);
  const auto manifest = ingest_directory(root);
  fs::remove_all(root / "urtica" / "gone");
  try {
    load_stack(manifest.records[0]);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("urtica/gone") != std::string::npos);
  }
}

TEST_CASE("sidecar labels") {
  const fs::path root = testing::scratch_dir("ingest_sidecar");
  write_layer_dir(root / "g1", 2, 8, 8);
  write_layer_dir(root / "g2", 2, 8, 8);
  write_layer_dir(root / "g3", 2, 8, 8);
  std::ofstream(root / "labels.tsv") << "g1\tparietaria\ng2\t2\n";

  LabelingRule rule;
  rule.source = LabelSource::Sidecar;
  const auto manifest = ingest_directory(root, rule);
  REQUIRE(manifest.records.size() == 2);
  CHECK(manifest.records[0].label == ClassLabel::Parietaria);
  CHECK(manifest.records[1].label == ClassLabel::UrticaMembranacea);
  REQUIRE(manifest.errors.size() == 1);
  CHECK(manifest.errors[0].id == "g3");
}

TEST_CASE("manifest text roundtrip") {
  const fs::path root = testing::scratch_dir("manifest_roundtrip");
  write_layer_dir(root / "urtica" / "a", 2, 8, 9);
  write_layer_dir(root / "parietaria" / "b", 3, 10, 11);
  const auto manifest = ingest_directory(root);

  std::stringstream buffer;
  write_manifest(buffer, manifest);
  const std::string text = buffer.str();
  CHECK(text.rfind("#manifest-v1\n", 0) == 0);
  const auto back = read_manifest(buffer);
  CHECK(back.records == manifest.records);

  std::istringstream wrong("#manifest-v9\n");
  CHECK_THROWS_AS(read_manifest(wrong), FormatError);
}
