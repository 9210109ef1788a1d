#include <array>
#include <random>

#include "doctest.h"
#include "pollenstack/canonicalize.hpp"
#include "synthetic.hpp"

using namespace pollenstack;

namespace {

CanonicalSample tiny_sample(int n_layers, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CanonicalSample s;
  s.id = "t" + std::to_string(seed);
  s.label = ClassLabel::Parietaria;
  s.n_layers = n_layers;
  s.height = h;
  s.width = w;
  s.tensor.resize(static_cast<std::size_t>(n_layers) * h * w);
  for (auto& v : s.tensor) v = static_cast<std::uint8_t>(rng() & 0xff);
  return s;
}

std::array<std::size_t, 256> histogram(std::span<const std::uint8_t> values) {
  std::array<std::size_t, 256> h{};
  for (auto v : values) ++h[v];
  return h;
}

}  // namespace

TEST_CASE("full-size layer is returned unchanged") {
  std::mt19937_64 rng(1);
  const GrayImage img = testing::noise_texture(224, 224, rng);
  CHECK(pad_to_canonical(img) == img);
}

TEST_CASE("100x150 layer with mean 37 is centred at (62, 37)") {
  GrayImage img(100, 150);
  for (int r = 0; r < 100; ++r) {
    for (int c = 0; c < 150; ++c) img(r, c) = static_cast<std::uint8_t>(c % 2 ? 30 : 44);
  }
  REQUIRE(mean_intensity(img) == 37);
  const GrayImage out = pad_to_canonical(img);
  REQUIRE(out.height() == 224);
  REQUIRE(out.width() == 224);
  for (int r = 0; r < 224; ++r) {
    for (int c = 0; c < 224; ++c) {
      const bool inside = r >= 62 && r < 162 && c >= 37 && c < 187;
      if (inside) {
        REQUIRE(out(r, c) == img(r - 62, c - 37));
      } else {
        REQUIRE(out(r, c) == 37);
      }
    }
  }
}

TEST_CASE("constant 10x10 layer pads to a constant canvas") {
  const GrayImage out = pad_to_canonical(GrayImage(10, 10, 200));
  for (auto v : out.pixels()) REQUIRE(v == 200);
}

TEST_CASE("mean rounds half up") {
  GrayImage img(1, 2);
  img(0, 0) = 10;
  img(0, 1) = 11;
  CHECK(mean_intensity(img) == 11);
  img(0, 1) = 12;
  CHECK(mean_intensity(img) == 11);
}

TEST_CASE("oversized layer is rejected") {
  CHECK_THROWS_AS(pad_to_canonical(GrayImage(225, 10)), std::invalid_argument);
  CHECK_THROWS_AS(pad_to_canonical(GrayImage(10, 300)), std::invalid_argument);
}

TEST_CASE("padding histogram identity") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> side(1, 224);
  for (int i = 0; i < 50; ++i) {
    const int h = side(rng);
    const int w = side(rng);
    const GrayImage img = testing::noise_texture(h, w, rng);
    const GrayImage out = pad_to_canonical(img);
    auto expected = histogram(img.pixels());
    expected[mean_intensity(img)] += 224 * 224 - h * w;
    CHECK(histogram(out.pixels()) == expected);
  }
}

TEST_CASE("canonicalize cuts the window and pads each layer") {
  std::mt19937_64 rng(21);
  std::vector<GrayImage> layers;
  for (int z = 0; z < 8; ++z) layers.push_back(testing::noise_texture(30, 40, rng));
  const ZStack stack = testing::make_stack("urtica/x", layers, ClassLabel::Urtica);
  const LayerWindow window{2, 5};

  const CanonicalSample s = canonicalize(stack, 3, window);
  CHECK(s.id == "urtica/x");
  CHECK(s.label == ClassLabel::Urtica);
  CHECK(s.n_layers == 4);
  CHECK(s.tensor.size() == 4u * 224 * 224);
  CHECK(s.focal_index == 3);
  CHECK(s.window == window);
  for (int z = 0; z < 4; ++z) {
    const GrayImage expected = pad_to_canonical(layers[2 + z]);
    CHECK(std::equal(expected.pixels().begin(), expected.pixels().end(), s.layer(z).begin()));
  }

  const CanonicalSample per_stack = canonicalize(stack, 3, window, PadMode::PerStack);
  std::uint64_t sum = 0;
  for (int z = 2; z <= 5; ++z) {
    for (auto v : layers[z].pixels()) sum += v;
  }
  const std::uint64_t count = 4ull * 30 * 40;
  const auto stack_mean = static_cast<std::uint8_t>((2 * sum + count) / (2 * count));
  for (int z = 0; z < 4; ++z) CHECK(per_stack.at(z, 0, 0) == stack_mean);
}

TEST_CASE("horizontal flip of a 2x2 layer") {
  CanonicalSample s;
  s.n_layers = 1;
  s.height = 2;
  s.width = 2;
  s.tensor = {1, 2, 3, 4};
  CHECK(flip(s, FlipAxis::Horizontal).tensor == std::vector<std::uint8_t>{2, 1, 4, 3});
  CHECK(flip(s, FlipAxis::Vertical).tensor == std::vector<std::uint8_t>{3, 4, 1, 2});
}

TEST_CASE("flip is an involution and composes to a rotation") {
  const CanonicalSample s = tiny_sample(3, 5, 7, 4);
  CHECK(flip(flip(s, FlipAxis::Horizontal), FlipAxis::Horizontal).tensor == s.tensor);
  CHECK(flip(flip(s, FlipAxis::Vertical), FlipAxis::Vertical).tensor == s.tensor);

  const CanonicalSample rotated = flip(flip(s, FlipAxis::Vertical), FlipAxis::Horizontal);
  for (int z = 0; z < 3; ++z) {
    for (int r = 0; r < 5; ++r) {
      for (int c = 0; c < 7; ++c) REQUIRE(rotated.at(z, r, c) == s.at(z, 4 - r, 6 - c));
    }
  }
  CHECK(rotated.id == s.id);
  CHECK(rotated.label == s.label);
  CHECK(rotated.n_layers == s.n_layers);
}

TEST_CASE("augment with p 0 and p 1") {
  const CanonicalSample s = tiny_sample(2, 6, 6, 8);
  for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
    for (int epoch = 0; epoch < 5; ++epoch) {
      CHECK(augment(s, {0.0, seed}, epoch).tensor == s.tensor);
      const auto both = flip(flip(s, FlipAxis::Horizontal), FlipAxis::Vertical);
      CHECK(augment(s, {1.0, seed}, epoch).tensor == both.tensor);
    }
  }
}

TEST_CASE("flip frequency over 10000 draws") {
  const AugmentConfig cfg{0.5, 42};
  int horizontal = 0;
  int vertical = 0;
  for (int i = 0; i < 10000; ++i) {
    const FlipDecision d = draw_flips(cfg, "sample" + std::to_string(i), 0);
    horizontal += d.horizontal;
    vertical += d.vertical;
  }
  CHECK(horizontal >= 4800);
  CHECK(horizontal <= 5200);
  CHECK(vertical >= 4800);
  CHECK(vertical <= 5200);
}

TEST_CASE("augmentation is keyed by seed, id and epoch") {
  const CanonicalSample s = tiny_sample(2, 8, 8, 12);
  const AugmentConfig cfg{0.5, 7};
  for (int epoch = 0; epoch < 20; ++epoch) {
    CHECK(augment(s, cfg, epoch).tensor == augment(s, cfg, epoch).tensor);
  }
  int differing_epochs = 0;
  for (int epoch = 1; epoch < 20; ++epoch) {
    const auto a = draw_flips(cfg, s.id, 0);
    const auto b = draw_flips(cfg, s.id, epoch);
    differing_epochs += (a.horizontal != b.horizontal || a.vertical != b.vertical);
  }
  CHECK(differing_epochs > 0);
}

TEST_CASE("augmentation preserves label, shape and per-layer histograms") {
  const CanonicalSample s = tiny_sample(3, 10, 12, 30);
  for (int epoch = 0; epoch < 8; ++epoch) {
    const CanonicalSample a = augment(s, {0.5, 3}, epoch);
    CHECK(a.label == s.label);
    CHECK(a.n_layers == s.n_layers);
    CHECK(a.height == s.height);
    CHECK(a.width == s.width);
    for (int z = 0; z < 3; ++z) CHECK(histogram(a.layer(z)) == histogram(s.layer(z)));
  }
}
