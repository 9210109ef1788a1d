#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pollenstack/focus_select.hpp"
#include "pollenstack/image.hpp"
#include "pollenstack/stack_core.hpp"

namespace pollenstack {

inline constexpr int kCanonicalSide = kMaxLayerSide;

// n_layers x height x width intensities, layer-major then row-major.
// Canonical samples are 224 x 224; other sizes only appear in tests.
struct CanonicalSample {
  std::string id;
  ClassLabel label = ClassLabel::Urtica;
  int n_layers = 0;
  int height = kCanonicalSide;
  int width = kCanonicalSide;
  std::vector<std::uint8_t> tensor;
  // Provenance.
  int focal_index = 0;
  LayerWindow window;

  std::size_t layer_bytes() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  std::span<const std::uint8_t> layer(int z) const noexcept {
    return std::span<const std::uint8_t>(tensor).subspan(z * layer_bytes(), layer_bytes());
  }
  std::uint8_t at(int z, int r, int c) const noexcept {
    return tensor[z * layer_bytes() + static_cast<std::size_t>(r) * width + c];
  }
};

enum class PadMode {
  PerLayer,  // each layer padded with its own mean
  PerStack,  // every layer padded with the mean of the whole window
};

// Mean intensity rounded half up.
std::uint8_t mean_intensity(const GrayImage& layer);

// Centers the layer on a target x target canvas (top offset
// floor((target-h)/2), left offset floor((target-w)/2)) filled with
// `pad_value`. Throws std::invalid_argument for layers larger than target.
GrayImage pad_to_canonical(const GrayImage& layer, std::uint8_t pad_value,
                           int target = kCanonicalSide);

// Same, padding with the layer's own rounded mean.
GrayImage pad_to_canonical(const GrayImage& layer, int target = kCanonicalSide);

// Cuts `window` out of the stack and pads every layer to the canonical side.
CanonicalSample canonicalize(const ZStack& stack, int focal_index, const LayerWindow& window,
                             PadMode mode = PadMode::PerLayer);

enum class FlipAxis {
  Horizontal,  // mirror columns
  Vertical,    // mirror rows
};

// Applies the same flip to every layer.
CanonicalSample flip(CanonicalSample sample, FlipAxis axis);

struct AugmentConfig {
  double p_flip = 0.5;
  std::uint64_t seed = 0;
};

struct FlipDecision {
  bool horizontal = false;
  bool vertical = false;
};

// Two unit draws from the stream keyed by (seed, augment tag, hash(id),
// epoch): flip horizontally iff the first is < p_flip, vertically iff the
// second is.
FlipDecision draw_flips(const AugmentConfig& cfg, std::string_view sample_id, std::int64_t epoch);

CanonicalSample augment(const CanonicalSample& sample, const AugmentConfig& cfg, std::int64_t epoch);

}  // namespace pollenstack
