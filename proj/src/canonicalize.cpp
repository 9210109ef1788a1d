#include "pollenstack/canonicalize.hpp"

#include <algorithm>
#include <stdexcept>

#include "pollenstack/random.hpp"

namespace pollenstack {

namespace {

std::uint8_t rounded_mean(std::uint64_t sum, std::uint64_t count) {
  return static_cast<std::uint8_t>((2 * sum + count) / (2 * count));
}

std::uint64_t pixel_sum(const GrayImage& layer) {
  std::uint64_t sum = 0;
  for (auto v : layer.pixels()) sum += v;
  return sum;
}

}  // namespace

std::uint8_t mean_intensity(const GrayImage& layer) {
  if (layer.empty()) throw std::invalid_argument("mean_intensity: empty layer");
  return rounded_mean(pixel_sum(layer), layer.size());
}

GrayImage pad_to_canonical(const GrayImage& layer, std::uint8_t pad_value, int target) {
  if (layer.empty()) throw std::invalid_argument("pad_to_canonical: empty layer");
  if (layer.height() > target || layer.width() > target) {
    throw std::invalid_argument("pad_to_canonical: layer larger than " + std::to_string(target));
  }
  GrayImage out(target, target, pad_value);
  const int top = (target - layer.height()) / 2;
  const int left = (target - layer.width()) / 2;
  for (int r = 0; r < layer.height(); ++r) {
    const auto src = layer.row(r);
    std::copy(src.begin(), src.end(), &out(top + r, left));
  }
  return out;
}

GrayImage pad_to_canonical(const GrayImage& layer, int target) {
  return pad_to_canonical(layer, mean_intensity(layer), target);
}

CanonicalSample canonicalize(const ZStack& stack, int focal_index, const LayerWindow& window,
                             PadMode mode) {
  if (window.size() < 1 || window.first < 0 || window.last >= stack.depth()) {
    throw std::invalid_argument("canonicalize: window outside stack " + stack.id);
  }
  CanonicalSample sample;
  sample.id = stack.id;
  sample.label = stack.label;
  sample.n_layers = window.size();
  sample.focal_index = focal_index;
  sample.window = window;
  sample.tensor.reserve(sample.n_layers * sample.layer_bytes());

  std::uint8_t stack_pad = 0;
  if (mode == PadMode::PerStack) {
    std::uint64_t sum = 0;
    std::uint64_t count = 0;
    for (int z = window.first; z <= window.last; ++z) {
      sum += pixel_sum(stack.layers[z]);
      count += stack.layers[z].size();
    }
    stack_pad = rounded_mean(sum, count);
  }
  for (int z = window.first; z <= window.last; ++z) {
    const GrayImage& layer = stack.layers[z];
    const GrayImage padded = mode == PadMode::PerStack ? pad_to_canonical(layer, stack_pad)
                                                       : pad_to_canonical(layer);
    sample.tensor.insert(sample.tensor.end(), padded.pixels().begin(), padded.pixels().end());
  }
  return sample;
}

CanonicalSample flip(CanonicalSample sample, FlipAxis axis) {
  const int h = sample.height;
  const int w = sample.width;
  for (int z = 0; z < sample.n_layers; ++z) {
    auto* base = sample.tensor.data() + z * sample.layer_bytes();
    if (axis == FlipAxis::Horizontal) {
      for (int r = 0; r < h; ++r) std::reverse(base + r * w, base + (r + 1) * w);
    } else {
      for (int r = 0; r < h / 2; ++r) {
        std::swap_ranges(base + r * w, base + (r + 1) * w, base + (h - 1 - r) * w);
      }
    }
  }
  return sample;
}

FlipDecision draw_flips(const AugmentConfig& cfg, std::string_view sample_id, std::int64_t epoch) {
  rng::CounterStream stream{cfg.seed, rng::kTagAugment, rng::hash_text(sample_id),
                            static_cast<std::uint64_t>(epoch)};
  FlipDecision d;
  d.horizontal = stream.next_unit() < cfg.p_flip;
  d.vertical = stream.next_unit() < cfg.p_flip;
  return d;
}

CanonicalSample augment(const CanonicalSample& sample, const AugmentConfig& cfg, std::int64_t epoch) {
  const FlipDecision d = draw_flips(cfg, sample.id, epoch);
  CanonicalSample out = sample;
  if (d.horizontal) out = flip(std::move(out), FlipAxis::Horizontal);
  if (d.vertical) out = flip(std::move(out), FlipAxis::Vertical);
  return out;
}

}  // namespace pollenstack
