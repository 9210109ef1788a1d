#pragma once

#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "pollenstack/image.hpp"
#include "pollenstack/stack_core.hpp"

namespace pollenstack {

struct CannyParams {
  double gaussian_sigma = 1.4;
  int gaussian_kernel = 5;                // odd, >= 3
  double high_threshold_quantile = 0.90;  // over nonzero magnitudes left after suppression
  double low_high_ratio = 0.5;

  // Throws ConfigError when a field is out of range.
  void validate() const;

  bool operator==(const CannyParams&) const = default;
};

struct EdgeMap {
  RealMap magnitude;  // Sobel magnitude of the smoothed layer
  Mask edges;         // hysteresis-confirmed edge pixels
  double high_threshold = 0.0;
  double low_threshold = 0.0;
};

// Gaussian smoothing, Sobel gradients, non-maximum suppression along the
// gradient direction quantized to 0/45/90/135 degrees, quantile-based double
// threshold and 8-connected hysteresis. Convolutions replicate border pixels.
EdgeMap canny_edges(const GrayImage& layer, const CannyParams& params = {});

// Edge strength of a layer: sum of gradient magnitude over confirmed edge
// pixels divided by the layer area. Zero when the layer has no edges.
double sharpness(const GrayImage& layer, const CannyParams& params = {});

// Inclusive range of layer indices.
struct LayerWindow {
  int first = 0;
  int last = -1;

  int size() const noexcept { return last - first + 1; }
  bool contains(int index) const noexcept { return index >= first && index <= last; }
  bool operator==(const LayerWindow&) const = default;
};

struct FocusProfile {
  std::vector<double> scores;  // one per layer
  int focal_index = 0;         // first argmax of scores
  std::optional<LayerWindow> window;
};

// Scores every layer and picks the sharpest; ties go to the lowest index.
FocusProfile select_focal(const ZStack& stack, const CannyParams& params = {},
                          unsigned workers = 1);

// n consecutive layers around the focal layer: floor((n-1)/2) before it and
// ceil((n-1)/2) after it, shifted (never shrunk) to stay inside [0, depth).
// Throws std::invalid_argument when n < 1, n > depth or focal is out of range.
LayerWindow extract_window(int depth, int focal_index, int n);

// Debug dump: the id, then "layer<TAB>score" per layer, then "focal<TAB>k"
// (and "window<TAB>first<TAB>last" when a window is set).
void write_focus_profile(std::ostream& out, std::string_view id, const FocusProfile& profile);

}  // namespace pollenstack
