#include "pollenstack/focus_select.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <ostream>
#include <stdexcept>
#include <string>

#include "pollenstack/error.hpp"
#include "pollenstack/parallel.hpp"
#include "text_util.hpp"

namespace pollenstack {

namespace {

int clamp_index(int i, int n) noexcept { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const int half = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double x = i - half;
    k[i] = std::exp(-(x * x) / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable convolution with replicated borders.
RealMap smooth(const GrayImage& layer, const std::vector<double>& kernel) {
  const int h = layer.height();
  const int w = layer.width();
  const int half = static_cast<int>(kernel.size()) / 2;
  RealMap horizontal(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int k = -half; k <= half; ++k) acc += kernel[k + half] * layer(r, clamp_index(c + k, w));
      horizontal(r, c) = acc;
    }
  }
  RealMap out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int k = -half; k <= half; ++k) acc += kernel[k + half] * horizontal(clamp_index(r + k, h), c);
      out(r, c) = acc;
    }
  }
  return out;
}

struct Gradients {
  RealMap gx;
  RealMap gy;
  RealMap magnitude;
};

Gradients sobel(const RealMap& img) {
  const int h = img.height();
  const int w = img.width();
  Gradients g{RealMap(h, w), RealMap(h, w), RealMap(h, w)};
  for (int r = 0; r < h; ++r) {
    const int up = clamp_index(r - 1, h);
    const int down = clamp_index(r + 1, h);
    for (int c = 0; c < w; ++c) {
      const int left = clamp_index(c - 1, w);
      const int right = clamp_index(c + 1, w);
      const double gx = (img(up, right) + 2.0 * img(r, right) + img(down, right)) -
                        (img(up, left) + 2.0 * img(r, left) + img(down, left));
      const double gy = (img(down, left) + 2.0 * img(down, c) + img(down, right)) -
                        (img(up, left) + 2.0 * img(up, c) + img(up, right));
      g.gx(r, c) = gx;
      g.gy(r, c) = gy;
      g.magnitude(r, c) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return g;
}

// Neighbour offsets (dr, dc) across the edge for each quantized direction.
// Sector 0: gradient ~0 deg (horizontal), compare left/right.
// Sector 1: ~45 deg, sector 2: ~90 deg (vertical), sector 3: ~135 deg.
// Rows grow downward, so a +45 deg gradient (gy > 0 with gy pointing down)
// points to the lower-right neighbour.
constexpr int kOffsets[4][2] = {{0, 1}, {1, 1}, {1, 0}, {1, -1}};

int direction_sector(double gx, double gy) noexcept {
  double angle = std::atan2(gy, gx) * 180.0 / 3.14159265358979323846;
  if (angle < 0.0) angle += 180.0;
  if (angle < 22.5 || angle >= 157.5) return 0;
  if (angle < 67.5) return 1;
  if (angle < 112.5) return 2;
  return 3;
}

double magnitude_at(const RealMap& m, int r, int c) noexcept {
  if (r < 0 || r >= m.height() || c < 0 || c >= m.width()) return 0.0;
  return m(r, c);
}

RealMap suppress_non_maxima(const Gradients& g) {
  const int h = g.magnitude.height();
  const int w = g.magnitude.width();
  RealMap thin(h, w, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double m = g.magnitude(r, c);
      if (m <= 0.0) continue;
      const auto& d = kOffsets[direction_sector(g.gx(r, c), g.gy(r, c))];
      const double ahead = magnitude_at(g.magnitude, r + d[0], c + d[1]);
      const double behind = magnitude_at(g.magnitude, r - d[0], c - d[1]);
      // Asymmetric comparison keeps exactly one pixel of a two-pixel plateau.
      if (m > ahead && m >= behind) thin(r, c) = m;
    }
  }
  return thin;
}

// Nearest-rank quantile of the strictly positive values.
double positive_quantile(const RealMap& m, double q) {
  std::vector<double> values;
  values.reserve(m.size());
  for (double v : m.pixels()) {
    if (v > 0.0) values.push_back(v);
  }
  if (values.empty()) return 0.0;
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  std::nth_element(values.begin(), values.begin() + (rank - 1), values.end());
  return values[rank - 1];
}

Mask hysteresis(const RealMap& thin, double high, double low) {
  const int h = thin.height();
  const int w = thin.width();
  Mask edges(h, w, 0);
  std::deque<std::pair<int, int>> frontier;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (thin(r, c) > 0.0 && thin(r, c) >= high) {
        edges(r, c) = 1;
        frontier.emplace_back(r, c);
      }
    }
  }
  while (!frontier.empty()) {
    const auto [r, c] = frontier.front();
    frontier.pop_front();
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int nr = r + dr;
        const int nc = c + dc;
        if (nr < 0 || nr >= h || nc < 0 || nc >= w || edges(nr, nc)) continue;
        if (thin(nr, nc) > 0.0 && thin(nr, nc) >= low) {
          edges(nr, nc) = 1;
          frontier.emplace_back(nr, nc);
        }
      }
    }
  }
  return edges;
}

}  // namespace

void CannyParams::validate() const {
  if (!(gaussian_sigma > 0.0) || !std::isfinite(gaussian_sigma)) {
    throw ConfigError("canny: gaussian_sigma must be > 0");
  }
  if (gaussian_kernel < 3 || gaussian_kernel % 2 == 0) {
    throw ConfigError("canny: gaussian_kernel must be odd and >= 3");
  }
  if (!(high_threshold_quantile > 0.0 && high_threshold_quantile <= 1.0)) {
    throw ConfigError("canny: high_threshold_quantile must be in (0, 1]");
  }
  if (!(low_high_ratio > 0.0 && low_high_ratio <= 1.0)) {
    throw ConfigError("canny: low_high_ratio must be in (0, 1]");
  }
}

EdgeMap canny_edges(const GrayImage& layer, const CannyParams& params) {
  params.validate();
  if (layer.empty()) throw std::invalid_argument("canny_edges: empty layer");

  const RealMap smoothed = smooth(layer, gaussian_kernel(params.gaussian_kernel, params.gaussian_sigma));
  Gradients g = sobel(smoothed);
  const RealMap thin = suppress_non_maxima(g);

  EdgeMap out;
  out.high_threshold = positive_quantile(thin, params.high_threshold_quantile);
  out.low_threshold = params.low_high_ratio * out.high_threshold;
  out.edges = hysteresis(thin, out.high_threshold, out.low_threshold);
  out.magnitude = std::move(g.magnitude);
  return out;
}

double sharpness(const GrayImage& layer, const CannyParams& params) {
  const EdgeMap edges = canny_edges(layer, params);
  double sum = 0.0;
  const auto magnitude = edges.magnitude.pixels();
  const auto mask = edges.edges.pixels();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) sum += magnitude[i];
  }
  return sum / static_cast<double>(layer.size());
}

FocusProfile select_focal(const ZStack& stack, const CannyParams& params, unsigned workers) {
  if (stack.depth() < 1) throw std::invalid_argument("select_focal: stack " + stack.id + " has no layers");
  params.validate();
  FocusProfile profile;
  profile.scores.resize(stack.layers.size());
  parallel_for(stack.layers.size(), workers,
               [&](std::size_t z) { profile.scores[z] = sharpness(stack.layers[z], params); });
  const auto best = std::max_element(profile.scores.begin(), profile.scores.end());
  profile.focal_index = static_cast<int>(best - profile.scores.begin());
  return profile;
}

LayerWindow extract_window(int depth, int focal_index, int n) {
  if (n < 1) throw std::invalid_argument("window size must be >= 1");
  if (n > depth) throw std::invalid_argument("window exceeds stack depth");
  if (focal_index < 0 || focal_index >= depth) {
    throw std::invalid_argument("focal index outside the stack");
  }
  int first = focal_index - (n - 1) / 2;
  first = std::clamp(first, 0, depth - n);
  return {first, first + n - 1};
}

void write_focus_profile(std::ostream& out, std::string_view id, const FocusProfile& profile) {
  out << id << '\n';
  for (std::size_t z = 0; z < profile.scores.size(); ++z) {
    out << z << '\t' << text::format_double(profile.scores[z]) << '\n';
  }
  out << "focal\t" << profile.focal_index << '\n';
  if (profile.window) {
    out << "window\t" << profile.window->first << '\t' << profile.window->last << '\n';
  }
}

}  // namespace pollenstack
