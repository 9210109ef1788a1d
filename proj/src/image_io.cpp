#include "pollenstack/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "pollenstack/error.hpp"

namespace pollenstack::io {

namespace fs = std::filesystem;

namespace {

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

template <typename Pixel>
GrayImage to_gray(const cv::Mat& page, int shift) {
  const int channels = page.channels();
  const int color_channels = channels >= 3 ? 3 : 1;
  GrayImage out(page.rows, page.cols);
  for (int r = 0; r < page.rows; ++r) {
    const Pixel* src = page.ptr<Pixel>(r);
    for (int c = 0; c < page.cols; ++c) {
      unsigned sum = 0;
      for (int ch = 0; ch < color_channels; ++ch) {
        sum += static_cast<unsigned>(src[c * channels + ch]) >> shift;
      }
      // Rounded luminance average; a gray pixel maps to itself.
      out(r, c) = static_cast<std::uint8_t>(
          color_channels == 1 ? sum : (sum + 1) / 3);
    }
  }
  return out;
}

GrayImage decode_page(const cv::Mat& page, const fs::path& path) {
  switch (page.depth()) {
    case CV_8U:
      return to_gray<std::uint8_t>(page, 0);
    case CV_16U:
      return to_gray<std::uint16_t>(page, 8);
    default:
      throw InputError("unsupported pixel type in " + path.string());
  }
}

cv::Mat as_mat(const GrayImage& image) {
  cv::Mat mat(image.height(), image.width(), CV_8UC1);
  for (int r = 0; r < image.height(); ++r) {
    std::copy(image.row(r).begin(), image.row(r).end(), mat.ptr<std::uint8_t>(r));
  }
  return mat;
}

}  // namespace

bool is_image_path(const fs::path& path) {
  const std::string ext = lower_extension(path);
  return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

bool is_multipage_path(const fs::path& path) {
  const std::string ext = lower_extension(path);
  return ext == ".tif" || ext == ".tiff";
}

std::vector<GrayImage> read_pages(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw InputError("cannot read " + path.string() + ": no such file");
  }
  std::vector<cv::Mat> mats;
  bool ok = false;
  try {
    if (is_multipage_path(path)) {
      ok = cv::imreadmulti(path.string(), mats, cv::IMREAD_UNCHANGED);
    } else {
      cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
      ok = !mat.empty();
      if (ok) mats.push_back(std::move(mat));
    }
  } catch (const cv::Exception&) {
    ok = false;
  }
  if (!ok || mats.empty()) {
    throw InputError("cannot decode image " + path.string());
  }
  std::vector<GrayImage> pages;
  pages.reserve(mats.size());
  for (const auto& mat : mats) pages.push_back(decode_page(mat, path));
  return pages;
}

void write_png(const fs::path& path, const GrayImage& image) {
  if (!cv::imwrite(path.string(), as_mat(image))) {
    throw Error("cannot write " + path.string());
  }
}

void write_tiff_pages(const fs::path& path, std::span<const GrayImage> pages) {
  std::vector<cv::Mat> mats;
  mats.reserve(pages.size());
  for (const auto& page : pages) mats.push_back(as_mat(page));
  if (!cv::imwritemulti(path.string(), mats)) {
    throw Error("cannot write " + path.string());
  }
}

}  // namespace pollenstack::io
