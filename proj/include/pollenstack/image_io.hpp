#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "pollenstack/image.hpp"

namespace pollenstack::io {

// True for the layer/stack file types the ingester understands.
bool is_image_path(const std::filesystem::path& path);
bool is_multipage_path(const std::filesystem::path& path);

// Decodes every page of an image file to 8-bit grayscale. Color pages are
// converted by averaging the first three channels; 16-bit pages keep their
// high byte. Throws InputError when the file cannot be decoded.
std::vector<GrayImage> read_pages(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const GrayImage& image);
void write_tiff_pages(const std::filesystem::path& path, std::span<const GrayImage> pages);

}  // namespace pollenstack::io
