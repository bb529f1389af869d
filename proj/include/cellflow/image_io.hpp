#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "cellflow/grid.hpp"
#include "cellflow/patches.hpp"

namespace cellflow::image_io {

struct ImageSize {
  std::size_t width = 0;
  std::size_t height = 0;
};

// Grayscale PNG, 8 or 16 bit (lower depths are expanded), scaled to [0,1].
GrayFrame read_gray_png(const std::filesystem::path& path);

// Header-only probe.
ImageSize read_png_size(const std::filesystem::path& path);

// Values are clamped to [0,1] and quantised to the requested depth (8 or 16).
void write_gray_png(const std::filesystem::path& path, const RealGrid& pixels, int bit_depth = 8);

// *.png files in `dir`, lexicographically ordered by file name.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

// All frames of `dir`, plus culture metadata from an optional culture.json.
patches::SourceVideo load_video(const std::filesystem::path& dir);

}  // namespace cellflow::image_io
