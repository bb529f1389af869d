#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "cellflow/cli.hpp"
#include "cellflow/grid.hpp"
#include "cellflow/image_io.hpp"
#include "oracles.hpp"

namespace fixture {

namespace fs = std::filesystem;

// Removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("cellflow_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline cellflow::RealGrid to_grid(const oracle::Image& img) {
  cellflow::RealGrid g(img.size(), img[0].size());
  for (std::size_t r = 0; r < img.size(); ++r)
    for (std::size_t c = 0; c < img[0].size(); ++c) g(r, c) = img[r][c];
  return g;
}

inline oracle::Image to_image(const cellflow::RealGrid& g) {
  oracle::Image img = oracle::zeros(g.rows(), g.cols());
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c) img[r][c] = g(r, c);
  return img;
}

inline cellflow::GrayFrame frame(const oracle::Image& img) { return cellflow::GrayFrame(to_grid(img)); }

// Uniform noise box-blurred with wrap-around, rescaled into [0.1, 0.9].
inline oracle::Image smooth_texture(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                    int radius = 2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  oracle::Image noise = oracle::zeros(rows, cols);
  for (auto& row : noise)
    for (double& v : row) v = u(rng);
  oracle::Image out = oracle::zeros(rows, cols);
  double lo = 1e300;
  double hi = -1e300;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int a = -radius; a <= radius; ++a)
        for (int b = -radius; b <= radius; ++b)
          s += noise[(r + rows + a) % rows][(c + cols + b) % cols];
      out[r][c] = s;
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  }
  for (auto& row : out)
    for (double& v : row) v = 0.1 + 0.8 * (v - lo) / (hi - lo);
  return out;
}

// Columns moved right by `dx` and rows down by `dy`, wrapping around.
inline oracle::Image shifted(const oracle::Image& img, int dx, int dy) {
  const long rows = static_cast<long>(img.size());
  const long cols = static_cast<long>(img[0].size());
  oracle::Image out = oracle::zeros(img.size(), img[0].size());
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c)
      out[r][c] = img[((r - dy) % rows + rows) % rows][((c - dx) % cols + cols) % cols];
  return out;
}

// Gaussian blob centred at (cx, cy) on a dim background.
inline oracle::Image blob(std::size_t rows, std::size_t cols, double cx, double cy,
                          double sigma = 6.0) {
  oracle::Image out = oracle::zeros(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double dx = static_cast<double>(c) - cx;
      const double dy = static_cast<double>(r) - cy;
      out[r][c] = 0.1 + 0.8 * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  return out;
}

// Frames frame_000.png ... of a blob moving (vx, vy) pixels per frame.
inline void write_blob_video(const fs::path& dir, std::size_t frames, std::size_t rows,
                             std::size_t cols, double vx = 1.0, double vy = 0.5) {
  fs::create_directories(dir);
  for (std::size_t k = 0; k < frames; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.png", k);
    const auto img = blob(rows, cols, 40.0 + vx * static_cast<double>(k),
                          50.0 + vy * static_cast<double>(k), 9.0);
    cellflow::image_io::write_gray_png(dir / name, to_grid(img), 16);
  }
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

inline CliResult run_cli(const std::vector<std::string>& args,
                         const cellflow::config::EnvLookup& env =
                             [](std::string_view) { return std::optional<std::string>{}; }) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cellflow::cli::run(args, out, err, env);
  return {code, out.str(), err.str()};
}

// Two neurons, one dead cell; one connected neurite with a branch.
inline nlohmann::json sample_annotation() {
  return nlohmann::json::parse(R"({
    "source": {"culture": "culture_01", "frame": 0},
    "px_per_micron": 2.0,
    "cells": [
      {"id": "c1", "label": "neuron", "polygon": [[0,0],[4,0],[4,4],[0,4]],
       "long_axis": [[2,4],[2,0]], "center": [2,2]},
      {"id": "c2", "label": "neuron", "polygon": [[20,0],[26,0],[23,6]],
       "long_axis": [[20,0],[26,0]], "center": [23,2]},
      {"id": "d1", "label": "dead_cell", "polygon": [[40,40],[42,40],[42,42],[40,42]],
       "long_axis": [[40,40],[42,42]], "center": [41,41]}
    ],
    "neurites": [
      {"id": "n1", "cell_id": "c1", "points": [[4,2],[10,2],[20,2]],
       "termination": "connected", "connected_cell_id": "c2",
       "branches": [
         {"id": "n1b", "points": [[10,2],[10,8]], "termination": "self_terminated"}
       ]},
      {"id": "n2", "cell_id": "c1", "points": [[2,4],[2,10]], "termination": "self_terminated"}
    ]
  })");
}

}  // namespace fixture
