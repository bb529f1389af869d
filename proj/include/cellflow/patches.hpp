#pragma once

// Training-sample construction from high-resolution microscopy videos:
// patch grid placement, temporal cropping with frame skipping, the
// 3-channel (video, U flow, V flow) tensor, per-channel normalisation and
// flip augmentation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cellflow/flow.hpp"
#include "cellflow/grid.hpp"

namespace cellflow::patches {

inline constexpr std::size_t kChannels = 3;
inline constexpr std::size_t kVideoChannel = 0;
inline constexpr std::size_t kFlowUChannel = 1;
inline constexpr std::size_t kFlowVChannel = 2;

// Culture description; label fields use the vocabulary of the imaging log
// ("Very Sparse", "Moderate", ... / "Very Young", "Mature", ...). Empty
// strings mean "not recorded".
struct CultureMeta {
  std::string culture;
  std::optional<double> capture_hours;
  std::string day_imaged;
  std::string density;
  std::string maturity;

  void validate() const;
};

struct SourceVideo {
  std::vector<GrayFrame> frames;
  CultureMeta meta;

  void validate() const;
  std::size_t width() const { return frames.front().width(); }
  std::size_t height() const { return frames.front().height(); }
};

struct PatchSpec {
  std::size_t patch_size = 128;
  double overlap = 0.25;
  std::size_t frame_count = 10;
  std::size_t frame_stride = 1;
  // Step by overlap*patch_size with no tail origin, exactly as the loop
  // x <- x + a*w_p is written.
  bool literal_step = false;

  void validate() const;
  std::size_t step() const;
};

struct Origin {
  std::size_t x = 0;
  std::size_t y = 0;
  bool operator==(const Origin&) const = default;
};

// K x N x N x 3 float tensor stored in (frame, row, col, channel) order.
class PatchTensor {
 public:
  PatchTensor() = default;
  PatchTensor(std::size_t frames, std::size_t size)
      : frames_(frames), size_(size), data_(frames * size * size * kChannels, 0.0f) {}

  std::size_t frames() const noexcept { return frames_; }
  std::size_t size() const noexcept { return size_; }

  float& at(std::size_t k, std::size_t r, std::size_t c, std::size_t ch) {
    return data_[index(k, r, c, ch)];
  }
  float at(std::size_t k, std::size_t r, std::size_t c, std::size_t ch) const {
    return data_[index(k, r, c, ch)];
  }

  std::vector<float>& data() noexcept { return data_; }
  const std::vector<float>& data() const noexcept { return data_; }

  // Copy of one channel of one frame as a double grid.
  RealGrid channel_frame(std::size_t k, std::size_t ch) const;

  bool operator==(const PatchTensor&) const = default;

 private:
  std::size_t index(std::size_t k, std::size_t r, std::size_t c, std::size_t ch) const {
    return ((k * size_ + r) * size_ + c) * kChannels + ch;
  }

  std::size_t frames_ = 0;
  std::size_t size_ = 0;
  std::vector<float> data_;
};

struct PatchSample {
  PatchTensor tensor;
  std::string culture;
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t start_frame = 0;
  std::size_t frame_stride = 1;
  bool normalized = false;
  bool flipped_h = false;
  bool flipped_v = false;

  bool operator==(const PatchSample&) const = default;
};

// Origins along one axis of length `extent`.
std::vector<std::size_t> axis_origins(std::size_t extent, const PatchSpec& spec);

// Cartesian grid of top-left corners, row-major (y outer, x inner).
std::vector<Origin> patch_grid(std::size_t width, std::size_t height, const PatchSpec& spec);

// Channel 0 filled from the source crops; flow channels left at zero.
std::vector<PatchSample> extract_patches(const SourceVideo& video, const PatchSpec& spec,
                                         std::size_t start_frame);

// Channels 1/2 get the pairwise flow of channel 0; the last frame slot,
// which has no successor, stays zero.
PatchSample fill_flow_channels(PatchSample sample, const flow::FlowParams& params = {});

// Min-max scales each channel over the whole K x N x N slab. A constant
// channel becomes all zeros.
PatchSample normalize_per_channel(PatchSample sample);

// Mirrors every frame. A horizontal flip also negates U, a vertical flip
// negates V, so the flow still describes the mirrored motion.
PatchSample apply_flips(PatchSample sample, bool horizontal, bool vertical);

struct FlipChoice {
  bool horizontal = false;
  bool vertical = false;
};

// Two independent fair coin flips derived from the seed.
FlipChoice flips_for_seed(std::uint64_t seed);

PatchSample augment(PatchSample sample, std::uint64_t seed);

// Drops samples whose channel-0 variance is below tau.
std::vector<PatchSample> filter_low_variance(std::vector<PatchSample> samples,
                                             double tau = 1e-4);

struct ManifestEntry {
  std::string file;
  std::string culture;
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t start_frame = 0;
  std::size_t frame_stride = 1;
  bool normalized = false;
  bool flipped_h = false;
  bool flipped_v = false;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::size_t frame_count = 0;
  std::size_t patch_size = 0;
};

// Writes one CVID file per sample plus manifest.json into `dir`.
Manifest export_dataset(const std::vector<PatchSample>& samples, const std::filesystem::path& dir);

// Reads manifest.json and every CVID it lists.
std::vector<PatchSample> import_dataset(const std::filesystem::path& dir);

}  // namespace cellflow::patches
