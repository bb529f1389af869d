#include "cellflow/patches.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <string_view>

#include <json.hpp>

#include "cellflow/formats.hpp"

namespace cellflow::patches {

namespace {

constexpr std::array<std::string_view, 4> kDensityLabels = {"Very Sparse", "Moderate", "Dense",
                                                            "Very Dense"};
constexpr std::array<std::string_view, 3> kMaturityLabels = {"Very Young", "Mature",
                                                             "Very Mature"};

template <std::size_t N>
bool in_vocabulary(const std::string& label, const std::array<std::string_view, N>& vocab) {
  return std::find(vocab.begin(), vocab.end(), label) != vocab.end();
}

nlohmann::json entry_to_json(const ManifestEntry& e) {
  return {{"file", e.file},
          {"culture", e.culture},
          {"x", e.x},
          {"y", e.y},
          {"start_frame", e.start_frame},
          {"frame_stride", e.frame_stride},
          {"normalized", e.normalized},
          {"flipped_h", e.flipped_h},
          {"flipped_v", e.flipped_v}};
}

ManifestEntry entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  e.file = j.at("file").get<std::string>();
  e.culture = j.at("culture").get<std::string>();
  e.x = j.at("x").get<std::size_t>();
  e.y = j.at("y").get<std::size_t>();
  e.start_frame = j.at("start_frame").get<std::size_t>();
  e.frame_stride = j.at("frame_stride").get<std::size_t>();
  e.normalized = j.at("normalized").get<bool>();
  e.flipped_h = j.at("flipped_h").get<bool>();
  e.flipped_v = j.at("flipped_v").get<bool>();
  return e;
}

}  // namespace

void CultureMeta::validate() const {
  if (!density.empty() && !in_vocabulary(density, kDensityLabels)) {
    throw FormatError("unknown culture density label '" + density + "'");
  }
  if (!maturity.empty() && !in_vocabulary(maturity, kMaturityLabels)) {
    throw FormatError("unknown cell maturity label '" + maturity + "'");
  }
  if (capture_hours && !(*capture_hours >= 0.0)) {
    throw RangeError("capture hours must be non-negative");
  }
}

void SourceVideo::validate() const {
  if (frames.empty()) throw ArityError("source video has no frames");
  for (const auto& f : frames) {
    if (!f.same_shape(frames.front())) throw DimensionError("source frames differ in shape");
  }
  meta.validate();
}

void PatchSpec::validate() const {
  if (patch_size == 0) throw RangeError("patch size must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw RangeError("overlap must lie in [0,1)");
  if (frame_count == 0) throw RangeError("frame count must be positive");
  if (frame_stride == 0) throw RangeError("frame stride must be positive");
  if (literal_step && step() == 0) {
    throw RangeError("literal step overlap*patch_size rounds to zero");
  }
}

std::size_t PatchSpec::step() const {
  const double raw = literal_step ? overlap * static_cast<double>(patch_size)
                                  : (1.0 - overlap) * static_cast<double>(patch_size);
  const auto s = static_cast<std::size_t>(std::llround(raw));
  return literal_step ? s : std::max<std::size_t>(s, 1);
}

RealGrid PatchTensor::channel_frame(std::size_t k, std::size_t ch) const {
  RealGrid g(size_, size_);
  for (std::size_t r = 0; r < size_; ++r) {
    for (std::size_t c = 0; c < size_; ++c) g(r, c) = at(k, r, c, ch);
  }
  return g;
}

std::vector<std::size_t> axis_origins(std::size_t extent, const PatchSpec& spec) {
  spec.validate();
  if (extent < spec.patch_size) {
    throw DimensionError("patch size " + std::to_string(spec.patch_size) +
                         " exceeds frame extent " + std::to_string(extent));
  }
  const std::size_t last = extent - spec.patch_size;
  const std::size_t step = spec.step();
  std::vector<std::size_t> out;
  for (std::size_t o = 0; o <= last; o += step) out.push_back(o);
  if (!spec.literal_step && out.back() != last) out.push_back(last);
  return out;
}

std::vector<Origin> patch_grid(std::size_t width, std::size_t height, const PatchSpec& spec) {
  const auto xs = axis_origins(width, spec);
  const auto ys = axis_origins(height, spec);
  std::vector<Origin> grid;
  grid.reserve(xs.size() * ys.size());
  for (std::size_t y : ys) {
    for (std::size_t x : xs) grid.push_back({x, y});
  }
  return grid;
}

std::vector<PatchSample> extract_patches(const SourceVideo& video, const PatchSpec& spec,
                                         std::size_t start_frame) {
  video.validate();
  spec.validate();
  const std::size_t span = (spec.frame_count - 1) * spec.frame_stride;
  if (start_frame + span >= video.frames.size()) {
    throw RangeError("need frame " + std::to_string(start_frame + span) + " but video has " +
                     std::to_string(video.frames.size()) + " frames");
  }

  const std::size_t n = spec.patch_size;
  std::vector<PatchSample> out;
  for (const Origin& o : patch_grid(video.width(), video.height(), spec)) {
    PatchSample s;
    s.tensor = PatchTensor(spec.frame_count, n);
    s.culture = video.meta.culture;
    s.x = o.x;
    s.y = o.y;
    s.start_frame = start_frame;
    s.frame_stride = spec.frame_stride;
    for (std::size_t k = 0; k < spec.frame_count; ++k) {
      const GrayFrame& f = video.frames[start_frame + k * spec.frame_stride];
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          s.tensor.at(k, r, c, kVideoChannel) = static_cast<float>(f(o.y + r, o.x + c));
        }
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

PatchSample fill_flow_channels(PatchSample sample, const flow::FlowParams& params) {
  PatchTensor& t = sample.tensor;
  if (t.frames() < 2) {
    throw ArityError("flow channels need at least 2 frames, got " + std::to_string(t.frames()));
  }
  std::vector<GrayFrame> frames;
  frames.reserve(t.frames());
  for (std::size_t k = 0; k < t.frames(); ++k) {
    frames.emplace_back(t.channel_frame(k, kVideoChannel));
  }
  const auto fields = flow::video_flow(frames, params);

  const std::size_t n = t.size();
  for (std::size_t k = 0; k < t.frames(); ++k) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const bool has_flow = k < fields.size();
        t.at(k, r, c, kFlowUChannel) = has_flow ? static_cast<float>(fields[k].u(r, c)) : 0.0f;
        t.at(k, r, c, kFlowVChannel) = has_flow ? static_cast<float>(fields[k].v(r, c)) : 0.0f;
      }
    }
  }
  return sample;
}

PatchSample normalize_per_channel(PatchSample sample) {
  auto& data = sample.tensor.data();
  for (std::size_t ch = 0; ch < kChannels; ++ch) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = ch; i < data.size(); i += kChannels) {
      const double v = data[i];
      if (!std::isfinite(v)) throw NumericError("cannot normalise non-finite tensor values");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double range = hi - lo;
    for (std::size_t i = ch; i < data.size(); i += kChannels) {
      data[i] = range > 0.0 ? static_cast<float>((data[i] - lo) / range) : 0.0f;
    }
  }
  sample.normalized = true;
  return sample;
}

PatchSample apply_flips(PatchSample sample, bool horizontal, bool vertical) {
  if (!horizontal && !vertical) return sample;
  const PatchTensor& src = sample.tensor;
  PatchTensor out(src.frames(), src.size());
  const std::size_t n = src.size();
  for (std::size_t k = 0; k < src.frames(); ++k) {
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t sr = vertical ? n - 1 - r : r;
      for (std::size_t c = 0; c < n; ++c) {
        const std::size_t sc = horizontal ? n - 1 - c : c;
        out.at(k, r, c, kVideoChannel) = src.at(k, sr, sc, kVideoChannel);
        const float u = src.at(k, sr, sc, kFlowUChannel);
        const float v = src.at(k, sr, sc, kFlowVChannel);
        out.at(k, r, c, kFlowUChannel) = horizontal ? -u : u;
        out.at(k, r, c, kFlowVChannel) = vertical ? -v : v;
      }
    }
  }
  sample.tensor = std::move(out);
  sample.flipped_h = sample.flipped_h != horizontal;
  sample.flipped_v = sample.flipped_v != vertical;
  return sample;
}

FlipChoice flips_for_seed(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const std::uint64_t word = gen();
  return {((word >> 63) & 1u) != 0, ((word >> 62) & 1u) != 0};
}

PatchSample augment(PatchSample sample, std::uint64_t seed) {
  const FlipChoice f = flips_for_seed(seed);
  return apply_flips(std::move(sample), f.horizontal, f.vertical);
}

std::vector<PatchSample> filter_low_variance(std::vector<PatchSample> samples, double tau) {
  std::erase_if(samples, [tau](const PatchSample& s) {
    const auto& d = s.tensor.data();
    const std::size_t count = d.size() / kChannels;
    if (count == 0) return true;
    double mean = 0.0;
    for (std::size_t i = kVideoChannel; i < d.size(); i += kChannels) mean += d[i];
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (std::size_t i = kVideoChannel; i < d.size(); i += kChannels) {
      var += (d[i] - mean) * (d[i] - mean);
    }
    return var / static_cast<double>(count) < tau;
  });
  return samples;
}

Manifest export_dataset(const std::vector<PatchSample>& samples,
                        const std::filesystem::path& dir) {
  Manifest manifest;
  if (!samples.empty()) {
    manifest.frame_count = samples.front().tensor.frames();
    manifest.patch_size = samples.front().tensor.size();
  }
  for (const auto& s : samples) {
    if (s.tensor.frames() != manifest.frame_count || s.tensor.size() != manifest.patch_size) {
      throw DimensionError("all exported samples must share frame count and patch size");
    }
  }

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json records = nlohmann::json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const PatchSample& s = samples[i];
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05zu.cvid", i);
    formats::write_cvid(dir / name, s);
    ManifestEntry e{name,       s.culture,    s.x,         s.y,        s.start_frame,
                    s.frame_stride, s.normalized, s.flipped_h, s.flipped_v};
    records.push_back(entry_to_json(e));
    manifest.entries.push_back(std::move(e));
  }
  formats::write_file_atomic(dir / "manifest.json", records.dump(2) + "\n");
  return manifest;
}

std::vector<PatchSample> import_dataset(const std::filesystem::path& dir) {
  nlohmann::json records;
  try {
    records = nlohmann::json::parse(formats::read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest: " + std::string(e.what()));
  }
  if (!records.is_array()) throw FormatError("manifest must be a JSON array");

  std::vector<PatchSample> out;
  for (const auto& rec : records) {
    ManifestEntry e;
    try {
      e = entry_from_json(rec);
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError("malformed manifest record: " + std::string(ex.what()));
    }
    PatchSample s = formats::read_cvid(dir / e.file);
    if (s.culture != e.culture || s.x != e.x || s.y != e.y || s.start_frame != e.start_frame ||
        s.frame_stride != e.frame_stride || s.normalized != e.normalized ||
        s.flipped_h != e.flipped_h || s.flipped_v != e.flipped_v) {
      throw IntegrityError("manifest record disagrees with " + e.file);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cellflow::patches
