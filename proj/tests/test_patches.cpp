#include <doctest.h>

#include <random>

#include "cellflow/error.hpp"
#include "cellflow/formats.hpp"
#include "cellflow/patches.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cellflow;
using namespace cellflow::patches;

namespace {

SourceVideo moving_video(std::size_t frames, std::size_t rows, std::size_t cols, int dx = 1) {
  SourceVideo v;
  const auto tex = fixture::smooth_texture(rows, cols, 31);
  for (std::size_t k = 0; k < frames; ++k) {
    // frame k is recognisable: texture shifted by k*dx
    v.frames.push_back(fixture::frame(fixture::shifted(tex, static_cast<int>(k) * dx, 0)));
  }
  v.meta.culture = "culture_01";
  return v;
}

PatchSample random_sample(std::size_t frames, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 2.0f);
  PatchSample s;
  s.tensor = PatchTensor(frames, n);
  for (float& v : s.tensor.data()) v = d(rng);
  s.culture = "c";
  return s;
}

}  // namespace

TEST_CASE("axis origins with tail snap") {
  PatchSpec spec;
  const auto o = axis_origins(1400, spec);
  CHECK(o == oracle::origins_loop(1400, 128, 96, true));
  CHECK(o.size() == 15);
  CHECK(o[1] == 96);
  CHECK(o[13] == 1248);
  CHECK(o.back() == 1272);
  CHECK(patch_grid(1400, 1400, spec).size() == 225);
}

TEST_CASE("grid fixtures") {
  PatchSpec spec;
  CHECK(patch_grid(128, 128, spec) == std::vector<Origin>{{0, 0}});

  spec.overlap = 0.0;
  CHECK(axis_origins(300, spec) == std::vector<std::size_t>{0, 128, 172});
  CHECK(axis_origins(256, spec) == std::vector<std::size_t>{0, 128});

  spec.patch_size = 200;
  CHECK_THROWS_AS(patch_grid(150, 400, spec), DimensionError);
}

TEST_CASE("grid is row-major, in bounds and covers every pixel") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> ext(16, 300);
  std::uniform_int_distribution<std::size_t> ps(4, 16);
  std::uniform_real_distribution<double> ov(0.0, 0.9);
  for (int trial = 0; trial < 200; ++trial) {
    PatchSpec spec;
    spec.patch_size = ps(rng);
    spec.overlap = ov(rng);
    const std::size_t w = ext(rng);
    const std::size_t h = ext(rng);
    const auto grid = patch_grid(w, h, spec);
    const auto xs = axis_origins(w, spec);
    const auto ys = axis_origins(h, spec);
    REQUIRE(grid.size() == xs.size() * ys.size());
    CHECK(grid[1 % grid.size()].y == 0);
    for (const auto& o : grid) {
      CHECK(o.x + spec.patch_size <= w);
      CHECK(o.y + spec.patch_size <= h);
    }
    std::vector<bool> covered(w, false);
    for (std::size_t x : xs)
      for (std::size_t i = 0; i < spec.patch_size; ++i) covered[x + i] = true;
    CHECK(std::all_of(covered.begin(), covered.end(), [](bool b) { return b; }));
  }
}

TEST_CASE("literal step matches the placement loop") {
  PatchSpec spec;
  spec.literal_step = true;
  CHECK(axis_origins(1400, spec) == oracle::origins_loop(1400, 128, 32.0, false));
  CHECK(patch_grid(1400, 1400, spec).size() == 40 * 40);

  spec.overlap = 0.5;
  spec.patch_size = 10;
  CHECK(axis_origins(23, spec) == oracle::origins_loop(23, 10, 5.0, false));
}

TEST_CASE("spec validation") {
  PatchSpec spec;
  spec.overlap = 1.0;
  CHECK_THROWS_AS(spec.validate(), RangeError);
  spec.overlap = -0.1;
  CHECK_THROWS_AS(spec.validate(), RangeError);
  spec = {};
  spec.frame_stride = 0;
  CHECK_THROWS_AS(spec.validate(), RangeError);
  spec = {};
  spec.literal_step = true;
  spec.overlap = 0.0;
  CHECK_THROWS_AS(spec.validate(), RangeError);
}

TEST_CASE("extract patches crops frames with the requested stride") {
  const auto video = moving_video(12, 20, 20);
  PatchSpec spec;
  spec.patch_size = 20;
  spec.frame_count = 4;
  spec.frame_stride = 3;
  const auto samples = extract_patches(video, spec, 0);
  REQUIRE(samples.size() == 1);
  const auto& s = samples[0];
  CHECK(s.start_frame == 0);
  CHECK(s.frame_stride == 3);
  CHECK(s.culture == "culture_01");
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t r = 0; r < 20; ++r)
      for (std::size_t c = 0; c < 20; ++c) {
        CHECK(s.tensor.at(k, r, c, 0) == static_cast<float>(video.frames[3 * k](r, c)));
        CHECK(s.tensor.at(k, r, c, 1) == 0.0f);
        CHECK(s.tensor.at(k, r, c, 2) == 0.0f);
      }

  CHECK_THROWS_AS(extract_patches(video, spec, 3), RangeError);
}

TEST_CASE("extract patches records origins") {
  const auto video = moving_video(2, 40, 50);
  PatchSpec spec;
  spec.patch_size = 16;
  spec.frame_count = 2;
  const auto samples = extract_patches(video, spec, 0);
  const auto grid = patch_grid(50, 40, spec);
  REQUIRE(samples.size() == grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(samples[i].x == grid[i].x);
    CHECK(samples[i].y == grid[i].y);
    CHECK(samples[i].tensor.at(1, 2, 3, 0) ==
          static_cast<float>(video.frames[1](grid[i].y + 2, grid[i].x + 3)));
  }
}

TEST_CASE("flow channels") {
  PatchSpec spec;
  spec.patch_size = 24;
  spec.frame_count = 10;

  SourceVideo still;
  for (int k = 0; k < 10; ++k) still.frames.push_back(fixture::frame(fixture::smooth_texture(24, 24, 1)));
  auto s = fill_flow_channels(extract_patches(still, spec, 0)[0]);
  for (std::size_t i = 0; i < s.tensor.data().size(); i += 3) {
    CHECK(s.tensor.data()[i + 1] == 0.0f);
    CHECK(s.tensor.data()[i + 2] == 0.0f);
  }

  auto moving = fill_flow_channels(extract_patches(moving_video(10, 24, 24), spec, 0)[0]);
  std::vector<GrayFrame> frames;
  for (std::size_t k = 0; k < 10; ++k) frames.emplace_back(moving.tensor.channel_frame(k, 0));
  const auto fields = flow::video_flow(frames, {});
  bool any_nonzero = false;
  for (std::size_t k = 0; k < 10; ++k)
    for (std::size_t r = 0; r < 24; ++r)
      for (std::size_t c = 0; c < 24; ++c) {
        const float u = k == 9 ? 0.0f : static_cast<float>(fields[k].u(r, c));
        const float v = k == 9 ? 0.0f : static_cast<float>(fields[k].v(r, c));
        CHECK(moving.tensor.at(k, r, c, 1) == u);
        CHECK(moving.tensor.at(k, r, c, 2) == v);
        any_nonzero = any_nonzero || u != 0.0f;
      }
  CHECK(any_nonzero);

  PatchSample single;
  single.tensor = PatchTensor(1, 8);
  CHECK_THROWS_AS(fill_flow_channels(single), ArityError);
}

TEST_CASE("normalisation") {
  PatchSample s;
  s.tensor = PatchTensor(1, 3);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      s.tensor.at(0, r, c, 0) = 2.0f + static_cast<float>(r + c);  // 2..6
      s.tensor.at(0, r, c, 1) = 7.0f;
      s.tensor.at(0, r, c, 2) = static_cast<float>(r) - 1.0f;
    }
  const auto n = normalize_per_channel(s);
  CHECK(n.normalized);
  CHECK(n.tensor.at(0, 1, 1, 0) == doctest::Approx(0.5));
  CHECK(n.tensor.at(0, 0, 0, 0) == 0.0f);
  CHECK(n.tensor.at(0, 2, 2, 0) == 1.0f);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(n.tensor.at(0, r, c, 1) == 0.0f);

  auto twice = normalize_per_channel(n);
  CHECK(twice.tensor == n.tensor);

  const auto rnd = normalize_per_channel(random_sample(3, 6, 4));
  for (std::size_t ch = 0; ch < 3; ++ch) {
    float lo = 1e9f;
    float hi = -1e9f;
    for (std::size_t i = ch; i < rnd.tensor.data().size(); i += 3) {
      lo = std::min(lo, rnd.tensor.data()[i]);
      hi = std::max(hi, rnd.tensor.data()[i]);
    }
    CHECK(lo == 0.0f);
    CHECK(hi == 1.0f);
  }
  CHECK(normalize_per_channel(normalize_per_channel(random_sample(2, 5, 8))).tensor ==
        normalize_per_channel(random_sample(2, 5, 8)).tensor);

  auto bad = random_sample(1, 2, 1);
  bad.tensor.data()[0] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(normalize_per_channel(bad), NumericError);
}

TEST_CASE("flips mirror frames and negate the matching flow channel") {
  const auto s = random_sample(2, 5, 6);
  const auto h = apply_flips(s, true, false);
  const auto v = apply_flips(s, false, true);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 5; ++c) {
        CHECK(h.tensor.at(k, r, 4 - c, 0) == s.tensor.at(k, r, c, 0));
        CHECK(h.tensor.at(k, r, 4 - c, 1) == -s.tensor.at(k, r, c, 1));
        CHECK(h.tensor.at(k, r, 4 - c, 2) == s.tensor.at(k, r, c, 2));
        CHECK(v.tensor.at(k, 4 - r, c, 0) == s.tensor.at(k, r, c, 0));
        CHECK(v.tensor.at(k, 4 - r, c, 1) == s.tensor.at(k, r, c, 1));
        CHECK(v.tensor.at(k, 4 - r, c, 2) == -s.tensor.at(k, r, c, 2));
      }
  CHECK(h.flipped_h);
  CHECK_FALSE(h.flipped_v);
  for (bool a : {false, true})
    for (bool b : {false, true}) CHECK(apply_flips(apply_flips(s, a, b), a, b) == s);
}

TEST_CASE("augmentation is seeded and covers all four flip combinations") {
  const auto s = random_sample(2, 4, 3);
  int seen[2][2] = {};
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    const auto f = flips_for_seed(seed);
    ++seen[f.horizontal][f.vertical];
    CHECK(augment(s, seed) == apply_flips(s, f.horizontal, f.vertical));
    CHECK(augment(s, seed) == augment(s, seed));
  }
  for (auto& row : seen)
    for (int count : row) CHECK(count > 60);

  std::uint64_t none = 0;
  while (flips_for_seed(none).horizontal || flips_for_seed(none).vertical) ++none;
  CHECK(augment(s, none) == s);

  std::uint64_t honly = 0;
  while (!flips_for_seed(honly).horizontal || flips_for_seed(honly).vertical) ++honly;
  PatchSample zero_flow = s;
  for (std::size_t i = 0; i < zero_flow.tensor.data().size(); i += 3) {
    zero_flow.tensor.data()[i + 1] = 0.0f;
    zero_flow.tensor.data()[i + 2] = 0.0f;
  }
  const auto a = augment(zero_flow, honly);
  for (std::size_t i = 0; i < a.tensor.data().size(); i += 3) {
    CHECK(a.tensor.data()[i + 1] == 0.0f);
    CHECK(a.tensor.data()[i + 2] == 0.0f);
  }
  CHECK(a.tensor.at(1, 2, 0, 0) == zero_flow.tensor.at(1, 2, 3, 0));
}

TEST_CASE("low variance filter") {
  PatchSample flat;
  flat.tensor = PatchTensor(2, 4);
  std::fill(flat.tensor.data().begin(), flat.tensor.data().end(), 0.5f);
  const auto busy = random_sample(2, 4, 2);
  const auto kept = filter_low_variance({flat, busy, flat});
  REQUIRE(kept.size() == 1);
  CHECK(kept[0] == busy);
}

TEST_CASE("culture metadata vocabulary") {
  CultureMeta m;
  m.density = "Dense";
  m.maturity = "Very Mature";
  CHECK_NOTHROW(m.validate());
  m.density = "dense-ish";
  CHECK_THROWS_AS(m.validate(), FormatError);
  m.density = "";
  m.maturity = "Old";
  CHECK_THROWS_AS(m.validate(), FormatError);
}

TEST_CASE("dataset export and import round trip") {
  fixture::TempDir tmp("patches");
  std::vector<PatchSample> samples;
  for (int i = 0; i < 3; ++i) {
    auto s = random_sample(3, 5, static_cast<std::uint64_t>(i));
    s.culture = "culture_" + std::to_string(i);
    s.x = 10u * static_cast<unsigned>(i);
    s.y = 3;
    s.start_frame = 7;
    s.frame_stride = 2;
    s.flipped_v = i == 1;
    samples.push_back(s);
  }
  const auto manifest = export_dataset(samples, tmp.path());
  CHECK(manifest.entries.size() == 3);
  CHECK(manifest.frame_count == 3);
  CHECK(manifest.patch_size == 5);
  std::size_t cvid = 0;
  for (const auto& e : std::filesystem::directory_iterator(tmp.path()))
    cvid += e.path().extension() == ".cvid";
  CHECK(cvid == 3);
  CHECK(import_dataset(tmp.path()) == samples);

  fixture::TempDir empty("patches_empty");
  const auto none = export_dataset({}, empty.path() / "out");
  CHECK(none.entries.empty());
  CHECK(import_dataset(empty.path() / "out").empty());

  std::vector<PatchSample> mixed{random_sample(2, 4, 1), random_sample(3, 4, 1)};
  CHECK_THROWS_AS(export_dataset(mixed, tmp.path() / "mixed"), DimensionError);
}

TEST_CASE("import detects a manifest that disagrees with its files") {
  fixture::TempDir tmp("patches_bad");
  auto s = random_sample(2, 3, 5);
  export_dataset({s}, tmp.path());
  auto text = formats::read_file(tmp / "manifest.json");
  const auto pos = text.find("\"x\": 0");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 6, "\"x\": 9");
  formats::write_file(tmp / "manifest.json", text);
  CHECK_THROWS_AS(import_dataset(tmp.path()), IntegrityError);
}
