#include <doctest.h>

#include <cstring>
#include <random>

#include "cellflow/error.hpp"
#include "cellflow/formats.hpp"
#include "cellflow/image_io.hpp"
#include "fixtures.hpp"

using namespace cellflow;

namespace {

std::uint32_t u32_at(const std::string& bytes, std::size_t offset) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float f32_at(const std::string& bytes, std::size_t offset) {
  const std::uint32_t bits = u32_at(bytes, offset);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

std::vector<flow::FlowField> random_fields(std::size_t count, std::size_t rows, std::size_t cols) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<flow::FlowField> out;
  for (std::size_t k = 0; k < count; ++k) {
    flow::FlowField f{RealGrid(rows, cols), RealGrid(rows, cols)};
    for (double& v : f.u.values()) v = static_cast<float>(n(rng));
    for (double& v : f.v.values()) v = static_cast<float>(n(rng));
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace

TEST_CASE("CFLO layout") {
  const auto fields = random_fields(2, 3, 4);
  const auto bytes = formats::encode_cflo(fields);
  REQUIRE(bytes.size() == 4 + 4 * 4 + 2 * 2 * 3 * 4 * 4);
  CHECK(bytes.substr(0, 4) == "CFLO");
  CHECK(u32_at(bytes, 4) == 1);
  CHECK(u32_at(bytes, 8) == 2);
  CHECK(u32_at(bytes, 12) == 3);
  CHECK(u32_at(bytes, 16) == 4);
  // all U first, frame-major, then all V
  CHECK(f32_at(bytes, 20) == static_cast<float>(fields[0].u(0, 0)));
  CHECK(f32_at(bytes, 20 + 4 * 5) == static_cast<float>(fields[0].u(1, 1)));
  CHECK(f32_at(bytes, 20 + 4 * 12) == static_cast<float>(fields[1].u(0, 0)));
  CHECK(f32_at(bytes, 20 + 4 * 24) == static_cast<float>(fields[0].v(0, 0)));

  const auto back = formats::decode_cflo(bytes);
  REQUIRE(back.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(back[k].u == fields[k].u);
    CHECK(back[k].v == fields[k].v);
  }
}

TEST_CASE("CFLO rejects malformed input") {
  auto bytes = formats::encode_cflo(random_fields(1, 3, 3));
  CHECK_THROWS_AS(formats::decode_cflo(bytes.substr(0, bytes.size() - 1)), FormatError);
  CHECK_THROWS_AS(formats::decode_cflo(bytes + "x"), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(formats::decode_cflo(magic), FormatError);
  auto version = bytes;
  version[4] = 2;
  CHECK_THROWS_AS(formats::decode_cflo(version), FormatError);
}

TEST_CASE("CVID layout and round trip") {
  patches::PatchSample s;
  s.tensor = patches::PatchTensor(2, 3);
  for (std::size_t i = 0; i < s.tensor.data().size(); ++i) s.tensor.data()[i] = 0.25f * static_cast<float>(i);
  s.culture = "culture_7";
  s.x = 96;
  s.y = 1272;
  s.start_frame = 40;
  s.frame_stride = 3;
  s.normalized = true;
  s.flipped_h = true;

  const auto bytes = formats::encode_cvid(s);
  CHECK(bytes.substr(0, 4) == "CVID");
  CHECK(u32_at(bytes, 4) == 1);
  CHECK(u32_at(bytes, 8) == 2);
  CHECK(u32_at(bytes, 12) == 3);
  CHECK(u32_at(bytes, 16) == 3);
  CHECK(f32_at(bytes, 20 + 4 * 7) == 1.75f);
  const std::size_t meta_at = 20 + 4 * 2 * 3 * 3 * 3;
  const auto meta_len = u32_at(bytes, meta_at);
  const auto meta = nlohmann::json::parse(bytes.substr(meta_at + 4, meta_len));
  CHECK(meta.at("culture") == "culture_7");
  CHECK(meta.at("y") == 1272);
  CHECK(meta.at("flipped_h") == true);
  CHECK(meta.at("flipped_v") == false);

  CHECK(formats::decode_cvid(bytes) == s);

  fixture::TempDir tmp("cvid");
  formats::write_cvid(tmp / "a.cvid", s);
  CHECK(formats::read_cvid(tmp / "a.cvid") == s);
  CHECK(formats::read_file(tmp / "a.cvid") == bytes);
}

TEST_CASE("file helpers") {
  fixture::TempDir tmp("files");
  formats::write_file_atomic(tmp / "x.txt", "hello");
  CHECK(formats::read_file(tmp / "x.txt") == "hello");
  formats::write_file_atomic(tmp / "x.txt", "again");
  CHECK(formats::read_file(tmp / "x.txt") == "again");
  CHECK_FALSE(std::filesystem::exists(tmp / "x.txt.tmp"));
  CHECK_THROWS_AS(formats::read_file(tmp / "missing"), IoError);
}

TEST_CASE("PNG round trip at 8 and 16 bits") {
  fixture::TempDir tmp("png");
  const auto img = fixture::to_grid(fixture::smooth_texture(7, 9, 4));
  image_io::write_gray_png(tmp / "a16.png", img, 16);
  image_io::write_gray_png(tmp / "a8.png", img, 8);
  const auto g16 = image_io::read_gray_png(tmp / "a16.png");
  const auto g8 = image_io::read_gray_png(tmp / "a8.png");
  REQUIRE(g16.height() == 7);
  REQUIRE(g16.width() == 9);
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 9; ++c) {
      CHECK(std::abs(g16(r, c) - img(r, c)) <= 0.5 / 65535 + 1e-12);
      CHECK(std::abs(g8(r, c) - img(r, c)) <= 0.5 / 255 + 1e-12);
      CHECK(g8(r, c) * 255 == doctest::Approx(std::round(g8(r, c) * 255)));
    }
  const auto size = image_io::read_png_size(tmp / "a8.png");
  CHECK(size.width == 9);
  CHECK(size.height == 7);

  formats::write_file(tmp / "fake.png", "not a png at all");
  CHECK_THROWS_AS(image_io::read_gray_png(tmp / "fake.png"), FormatError);
}

TEST_CASE("video directory loading") {
  fixture::TempDir tmp("video");
  const auto dir = tmp / "culture_03";
  fixture::write_blob_video(dir, 3, 20, 30);
  formats::write_file(dir / "notes.txt", "ignored");
  formats::write_file(dir / "culture.json",
                      R"({"capture_hours": 48, "day_imaged": "D5", "density": "Moderate", "maturity": "Mature"})");
  const auto names = image_io::list_frames(dir);
  REQUIRE(names.size() == 3);
  CHECK(names[0].filename() == "frame_000.png");
  CHECK(names[2].filename() == "frame_002.png");

  const auto v = image_io::load_video(dir);
  CHECK(v.frames.size() == 3);
  CHECK(v.width() == 30);
  CHECK(v.height() == 20);
  CHECK(v.meta.culture == "culture_03");
  CHECK(v.meta.density == "Moderate");
  REQUIRE(v.meta.capture_hours.has_value());
  CHECK(*v.meta.capture_hours == 48.0);

  CHECK_THROWS_AS(image_io::load_video(tmp / "nope"), InputError);
  std::filesystem::create_directories(tmp / "empty");
  CHECK_THROWS_AS(image_io::load_video(tmp / "empty"), ArityError);

  formats::write_file(dir / "culture.json", R"({"density": "Crowded"})");
  CHECK_THROWS_AS(image_io::load_video(dir), FormatError);
}
