#include "cellflow/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>

#include <json.hpp>

#include "cellflow/formats.hpp"

namespace cellflow::image_io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

[[noreturn]] void on_png_error(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  *what = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

class PngReader {
 public:
  explicit PngReader(const std::filesystem::path& path) : path_(path), file_(open_file(path, "rb")) {
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file_.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
      throw FormatError(path.string() + " is not a PNG file");
    }
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error_, on_png_error, on_png_warning);
    if (!png_) throw IoError("libpng initialisation failed");
    info_ = png_create_info_struct(png_);
    if (!info_) {
      png_destroy_read_struct(&png_, nullptr, nullptr);
      throw IoError("libpng initialisation failed");
    }
  }
  ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  // libpng reports errors through longjmp; keep the setjmp frame in this
  // function and translate to exceptions after it returns.
  ImageSize read_header() {
    bool failed = false;
    ImageSize size;
    if (setjmp(png_jmpbuf(png_))) {
      failed = true;
    } else {
      png_init_io(png_, file_.get());
      png_set_sig_bytes(png_, 8);
      png_read_info(png_, info_);
      size = {png_get_image_width(png_, info_), png_get_image_height(png_, info_)};
    }
    if (failed) throw FormatError(path_.string() + ": " + error_);
    return size;
  }

  GrayFrame read_gray() {
    const ImageSize size = read_header();
    bool failed = false;
    int depth = 0;
    std::vector<unsigned char> buffer;
    std::vector<png_bytep> rows(size.height);
    if (setjmp(png_jmpbuf(png_))) {
      failed = true;
    } else {
      const int color = png_get_color_type(png_, info_);
      depth = png_get_bit_depth(png_, info_);
      if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_GRAY_ALPHA) {
        error_ = "expected a grayscale PNG";
        png_longjmp(png_, 1);
      }
      if (depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png_);
        depth = 8;
      }
      if (color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_strip_alpha(png_);
      png_read_update_info(png_, info_);
      const std::size_t stride = png_get_rowbytes(png_, info_);
      buffer.resize(stride * size.height);
      for (std::size_t r = 0; r < size.height; ++r) rows[r] = buffer.data() + r * stride;
      png_read_image(png_, rows.data());
      png_read_end(png_, nullptr);
    }
    if (failed) throw FormatError(path_.string() + ": " + error_);

    RealGrid pixels(size.height, size.width);
    const std::size_t bytes_per_px = depth == 16 ? 2 : 1;
    const double scale = depth == 16 ? 65535.0 : 255.0;
    for (std::size_t r = 0; r < size.height; ++r) {
      const unsigned char* src = buffer.data() + r * size.width * bytes_per_px;
      for (std::size_t c = 0; c < size.width; ++c) {
        // 16-bit samples are stored big-endian
        const unsigned raw = depth == 16 ? (unsigned{src[2 * c]} << 8) | src[2 * c + 1] : src[c];
        pixels(r, c) = raw / scale;
      }
    }
    return GrayFrame(std::move(pixels));
  }

 private:
  std::filesystem::path path_;
  FilePtr file_;
  std::string error_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

}  // namespace

GrayFrame read_gray_png(const std::filesystem::path& path) {
  PngReader reader(path);
  return reader.read_gray();
}

ImageSize read_png_size(const std::filesystem::path& path) {
  PngReader reader(path);
  return reader.read_header();
}

void write_gray_png(const std::filesystem::path& path, const RealGrid& pixels, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw RangeError("PNG bit depth must be 8 or 16");
  if (pixels.empty()) throw DimensionError("cannot write an empty image");

  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  const std::size_t bytes_per_px = bit_depth == 16 ? 2 : 1;
  std::vector<unsigned char> buffer(pixels.size() * bytes_per_px);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double v = std::clamp(pixels.values()[i], 0.0, 1.0);
    const auto q = static_cast<unsigned>(std::lround(v * scale));
    if (bit_depth == 16) {
      buffer[2 * i] = static_cast<unsigned char>(q >> 8);
      buffer[2 * i + 1] = static_cast<unsigned char>(q & 0xFFu);
    } else {
      buffer[i] = static_cast<unsigned char>(q);
    }
  }

  FilePtr file = open_file(path, "wb");
  std::string error;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  if (!png) throw IoError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  volatile bool failed = false;
  if (!info || setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(pixels.cols()),
                 static_cast<png_uint_32>(pixels.rows()), bit_depth, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = pixels.cols() * bytes_per_px;
    for (std::size_t r = 0; r < pixels.rows(); ++r) {
      png_write_row(png, buffer.data() + r * stride);
    }
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  if (failed) throw IoError("writing " + path.string() + " failed: " + error);
}

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw InputError("not a readable directory: " + dir.string());
  }
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  return out;
}

patches::SourceVideo load_video(const std::filesystem::path& dir) {
  patches::SourceVideo video;
  for (const auto& p : list_frames(dir)) video.frames.push_back(read_gray_png(p));

  const auto name = dir.filename().empty() ? dir.parent_path().filename() : dir.filename();
  video.meta.culture = name.string();
  const auto meta_path = dir / "culture.json";
  if (std::filesystem::exists(meta_path)) {
    try {
      const auto j = nlohmann::json::parse(formats::read_file(meta_path));
      if (j.contains("culture")) {
        video.meta.culture = j["culture"].is_string() ? j["culture"].get<std::string>()
                                                      : j["culture"].dump();
      }
      if (j.contains("capture_hours")) video.meta.capture_hours = j["capture_hours"].get<double>();
      if (j.contains("day_imaged")) {
        video.meta.day_imaged = j["day_imaged"].is_string() ? j["day_imaged"].get<std::string>()
                                                            : j["day_imaged"].dump();
      }
      if (j.contains("density")) video.meta.density = j["density"].get<std::string>();
      if (j.contains("maturity")) video.meta.maturity = j["maturity"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(meta_path.string() + ": " + e.what());
    }
  }
  if (video.frames.empty()) throw ArityError("no PNG frames in " + dir.string());
  video.validate();
  return video;
}

}  // namespace cellflow::image_io
