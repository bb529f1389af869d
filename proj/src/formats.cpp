#include "cellflow/formats.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include <json.hpp>

namespace cellflow::formats {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw RangeError(std::string(what) + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  Reader(const std::string& bytes, const char* format) : bytes_(bytes), format_(format) {}

  void expect_magic(const char* magic) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, magic, 4) != 0) {
      throw FormatError(std::string(format_) + ": bad magic bytes");
    }
    pos_ += 4;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string(format_) + ": truncated data");
  }

  void expect_end() const {
    if (pos_ != bytes_.size()) throw FormatError(std::string(format_) + ": trailing bytes");
  }

 private:
  const std::string& bytes_;
  const char* format_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_cflo(const std::vector<flow::FlowField>& fields) {
  const std::size_t rows = fields.empty() ? 0 : fields.front().u.rows();
  const std::size_t cols = fields.empty() ? 0 : fields.front().u.cols();
  for (const auto& f : fields) {
    if (f.u.rows() != rows || f.u.cols() != cols || !f.u.same_shape(f.v)) {
      throw DimensionError("CFLO fields must share one shape");
    }
  }
  std::string out = "CFLO";
  out.reserve(20 + 8 * fields.size() * rows * cols);
  put_u32(out, kVersion);
  put_u32(out, checked_u32(fields.size(), "pair count"));
  put_u32(out, checked_u32(rows, "height"));
  put_u32(out, checked_u32(cols, "width"));
  for (const auto& f : fields) {
    for (double v : f.u.values()) put_f32(out, static_cast<float>(v));
  }
  for (const auto& f : fields) {
    for (double v : f.v.values()) put_f32(out, static_cast<float>(v));
  }
  return out;
}

std::vector<flow::FlowField> decode_cflo(const std::string& bytes) {
  Reader in(bytes, "CFLO");
  in.expect_magic("CFLO");
  if (in.u32() != kVersion) throw FormatError("CFLO: unsupported version");
  const std::size_t pairs = in.u32();
  const std::size_t rows = in.u32();
  const std::size_t cols = in.u32();
  in.need(pairs * rows * cols * 8);

  std::vector<flow::FlowField> fields(pairs, {RealGrid(rows, cols), RealGrid(rows, cols)});
  for (auto& f : fields) {
    for (double& v : f.u.values()) v = in.f32();
  }
  for (auto& f : fields) {
    for (double& v : f.v.values()) v = in.f32();
  }
  in.expect_end();
  return fields;
}

std::string encode_cvid(const patches::PatchSample& s) {
  const auto& t = s.tensor;
  std::string out = "CVID";
  out.reserve(24 + 4 * t.data().size() + 256);
  put_u32(out, kVersion);
  put_u32(out, checked_u32(t.frames(), "K"));
  put_u32(out, checked_u32(t.size(), "N"));
  put_u32(out, static_cast<std::uint32_t>(patches::kChannels));
  for (float v : t.data()) put_f32(out, v);

  const nlohmann::json meta = {{"culture", s.culture},
                               {"x", s.x},
                               {"y", s.y},
                               {"start_frame", s.start_frame},
                               {"frame_stride", s.frame_stride},
                               {"normalized", s.normalized},
                               {"flipped_h", s.flipped_h},
                               {"flipped_v", s.flipped_v}};
  const std::string blob = meta.dump();
  put_u32(out, checked_u32(blob.size(), "metadata length"));
  out += blob;
  return out;
}

patches::PatchSample decode_cvid(const std::string& bytes) {
  Reader in(bytes, "CVID");
  in.expect_magic("CVID");
  if (in.u32() != kVersion) throw FormatError("CVID: unsupported version");
  const std::size_t frames = in.u32();
  const std::size_t size = in.u32();
  if (in.u32() != patches::kChannels) throw FormatError("CVID: channel count must be 3");
  in.need(frames * size * size * patches::kChannels * 4);

  patches::PatchSample s;
  s.tensor = patches::PatchTensor(frames, size);
  for (float& v : s.tensor.data()) v = in.f32();

  const std::size_t len = in.u32();
  const std::string blob = in.take(len);
  in.expect_end();
  try {
    const auto meta = nlohmann::json::parse(blob);
    s.culture = meta.at("culture").get<std::string>();
    s.x = meta.at("x").get<std::size_t>();
    s.y = meta.at("y").get<std::size_t>();
    s.start_frame = meta.at("start_frame").get<std::size_t>();
    s.frame_stride = meta.at("frame_stride").get<std::size_t>();
    s.normalized = meta.at("normalized").get<bool>();
    s.flipped_h = meta.at("flipped_h").get<bool>();
    s.flipped_v = meta.at("flipped_v").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("CVID: bad metadata: ") + e.what());
  }
  return s;
}

void write_cflo(const std::filesystem::path& path, const std::vector<flow::FlowField>& fields) {
  write_file(path, encode_cflo(fields));
}

std::vector<flow::FlowField> read_cflo(const std::filesystem::path& path) {
  return decode_cflo(read_file(path));
}

void write_cvid(const std::filesystem::path& path, const patches::PatchSample& sample) {
  write_file(path, encode_cvid(sample));
}

patches::PatchSample read_cvid(const std::filesystem::path& path) {
  return decode_cvid(read_file(path));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for " + path.string());
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError("write failed for " + path.string());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  write_file(tmp, bytes);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot replace " + path.string());
  }
}

}  // namespace cellflow::formats
