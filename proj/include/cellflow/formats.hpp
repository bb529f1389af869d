#pragma once

// Binary containers.
//
// CFLO (flow tensors), little-endian:
//   "CFLO" u32 version=1 u32 pairs u32 height u32 width
//   pairs*H*W f32 U values, then pairs*H*W f32 V values (frame-major, row-major)
//
// CVID (patch tensors), little-endian:
//   "CVID" u32 version=1 u32 K u32 N u32 channels=3
//   K*N*N*3 f32 in (frame, row, col, channel) order
//   u32 byte length + UTF-8 JSON metadata
//     {culture, x, y, start_frame, frame_stride, normalized, flipped_h, flipped_v}

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cellflow/flow.hpp"
#include "cellflow/patches.hpp"

namespace cellflow::formats {

inline constexpr std::uint32_t kVersion = 1;

std::string encode_cflo(const std::vector<flow::FlowField>& fields);
std::vector<flow::FlowField> decode_cflo(const std::string& bytes);

void write_cflo(const std::filesystem::path& path, const std::vector<flow::FlowField>& fields);
std::vector<flow::FlowField> read_cflo(const std::filesystem::path& path);

std::string encode_cvid(const patches::PatchSample& sample);
patches::PatchSample decode_cvid(const std::string& bytes);

void write_cvid(const std::filesystem::path& path, const patches::PatchSample& sample);
patches::PatchSample read_cvid(const std::filesystem::path& path);

// Whole-file helpers. write_file_atomic writes a sibling temp file and
// renames it over the target.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace cellflow::formats
