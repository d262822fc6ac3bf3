#pragma once

// Binary containers used on disk.
//
//   Tensor file:  "DTF1" | u32 rank | u32 dims[rank] | f32 values (row-major)
//   Checkpoint:   magic[4] | u32 version | u32 len | config JSON (UTF-8)
//                 | u32 T | f64 alpha_bar[T+1]          (T == 0: no schedule)
//                 | u32 count | count x { u32 len | name | u32 rank | u32 dims | f32 values }
//
// All integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dire/nn/params.hpp"
#include "dire/schedule.hpp"
#include "dire/tensor.hpp"

namespace dire::io {

namespace fs = std::filesystem;

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_tensor(const ImageTensor& t);
ImageTensor decode_tensor(const std::vector<std::uint8_t>& bytes, const std::string& context);
void write_tensor(const fs::path& path, const ImageTensor& t);
ImageTensor read_tensor(const fs::path& path);

struct Checkpoint {
  nlohmann::json config;
  std::optional<NoiseSchedule> schedule;
  nn::ParamSet params;
};

void write_checkpoint(const fs::path& path, const std::string& magic, const nlohmann::json& config,
                      const NoiseSchedule* schedule, const nn::ParamSet& params);
Checkpoint read_checkpoint(const fs::path& path, const std::string& magic);

/// Writes via a sibling temporary file and renames on completion.
void write_file_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_atomic(const fs::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const fs::path& path);
std::string read_text(const fs::path& path);

/// FNV-1a 64-bit, hex encoded. Integrity check only.
std::string content_hash(const std::vector<std::uint8_t>& bytes);

/// 8-bit binary PGM of one channel, affinely mapping [lo, hi] to [0, 255].
void write_pgm(const fs::path& path, const ImageTensor& img, int channel, float lo, float hi);

}  // namespace dire::io
