#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "recurrent_octomap/neural/lstm.hpp"
#include "recurrent_octomap/neural/matrix.hpp"

namespace rom {

enum class ModelKind : std::uint32_t { kLstm = 1, kPerception = 2 };

/// Generic container behind the binary weight format:
///
///   "ROMWGHTS" | u32 version | u32 kind | u32 class_count |
///   u32 n_dims | u32 dims[n_dims] | u32 n_tensors |
///   per tensor: u32 rows | u32 cols | f64 values[rows*cols] (row-major)
///
/// All integers and floats little-endian.
struct WeightFile {
  ModelKind kind = ModelKind::kLstm;
  std::uint32_t class_count = 0;
  std::vector<std::uint32_t> dims;
  std::vector<Matrix> tensors;

  bool operator==(const WeightFile&) const = default;
};

inline constexpr std::uint32_t kWeightFormatVersion = 1;

void write_weight_file(std::ostream& out, const WeightFile& file);
WeightFile read_weight_file(std::istream& in);
void save_weight_file(const std::filesystem::path& path, const WeightFile& file);
WeightFile load_weight_file(const std::filesystem::path& path);

/// Lossless JSON rendering of the same content (doubles printed round-trip).
std::string weight_file_to_text(const WeightFile& file);
WeightFile weight_file_from_text(const std::string& text);

WeightFile to_weight_file(const LstmParams& params);
LstmParams lstm_from_weight_file(const WeightFile& file);

void save_lstm(const std::filesystem::path& path, const LstmParams& params);
LstmParams load_lstm(const std::filesystem::path& path);

}  // namespace rom
