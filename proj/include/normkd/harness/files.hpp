#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "normkd/logitstats.hpp"
#include "normkd/trainer.hpp"

namespace normkd::harness {

// ---- text helpers ---------------------------------------------------------

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

/// Writes `contents` to `path` through a sibling temp file and a rename, so
/// readers never observe a partial file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// RFC-4180 CSV with LF line endings.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void add_row(std::vector<std::string> fields);
  const std::string& str() const noexcept { return out_; }

 private:
  void append(const std::vector<std::string>& fields);
  std::size_t width_;
  std::string out_;
};

/// Parses CSV produced by CsvWriter (quoted fields allowed).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

// ---- DatasetFile ----------------------------------------------------------
// Text: first line "C D N", then N lines "label,f1,...,fD".

std::string encode_dataset(const Dataset& data);
Dataset decode_dataset(std::string_view text);
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

// ---- LogitCacheFile -------------------------------------------------------
// Little-endian binary: "NKDL", u32 version = 1, u32 N, u32 C, then N records
// of (u32 sample_id, u32 label, C x f32).

inline constexpr std::uint32_t kLogitCacheVersion = 1;
inline constexpr std::size_t kLogitCacheHeaderBytes = 16;

std::vector<std::uint8_t> encode_logit_cache(std::span<const LogitRecord> records);
std::vector<LogitRecord> decode_logit_cache(std::span<const std::uint8_t> bytes);
void write_logit_cache(const std::filesystem::path& path, std::span<const LogitRecord> records);
std::vector<LogitRecord> read_logit_cache(const std::filesystem::path& path);

/// Rounds every logit to the nearest 32-bit float, as stored in a cache.
std::vector<LogitRecord> quantize_to_cache_precision(std::vector<LogitRecord> records);

// ---- metrics ----------------------------------------------------------------

/// history columns: epoch,split,ce,kld,total,top1
std::string history_csv(const TrainHistory& history);

}  // namespace normkd::harness
