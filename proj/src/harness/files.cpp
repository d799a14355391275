#include "normkd/harness/files.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "normkd/error.hpp"

namespace normkd::harness {
namespace fs = std::filesystem;

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw ContractError(std::string(what) + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

[[noreturn]] void bad_dataset(std::size_t line, const std::string& why) {
  throw IoError("dataset line " + std::to_string(line) + ": " + why);
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CsvWriter::CsvWriter(std::vector<std::string> header) : width_(header.size()) { append(header); }

void CsvWriter::add_row(std::vector<std::string> fields) {
  if (fields.size() != width_) {
    throw ContractError("csv row has " + std::to_string(fields.size()) + " fields, header has " +
                        std::to_string(width_));
  }
  append(fields);
}

void CsvWriter::append(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out_ += ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n\r") == std::string::npos) {
      out_ += f;
    } else {
      out_ += '"';
      for (char c : f) {
        if (c == '"') out_ += '"';
        out_ += c;
      }
      out_ += '"';
    }
  }
  out_ += '\n';
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    any = true;
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw IoError("csv: unterminated quoted field");
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string encode_dataset(const Dataset& data) {
  validate(data);
  std::string out = std::to_string(data.classes) + " " + std::to_string(data.dim()) + " " +
                    std::to_string(data.size()) + "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += std::to_string(data.labels[i]);
    for (double v : data.features.row(i)) {
      if (!std::isfinite(v)) throw NumericError("dataset feature is not finite");
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

Dataset decode_dataset(std::string_view text) {
  std::vector<std::string_view> lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) bad_dataset(1, "missing header");
  const auto header = split(lines[0], ' ');
  std::size_t c = 0, d = 0, n = 0;
  if (header.size() != 3 || !parse_number(header[0], c) || !parse_number(header[1], d) ||
      !parse_number(header[2], n)) {
    bad_dataset(1, "header must be \"C D N\"");
  }
  if (c < 1 || d < 1) bad_dataset(1, "C and D must be positive");
  if (lines.size() - 1 != n) {
    throw IoError("dataset header declares " + std::to_string(n) + " rows, file has " +
                  std::to_string(lines.size() - 1));
  }
  Dataset data;
  data.classes = c;
  data.features = Matrix(n, d);
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto fields = split(lines[i + 1], ',');
    if (fields.size() != d + 1) {
      bad_dataset(i + 2, "expected " + std::to_string(d + 1) + " fields, got " +
                             std::to_string(fields.size()));
    }
    if (!parse_number(fields[0], data.labels[i]) || data.labels[i] >= c) {
      bad_dataset(i + 2, "label must be an integer in [0, " + std::to_string(c) + ")");
    }
    for (std::size_t j = 0; j < d; ++j) {
      double v = 0.0;
      if (!parse_number(fields[j + 1], v) || !std::isfinite(v)) {
        bad_dataset(i + 2, "feature " + std::to_string(j) + " is not a finite number");
      }
      data.features(i, j) = v;
    }
  }
  return data;
}

void write_dataset(const fs::path& path, const Dataset& data) {
  write_file_atomic(path, encode_dataset(data));
}

Dataset read_dataset(const fs::path& path) { return decode_dataset(read_file(path)); }

std::vector<std::uint8_t> encode_logit_cache(std::span<const LogitRecord> records) {
  const std::size_t c = records.empty() ? 0 : records.front().logits.size();
  std::vector<std::uint8_t> out;
  out.reserve(kLogitCacheHeaderBytes + records.size() * (8 + 4 * c));
  for (char ch : std::string_view("NKDL")) out.push_back(static_cast<std::uint8_t>(ch));
  put_u32(out, kLogitCacheVersion);
  put_u32(out, checked_u32(records.size(), "record count"));
  put_u32(out, checked_u32(c, "class count"));
  for (const LogitRecord& r : records) {
    if (r.logits.size() != c) throw DimensionError("logit cache records differ in class count");
    put_u32(out, r.sample_id);
    put_u32(out, r.label);
    for (double v : r.logits) {
      const float f = static_cast<float>(v);
      if (!std::isfinite(f)) throw NumericError("logit does not fit a finite 32-bit float");
      put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  return out;
}

std::vector<LogitRecord> decode_logit_cache(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kLogitCacheHeaderBytes) {
    throw IoError("logit cache truncated in header: expected at least 16 bytes, got " +
                  std::to_string(bytes.size()));
  }
  if (std::memcmp(bytes.data(), "NKDL", 4) != 0) throw IoError("logit cache: bad magic at offset 0");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kLogitCacheVersion) {
    throw IoError("logit cache: unsupported version " + std::to_string(version) + " at offset 4");
  }
  const std::uint64_t n = get_u32(bytes, 8);
  const std::uint64_t c = get_u32(bytes, 12);
  const std::uint64_t expected = kLogitCacheHeaderBytes + n * (8 + 4 * c);
  if (bytes.size() != expected) {
    throw IoError("logit cache length mismatch: expected " + std::to_string(expected) +
                  " bytes for N=" + std::to_string(n) + " C=" + std::to_string(c) + ", got " +
                  std::to_string(bytes.size()));
  }
  std::vector<LogitRecord> records(n);
  std::size_t offset = kLogitCacheHeaderBytes;
  for (LogitRecord& r : records) {
    r.sample_id = get_u32(bytes, offset);
    r.label = get_u32(bytes, offset + 4);
    offset += 8;
    if (c > 0 && r.label >= c) {
      throw IoError("logit cache: label " + std::to_string(r.label) + " out of range at offset " +
                    std::to_string(offset - 4));
    }
    r.logits.resize(c);
    for (double& v : r.logits) {
      const float f = std::bit_cast<float>(get_u32(bytes, offset));
      if (!std::isfinite(f)) {
        throw IoError("logit cache: non-finite value at offset " + std::to_string(offset));
      }
      v = f;
      offset += 4;
    }
  }
  return records;
}

void write_logit_cache(const fs::path& path, std::span<const LogitRecord> records) {
  const auto bytes = encode_logit_cache(records);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::vector<LogitRecord> read_logit_cache(const fs::path& path) {
  const std::string raw = read_file(path);
  try {
    return decode_logit_cache(
        std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::vector<LogitRecord> quantize_to_cache_precision(std::vector<LogitRecord> records) {
  for (LogitRecord& r : records) {
    for (double& v : r.logits) v = static_cast<float>(v);
  }
  return records;
}

std::string history_csv(const TrainHistory& history) {
  CsvWriter csv({"epoch", "split", "ce", "kld", "total", "top1"});
  for (const EpochRecord& e : history) {
    csv.add_row({std::to_string(e.epoch), split_name(e.split), format_double(e.ce),
                 format_double(e.kld), format_double(e.total), format_double(e.top1)});
  }
  return csv.str();
}

}  // namespace normkd::harness
