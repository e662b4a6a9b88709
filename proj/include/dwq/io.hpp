#pragma once

// Byte-level and tabular I/O shared by trajectories, checkpoints and datasets.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "dwq/errors.hpp"
#include "dwq/sme.hpp"

namespace dwq::io {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull);
std::string hex64(std::uint64_t v);

/// Appends little-endian encodings to a byte buffer.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void bytes(std::string_view s);
  void str(std::string_view s);  // u64 length prefix
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

/// Reads what ByteWriter wrote; running past the end throws `Eof`.
class ByteReader {
 public:
  struct Eof : Error {
    using Error::Error;
  };
  explicit ByteReader(std::string_view data) : data_(data) {}
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string bytes(std::size_t n);
  std::string str();
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::string_view take(std::size_t n);
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

/// Shortest round-trippable decimal form of a double.
std::string format_double(double v);

// ---------------------------------------------------------------------------
// Trajectory logs: columns step, t, I, action, fidelity, expect_x2.

struct TrajectoryRow {
  std::int64_t step = 0;
  double t = 0, current = 0, action = 0, fidelity = 0, expect_x2 = 0;
};

std::vector<TrajectoryRow> trajectory_rows(const TrajectoryRecord<double>& rec);

void write_trajectory_csv(const std::filesystem::path& path, const std::vector<TrajectoryRow>& rows);

/// Binary layout: 8-byte magic "DWQTRAJ\0", u32 version, u32 column count (6),
/// u64 row count, then rows of little-endian float64 in CSV column order.
inline constexpr std::uint32_t kTrajectoryFormatVersion = 1;
void write_trajectory_binary(const std::filesystem::path& path, const std::vector<TrajectoryRow>& rows);
std::vector<TrajectoryRow> read_trajectory_binary(const std::filesystem::path& path);

/// Minimal CSV table writer; values are written with format_double.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(const std::vector<std::string>& cells);
  void row(const std::vector<double>& cells);
  std::string str() const { return out_; }
  void save(const std::filesystem::path& path) const;
  std::size_t columns() const { return n_; }

 private:
  std::size_t n_;
  std::string out_;
};

}  // namespace dwq::io
