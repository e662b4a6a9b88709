#include "dwq/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <sstream>

namespace dwq::io {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
  return s;
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::bytes(std::string_view s) { buf_.append(s); }

void ByteWriter::str(std::string_view s) {
  u64(s.size());
  bytes(s);
}

std::string_view ByteReader::take(std::size_t n) {
  if (n > remaining()) throw Eof("unexpected end of data");
  auto s = data_.substr(pos_, n);
  pos_ += n;
  return s;
}

std::uint32_t ByteReader::u32() {
  auto s = take(4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[i]);
  return v;
}

std::uint64_t ByteReader::u64() {
  auto s = take(8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[i]);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::bytes(std::size_t n) { return std::string(take(n)); }

std::string ByteReader::str() {
  const std::uint64_t n = u64();
  if (n > remaining()) throw Eof("string length exceeds data");
  return bytes(static_cast<std::size_t>(n));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, end);
}

std::vector<TrajectoryRow> trajectory_rows(const TrajectoryRecord<double>& rec) {
  std::vector<TrajectoryRow> rows(rec.currents.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k] = {static_cast<std::int64_t>(k), (k + 1) * rec.dt_control, rec.currents[k], rec.actions[k],
               rec.fidelities[k], rec.expect_x2[k]};
  }
  return rows;
}

void write_trajectory_csv(const std::filesystem::path& path, const std::vector<TrajectoryRow>& rows) {
  CsvWriter csv({"step", "t", "I", "action", "fidelity", "expect_x2"});
  for (const auto& r : rows) {
    csv.row(std::vector<std::string>{std::to_string(r.step), format_double(r.t), format_double(r.current),
                                     format_double(r.action), format_double(r.fidelity),
                                     format_double(r.expect_x2)});
  }
  csv.save(path);
}

namespace {
constexpr std::string_view kTrajMagic{"DWQTRAJ\0", 8};
}

void write_trajectory_binary(const std::filesystem::path& path, const std::vector<TrajectoryRow>& rows) {
  ByteWriter w;
  w.bytes(kTrajMagic);
  w.u32(kTrajectoryFormatVersion);
  w.u32(6);
  w.u64(rows.size());
  for (const auto& r : rows) {
    for (double v : {static_cast<double>(r.step), r.t, r.current, r.action, r.fidelity, r.expect_x2}) w.f64(v);
  }
  write_file_atomic(path, w.data());
}

std::vector<TrajectoryRow> read_trajectory_binary(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  ByteReader r(data);
  try {
    if (r.bytes(8) != kTrajMagic) throw Error("trajectory: bad magic in '" + path.string() + "'");
    if (r.u32() != kTrajectoryFormatVersion) throw Error("trajectory: unsupported format version");
    if (r.u32() != 6) throw Error("trajectory: unexpected column count");
    const std::uint64_t n = r.u64();
    if (n * 48 != r.remaining()) throw Error("trajectory: row count does not match file size");
    std::vector<TrajectoryRow> rows(n);
    for (auto& row : rows) {
      row.step = static_cast<std::int64_t>(r.f64());
      row.t = r.f64();
      row.current = r.f64();
      row.action = r.f64();
      row.fidelity = r.f64();
      row.expect_x2 = r.f64();
    }
    return rows;
  } catch (const ByteReader::Eof&) {
    throw Error("trajectory: truncated file '" + path.string() + "'");
  }
}

CsvWriter::CsvWriter(std::vector<std::string> header) : n_(header.size()) {
  if (header.empty()) throw InvalidArgument("csv: empty header");
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != n_) throw InvalidArgument("csv: row has " + std::to_string(cells.size()) + " cells, expected " +
                                                std::to_string(n_));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char c : cells[i]) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      out_ += q + "\"";
    } else {
      out_ += cells[i];
    }
    out_ += i + 1 < cells.size() ? ',' : '\n';
  }
}

void CsvWriter::row(const std::vector<double>& cells) {
  std::vector<std::string> s;
  s.reserve(cells.size());
  for (double v : cells) s.push_back(format_double(v));
  row(s);
}

void CsvWriter::save(const std::filesystem::path& path) const { write_file_atomic(path, out_); }

}  // namespace dwq::io
