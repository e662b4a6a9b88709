#pragma once

#include <filesystem>
#include <string>

#include "dwq/bench/config.hpp"

namespace dwq::bench {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr int kCsvFormatVersion = 1;

/// Provenance record written next to every dataset.
struct RunManifest {
  std::string command;  // e.g. "experiment gamma-sweep"
  RunConfig config;
  std::string timestamp;  // UTC, ISO 8601; not part of the hash

  /// FNV-1a over command, canonical config text, seed and format versions.
  std::string hash() const;
  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

RunManifest make_manifest(const std::string& command, const RunConfig& cfg);

/// Writes `<dir>/manifest.json`.
void write_manifest(const std::filesystem::path& dir, const RunManifest& m);

}  // namespace dwq::bench
