#include "dwq/bench/manifest.hpp"

#include <chrono>
#include <ctime>

#include <json.hpp>

#include "dwq/io.hpp"
#include "dwq/rl/checkpoint.hpp"

namespace dwq::bench {

namespace {

std::string versions_text() {
  return "artifact=" + std::string(kArtifactVersion) + ";csv=" + std::to_string(kCsvFormatVersion) +
         ";trajectory=" + std::to_string(io::kTrajectoryFormatVersion) +
         ";checkpoint=" + std::to_string(rl::kCheckpointVersion);
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string RunManifest::hash() const {
  return io::hex64(io::fnv1a(command + "\n" + to_config_text(config) + versions_text()));
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["artifact"] = "dwq";
  j["artifact_version"] = kArtifactVersion;
  j["format_versions"] = {{"csv", kCsvFormatVersion},
                          {"trajectory_binary", io::kTrajectoryFormatVersion},
                          {"checkpoint", rl::kCheckpointVersion}};
  j["command"] = command;
  j["master_seed"] = config.seed;
  j["manifest_hash"] = hash();
  j["timestamp"] = timestamp;
  nlohmann::ordered_json cfg;
  for (const auto& key : config_keys()) cfg[key] = get_config_value(config, key);
  j["config"] = cfg;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  RunManifest m;
  m.command = j.value("command", "");
  m.timestamp = j.value("timestamp", "");
  if (!j.contains("config") || !j["config"].is_object()) throw ConfigError("manifest: missing config object");
  const Scale scale = parse_scale(j["config"].value("scale", "desk"));
  m.config = default_config(scale);
  for (const auto& [key, value] : j["config"].items()) {
    if (!value.is_string()) throw ConfigError("manifest: config value for '" + key + "' is not a string");
    set_config_value(m.config, key, value.get<std::string>());
  }
  return m;
}

RunManifest make_manifest(const std::string& command, const RunConfig& cfg) { return {command, cfg, utc_now()}; }

void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  io::write_file_atomic(dir / "manifest.json", m.to_json());
}

}  // namespace dwq::bench
