#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace patchdrop {

inline constexpr const char* kToolVersion = "0.1.0";

/// Record of one invocation: what ran and with which resolved settings.
/// The hash covers the subcommand and every config entry, so equal hashes
/// imply equal outputs; version and timestamp are informational only.
struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> config;
  std::uint64_t config_hash = 0;
  std::string tool_version = kToolVersion;
  std::string timestamp;  // ISO 8601 UTC
};

std::uint64_t fnv1a64(std::string_view text);

std::uint64_t config_hash(const std::string& subcommand,
                          const std::map<std::string, std::string>& config);

std::string hash_hex(std::uint64_t hash);

RunManifest make_manifest(std::string subcommand,
                          std::map<std::string, std::string> config);

std::string manifest_json(const RunManifest& m);

void write_manifest(const std::filesystem::path& path, const RunManifest& m);

/// Formats a double so that reading it back reproduces the exact value.
std::string format_double(double v);

}  // namespace patchdrop
