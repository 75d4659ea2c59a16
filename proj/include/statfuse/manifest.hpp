#pragma once

#include <string>
#include <vector>

namespace statfuse {

inline constexpr const char* kVersion = "0.1.0";

std::string sha256_file(const std::string& path);

struct ManifestEntry {
  std::string path;
  std::string sha256;
};

/// Machine-readable record of a run: subcommand, normalized configuration,
/// input and output checksums. Deliberately carries no timestamps so that
/// identical runs produce identical manifests.
struct RunManifest {
  std::string subcommand;
  std::vector<std::pair<std::string, std::string>> config;  // flag, value
  std::vector<ManifestEntry> inputs;
  std::vector<ManifestEntry> outputs;
};

void write_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace statfuse
