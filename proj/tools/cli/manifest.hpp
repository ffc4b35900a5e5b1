#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace uqfire::cli {

/// UTC time as YYYY-MM-DDTHH:MM:SSZ. When SOURCE_DATE_EPOCH is set, that
/// instant is used instead of the wall clock so reruns produce identical
/// manifests.
std::string utc_timestamp();

struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  nlohmann::ordered_json config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;   // paths as given on the command line
  std::vector<std::string> outputs;  // paths relative to the output directory
  std::string started_at;
};

/// Writes <dir>/manifest.json with content hashes of every input and output.
void write_manifest(const RunManifest& manifest, const std::string& dir);

}  // namespace uqfire::cli
