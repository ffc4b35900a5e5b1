#include "manifest.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>

#include "uqfire/io_util.hpp"

namespace uqfire::cli {

std::string utc_timestamp() {
  std::time_t t = 0;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const RunManifest& m, const std::string& dir) {
  using json = nlohmann::ordered_json;
  json j;
  j["format"] = "uqfire-manifest";
  j["version"] = 1;
  j["code_version"] = std::string(library_version());
  j["command"] = m.command;
  j["args"] = m.args;
  j["seed"] = m.seed;
  j["config"] = m.config;
  json inputs = json::array();
  for (const auto& p : m.inputs) {
    json e{{"path", p}};
    if (std::filesystem::is_regular_file(p)) e["hash"] = file_hash(p);
    inputs.push_back(std::move(e));
  }
  j["inputs"] = std::move(inputs);
  json outputs = json::array();
  for (const auto& p : m.outputs) {
    outputs.push_back({{"path", p}, {"hash", file_hash(join_path(dir, p))}});
  }
  j["outputs"] = std::move(outputs);
  j["started_at"] = m.started_at;
  j["finished_at"] = utc_timestamp();
  write_text_file(join_path(dir, "manifest.json"), j.dump(2) + "\n");
}

}  // namespace uqfire::cli
