#ifndef REC4AD_PIPELINE_MANIFEST_H_
#define REC4AD_PIPELINE_MANIFEST_H_

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace rec4ad::pipeline {

inline constexpr const char* kManifestName = "manifest.json";

// Hex SHA-256 of a byte string / of a file's contents. The file form throws
// StaleInputError when the file is missing.
std::string Sha256Hex(std::string_view bytes);
std::string FileDigest(const std::filesystem::path& path);

// Digest of a JSON value's canonical (key-sorted, compact) text.
std::string JsonDigest(const nlohmann::json& value);

struct RunManifest {
  std::string stage;
  std::string tool_version;
  // Digest of the configuration subset this stage and its upstream depend on.
  std::string config_hash;
  // Upstream files, paths relative to the run directory, with digests.
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::map<std::string, double> timings_seconds;

  nlohmann::json ToJson() const;
  static RunManifest FromJson(const nlohmann::json& j);
};

// Writes `dir`/manifest.json with the digest of every output (paths taken
// relative to `root`).
void WriteManifest(const std::filesystem::path& dir, const std::filesystem::path& root,
                   RunManifest manifest,
                   const std::vector<std::filesystem::path>& output_files);

// Reads `dir`/manifest.json and checks it belongs to `stage`, was made with
// `config_hash` and that every listed output still has its digest. Throws
// StaleInputError otherwise. Returns the output digests keyed by relative path.
std::map<std::string, std::string> VerifyUpstream(const std::filesystem::path& dir,
                                                  const std::filesystem::path& root,
                                                  std::string_view stage,
                                                  std::string_view config_hash);

std::string ToolVersion();

}  // namespace rec4ad::pipeline

#endif  // REC4AD_PIPELINE_MANIFEST_H_
