#include "rec4ad/pipeline/manifest.h"

#include <array>
#include <cstdio>
#include <fstream>
#include <memory>

#include <openssl/evp.h>

#include "rec4ad/common/error.h"
#include "rec4ad/common/text.h"

namespace rec4ad::pipeline {

using nlohmann::json;

namespace {

constexpr const char* kSchema = "rec4ad.manifest/1";

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw std::runtime_error("sha256: digest init failed");
    }
  }
  void Update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw std::runtime_error("sha256: update");
  }
  std::string HexFinal() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) {
      throw std::runtime_error("sha256: final");
    }
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
      std::snprintf(buf, sizeof buf, "%02x", md[i]);
      hex += buf;
    }
    return hex;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx_;
};

}  // namespace

std::string Sha256Hex(std::string_view bytes) {
  Sha256 h;
  h.Update(bytes.data(), bytes.size());
  return h.HexFinal();
}

std::string FileDigest(const std::filesystem::path& path) {
  std::ifstream in = OpenIn(path);
  Sha256 h;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    h.Update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.HexFinal();
}

std::string JsonDigest(const json& value) { return Sha256Hex(value.dump()); }

json RunManifest::ToJson() const {
  return {{"schema", kSchema},      {"stage", stage},     {"tool_version", tool_version},
          {"config_hash", config_hash}, {"inputs", inputs}, {"outputs", outputs},
          {"timings_seconds", timings_seconds}};
}

RunManifest RunManifest::FromJson(const json& j) {
  try {
    if (j.at("schema") != kSchema) throw FormatError("manifest: unknown schema");
    RunManifest m;
    m.stage = j.at("stage").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.timings_seconds = j.at("timings_seconds").get<std::map<std::string, double>>();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

void WriteManifest(const std::filesystem::path& dir, const std::filesystem::path& root,
                   RunManifest manifest,
                   const std::vector<std::filesystem::path>& output_files) {
  manifest.tool_version = ToolVersion();
  for (const auto& f : output_files) {
    manifest.outputs[std::filesystem::relative(f, root).generic_string()] = FileDigest(f);
  }
  std::ofstream out = OpenOut(dir / kManifestName);
  out << manifest.ToJson().dump(2) << '\n';
  if (!out) throw FormatError("failed writing " + (dir / kManifestName).string());
}

std::map<std::string, std::string> VerifyUpstream(const std::filesystem::path& dir,
                                                  const std::filesystem::path& root,
                                                  std::string_view stage,
                                                  std::string_view config_hash) {
  const std::filesystem::path path = dir / kManifestName;
  if (!std::filesystem::exists(path)) {
    throw StaleInputError("missing " + path.string() + "; run the '" + std::string(stage) +
                          "' stage first");
  }
  std::ifstream in = OpenIn(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw StaleInputError(path.string() + ": unreadable manifest");
  }
  RunManifest m;
  try {
    m = RunManifest::FromJson(j);
  } catch (const FormatError& e) {
    throw StaleInputError(path.string() + ": " + e.what());
  }
  if (m.stage != stage) {
    throw StaleInputError(path.string() + ": expected stage '" + std::string(stage) + "'");
  }
  if (m.config_hash != config_hash) {
    throw StaleInputError(path.string() + ": '" + std::string(stage) +
                          "' outputs were made with a different configuration; rerun it");
  }
  for (const auto& [rel, digest] : m.outputs) {
    const std::filesystem::path file = root / rel;
    if (!std::filesystem::exists(file) || FileDigest(file) != digest) {
      throw StaleInputError(file.string() + " changed since the '" + std::string(stage) +
                            "' stage wrote it");
    }
  }
  return m.outputs;
}

std::string ToolVersion() { return REC4AD_VERSION; }

}  // namespace rec4ad::pipeline
