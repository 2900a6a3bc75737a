#ifndef REC4AD_SIM_LOG_IO_H_
#define REC4AD_SIM_LOG_IO_H_

#include <filesystem>
#include <map>

#include "rec4ad/sim/catalog.h"
#include "rec4ad/sim/sessions.h"

namespace rec4ad::sim {

// Impression log: one record per line, tab-separated, no header:
//   session_id  source  user_id  subject_id  time_bucket  device  label
// Candidate sets go to a sidecar `<path>.candidates`, one session per line:
//   session_id  <comma-separated subject ids>
void WriteImpressionLog(const std::filesystem::path& path, const ImpressionLog& log);
ImpressionLog ReadImpressionLog(const std::filesystem::path& path);
std::filesystem::path CandidatesPath(const std::filesystem::path& log_path);

// Catalog as a single JSON document (schema "rec4ad.catalog/1").
void WriteCatalog(const std::filesystem::path& path, const Catalog& catalog);
Catalog ReadCatalog(const std::filesystem::path& path);

// Per-ad propensities: "ad_id<TAB>propensity" lines, 17 significant digits.
void WritePropensities(const std::filesystem::path& path, const std::map<int, double>& values);
std::map<int, double> ReadPropensities(const std::filesystem::path& path);

}  // namespace rec4ad::sim

#endif  // REC4AD_SIM_LOG_IO_H_
