#ifndef REC4AD_PIPELINE_STAGES_H_
#define REC4AD_PIPELINE_STAGES_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rec4ad/eval/report.h"
#include "rec4ad/pipeline/config.h"

namespace rec4ad::pipeline {

struct RunContext {
  ExperimentConfig config;
  // Must exist; every seed gets its own subdirectory.
  std::filesystem::path out_dir;
  // Variants trained or evaluated concurrently.
  int threads = 1;
  // Progress lines; null for silence.
  std::ostream* log = nullptr;
};

std::filesystem::path SeedDir(const RunContext& ctx, std::uint64_t seed);

// Catalog plus the ad (ECPM), rec (PCTR) and uniform test logs.
void Generate(const RunContext& ctx, std::uint64_t seed);
// Training sets (merged and ads-only), the test set, IR and propensities.
void Augment(const RunContext& ctx, std::uint64_t seed);
// One checkpoint, curve and training summary per variant.
void Train(const RunContext& ctx, std::uint64_t seed, const std::vector<std::string>& variants);
// One metrics report per trained variant.
void Evaluate(const RunContext& ctx, std::uint64_t seed,
              const std::vector<std::string>& variants);
// Trains and evaluates the full model and its three ablations on one dataset.
void Ablate(const RunContext& ctx, std::uint64_t seed);
// Collects every evaluated report of the configured seeds (restricted to
// `variants` when non-empty) and writes the comparison.
eval::Comparison Report(const RunContext& ctx, const std::vector<std::string>& variants = {});

std::filesystem::path ReportPath(const RunContext& ctx, std::uint64_t seed,
                                 const std::string& variant);

}  // namespace rec4ad::pipeline

#endif  // REC4AD_PIPELINE_STAGES_H_
