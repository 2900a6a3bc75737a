#ifndef REC4AD_BASELINES_VARIANTS_H_
#define REC4AD_BASELINES_VARIANTS_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rec4ad/augment/augmentation.h"
#include "rec4ad/model/model.h"
#include "rec4ad/model/trainer.h"
#include "rec4ad/sim/sessions.h"

namespace rec4ad::baselines {

enum class VariantKind { kBase, kDag, kIps, kIpsC, kRec4Ad };
enum class PropensitySource { kSimulatorTruth, kIrEstimate };

std::string_view KindName(VariantKind kind);
VariantKind ParseKind(std::string_view name);
std::string_view PropensitySourceName(PropensitySource source);
PropensitySource ParsePropensitySource(std::string_view name);

inline constexpr double kDefaultCap = 10.0;

struct VariantSpec {
  VariantKind kind = VariantKind::kBase;
  PropensitySource propensity_source = PropensitySource::kSimulatorTruth;
  // Present iff kind == kIpsC.
  std::optional<double> cap;

  // Throws ConfigError when the cap rule is broken or the cap is not > 0.
  void Validate() const;
  bool uses_propensity() const { return kind == VariantKind::kIps || kind == VariantKind::kIpsC; }
  // True for variants trained on the ad log alone.
  bool ads_only() const { return kind != VariantKind::kDag && kind != VariantKind::kRec4Ad; }
  friend bool operator==(const VariantSpec&, const VariantSpec&) = default;
};

VariantSpec MakeSpec(VariantKind kind);

// What the simulator needs to replay its own ranking policy.
struct SimulatorReplay {
  const sim::Catalog* catalog = nullptr;
  sim::Policy policy = sim::Policy::kEcpm;
  sim::SessionConfig sessions;
  sim::ScoringFn proxy;
  int replay_sessions = 50000;
  std::uint64_t seed = 0;
};

// Per-ad display probability for every ad that was a candidate in `ad_log`.
// kIrEstimate: (displays + 0.5) / (candidacies + 1). kSimulatorTruth: the
// simulator's bookkeeping via `replay` (ConfigError when it is missing).
std::map<int, double> PropensityEstimate(const sim::ImpressionLog& ad_log,
                                         PropensitySource source,
                                         const SimulatorReplay* replay = nullptr);

// 1 / propensity, capped when `cap` is given. Throws ConfigError for a
// propensity outside (0, 1] or a non-positive cap.
double IpsWeight(double propensity, std::optional<double> cap = std::nullopt);

// One weight per sample from its ad's propensity. Throws ConfigError when
// an ad has no propensity.
std::vector<double> SampleWeights(std::span<const augment::UnifiedSample> samples,
                                  const std::map<int, double>& propensity,
                                  std::optional<double> cap);

// The network configuration of a variant. BASE, DAG, IPS and IPS-C have every
// switch off and a single shared head; REC4AD keeps the switches of `base`.
model::ModelConfig VariantModelConfig(const VariantSpec& spec, model::ModelConfig base);

struct VariantRun {
  model::Rec4AdModel model;
  model::TrainResult result;
  model::ModelConfig config;
};

// Trains one variant. Ads-only variants reject data containing rec samples;
// IPS variants need `propensity`. Initialisation and optimiser settings are
// shared by all variants and fixed by `seed`.
VariantRun TrainVariant(const VariantSpec& spec, std::span<const augment::UnifiedSample> data,
                        const std::map<int, double>* propensity,
                        const model::ModelConfig& base_config,
                        const model::TrainConfig& train_config, std::uint64_t seed);

}  // namespace rec4ad::baselines

#endif  // REC4AD_BASELINES_VARIANTS_H_
