#include "rec4ad/baselines/variants.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "rec4ad/common/error.h"

namespace rec4ad::baselines {
namespace {

constexpr std::array<std::pair<VariantKind, std::string_view>, 5> kKindNames = {{
    {VariantKind::kBase, "BASE"},
    {VariantKind::kDag, "DAG"},
    {VariantKind::kIps, "IPS"},
    {VariantKind::kIpsC, "IPS_C"},
    {VariantKind::kRec4Ad, "REC4AD"},
}};

}  // namespace

std::string_view KindName(VariantKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  throw ConfigError("unknown variant kind");
}

VariantKind ParseKind(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

std::string_view PropensitySourceName(PropensitySource source) {
  return source == PropensitySource::kSimulatorTruth ? "simulator_truth" : "ir_estimate";
}

PropensitySource ParsePropensitySource(std::string_view name) {
  if (name == "simulator_truth") return PropensitySource::kSimulatorTruth;
  if (name == "ir_estimate") return PropensitySource::kIrEstimate;
  throw ConfigError("unknown propensity source '" + std::string(name) + "'");
}

void VariantSpec::Validate() const {
  if ((kind == VariantKind::kIpsC) != cap.has_value()) {
    throw ConfigError("variant: a cap is required for IPS_C and forbidden otherwise");
  }
  if (cap && !(*cap > 0.0 && std::isfinite(*cap))) {
    throw ConfigError("variant: cap must be a positive finite number");
  }
}

VariantSpec MakeSpec(VariantKind kind) {
  VariantSpec spec;
  spec.kind = kind;
  if (kind == VariantKind::kIpsC) spec.cap = kDefaultCap;
  return spec;
}

std::map<int, double> PropensityEstimate(const sim::ImpressionLog& ad_log,
                                         PropensitySource source,
                                         const SimulatorReplay* replay) {
  if (ad_log.source != sim::Source::kAd) throw ConfigError("propensity: expected an ad log");
  const std::map<int, sim::ImpressionCounts> counts = sim::CountImpressions(ad_log);
  std::map<int, double> out;
  if (source == PropensitySource::kIrEstimate) {
    for (const auto& [ad, c] : counts) {
      if (c.candidacies == 0) continue;
      out[ad] = (c.displays + 0.5) / (c.candidacies + 1.0);
    }
    return out;
  }
  if (replay == nullptr || replay->catalog == nullptr) {
    throw ConfigError("propensity: simulator_truth needs the simulator replay settings");
  }
  const std::map<int, double> truth =
      sim::DisplayPropensity(*replay->catalog, replay->policy, replay->sessions, replay->proxy,
                             replay->replay_sessions, replay->seed);
  for (const auto& [ad, c] : counts) {
    if (c.candidacies == 0) continue;
    const auto it = truth.find(ad);
    if (it == truth.end()) throw ConfigError("propensity: replay misses ad " + std::to_string(ad));
    out[ad] = it->second;
  }
  return out;
}

double IpsWeight(double propensity, std::optional<double> cap) {
  if (!(propensity > 0.0 && propensity <= 1.0)) {
    throw ConfigError("ips_weight: propensity must lie in (0, 1]");
  }
  if (cap && !(*cap > 0.0)) throw ConfigError("ips_weight: cap must be positive");
  const double w = 1.0 / propensity;
  return cap ? std::min(w, *cap) : w;
}

std::vector<double> SampleWeights(std::span<const augment::UnifiedSample> samples,
                                  const std::map<int, double>& propensity,
                                  std::optional<double> cap) {
  std::vector<double> w;
  w.reserve(samples.size());
  for (const augment::UnifiedSample& s : samples) {
    const auto it = propensity.find(s.ad_id);
    if (it == propensity.end()) {
      throw ConfigError("ips: no propensity for ad " + std::to_string(s.ad_id));
    }
    w.push_back(IpsWeight(it->second, cap));
  }
  return w;
}

model::ModelConfig VariantModelConfig(const VariantSpec& spec, model::ModelConfig base) {
  spec.Validate();
  if (spec.kind != VariantKind::kRec4Ad) {
    base.use_sabn = false;
    base.use_alignment = false;
    base.use_decorrelation = false;
    base.use_source_heads = false;
  }
  return base;
}

VariantRun TrainVariant(const VariantSpec& spec, std::span<const augment::UnifiedSample> data,
                        const std::map<int, double>* propensity,
                        const model::ModelConfig& base_config,
                        const model::TrainConfig& train_config, std::uint64_t seed) {
  spec.Validate();
  if (spec.ads_only()) {
    for (const augment::UnifiedSample& s : data) {
      if (s.source != sim::Source::kAd) {
        throw ConfigError("variant " + std::string(KindName(spec.kind)) +
                          " trains on ad samples only");
      }
    }
  }
  std::vector<double> weights;
  if (spec.uses_propensity()) {
    if (propensity == nullptr) throw ConfigError("variant IPS needs propensities");
    weights = SampleWeights(data, *propensity, spec.cap);
  }
  const model::ModelConfig config = VariantModelConfig(spec, base_config);
  VariantRun run{model::Rec4AdModel(config, seed), {}, config};
  run.result = model::Train(run.model, data, weights, train_config, seed);
  return run;
}

}  // namespace rec4ad::baselines
