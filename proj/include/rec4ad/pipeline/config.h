#ifndef REC4AD_PIPELINE_CONFIG_H_
#define REC4AD_PIPELINE_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rec4ad/baselines/variants.h"
#include "rec4ad/eval/report.h"
#include "rec4ad/model/model.h"
#include "rec4ad/model/trainer.h"
#include "rec4ad/sim/catalog.h"
#include "rec4ad/sim/sessions.h"

namespace rec4ad::pipeline {

struct LogSpec {
  sim::Policy policy = sim::Policy::kEcpm;
  sim::SessionConfig sessions;
  friend bool operator==(const LogSpec&, const LogSpec&) = default;
};

// Every knob of an experiment. Defaults are the desk-scale settings.
struct ExperimentConfig {
  sim::CatalogConfig catalog;
  double proxy_noise_sigma = 0.3;
  LogSpec ad_log;
  LogSpec rec_log;
  LogSpec test_log;
  int augmentation_k = 3;
  int propensity_replay_sessions = 50000;

  // Hyperparameters of the network; the vocabulary comes from the catalog.
  model::ModelConfig model;
  int epochs = 3;
  int batch_size = 512;
  double learning_rate = 0.001;
  int diagnostics_per_epoch = 4;
  double holdout_fraction = 0.05;
  // lambda2 weighs a batch-size-free penalty against summed losses; with
  // scaling on, it is multiplied by batch_size / reference_batch_size.
  int reference_batch_size = 6000;
  bool scale_lambda2_with_batch = true;

  std::vector<std::string> variants = {"BASE", "DAG", "IPS", "IPS_C", "REC4AD"};
  baselines::PropensitySource propensity_source = baselines::PropensitySource::kSimulatorTruth;
  double ips_cap = baselines::kDefaultCap;
  eval::GroupScheme group_scheme = eval::GroupScheme::kQuartiles;
  int n_groups = 4;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  ExperimentConfig();

  // Canonical JSON holding every field.
  nlohmann::json ToJson() const;
  // Missing fields keep their defaults. Throws ConfigError listing every
  // unknown field, type mismatch and violated constraint.
  static ExperimentConfig FromJson(const nlohmann::json& j);
  void Validate() const;

  double effective_lambda2() const;
  model::TrainConfig train_config() const;
  // The model configuration before variant switches; vocabulary from `catalog`.
  model::ModelConfig model_config(const sim::Catalog& catalog) const;
};

// Throws StaleInputError when the file is missing and ConfigError when it
// does not parse or validate.
ExperimentConfig LoadConfig(const std::filesystem::path& path);

// Variant names: BASE, DAG, IPS, IPS_C, REC4AD and the ablations
// REC4AD_NO_SABN, REC4AD_NO_ALIGN, REC4AD_NO_DECOR.
struct NamedVariant {
  std::string name;
  baselines::VariantSpec spec;
  // Switches applied on top of the base model configuration.
  bool use_sabn = true;
  bool use_alignment = true;
  bool use_decorrelation = true;
};

// Throws ConfigError for an unknown name.
NamedVariant ResolveVariant(const std::string& name, const ExperimentConfig& config);
const std::vector<std::string>& AblationVariants();

}  // namespace rec4ad::pipeline

#endif  // REC4AD_PIPELINE_CONFIG_H_
