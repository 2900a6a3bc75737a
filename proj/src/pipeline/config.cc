#include "rec4ad/pipeline/config.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>

#include "rec4ad/common/error.h"
#include "rec4ad/common/text.h"

namespace rec4ad::pipeline {

using nlohmann::json;

namespace {

// Reads known fields of one JSON object and records every problem instead
// of stopping at the first.
class Fields {
 public:
  Fields(const json& j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) errors_.push_back(Where() + "expected an object");
  }

  ~Fields() {
    if (!j_.is_object()) return;
    for (const auto& [key, value] : j_.items()) {
      if (!known_.contains(key)) errors_.push_back(Where() + "unknown field '" + key + "'");
    }
  }

  template <class T>
  void Get(const std::string& key, T& out) {
    known_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) return Bad(key, "a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) return Bad(key, "an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned()) return Bad(key, "a non-negative integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return Bad(key, "a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) return Bad(key, "a string");
    }
    try {
      out = v.get<T>();
    } catch (const json::exception&) {
      Bad(key, "a value of the right type");
    }
  }

  // Enumerations stored as names.
  template <class E>
  void GetEnum(const std::string& key, E& out, std::function<E(std::string_view)> parse) {
    std::string name;
    bool present = j_.is_object() && j_.contains(key);
    Get(key, name);
    if (!present || !j_.at(key).is_string()) return;
    try {
      out = parse(name);
    } catch (const ConfigError& e) {
      errors_.push_back(Where() + key + ": " + e.what());
    }
  }

  void Sub(const std::string& key, const std::function<void(Fields&)>& read) {
    known_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    Fields sub(j_.at(key), path_ + key + ".", errors_);
    read(sub);
  }

 private:
  std::string Where() const { return path_.empty() ? std::string() : path_ + " "; }
  void Bad(const std::string& key, const char* what) {
    errors_.push_back(path_ + key + ": expected " + what);
  }

  const json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> known_;
};

sim::Policy ParsePolicyName(std::string_view s) { return sim::ParsePolicy(s); }

eval::GroupScheme ParseScheme(std::string_view s) {
  if (s == "quartiles") return eval::GroupScheme::kQuartiles;
  if (s == "n_equal_groups") return eval::GroupScheme::kEqualGroups;
  throw ConfigError("unknown scheme '" + std::string(s) + "'");
}

std::string SchemeName(eval::GroupScheme s) {
  return s == eval::GroupScheme::kQuartiles ? "quartiles" : "n_equal_groups";
}

json CatalogJson(const sim::CatalogConfig& c) {
  return {{"num_users", c.num_users},
          {"num_items", c.num_items},
          {"ad_coverage", c.ad_coverage},
          {"max_ads_per_item", c.max_ads_per_item},
          {"num_categories", c.num_categories},
          {"num_brands", c.num_brands},
          {"num_campaigns", c.num_campaigns},
          {"latent_dim", c.latent_dim},
          {"max_behavior_len", c.max_behavior_len},
          {"num_age_buckets", c.num_age_buckets},
          {"num_gender_buckets", c.num_gender_buckets},
          {"num_time_buckets", c.num_time_buckets},
          {"num_devices", c.num_devices},
          {"base_logit", c.base_logit},
          {"category_spread", c.category_spread},
          {"item_noise", c.item_noise},
          {"user_focus", c.user_focus},
          {"user_noise", c.user_noise},
          {"popularity_log_sigma", c.popularity_log_sigma},
          {"popularity_weight", c.popularity_weight},
          {"context_sigma", c.context_sigma},
          {"bid_log_sigma", c.bid_log_sigma},
          {"behavior_temperature", c.behavior_temperature}};
}

void ReadCatalog(Fields& f, sim::CatalogConfig& c) {
  f.Get("num_users", c.num_users);
  f.Get("num_items", c.num_items);
  f.Get("ad_coverage", c.ad_coverage);
  f.Get("max_ads_per_item", c.max_ads_per_item);
  f.Get("num_categories", c.num_categories);
  f.Get("num_brands", c.num_brands);
  f.Get("num_campaigns", c.num_campaigns);
  f.Get("latent_dim", c.latent_dim);
  f.Get("max_behavior_len", c.max_behavior_len);
  f.Get("num_age_buckets", c.num_age_buckets);
  f.Get("num_gender_buckets", c.num_gender_buckets);
  f.Get("num_time_buckets", c.num_time_buckets);
  f.Get("num_devices", c.num_devices);
  f.Get("base_logit", c.base_logit);
  f.Get("category_spread", c.category_spread);
  f.Get("item_noise", c.item_noise);
  f.Get("user_focus", c.user_focus);
  f.Get("user_noise", c.user_noise);
  f.Get("popularity_log_sigma", c.popularity_log_sigma);
  f.Get("popularity_weight", c.popularity_weight);
  f.Get("context_sigma", c.context_sigma);
  f.Get("bid_log_sigma", c.bid_log_sigma);
  f.Get("behavior_temperature", c.behavior_temperature);
}

json LogJson(const LogSpec& s) {
  return {{"policy", sim::PolicyName(s.policy)},
          {"sessions", s.sessions.num_sessions},
          {"candidates_per_session", s.sessions.candidates_per_session},
          {"slots_per_session", s.sessions.slots_per_session}};
}

void ReadLog(Fields& f, LogSpec& s) {
  f.GetEnum<sim::Policy>("policy", s.policy, ParsePolicyName);
  f.Get("sessions", s.sessions.num_sessions);
  f.Get("candidates_per_session", s.sessions.candidates_per_session);
  f.Get("slots_per_session", s.sessions.slots_per_session);
}

void Check(std::vector<std::string>& errors, bool ok, const std::string& message) {
  if (!ok) errors.push_back(message);
}

std::string Join(const std::vector<std::string>& errors) {
  std::string out = "invalid experiment config:";
  for (const std::string& e : errors) out += "\n  - " + e;
  return out;
}

std::vector<std::string> Problems(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  try {
    sim::ValidateConfig(c.catalog);
  } catch (const ConfigError& e) {
    errors.push_back(std::string("catalog: ") + e.what());
  }
  const auto check_log = [&](const LogSpec& s, const char* name) {
    const std::string p = std::string("logs.") + name + ".";
    Check(errors, s.sessions.num_sessions > 0, p + "sessions must be positive");
    Check(errors, s.sessions.slots_per_session > 0, p + "slots_per_session must be positive");
    Check(errors, s.sessions.candidates_per_session >= s.sessions.slots_per_session,
          p + "candidates_per_session must be >= slots_per_session");
  };
  check_log(c.ad_log, "ad");
  check_log(c.rec_log, "rec");
  check_log(c.test_log, "test");
  Check(errors, c.test_log.policy == sim::Policy::kUniform,
        "logs.test.policy must be uniform (the unbiased evaluation data)");
  Check(errors, c.proxy_noise_sigma >= 0.0, "proxy_noise_sigma must be >= 0");
  Check(errors, c.augmentation_k >= 1, "augmentation.k must be >= 1");
  Check(errors, c.propensity_replay_sessions > 0, "ips.replay_sessions must be positive");
  model::ModelConfig m = c.model;
  m.vocab.users = m.vocab.ads = m.vocab.items = m.vocab.categories = m.vocab.brands = 1;
  m.vocab.campaigns = m.vocab.age_buckets = m.vocab.gender_buckets = 1;
  m.vocab.time_buckets = m.vocab.devices = m.vocab.max_behavior_len = 1;
  try {
    m.Validate();
  } catch (const ConfigError& e) {
    errors.push_back(std::string("model: ") + e.what());
  }
  Check(errors, c.epochs >= 1, "train.epochs must be >= 1");
  Check(errors, c.batch_size >= 2, "train.batch_size must be >= 2");
  Check(errors, c.learning_rate > 0.0, "train.learning_rate must be positive");
  Check(errors, c.diagnostics_per_epoch >= 1, "train.diagnostics_per_epoch must be >= 1");
  Check(errors, c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0,
        "train.holdout_fraction must lie in (0, 1)");
  Check(errors, c.reference_batch_size >= 1, "train.reference_batch_size must be >= 1");
  Check(errors, !c.variants.empty(), "variants must not be empty");
  for (const std::string& v : c.variants) {
    try {
      ResolveVariant(v, c);
    } catch (const ConfigError& e) {
      errors.push_back(std::string("variants: ") + e.what());
    }
  }
  Check(errors, c.ips_cap > 0.0 && std::isfinite(c.ips_cap), "ips.cap must be positive");
  Check(errors, c.n_groups >= 1, "evaluation.n_groups must be >= 1");
  Check(errors, c.group_scheme != eval::GroupScheme::kQuartiles || c.n_groups == 4,
        "evaluation.n_groups must be 4 with the quartiles scheme");
  Check(errors, !c.seeds.empty(), "seeds must not be empty");
  std::set<std::uint64_t> unique(c.seeds.begin(), c.seeds.end());
  Check(errors, unique.size() == c.seeds.size(), "seeds must be distinct");
  return errors;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  ad_log.policy = sim::Policy::kEcpm;
  ad_log.sessions.num_sessions = 10000;
  rec_log.policy = sim::Policy::kPctr;
  rec_log.sessions.source = sim::Source::kRec;
  rec_log.sessions.num_sessions = 8000;
  test_log.policy = sim::Policy::kUniform;
  test_log.sessions.num_sessions = 10000;
}

json ExperimentConfig::ToJson() const {
  json seeds_json = json::array();
  for (std::uint64_t s : seeds) seeds_json.push_back(s);
  return {
      {"catalog", CatalogJson(catalog)},
      {"proxy_noise_sigma", proxy_noise_sigma},
      {"logs", {{"ad", LogJson(ad_log)}, {"rec", LogJson(rec_log)}, {"test", LogJson(test_log)}}},
      {"augmentation", {{"k", augmentation_k}}},
      {"model",
       {{"embedding_dim", model.embedding_dim},
        {"attention_width", model.attention_width},
        {"backbone_widths", model.backbone_widths},
        {"projection_dim", model.projection_dim},
        {"head_widths", model.head_widths},
        {"discriminator_width", model.discriminator_width},
        {"alpha", model.alpha},
        {"lambda1", model.lambda1},
        {"lambda2", model.lambda2},
        {"bn_momentum", model.bn_momentum},
        {"bn_eps", model.bn_eps},
        {"pearson_eps", model.pearson_eps}}},
      {"train",
       {{"epochs", epochs},
        {"batch_size", batch_size},
        {"learning_rate", learning_rate},
        {"diagnostics_per_epoch", diagnostics_per_epoch},
        {"holdout_fraction", holdout_fraction},
        {"reference_batch_size", reference_batch_size},
        {"scale_lambda2_with_batch", scale_lambda2_with_batch}}},
      {"variants", variants},
      {"ips",
       {{"propensity_source", baselines::PropensitySourceName(propensity_source)},
        {"cap", ips_cap},
        {"replay_sessions", propensity_replay_sessions}}},
      {"evaluation", {{"scheme", SchemeName(group_scheme)}, {"n_groups", n_groups}}},
      {"seeds", seeds_json},
  };
}

ExperimentConfig ExperimentConfig::FromJson(const json& j) {
  ExperimentConfig c;
  std::vector<std::string> errors;
  {
    Fields f(j, "", errors);
    f.Sub("catalog", [&](Fields& s) { ReadCatalog(s, c.catalog); });
    f.Get("proxy_noise_sigma", c.proxy_noise_sigma);
    f.Sub("logs", [&](Fields& s) {
      s.Sub("ad", [&](Fields& l) { ReadLog(l, c.ad_log); });
      s.Sub("rec", [&](Fields& l) { ReadLog(l, c.rec_log); });
      s.Sub("test", [&](Fields& l) { ReadLog(l, c.test_log); });
    });
    f.Sub("augmentation", [&](Fields& s) { s.Get("k", c.augmentation_k); });
    f.Sub("model", [&](Fields& s) {
      s.Get("embedding_dim", c.model.embedding_dim);
      s.Get("attention_width", c.model.attention_width);
      s.Get("backbone_widths", c.model.backbone_widths);
      s.Get("projection_dim", c.model.projection_dim);
      s.Get("head_widths", c.model.head_widths);
      s.Get("discriminator_width", c.model.discriminator_width);
      s.Get("alpha", c.model.alpha);
      s.Get("lambda1", c.model.lambda1);
      s.Get("lambda2", c.model.lambda2);
      s.Get("bn_momentum", c.model.bn_momentum);
      s.Get("bn_eps", c.model.bn_eps);
      s.Get("pearson_eps", c.model.pearson_eps);
    });
    f.Sub("train", [&](Fields& s) {
      s.Get("epochs", c.epochs);
      s.Get("batch_size", c.batch_size);
      s.Get("learning_rate", c.learning_rate);
      s.Get("diagnostics_per_epoch", c.diagnostics_per_epoch);
      s.Get("holdout_fraction", c.holdout_fraction);
      s.Get("reference_batch_size", c.reference_batch_size);
      s.Get("scale_lambda2_with_batch", c.scale_lambda2_with_batch);
    });
    f.Get("variants", c.variants);
    f.Sub("ips", [&](Fields& s) {
      s.GetEnum<baselines::PropensitySource>("propensity_source", c.propensity_source,
                                             baselines::ParsePropensitySource);
      s.Get("cap", c.ips_cap);
      s.Get("replay_sessions", c.propensity_replay_sessions);
    });
    f.Sub("evaluation", [&](Fields& s) {
      s.GetEnum<eval::GroupScheme>("scheme", c.group_scheme, ParseScheme);
      s.Get("n_groups", c.n_groups);
    });
    f.Get("seeds", c.seeds);
  }
  c.rec_log.sessions.source = sim::Source::kRec;
  c.ad_log.sessions.source = c.test_log.sessions.source = sim::Source::kAd;
  if (errors.empty()) errors = Problems(c);
  if (!errors.empty()) throw ConfigError(Join(errors));
  return c;
}

void ExperimentConfig::Validate() const {
  const std::vector<std::string> errors = Problems(*this);
  if (!errors.empty()) throw ConfigError(Join(errors));
}

double ExperimentConfig::effective_lambda2() const {
  if (!scale_lambda2_with_batch) return model.lambda2;
  return model.lambda2 * static_cast<double>(batch_size) /
         static_cast<double>(reference_batch_size);
}

model::TrainConfig ExperimentConfig::train_config() const {
  model::TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.adam.learning_rate = learning_rate;
  t.diagnostics_per_epoch = diagnostics_per_epoch;
  t.holdout_fraction = holdout_fraction;
  return t;
}

model::ModelConfig ExperimentConfig::model_config(const sim::Catalog& catalog) const {
  model::ModelConfig m = model;
  m.vocab = model::VocabFromCatalog(catalog);
  m.lambda2 = effective_lambda2();
  return m;
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in = OpenIn(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return ExperimentConfig::FromJson(j);
}

const std::vector<std::string>& AblationVariants() {
  static const std::vector<std::string> names = {"REC4AD", "REC4AD_NO_SABN", "REC4AD_NO_ALIGN",
                                                 "REC4AD_NO_DECOR"};
  return names;
}

NamedVariant ResolveVariant(const std::string& name, const ExperimentConfig& config) {
  NamedVariant v;
  v.name = name;
  if (name.starts_with("REC4AD_NO_")) {
    v.spec = baselines::MakeSpec(baselines::VariantKind::kRec4Ad);
    const std::string off = name.substr(10);
    if (off == "SABN") {
      v.use_sabn = false;
    } else if (off == "ALIGN") {
      v.use_alignment = false;
    } else if (off == "DECOR") {
      v.use_decorrelation = false;
    } else {
      throw ConfigError("unknown variant '" + name + "'");
    }
    return v;
  }
  v.spec = baselines::MakeSpec(baselines::ParseKind(name));
  v.spec.propensity_source = config.propensity_source;
  if (v.spec.cap) v.spec.cap = config.ips_cap;
  return v;
}

}  // namespace rec4ad::pipeline
