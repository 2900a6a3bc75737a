#ifndef REC4AD_SIM_CATALOG_H_
#define REC4AD_SIM_CATALOG_H_

#include <cstdint>
#include <span>
#include <vector>

namespace rec4ad::sim {

struct CatalogConfig {
  int num_users = 2000;
  int num_items = 3000;
  // Fraction of items that get at least one ad; must lie in (0, 1).
  double ad_coverage = 0.4;
  int max_ads_per_item = 3;
  int num_categories = 30;
  int num_brands = 200;
  int num_campaigns = 50;
  int latent_dim = 8;
  int max_behavior_len = 10;
  int num_age_buckets = 6;
  int num_gender_buckets = 2;
  int num_time_buckets = 4;
  int num_devices = 3;

  // Ground-truth click model.
  double base_logit = -2.0;
  double category_spread = 0.55;  // std of category centres per latent axis
  double item_noise = 0.35;       // std of an item's offset from its centre
  double user_focus = 1.0;        // weight of a user's favourite categories
  double user_noise = 0.25;
  double popularity_log_sigma = 1.0;
  double popularity_weight = 0.5;
  double context_sigma = 0.2;

  // Heavy-tailed bids: log-normal with this sigma.
  double bid_log_sigma = 1.0;
  // Sharpness of behaviour-sequence sampling towards preferred items.
  double behavior_temperature = 1.5;

  friend bool operator==(const CatalogConfig&, const CatalogConfig&) = default;
};

struct Context {
  int time_bucket = 0;
  int device = 0;
  friend bool operator==(const Context&, const Context&) = default;
};

struct Behavior {
  int item_id = 0;
  int category_id = 0;
  friend bool operator==(const Behavior&, const Behavior&) = default;
};

struct UserProfile {
  int user_id = 0;
  // Ground truth only; never exposed to models.
  std::vector<double> latent_pref;
  int age_bucket = 0;
  int gender = 0;
  std::vector<Behavior> behavior_seq;
  friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

struct ItemProfile {
  int item_id = 0;
  int category_id = 0;
  int brand_id = 0;
  std::vector<double> latent_attr;
  double popularity = 1.0;
  friend bool operator==(const ItemProfile&, const ItemProfile&) = default;
};

struct AdProfile {
  int ad_id = 0;
  int item_id = 0;
  int campaign_feature = 0;
  double bid = 1.0;
  int creation_step = 0;
  friend bool operator==(const AdProfile&, const AdProfile&) = default;
};

struct Catalog {
  CatalogConfig config;
  std::vector<UserProfile> users;
  std::vector<ItemProfile> items;
  std::vector<AdProfile> ads;
  // Ground-truth additive logit offsets per context value.
  std::vector<double> time_offsets;
  std::vector<double> device_offsets;

  int num_categories() const { return config.num_categories; }
  friend bool operator==(const Catalog&, const Catalog&) = default;
};

// Throws ConfigError for non-positive sizes, latent_dim < 2, or ad_coverage
// outside the open interval (0, 1).
void ValidateConfig(const CatalogConfig& config);

// Deterministic under `seed`; validates the config first.
Catalog GenerateCatalog(const CatalogConfig& config, std::uint64_t seed);

// Throws ConfigError describing the first violated invariant.
void ValidateCatalog(const Catalog& catalog);

// sigmoid(dot(pref, attr) + popularity_bias + context_offset).
// Throws ShapeError on a latent dimension mismatch.
double TrueCtr(std::span<const double> latent_pref, std::span<const double> latent_attr,
               double popularity_bias, double context_offset);

// Ground-truth click probability of showing `item` to `user` in `context`.
// An ad has exactly the click probability of its underlying item.
double TrueCtr(const Catalog& catalog, const UserProfile& user, const ItemProfile& item,
               Context context);

double PopularityBias(const Catalog& catalog, const ItemProfile& item);
double ContextOffset(const Catalog& catalog, Context context);

}  // namespace rec4ad::sim

#endif  // REC4AD_SIM_CATALOG_H_
