#include "rec4ad/sim/catalog.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "rec4ad/common/error.h"
#include "rec4ad/common/random.h"

namespace rec4ad::sim {
namespace {

void RequirePositive(int value, const char* name) {
  if (value <= 0) throw ConfigError(std::string("catalog ") + name + " must be positive");
}

std::vector<double> NormalVector(Rng& rng, int dim, double sigma) {
  std::normal_distribution<double> normal(0.0, sigma);
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (double& x : v) x = normal(rng);
  return v;
}

double Dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

int Bucketize(double value, double lo, double hi, int buckets) {
  const double t = (value - lo) / (hi - lo);
  return std::clamp(static_cast<int>(std::floor(t * buckets)), 0, buckets - 1);
}

}  // namespace

void ValidateConfig(const CatalogConfig& c) {
  RequirePositive(c.num_users, "num_users");
  RequirePositive(c.num_items, "num_items");
  RequirePositive(c.num_categories, "num_categories");
  RequirePositive(c.num_brands, "num_brands");
  RequirePositive(c.num_campaigns, "num_campaigns");
  RequirePositive(c.max_ads_per_item, "max_ads_per_item");
  RequirePositive(c.num_age_buckets, "num_age_buckets");
  RequirePositive(c.num_gender_buckets, "num_gender_buckets");
  RequirePositive(c.num_time_buckets, "num_time_buckets");
  RequirePositive(c.num_devices, "num_devices");
  if (c.latent_dim < 2) throw ConfigError("catalog latent_dim must be >= 2");
  if (c.max_behavior_len < 0) throw ConfigError("catalog max_behavior_len must be >= 0");
  if (!(c.ad_coverage > 0.0 && c.ad_coverage < 1.0)) {
    throw ConfigError("catalog ad_coverage must lie strictly between 0 and 1");
  }
  if (c.num_items < 2) throw ConfigError("catalog needs at least 2 items");
  if (!(c.bid_log_sigma >= 0.0) || !(c.popularity_log_sigma >= 0.0) ||
      !(c.context_sigma >= 0.0)) {
    throw ConfigError("catalog sigmas must be >= 0");
  }
}

double TrueCtr(std::span<const double> latent_pref, std::span<const double> latent_attr,
               double popularity_bias, double context_offset) {
  if (latent_pref.size() != latent_attr.size()) {
    throw ShapeError("true_ctr: latent dimension mismatch (" +
                     std::to_string(latent_pref.size()) + " vs " +
                     std::to_string(latent_attr.size()) + ")");
  }
  const double logit = Dot(latent_pref, latent_attr) + popularity_bias + context_offset;
  return 1.0 / (1.0 + std::exp(-logit));
}

double PopularityBias(const Catalog& catalog, const ItemProfile& item) {
  return catalog.config.base_logit + catalog.config.popularity_weight * std::log(item.popularity);
}

double ContextOffset(const Catalog& catalog, Context context) {
  return catalog.time_offsets.at(static_cast<std::size_t>(context.time_bucket)) +
         catalog.device_offsets.at(static_cast<std::size_t>(context.device));
}

double TrueCtr(const Catalog& catalog, const UserProfile& user, const ItemProfile& item,
               Context context) {
  return TrueCtr(user.latent_pref, item.latent_attr, PopularityBias(catalog, item),
                 ContextOffset(catalog, context));
}

Catalog GenerateCatalog(const CatalogConfig& config, std::uint64_t seed) {
  ValidateConfig(config);
  Catalog catalog;
  catalog.config = config;
  const int dim = config.latent_dim;

  Rng world_rng(DeriveSeed(seed, 1));
  std::vector<std::vector<double>> centres;
  for (int k = 0; k < config.num_categories; ++k) {
    centres.push_back(NormalVector(world_rng, dim, config.category_spread));
  }
  std::normal_distribution<double> ctx(0.0, config.context_sigma);
  for (int t = 0; t < config.num_time_buckets; ++t) catalog.time_offsets.push_back(ctx(world_rng));
  for (int d = 0; d < config.num_devices; ++d) catalog.device_offsets.push_back(ctx(world_rng));

  // Items: latent attribute near the category centre, heavy-tailed popularity.
  Rng item_rng(DeriveSeed(seed, 2));
  std::uniform_int_distribution<int> pick_category(0, config.num_categories - 1);
  std::uniform_int_distribution<int> pick_brand(0, config.num_brands - 1);
  std::lognormal_distribution<double> popularity(0.0, config.popularity_log_sigma);
  for (int i = 0; i < config.num_items; ++i) {
    ItemProfile item;
    item.item_id = i;
    item.category_id = pick_category(item_rng);
    item.brand_id = pick_brand(item_rng);
    item.latent_attr = NormalVector(item_rng, dim, config.item_noise);
    for (int k = 0; k < dim; ++k) item.latent_attr[k] += centres[item.category_id][k];
    item.popularity = popularity(item_rng);
    catalog.items.push_back(std::move(item));
  }

  // Users: preference anchored on two favourite categories; profile buckets
  // are noisy functions of the preference so they carry signal.
  Rng user_rng(DeriveSeed(seed, 3));
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> length(0, config.max_behavior_len);
  std::vector<double> affinity(static_cast<std::size_t>(config.num_items));
  for (int u = 0; u < config.num_users; ++u) {
    UserProfile user;
    user.user_id = u;
    user.latent_pref = NormalVector(user_rng, dim, config.user_noise);
    const int fav1 = pick_category(user_rng);
    const int fav2 = pick_category(user_rng);
    for (int k = 0; k < dim; ++k) {
      user.latent_pref[k] += config.user_focus * (0.7 * centres[fav1][k] + 0.3 * centres[fav2][k]);
    }
    const double spread = std::max(config.category_spread, 1e-9);
    user.age_bucket = Bucketize(user.latent_pref[0] + 0.5 * spread * unit(user_rng),
                                -2.0 * spread, 2.0 * spread, config.num_age_buckets);
    user.gender = Bucketize(user.latent_pref[1] + 0.5 * spread * unit(user_rng), -spread,
                            spread, config.num_gender_buckets);
    const int len = length(user_rng);
    if (len > 0) {
      for (int i = 0; i < config.num_items; ++i) {
        affinity[i] = std::exp(config.behavior_temperature *
                               Dot(user.latent_pref, catalog.items[i].latent_attr));
      }
      std::discrete_distribution<int> pick_item(affinity.begin(), affinity.end());
      for (int k = 0; k < len; ++k) {
        const int item = pick_item(user_rng);
        user.behavior_seq.push_back({item, catalog.items[item].category_id});
      }
    }
    catalog.users.push_back(std::move(user));
  }

  // Ads: a random subset of items, 1..max ads each; creation steps are a
  // global random order, increasing in ad_id within one item.
  Rng ad_rng(DeriveSeed(seed, 4));
  const int covered = std::clamp(
      static_cast<int>(std::lround(config.ad_coverage * config.num_items)), 1,
      config.num_items - 1);
  std::vector<int> item_order(static_cast<std::size_t>(config.num_items));
  std::iota(item_order.begin(), item_order.end(), 0);
  std::shuffle(item_order.begin(), item_order.end(), ad_rng);
  std::vector<int> ad_items(item_order.begin(), item_order.begin() + covered);
  std::sort(ad_items.begin(), ad_items.end());
  std::uniform_int_distribution<int> ads_per_item(1, config.max_ads_per_item);
  std::uniform_int_distribution<int> pick_campaign(0, config.num_campaigns - 1);
  std::lognormal_distribution<double> bid(0.0, config.bid_log_sigma);
  std::vector<int> counts;
  for (std::size_t k = 0; k < ad_items.size(); ++k) counts.push_back(ads_per_item(ad_rng));
  const int total_ads = std::accumulate(counts.begin(), counts.end(), 0);
  std::vector<int> steps(static_cast<std::size_t>(total_ads));
  std::iota(steps.begin(), steps.end(), 0);
  std::shuffle(steps.begin(), steps.end(), ad_rng);
  int next_ad = 0;
  for (std::size_t k = 0; k < ad_items.size(); ++k) {
    std::vector<int> own(steps.begin() + next_ad, steps.begin() + next_ad + counts[k]);
    std::sort(own.begin(), own.end());
    for (int j = 0; j < counts[k]; ++j) {
      AdProfile ad;
      ad.ad_id = next_ad + j;
      ad.item_id = ad_items[k];
      ad.campaign_feature = pick_campaign(ad_rng);
      ad.bid = bid(ad_rng);
      ad.creation_step = own[j];
      catalog.ads.push_back(ad);
    }
    next_ad += counts[k];
  }
  ValidateCatalog(catalog);
  return catalog;
}

void ValidateCatalog(const Catalog& catalog) {
  const CatalogConfig& c = catalog.config;
  ValidateConfig(c);
  const auto fail = [](const std::string& what) { throw ConfigError("catalog invalid: " + what); };
  if (catalog.users.empty() || catalog.items.empty()) fail("no users or items");
  if (catalog.time_offsets.size() != static_cast<std::size_t>(c.num_time_buckets) ||
      catalog.device_offsets.size() != static_cast<std::size_t>(c.num_devices)) {
    fail("context offset tables do not match the config");
  }
  std::vector<char> has_ad(catalog.items.size(), 0);
  std::vector<int> last_step(catalog.items.size(), 0);
  for (std::size_t i = 0; i < catalog.items.size(); ++i) {
    const ItemProfile& item = catalog.items[i];
    if (item.item_id != static_cast<int>(i)) fail("item ids not dense");
    if (item.category_id < 0 || item.category_id >= c.num_categories) fail("category id range");
    if (item.brand_id < 0 || item.brand_id >= c.num_brands) fail("brand id range");
    if (item.latent_attr.size() != static_cast<std::size_t>(c.latent_dim)) fail("item latent dim");
    if (!(item.popularity > 0.0)) fail("item popularity must be positive");
  }
  for (std::size_t u = 0; u < catalog.users.size(); ++u) {
    const UserProfile& user = catalog.users[u];
    if (user.user_id != static_cast<int>(u)) fail("user ids not dense");
    if (user.latent_pref.size() != static_cast<std::size_t>(c.latent_dim)) fail("user latent dim");
    if (user.age_bucket < 0 || user.age_bucket >= c.num_age_buckets) fail("age bucket range");
    if (user.gender < 0 || user.gender >= c.num_gender_buckets) fail("gender bucket range");
    if (user.behavior_seq.size() > static_cast<std::size_t>(c.max_behavior_len)) {
      fail("behavior sequence too long");
    }
    for (const Behavior& b : user.behavior_seq) {
      if (b.item_id < 0 || b.item_id >= static_cast<int>(catalog.items.size()) ||
          b.category_id != catalog.items[b.item_id].category_id) {
        fail("behavior references an unknown item or wrong category");
      }
    }
  }
  for (std::size_t a = 0; a < catalog.ads.size(); ++a) {
    const AdProfile& ad = catalog.ads[a];
    if (ad.ad_id != static_cast<int>(a)) fail("ad ids not dense");
    if (ad.item_id < 0 || ad.item_id >= static_cast<int>(catalog.items.size())) {
      fail("ad references an unknown item");
    }
    if (ad.campaign_feature < 0 || ad.campaign_feature >= c.num_campaigns) fail("campaign range");
    if (!(ad.bid > 0.0)) fail("bid must be positive");
    if (has_ad[ad.item_id] && last_step[ad.item_id] >= ad.creation_step) {
      fail("creation_step must increase with ad_id within an item");
    }
    has_ad[ad.item_id] = 1;
    last_step[ad.item_id] = ad.creation_step;
  }
  if (std::find(has_ad.begin(), has_ad.end(), 0) == has_ad.end()) {
    fail("every item has an ad; at least one must have none");
  }
}

}  // namespace rec4ad::sim
