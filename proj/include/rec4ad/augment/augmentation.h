#ifndef REC4AD_AUGMENT_AUGMENTATION_H_
#define REC4AD_AUGMENT_AUGMENTATION_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "rec4ad/sim/catalog.h"
#include "rec4ad/sim/sessions.h"

namespace rec4ad::augment {

using sim::Source;

// item_id -> ads of that item, most recent creation_step first (ties by
// ascending ad_id). Only items with at least one ad appear as keys.
struct ItemAdsIndex {
  std::map<int, std::vector<int>> entries;

  bool contains(int item_id) const { return entries.count(item_id) != 0; }
  const std::vector<int>& ads_of(int item_id) const;
  friend bool operator==(const ItemAdsIndex&, const ItemAdsIndex&) = default;
};

ItemAdsIndex BuildItemAdsIndex(const std::vector<sim::AdProfile>& ads);

// Feature-id encoded training record; the model's input format.
struct UnifiedSample {
  int user_id = 0;
  int age_bucket = 0;
  int gender = 0;
  std::vector<sim::Behavior> behavior_seq;
  int ad_id = 0;
  int item_id = 0;
  int category_id = 0;
  int brand_id = 0;
  int campaign_feature = 0;
  sim::Context context;
  int label = 0;
  Source source = Source::kAd;
  friend bool operator==(const UnifiedSample&, const UnifiedSample&) = default;
};

// Joins one (user, ad, context, label) tuple against the catalog. Throws
// ConfigError on a dangling user or ad id.
UnifiedSample JoinSample(const sim::Catalog& catalog, int user_id, int ad_id,
                         sim::Context context, int label, Source source);

// Rec records whose item has at least one ad, in log order. Throws
// ConfigError on an ad-source record.
std::vector<sim::ImpressionRecord> RetrieveRecSamples(const sim::ImpressionLog& rec_log,
                                                      const ItemAdsIndex& index);

// Maps each retained rec record to one ad drawn uniformly among the K most
// recent ads of its item. The draw for record r uses DeriveSeed(seed, r) so
// the result does not depend on evaluation order.
std::vector<UnifiedSample> MapPseudoSamples(const std::vector<sim::ImpressionRecord>& filtered,
                                            const ItemAdsIndex& index, int k,
                                            std::uint64_t seed, const sim::Catalog& catalog);

// Ad records joined into source=ad samples, followed by `pseudo`, then
// shuffled under `seed`.
std::vector<UnifiedSample> MergeTrainingSet(const sim::ImpressionLog& ad_log,
                                            const std::vector<UnifiedSample>& pseudo,
                                            const sim::Catalog& catalog, std::uint64_t seed);

// Ad log to source=ad samples in log order (used for the test set).
std::vector<UnifiedSample> JoinAdLog(const sim::ImpressionLog& ad_log, const sim::Catalog& catalog);

// Line-delimited, tab-separated, no header:
//   source label user_id age_bucket gender ad_id item_id category_id brand_id
//   campaign_feature time_bucket device behavior
// behavior is "item:category" pairs joined by ',' or "-" when empty.
void WriteSamples(const std::filesystem::path& path, const std::vector<UnifiedSample>& samples);
std::vector<UnifiedSample> ReadSamples(const std::filesystem::path& path);

}  // namespace rec4ad::augment

#endif  // REC4AD_AUGMENT_AUGMENTATION_H_
