#include "rec4ad/augment/augmentation.h"

#include <algorithm>
#include <random>
#include <string>

#include "rec4ad/common/error.h"
#include "rec4ad/common/random.h"
#include "rec4ad/common/text.h"

namespace rec4ad::augment {

const std::vector<int>& ItemAdsIndex::ads_of(int item_id) const {
  const auto it = entries.find(item_id);
  if (it == entries.end()) {
    throw ConfigError("item " + std::to_string(item_id) + " is not in the item-ads index");
  }
  return it->second;
}

ItemAdsIndex BuildItemAdsIndex(const std::vector<sim::AdProfile>& ads) {
  std::map<int, std::vector<const sim::AdProfile*>> grouped;
  for (const sim::AdProfile& ad : ads) grouped[ad.item_id].push_back(&ad);
  ItemAdsIndex index;
  for (auto& [item, list] : grouped) {
    std::sort(list.begin(), list.end(), [](const sim::AdProfile* a, const sim::AdProfile* b) {
      if (a->creation_step != b->creation_step) return a->creation_step > b->creation_step;
      return a->ad_id < b->ad_id;
    });
    std::vector<int>& ids = index.entries[item];
    for (const sim::AdProfile* ad : list) ids.push_back(ad->ad_id);
  }
  return index;
}

UnifiedSample JoinSample(const sim::Catalog& catalog, int user_id, int ad_id,
                         sim::Context context, int label, Source source) {
  if (user_id < 0 || user_id >= static_cast<int>(catalog.users.size())) {
    throw ConfigError("dangling user_id " + std::to_string(user_id));
  }
  if (ad_id < 0 || ad_id >= static_cast<int>(catalog.ads.size())) {
    throw ConfigError("dangling ad_id " + std::to_string(ad_id));
  }
  const sim::UserProfile& user = catalog.users[static_cast<std::size_t>(user_id)];
  const sim::AdProfile& ad = catalog.ads[static_cast<std::size_t>(ad_id)];
  const sim::ItemProfile& item = catalog.items.at(static_cast<std::size_t>(ad.item_id));
  UnifiedSample s;
  s.user_id = user_id;
  s.age_bucket = user.age_bucket;
  s.gender = user.gender;
  s.behavior_seq = user.behavior_seq;
  s.ad_id = ad_id;
  s.item_id = ad.item_id;
  s.category_id = item.category_id;
  s.brand_id = item.brand_id;
  s.campaign_feature = ad.campaign_feature;
  s.context = context;
  s.label = label;
  s.source = source;
  return s;
}

std::vector<sim::ImpressionRecord> RetrieveRecSamples(const sim::ImpressionLog& rec_log,
                                                      const ItemAdsIndex& index) {
  std::vector<sim::ImpressionRecord> kept;
  for (const sim::ImpressionRecord& r : rec_log.records) {
    if (r.source != Source::kRec) {
      throw ConfigError("retrieve_rec_samples: ad record in a rec log (session " +
                        std::to_string(r.session_id) + ")");
    }
    if (index.contains(r.subject_id)) kept.push_back(r);
  }
  return kept;
}

std::vector<UnifiedSample> MapPseudoSamples(const std::vector<sim::ImpressionRecord>& filtered,
                                            const ItemAdsIndex& index, int k,
                                            std::uint64_t seed, const sim::Catalog& catalog) {
  if (k < 1) throw ConfigError("recent-K needs K >= 1");
  std::vector<UnifiedSample> out;
  out.reserve(filtered.size());
  for (std::size_t r = 0; r < filtered.size(); ++r) {
    const sim::ImpressionRecord& rec = filtered[r];
    const std::vector<int>& ads = index.ads_of(rec.subject_id);
    const int pool = std::min<int>(k, static_cast<int>(ads.size()));
    Rng rng(DeriveSeed(seed, 200, r));
    const int pick = std::uniform_int_distribution<int>(0, pool - 1)(rng);
    out.push_back(JoinSample(catalog, rec.user_id, ads[static_cast<std::size_t>(pick)],
                             rec.context, rec.label, Source::kRec));
  }
  return out;
}

std::vector<UnifiedSample> JoinAdLog(const sim::ImpressionLog& ad_log,
                                     const sim::Catalog& catalog) {
  std::vector<UnifiedSample> out;
  out.reserve(ad_log.records.size());
  for (const sim::ImpressionRecord& r : ad_log.records) {
    if (r.source != Source::kAd) throw ConfigError("expected an ad log, found a rec record");
    out.push_back(JoinSample(catalog, r.user_id, r.subject_id, r.context, r.label, Source::kAd));
  }
  return out;
}

std::vector<UnifiedSample> MergeTrainingSet(const sim::ImpressionLog& ad_log,
                                            const std::vector<UnifiedSample>& pseudo,
                                            const sim::Catalog& catalog, std::uint64_t seed) {
  std::vector<UnifiedSample> merged = JoinAdLog(ad_log, catalog);
  merged.insert(merged.end(), pseudo.begin(), pseudo.end());
  Rng rng(DeriveSeed(seed, 201));
  std::shuffle(merged.begin(), merged.end(), rng);
  return merged;
}

void WriteSamples(const std::filesystem::path& path, const std::vector<UnifiedSample>& samples) {
  std::ofstream out = OpenOut(path);
  for (const UnifiedSample& s : samples) {
    out << sim::SourceName(s.source) << '\t' << s.label << '\t' << s.user_id << '\t'
        << s.age_bucket << '\t' << s.gender << '\t' << s.ad_id << '\t' << s.item_id << '\t'
        << s.category_id << '\t' << s.brand_id << '\t' << s.campaign_feature << '\t'
        << s.context.time_bucket << '\t' << s.context.device << '\t';
    if (s.behavior_seq.empty()) out << '-';
    for (std::size_t k = 0; k < s.behavior_seq.size(); ++k) {
      if (k) out << ',';
      out << s.behavior_seq[k].item_id << ':' << s.behavior_seq[k].category_id;
    }
    out << '\n';
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

std::vector<UnifiedSample> ReadSamples(const std::filesystem::path& path) {
  std::ifstream in = OpenIn(path);
  std::vector<UnifiedSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = SplitTabs(line);
    if (f.size() != 13) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 13 fields");
    }
    const auto num = [&](std::size_t i) { return ParseNumber<int>(f[i], path, line_no); };
    UnifiedSample s;
    try {
      s.source = sim::ParseSource(f[0]);
    } catch (const ConfigError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    s.label = num(1);
    if (s.label != 0 && s.label != 1) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": label not in {0,1}");
    }
    s.user_id = num(2);
    s.age_bucket = num(3);
    s.gender = num(4);
    s.ad_id = num(5);
    s.item_id = num(6);
    s.category_id = num(7);
    s.brand_id = num(8);
    s.campaign_feature = num(9);
    s.context = {num(10), num(11)};
    if (f[12] != "-") {
      for (std::string_view pair : Split(f[12], ',')) {
        const auto parts = Split(pair, ':');
        if (parts.size() != 2) {
          throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad behavior");
        }
        s.behavior_seq.push_back({ParseNumber<int>(parts[0], path, line_no),
                                  ParseNumber<int>(parts[1], path, line_no)});
      }
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace rec4ad::augment
