#include "rec4ad/sim/log_io.h"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rec4ad/common/error.h"
#include "rec4ad/common/text.h"

namespace rec4ad::sim {
using nlohmann::json;

std::filesystem::path CandidatesPath(const std::filesystem::path& log_path) {
  return log_path.string() + ".candidates";
}

void WriteImpressionLog(const std::filesystem::path& path, const ImpressionLog& log) {
  {
    std::ofstream out = OpenOut(path);
    for (const ImpressionRecord& r : log.records) {
      out << r.session_id << '\t' << SourceName(r.source) << '\t' << r.user_id << '\t'
          << r.subject_id << '\t' << r.context.time_bucket << '\t' << r.context.device << '\t'
          << r.label << '\n';
    }
    if (!out) throw FormatError("failed writing " + path.string());
  }
  std::ofstream out = OpenOut(CandidatesPath(path));
  out << "#source\t" << SourceName(log.source) << '\n';
  for (std::size_t s = 0; s < log.candidate_sets.size(); ++s) {
    out << s << '\t';
    for (std::size_t k = 0; k < log.candidate_sets[s].size(); ++k) {
      if (k) out << ',';
      out << log.candidate_sets[s][k];
    }
    out << '\n';
  }
  if (!out) throw FormatError("failed writing candidates for " + path.string());
}

ImpressionLog ReadImpressionLog(const std::filesystem::path& path) {
  ImpressionLog log;
  const std::filesystem::path cpath = CandidatesPath(path);
  {
    std::ifstream in = OpenIn(cpath);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (lineno == 1) {
        const auto fields = SplitTabs(line);
        if (fields.size() != 2 || fields[0] != "#source") {
          throw FormatError(cpath.string() + ": missing #source header");
        }
        log.source = ParseSource(fields[1]);
        continue;
      }
      const auto fields = SplitTabs(line);
      if (fields.size() != 2) throw FormatError(cpath.string() + ": malformed line");
      const auto session = ParseNumber<std::size_t>(fields[0], cpath, lineno);
      if (session != log.candidate_sets.size()) {
        throw FormatError(cpath.string() + ": sessions must be dense and ordered");
      }
      std::vector<int> ids;
      std::string_view rest = fields[1];
      while (!rest.empty()) {
        const std::size_t comma = rest.find(',');
        ids.push_back(ParseNumber<int>(rest.substr(0, comma), cpath, lineno));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      log.candidate_sets.push_back(std::move(ids));
    }
  }
  std::ifstream in = OpenIn(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto f = SplitTabs(line);
    if (f.size() != 7) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 7 fields");
    }
    ImpressionRecord r;
    r.session_id = ParseNumber<std::int64_t>(f[0], path, lineno);
    r.source = ParseSource(f[1]);
    r.user_id = ParseNumber<int>(f[2], path, lineno);
    r.subject_id = ParseNumber<int>(f[3], path, lineno);
    r.context.time_bucket = ParseNumber<int>(f[4], path, lineno);
    r.context.device = ParseNumber<int>(f[5], path, lineno);
    r.label = ParseNumber<int>(f[6], path, lineno);
    if (r.label != 0 && r.label != 1) throw FormatError(path.string() + ": label must be 0/1");
    if (r.source != log.source) throw FormatError(path.string() + ": mixed sources in one log");
    if (r.session_id < 0 || static_cast<std::size_t>(r.session_id) >= log.candidate_sets.size()) {
      throw FormatError(path.string() + ": record references an unknown session");
    }
    log.records.push_back(r);
  }
  return log;
}

void WriteCatalog(const std::filesystem::path& path, const Catalog& catalog) {
  const CatalogConfig& c = catalog.config;
  json doc;
  doc["schema"] = "rec4ad.catalog/1";
  doc["config"] = {{"num_users", c.num_users},
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
  doc["time_offsets"] = catalog.time_offsets;
  doc["device_offsets"] = catalog.device_offsets;
  json users = json::array();
  for (const UserProfile& u : catalog.users) {
    json seq = json::array();
    for (const Behavior& b : u.behavior_seq) seq.push_back({b.item_id, b.category_id});
    users.push_back({{"user_id", u.user_id},
                     {"latent_pref", u.latent_pref},
                     {"age_bucket", u.age_bucket},
                     {"gender", u.gender},
                     {"behavior_seq", seq}});
  }
  doc["users"] = std::move(users);
  json items = json::array();
  for (const ItemProfile& i : catalog.items) {
    items.push_back({{"item_id", i.item_id},
                     {"category_id", i.category_id},
                     {"brand_id", i.brand_id},
                     {"latent_attr", i.latent_attr},
                     {"popularity", i.popularity}});
  }
  doc["items"] = std::move(items);
  json ads = json::array();
  for (const AdProfile& a : catalog.ads) {
    ads.push_back({{"ad_id", a.ad_id},
                   {"item_id", a.item_id},
                   {"campaign_feature", a.campaign_feature},
                   {"bid", a.bid},
                   {"creation_step", a.creation_step}});
  }
  doc["ads"] = std::move(ads);
  std::ofstream out = OpenOut(path);
  out << doc.dump() << '\n';
  if (!out) throw FormatError("failed writing " + path.string());
}

Catalog ReadCatalog(const std::filesystem::path& path) {
  std::ifstream in = OpenIn(path);
  json doc;
  try {
    doc = json::parse(in);
    if (doc.at("schema") != "rec4ad.catalog/1") throw FormatError("unsupported catalog schema");
    Catalog catalog;
    const json& c = doc.at("config");
    CatalogConfig& cfg = catalog.config;
    cfg.num_users = c.at("num_users");
    cfg.num_items = c.at("num_items");
    cfg.ad_coverage = c.at("ad_coverage");
    cfg.max_ads_per_item = c.at("max_ads_per_item");
    cfg.num_categories = c.at("num_categories");
    cfg.num_brands = c.at("num_brands");
    cfg.num_campaigns = c.at("num_campaigns");
    cfg.latent_dim = c.at("latent_dim");
    cfg.max_behavior_len = c.at("max_behavior_len");
    cfg.num_age_buckets = c.at("num_age_buckets");
    cfg.num_gender_buckets = c.at("num_gender_buckets");
    cfg.num_time_buckets = c.at("num_time_buckets");
    cfg.num_devices = c.at("num_devices");
    cfg.base_logit = c.at("base_logit");
    cfg.category_spread = c.at("category_spread");
    cfg.item_noise = c.at("item_noise");
    cfg.user_focus = c.at("user_focus");
    cfg.user_noise = c.at("user_noise");
    cfg.popularity_log_sigma = c.at("popularity_log_sigma");
    cfg.popularity_weight = c.at("popularity_weight");
    cfg.context_sigma = c.at("context_sigma");
    cfg.bid_log_sigma = c.at("bid_log_sigma");
    cfg.behavior_temperature = c.at("behavior_temperature");
    catalog.time_offsets = doc.at("time_offsets").get<std::vector<double>>();
    catalog.device_offsets = doc.at("device_offsets").get<std::vector<double>>();
    for (const json& u : doc.at("users")) {
      UserProfile user;
      user.user_id = u.at("user_id");
      user.latent_pref = u.at("latent_pref").get<std::vector<double>>();
      user.age_bucket = u.at("age_bucket");
      user.gender = u.at("gender");
      for (const json& b : u.at("behavior_seq")) {
        user.behavior_seq.push_back({b.at(0).get<int>(), b.at(1).get<int>()});
      }
      catalog.users.push_back(std::move(user));
    }
    for (const json& i : doc.at("items")) {
      ItemProfile item;
      item.item_id = i.at("item_id");
      item.category_id = i.at("category_id");
      item.brand_id = i.at("brand_id");
      item.latent_attr = i.at("latent_attr").get<std::vector<double>>();
      item.popularity = i.at("popularity");
      catalog.items.push_back(std::move(item));
    }
    for (const json& a : doc.at("ads")) {
      AdProfile ad;
      ad.ad_id = a.at("ad_id");
      ad.item_id = a.at("item_id");
      ad.campaign_feature = a.at("campaign_feature");
      ad.bid = a.at("bid");
      ad.creation_step = a.at("creation_step");
      catalog.ads.push_back(ad);
    }
    ValidateCatalog(catalog);
    return catalog;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void WritePropensities(const std::filesystem::path& path, const std::map<int, double>& values) {
  std::ofstream out = OpenOut(path);
  for (const auto& [id, p] : values) out << id << '\t' << FormatDouble(p) << '\n';
  if (!out) throw FormatError("failed writing " + path.string());
}

std::map<int, double> ReadPropensities(const std::filesystem::path& path) {
  std::ifstream in = OpenIn(path);
  std::map<int, double> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto f = SplitTabs(line);
    if (f.size() != 2) throw FormatError(path.string() + ": expected 2 fields");
    values[ParseNumber<int>(f[0], path, lineno)] = ParseNumber<double>(f[1], path, lineno);
  }
  return values;
}

}  // namespace rec4ad::sim
