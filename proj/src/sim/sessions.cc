#include "rec4ad/sim/sessions.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "rec4ad/common/error.h"
#include "rec4ad/common/random.h"

namespace rec4ad::sim {

std::string_view SourceName(Source source) { return source == Source::kAd ? "ad" : "rec"; }

Source ParseSource(std::string_view name) {
  if (name == "ad") return Source::kAd;
  if (name == "rec") return Source::kRec;
  throw ConfigError("unknown source '" + std::string(name) + "'");
}

std::string_view PolicyName(Policy policy) {
  switch (policy) {
    case Policy::kEcpm:
      return "ecpm";
    case Policy::kPctr:
      return "pctr";
    case Policy::kUniform:
      return "uniform";
  }
  return "?";
}

Policy ParsePolicy(std::string_view name) {
  if (name == "ecpm") return Policy::kEcpm;
  if (name == "pctr") return Policy::kPctr;
  if (name == "uniform") return Policy::kUniform;
  throw ConfigError("unknown policy '" + std::string(name) + "'");
}

ScoringFn MakeNoisyProxy(const Catalog& catalog, double noise_sigma, std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw ConfigError("proxy noise sigma must be >= 0");
  return [&catalog, noise_sigma, seed](const UserProfile& user, int subject_id, Source source,
                                       Context context) {
    const int item_id = source == Source::kAd
                            ? catalog.ads.at(static_cast<std::size_t>(subject_id)).item_id
                            : subject_id;
    const ItemProfile& item = catalog.items.at(static_cast<std::size_t>(item_id));
    const double ctr = TrueCtr(catalog, user, item, context);
    if (noise_sigma == 0.0) return ctr;
    // Box-Muller on two hash-derived uniforms; stateless so the scorer is a
    // pure function and safe to share across threads.
    const std::uint64_t key =
        DeriveSeed(seed, static_cast<std::uint64_t>(user.user_id),
                   (static_cast<std::uint64_t>(item_id) << 16) ^
                       (static_cast<std::uint64_t>(context.time_bucket) << 8) ^
                       static_cast<std::uint64_t>(context.device));
    const double u1 = (static_cast<double>(MixSeed(key) >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = static_cast<double>(MixSeed(key + 1) >> 11) * 0x1.0p-53;
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return ctr * std::exp(noise_sigma * z);
  };
}

std::vector<int> RankCandidates(const Catalog& catalog, Policy policy, Source source,
                                const UserProfile& user, Context context,
                                const std::vector<int>& candidates, int slots,
                                const ScoringFn& proxy, std::uint64_t session_seed) {
  if (candidates.empty()) throw ConfigError("empty candidate set");
  const int shown = std::min<int>(slots, static_cast<int>(candidates.size()));
  std::vector<int> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  if (policy == Policy::kUniform) {
    Rng rng(DeriveSeed(session_seed, 7));
    std::shuffle(order.begin(), order.end(), rng);
  } else {
    if (policy == Policy::kEcpm && source != Source::kAd) {
      throw ConfigError("ecpm ranking needs ad candidates (bids)");
    }
    if (policy != Policy::kEcpm && policy != Policy::kPctr) {
      throw ConfigError("unknown policy");
    }
    std::vector<double> score(candidates.size());
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      score[k] = proxy(user, candidates[k], source, context);
      // Ranking by pctr * bid; the x1000 of eCPM does not change the order.
      if (policy == Policy::kEcpm) {
        score[k] *= catalog.ads.at(static_cast<std::size_t>(candidates[k])).bid;
      }
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return score[a] > score[b]; });
  }
  std::vector<int> displayed;
  displayed.reserve(static_cast<std::size_t>(shown));
  for (int k = 0; k < shown; ++k) displayed.push_back(candidates[order[k]]);
  return displayed;
}

ImpressionLog RunSessions(const Catalog& catalog, Policy policy, const SessionConfig& config,
                          const ScoringFn& proxy, std::uint64_t seed) {
  const int pool_size = config.source == Source::kAd ? static_cast<int>(catalog.ads.size())
                                                     : static_cast<int>(catalog.items.size());
  if (config.num_sessions < 0) throw ConfigError("num_sessions must be >= 0");
  if (config.candidates_per_session <= 0 || pool_size == 0) {
    throw ConfigError("empty candidate set");
  }
  if (config.candidates_per_session > pool_size) {
    throw ConfigError("candidates_per_session exceeds the eligible pool (" +
                      std::to_string(pool_size) + ")");
  }
  if (config.slots_per_session <= 0 ||
      config.slots_per_session >= config.candidates_per_session) {
    throw ConfigError("slots_per_session must be positive and below the candidate set size");
  }
  if (!proxy && policy != Policy::kUniform) throw ConfigError("policy needs a proxy scorer");

  std::vector<int> pool(static_cast<std::size_t>(pool_size));
  std::iota(pool.begin(), pool.end(), 0);
  const CatalogConfig& cc = catalog.config;
  std::uniform_int_distribution<int> pick_user(0, static_cast<int>(catalog.users.size()) - 1);
  std::uniform_int_distribution<int> pick_time(0, cc.num_time_buckets - 1);
  std::uniform_int_distribution<int> pick_device(0, cc.num_devices - 1);

  ImpressionLog log;
  log.source = config.source;
  log.candidate_sets.resize(static_cast<std::size_t>(config.num_sessions));
  log.records.reserve(static_cast<std::size_t>(config.num_sessions) *
                      static_cast<std::size_t>(config.slots_per_session));
  for (int s = 0; s < config.num_sessions; ++s) {
    const std::uint64_t session_seed = DeriveSeed(seed, 100, static_cast<std::uint64_t>(s));
    Rng rng(session_seed);
    const UserProfile& user = catalog.users[static_cast<std::size_t>(pick_user(rng))];
    const Context context{pick_time(rng), pick_device(rng)};
    std::vector<int>& candidates = log.candidate_sets[static_cast<std::size_t>(s)];
    std::sample(pool.begin(), pool.end(), std::back_inserter(candidates),
                config.candidates_per_session, rng);
    const std::vector<int> displayed =
        RankCandidates(catalog, policy, config.source, user, context, candidates,
                       config.slots_per_session, proxy, session_seed);
    for (int subject : displayed) {
      const int item_id = config.source == Source::kAd
                              ? catalog.ads[static_cast<std::size_t>(subject)].item_id
                              : subject;
      const double p =
          TrueCtr(catalog, user, catalog.items[static_cast<std::size_t>(item_id)], context);
      ImpressionRecord rec;
      rec.session_id = s;
      rec.user_id = user.user_id;
      rec.subject_id = subject;
      rec.context = context;
      rec.label = Uniform01(rng) < p ? 1 : 0;
      rec.source = config.source;
      log.records.push_back(rec);
    }
  }
  return log;
}

std::map<int, ImpressionCounts> CountImpressions(const ImpressionLog& log) {
  std::map<int, ImpressionCounts> counts;
  for (const auto& candidates : log.candidate_sets) {
    for (int id : candidates) ++counts[id].candidacies;
  }
  // A subject is displayed at most once per session.
  std::int64_t last_session = -1;
  std::vector<int> seen;
  for (const ImpressionRecord& rec : log.records) {
    if (rec.session_id != last_session) {
      seen.clear();
      last_session = rec.session_id;
    }
    if (std::find(seen.begin(), seen.end(), rec.subject_id) != seen.end()) continue;
    seen.push_back(rec.subject_id);
    ++counts[rec.subject_id].displays;
  }
  return counts;
}

std::map<int, double> ImpressionRatio(const ImpressionLog& log) {
  std::map<int, double> ir;
  for (const auto& [id, c] : CountImpressions(log)) {
    if (c.candidacies == 0) continue;
    ir[id] = static_cast<double>(c.displays) / static_cast<double>(c.candidacies);
  }
  return ir;
}

std::vector<std::vector<int>> IrGroupPartition(const std::map<int, double>& ir, int n_groups) {
  if (n_groups < 2) throw ConfigError("IR grouping needs at least 2 groups");
  if (static_cast<int>(ir.size()) < n_groups) {
    throw ConfigError("IR grouping: fewer ids (" + std::to_string(ir.size()) + ") than groups (" +
                      std::to_string(n_groups) + ")");
  }
  std::vector<std::pair<int, double>> sorted(ir.begin(), ir.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const std::size_t base = sorted.size() / static_cast<std::size_t>(n_groups);
  const std::size_t extra = sorted.size() % static_cast<std::size_t>(n_groups);
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(n_groups));
  std::size_t next = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::size_t size = base + (g < extra ? 1 : 0);
    for (std::size_t k = 0; k < size; ++k) groups[g].push_back(sorted[next++].first);
  }
  return groups;
}

std::map<int, double> DisplayPropensity(const Catalog& catalog, Policy policy,
                                        const SessionConfig& config, const ScoringFn& proxy,
                                        int replay_sessions, std::uint64_t seed) {
  std::map<int, double> propensity;
  if (config.source != Source::kAd) throw ConfigError("display propensity is defined for ads");
  if (policy == Policy::kUniform) {
    const double p = static_cast<double>(config.slots_per_session) /
                     static_cast<double>(config.candidates_per_session);
    for (const AdProfile& ad : catalog.ads) propensity[ad.ad_id] = p;
    return propensity;
  }
  SessionConfig replay = config;
  replay.num_sessions = replay_sessions;
  const ImpressionLog log = RunSessions(catalog, policy, replay, proxy, seed);
  for (const auto& [id, c] : CountImpressions(log)) {
    propensity[id] = (c.displays + 0.5) / (c.candidacies + 1.0);
  }
  return propensity;
}

}  // namespace rec4ad::sim
