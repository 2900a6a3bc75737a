#ifndef REC4AD_SIM_SESSIONS_H_
#define REC4AD_SIM_SESSIONS_H_

#include <cstdint>
#include <functional>
#include <map>
#include <string_view>
#include <vector>

#include "rec4ad/sim/catalog.h"

namespace rec4ad::sim {

enum class Source { kAd, kRec };
enum class Policy { kEcpm, kPctr, kUniform };

std::string_view SourceName(Source source);
Source ParseSource(std::string_view name);
std::string_view PolicyName(Policy policy);
Policy ParsePolicy(std::string_view name);

struct ImpressionRecord {
  std::int64_t session_id = 0;
  int user_id = 0;
  // ad_id when source is kAd, item_id when kRec.
  int subject_id = 0;
  Context context;
  int label = 0;
  Source source = Source::kAd;
  friend bool operator==(const ImpressionRecord&, const ImpressionRecord&) = default;
};

struct ImpressionLog {
  Source source = Source::kAd;
  std::vector<ImpressionRecord> records;
  // candidate_sets[session_id] lists the subject ids considered in that
  // session, in sampling order.
  std::vector<std::vector<int>> candidate_sets;
  friend bool operator==(const ImpressionLog&, const ImpressionLog&) = default;
};

// Scores a (user, subject, context) triple; used by the ranking policies.
using ScoringFn =
    std::function<double(const UserProfile& user, int subject_id, Source source, Context)>;

// True CTR times a log-normal factor that is a fixed pseudo-random function of
// (seed, user, item, context): the proxy ranker makes consistent mistakes.
// noise_sigma = 0 gives the ground truth itself.
ScoringFn MakeNoisyProxy(const Catalog& catalog, double noise_sigma, std::uint64_t seed);

struct SessionConfig {
  Source source = Source::kAd;
  int num_sessions = 10000;
  int candidates_per_session = 50;
  int slots_per_session = 10;
};

// Simulates sessions: draw a user and context, sample a candidate set
// uniformly without replacement from the eligible pool (all ads for kAd,
// all items for kRec), rank it by the policy (kEcpm: proxy * bid, kPctr:
// proxy, kUniform: random permutation), display the top slots and draw each
// label from the true CTR. Pure function of its arguments.
ImpressionLog RunSessions(const Catalog& catalog, Policy policy, const SessionConfig& config,
                          const ScoringFn& proxy, std::uint64_t seed);

// Ranks one candidate list and returns the displayed subset in rank order.
// Exposed so logged candidate sets can be re-ranked under another policy.
std::vector<int> RankCandidates(const Catalog& catalog, Policy policy, Source source,
                                const UserProfile& user, Context context,
                                const std::vector<int>& candidates, int slots,
                                const ScoringFn& proxy, std::uint64_t session_seed);

struct ImpressionCounts {
  int displays = 0;
  int candidacies = 0;
};

// Per-subject (#sessions displayed, #sessions in the candidate set).
std::map<int, ImpressionCounts> CountImpressions(const ImpressionLog& log);

// IR(a) = displays / candidacies for every subject that was ever a candidate.
std::map<int, double> ImpressionRatio(const ImpressionLog& log);

// Subjects sorted by descending IR (ties by ascending id) and split into
// n_groups equal groups, the remainder going to the earliest groups.
// Throws ConfigError when n_groups < 2 or there are fewer ids than groups.
std::vector<std::vector<int>> IrGroupPartition(const std::map<int, double>& ir, int n_groups);

// Display propensity per ad under `policy`, from the simulator's own
// bookkeeping: exact slots/candidates for kUniform, otherwise the smoothed
// display rate (displays + 0.5) / (candidacies + 1) over a long independent
// replay of `replay_sessions` sessions.
std::map<int, double> DisplayPropensity(const Catalog& catalog, Policy policy,
                                        const SessionConfig& config, const ScoringFn& proxy,
                                        int replay_sessions, std::uint64_t seed);

}  // namespace rec4ad::sim

#endif  // REC4AD_SIM_SESSIONS_H_
