#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "rec4ad/common/error.h"
#include "rec4ad/sim/catalog.h"
#include "rec4ad/sim/log_io.h"
#include "rec4ad/sim/sessions.h"

namespace rec4ad::sim {
namespace {

CatalogConfig SmallConfig() {
  CatalogConfig c;
  c.num_users = 10;
  c.num_items = 20;
  c.ad_coverage = 0.5;
  c.num_categories = 4;
  c.num_brands = 5;
  c.num_campaigns = 3;
  c.max_behavior_len = 4;
  return c;
}

double ChiSquaredCritical(int dof, double alpha) {
  return boost::math::quantile(boost::math::complement(boost::math::chi_squared(dof), alpha));
}

std::string Slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path TempDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rec4ad_sim_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Two ads on two items; the proxy and bids are fixed by hand.
Catalog TwoAdCatalog() {
  CatalogConfig c = SmallConfig();
  c.num_users = 1;
  c.num_items = 3;
  c.ad_coverage = 0.5;
  c.num_time_buckets = 1;
  c.num_devices = 1;
  Catalog catalog = GenerateCatalog(c, 1);
  catalog.ads.clear();
  catalog.ads.push_back({0, 0, 0, 2.0, 0});
  catalog.ads.push_back({1, 1, 0, 1.0, 1});
  return catalog;
}

TEST(GenerateCatalogTest, SizesFollowConfig) {
  const Catalog catalog = GenerateCatalog(SmallConfig(), 7);
  EXPECT_EQ(catalog.users.size(), 10u);
  EXPECT_EQ(catalog.items.size(), 20u);
  std::vector<char> has_ad(20, 0);
  for (const AdProfile& ad : catalog.ads) has_ad[ad.item_id] = 1;
  int covered = 0;
  for (char c : has_ad) covered += c;
  EXPECT_GE(covered, 10);
  EXPECT_LT(covered, 20);
  EXPECT_NO_THROW(ValidateCatalog(catalog));
}

TEST(GenerateCatalogTest, DeterministicByteForByte) {
  const auto dir = TempDir("determinism");
  const Catalog a = GenerateCatalog(SmallConfig(), 7);
  const Catalog b = GenerateCatalog(SmallConfig(), 7);
  EXPECT_EQ(a, b);
  WriteCatalog(dir / "a.json", a);
  WriteCatalog(dir / "b.json", b);
  EXPECT_EQ(Slurp(dir / "a.json"), Slurp(dir / "b.json"));
  EXPECT_NE(GenerateCatalog(SmallConfig(), 8), a);
}

TEST(GenerateCatalogTest, RejectsBadConfigs) {
  CatalogConfig full = SmallConfig();
  full.ad_coverage = 1.0;
  EXPECT_THROW(GenerateCatalog(full, 7), ConfigError);
  CatalogConfig none = SmallConfig();
  none.ad_coverage = 0.0;
  EXPECT_THROW(GenerateCatalog(none, 7), ConfigError);
  CatalogConfig no_users = SmallConfig();
  no_users.num_users = 0;
  EXPECT_THROW(GenerateCatalog(no_users, 7), ConfigError);
  CatalogConfig no_items = SmallConfig();
  no_items.num_items = 0;
  EXPECT_THROW(GenerateCatalog(no_items, 7), ConfigError);
  CatalogConfig flat = SmallConfig();
  flat.latent_dim = 1;
  EXPECT_THROW(GenerateCatalog(flat, 7), ConfigError);
}

TEST(GenerateCatalogTest, DefaultWorldInvariants) {
  const Catalog catalog = GenerateCatalog(CatalogConfig{}, 3);
  std::map<int, int> last_step;
  for (const AdProfile& ad : catalog.ads) {
    EXPECT_GT(ad.bid, 0.0);
    auto it = last_step.find(ad.item_id);
    if (it != last_step.end()) EXPECT_GT(ad.creation_step, it->second);
    last_step[ad.item_id] = ad.creation_step;
  }
  EXPECT_EQ(last_step.size(), 1200u);
  bool empty_history = false;
  for (const UserProfile& u : catalog.users) {
    EXPECT_LE(u.behavior_seq.size(), 10u);
    empty_history = empty_history || u.behavior_seq.empty();
  }
  EXPECT_TRUE(empty_history);
}

TEST(TrueCtrTest, ReferenceValues) {
  const std::vector<double> zero = {0.0, 0.0};
  EXPECT_DOUBLE_EQ(TrueCtr(zero, zero, 0.0, 0.0), 0.5);
  const std::vector<double> a = {1.0, 0.0}, b = {1.0, 3.0};
  EXPECT_NEAR(TrueCtr(a, b, 0.0, 0.0), 0.7311, 1e-4);
  const std::vector<double> three = {1.0, 0.0, 0.0};
  EXPECT_THROW(TrueCtr(a, three, 0.0, 0.0), ShapeError);
}

TEST(TrueCtrTest, AdSharesItsItemsProbability) {
  const Catalog catalog = GenerateCatalog(CatalogConfig{}, 3);
  const ScoringFn truth = MakeNoisyProxy(catalog, 0.0, 0);
  const UserProfile& user = catalog.users[17];
  for (int k = 0; k < 50; ++k) {
    const AdProfile& ad = catalog.ads[k];
    const Context ctx{k % 4, k % 3};
    EXPECT_EQ(truth(user, ad.ad_id, Source::kAd, ctx), truth(user, ad.item_id, Source::kRec, ctx));
  }
}

TEST(RankingTest, EcpmAndPctrDisagree) {
  const Catalog catalog = TwoAdCatalog();
  const ScoringFn proxy = [](const UserProfile&, int subject, Source, Context) {
    return subject == 0 ? 0.10 : 0.15;
  };
  const std::vector<int> candidates = {0, 1};
  const UserProfile& user = catalog.users[0];
  EXPECT_EQ(RankCandidates(catalog, Policy::kEcpm, Source::kAd, user, {}, candidates, 1, proxy, 0),
            std::vector<int>{0});
  EXPECT_EQ(RankCandidates(catalog, Policy::kPctr, Source::kAd, user, {}, candidates, 1, proxy, 0),
            std::vector<int>{1});

  SessionConfig config;
  config.num_sessions = 5;
  config.candidates_per_session = 2;
  config.slots_per_session = 1;
  const ImpressionLog ecpm = RunSessions(catalog, Policy::kEcpm, config, proxy, 3);
  const ImpressionLog pctr = RunSessions(catalog, Policy::kPctr, config, proxy, 3);
  for (const auto& r : ecpm.records) EXPECT_EQ(r.subject_id, 0);
  for (const auto& r : pctr.records) EXPECT_EQ(r.subject_id, 1);
}

TEST(RankingTest, RejectsDegenerateConfigs) {
  const Catalog catalog = TwoAdCatalog();
  const ScoringFn proxy = MakeNoisyProxy(catalog, 0.0, 0);
  SessionConfig config;
  config.num_sessions = 1;
  config.candidates_per_session = 2;
  config.slots_per_session = 2;
  EXPECT_THROW(RunSessions(catalog, Policy::kEcpm, config, proxy, 1), ConfigError);
  config.slots_per_session = 1;
  config.candidates_per_session = 3;
  EXPECT_THROW(RunSessions(catalog, Policy::kEcpm, config, proxy, 1), ConfigError);
  EXPECT_THROW(RankCandidates(catalog, Policy::kEcpm, Source::kAd, catalog.users[0], {}, {}, 1,
                              proxy, 0),
               ConfigError);
  EXPECT_THROW(ParsePolicy("auction"), ConfigError);
}

TEST(RankingTest, UniformPolicyDisplaysEveryCandidateEqually) {
  CatalogConfig c = SmallConfig();
  c.num_items = 12;
  c.ad_coverage = 0.5;
  const Catalog catalog = GenerateCatalog(c, 5);
  const int pool = static_cast<int>(catalog.ads.size());
  SessionConfig config;
  config.num_sessions = 20000;
  config.candidates_per_session = pool;
  config.slots_per_session = 1;
  const ImpressionLog log = RunSessions(catalog, Policy::kUniform, config, nullptr, 11);
  std::vector<double> counts(static_cast<std::size_t>(pool), 0.0);
  for (const auto& r : log.records) counts[r.subject_id] += 1.0;
  const double expected = config.num_sessions / static_cast<double>(pool);
  double chi2 = 0.0;
  for (double k : counts) chi2 += (k - expected) * (k - expected) / expected;
  EXPECT_LT(chi2, ChiSquaredCritical(pool - 1, 0.01));
}

TEST(RankingTest, UniformMeanIrMatchesSlotRatio) {
  const Catalog catalog = GenerateCatalog(CatalogConfig{}, 9);
  SessionConfig config;
  config.num_sessions = 10000;
  const ImpressionLog log = RunSessions(catalog, Policy::kUniform, config, nullptr, 4);
  const auto ir = ImpressionRatio(log);
  double mean = 0.0;
  for (const auto& [id, v] : ir) mean += v;
  mean /= static_cast<double>(ir.size());
  EXPECT_NEAR(mean, 10.0 / 50.0, 0.02 * 0.2);
}

TEST(RankingTest, EcpmConcentratesImpressions) {
  const Catalog catalog = GenerateCatalog(CatalogConfig{}, 9);
  SessionConfig config;
  config.num_sessions = 10000;
  const ImpressionLog log =
      RunSessions(catalog, Policy::kEcpm, config, MakeNoisyProxy(catalog, 0.3, 2), 4);
  const auto ir = ImpressionRatio(log);
  const auto groups = IrGroupPartition(ir, 12);
  const auto mean_ir = [&](const std::vector<int>& g) {
    double s = 0.0;
    for (int id : g) s += ir.at(id);
    return s / static_cast<double>(g.size());
  };
  EXPECT_GT(mean_ir(groups.front()), 10.0 * mean_ir(groups.back()));
}

TEST(RankingTest, SessionsArePureFunctions) {
  const Catalog catalog = GenerateCatalog(SmallConfig(), 5);
  const ScoringFn proxy = MakeNoisyProxy(catalog, 0.3, 1);
  SessionConfig config;
  config.num_sessions = 200;
  config.candidates_per_session = 6;
  config.slots_per_session = 2;
  EXPECT_EQ(RunSessions(catalog, Policy::kEcpm, config, proxy, 42),
            RunSessions(catalog, Policy::kEcpm, config, proxy, 42));
  EXPECT_NE(RunSessions(catalog, Policy::kEcpm, config, proxy, 42),
            RunSessions(catalog, Policy::kEcpm, config, proxy, 43));
}

TEST(RankingTest, DisplayedSubjectsComeFromTheirCandidateSet) {
  const Catalog catalog = GenerateCatalog(CatalogConfig{}, 2);
  SessionConfig config;
  config.source = Source::kRec;
  config.num_sessions = 300;
  const ImpressionLog log =
      RunSessions(catalog, Policy::kPctr, config, MakeNoisyProxy(catalog, 0.3, 2), 4);
  ASSERT_EQ(log.records.size(), 3000u);
  for (const auto& r : log.records) {
    const auto& cands = log.candidate_sets[r.session_id];
    EXPECT_NE(std::find(cands.begin(), cands.end(), r.subject_id), cands.end());
  }
}

TEST(RankingTest, LabelsFollowTrueCtrOnAFrozenCell) {
  CatalogConfig c = SmallConfig();
  c.num_users = 1;
  c.num_items = 4;
  c.num_time_buckets = 1;
  c.num_devices = 1;
  const Catalog catalog = GenerateCatalog(c, 13);
  SessionConfig config;
  config.source = Source::kRec;
  config.num_sessions = 40000;
  config.candidates_per_session = 4;
  config.slots_per_session = 2;
  const ImpressionLog log = RunSessions(catalog, Policy::kUniform, config, nullptr, 8);
  const int item = 2;
  double shown = 0.0, clicks = 0.0;
  for (const auto& r : log.records) {
    if (r.subject_id != item) continue;
    shown += 1.0;
    clicks += r.label;
  }
  const double p = TrueCtr(catalog, catalog.users[0], catalog.items[item], {0, 0});
  const double sd = std::sqrt(p * (1 - p) / shown);
  EXPECT_GT(shown, 15000.0);
  EXPECT_NEAR(clicks / shown, p, 4.0 * sd);
}

ImpressionLog ToyLog() {
  // Four sessions; ad 7 is a candidate in all four and displayed in two.
  ImpressionLog log;
  log.source = Source::kAd;
  log.candidate_sets = {{7, 1, 2}, {7, 1, 3}, {7, 2, 3}, {7, 1, 2}};
  const int displayed[4] = {7, 1, 7, 2};
  for (int s = 0; s < 4; ++s) {
    ImpressionRecord r;
    r.session_id = s;
    r.subject_id = displayed[s];
    r.source = Source::kAd;
    log.records.push_back(r);
  }
  return log;
}

TEST(ImpressionRatioTest, HandCountedToyLog) {
  const auto ir = ImpressionRatio(ToyLog());
  EXPECT_DOUBLE_EQ(ir.at(7), 0.5);
  EXPECT_DOUBLE_EQ(ir.at(3), 0.0);
  EXPECT_DOUBLE_EQ(ir.at(1), 1.0 / 3.0);
  EXPECT_EQ(ir.count(99), 0u);
}

TEST(ImpressionRatioTest, AlwaysDisplayedIsOne) {
  ImpressionLog log;
  log.candidate_sets = {{4, 5}, {4, 6}};
  log.records = {{0, 0, 4, {}, 0, Source::kAd}, {1, 0, 4, {}, 1, Source::kAd}};
  EXPECT_DOUBLE_EQ(ImpressionRatio(log).at(4), 1.0);
}

TEST(IrGroupPartitionTest, OneAdPerGroup) {
  std::map<int, double> ir;
  for (int a = 0; a < 12; ++a) ir[a] = a / 100.0;
  const auto groups = IrGroupPartition(ir, 12);
  ASSERT_EQ(groups.size(), 12u);
  for (int g = 0; g < 12; ++g) EXPECT_EQ(groups[g], std::vector<int>{11 - g});
}

TEST(IrGroupPartitionTest, QuartilesAndRemainder) {
  std::map<int, double> ir = {{0, 0.1}, {1, 0.9}, {2, 0.5}, {3, 0.8},
                              {4, 0.2}, {5, 0.3}, {6, 0.4}, {7, 0.05}};
  const auto groups = IrGroupPartition(ir, 4);
  EXPECT_EQ(groups[0], (std::vector<int>{1, 3}));
  EXPECT_EQ(groups[3], (std::vector<int>{0, 7}));
  ir[8] = 0.0;
  const auto uneven = IrGroupPartition(ir, 4);
  EXPECT_EQ(uneven[0].size(), 3u);
  EXPECT_EQ(uneven[3].size(), 2u);
}

TEST(IrGroupPartitionTest, TiesOrderedByAdId) {
  std::map<int, double> ir = {{5, 0.2}, {1, 0.2}, {3, 0.2}, {0, 0.2}};
  const auto groups = IrGroupPartition(ir, 2);
  EXPECT_EQ(groups[0], (std::vector<int>{0, 1}));
  EXPECT_EQ(groups[1], (std::vector<int>{3, 5}));
  EXPECT_THROW(IrGroupPartition(ir, 5), ConfigError);
  EXPECT_THROW(IrGroupPartition(ir, 1), ConfigError);
}

TEST(DisplayPropensityTest, UniformIsSlotRatio) {
  const Catalog catalog = GenerateCatalog(CatalogConfig{}, 1);
  SessionConfig config;
  const auto p = DisplayPropensity(catalog, Policy::kUniform, config, nullptr, 0, 0);
  EXPECT_EQ(p.size(), catalog.ads.size());
  for (const auto& [id, v] : p) EXPECT_DOUBLE_EQ(v, 0.2);
}

TEST(LogIoTest, RoundTripsThroughFiles) {
  const auto dir = TempDir("logio");
  const Catalog catalog = GenerateCatalog(SmallConfig(), 3);
  SessionConfig config;
  config.num_sessions = 50;
  config.candidates_per_session = 5;
  config.slots_per_session = 2;
  const ImpressionLog log =
      RunSessions(catalog, Policy::kEcpm, config, MakeNoisyProxy(catalog, 0.3, 1), 6);
  WriteImpressionLog(dir / "ad.tsv", log);
  EXPECT_EQ(ReadImpressionLog(dir / "ad.tsv"), log);
  WriteCatalog(dir / "catalog.json", catalog);
  EXPECT_EQ(ReadCatalog(dir / "catalog.json"), catalog);
  const std::map<int, double> prop = {{0, 0.1}, {3, 1.0 / 3.0}};
  WritePropensities(dir / "p.tsv", prop);
  EXPECT_EQ(ReadPropensities(dir / "p.tsv"), prop);
  EXPECT_THROW(ReadImpressionLog(dir / "missing.tsv"), StaleInputError);
}

TEST(LogIoTest, DocumentedFieldOrder) {
  const auto dir = TempDir("fields");
  WriteImpressionLog(dir / "toy.tsv", ToyLog());
  std::ifstream in(dir / "toy.tsv");
  std::string first;
  std::getline(in, first);
  EXPECT_EQ(first, "0\tad\t0\t7\t0\t0\t0");
}

}  // namespace
}  // namespace rec4ad::sim
