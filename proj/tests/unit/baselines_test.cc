#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "rec4ad/baselines/variants.h"
#include "rec4ad/common/error.h"
#include "rec4ad/diffcore/ops.h"

namespace rec4ad::baselines {
namespace {

using augment::UnifiedSample;
using sim::Source;

struct World {
  sim::Catalog catalog;
  sim::ImpressionLog ad_log;
  std::vector<UnifiedSample> ads_only;
  std::vector<UnifiedSample> merged;
  model::ModelConfig model;
  model::TrainConfig train;
};

const World& TinyWorld() {
  static const World world = [] {
    World w;
    sim::CatalogConfig c;
    c.num_users = 40;
    c.num_items = 60;
    c.num_categories = 5;
    c.num_brands = 8;
    c.num_campaigns = 4;
    c.max_behavior_len = 4;
    w.catalog = sim::GenerateCatalog(c, 21);
    const sim::ScoringFn proxy = sim::MakeNoisyProxy(w.catalog, 0.3, 22);
    sim::SessionConfig ad;
    ad.num_sessions = 40;
    ad.candidates_per_session = 12;
    ad.slots_per_session = 4;
    w.ad_log = sim::RunSessions(w.catalog, sim::Policy::kEcpm, ad, proxy, 23);
    sim::SessionConfig rec = ad;
    rec.source = Source::kRec;
    const sim::ImpressionLog rec_log =
        sim::RunSessions(w.catalog, sim::Policy::kPctr, rec, proxy, 24);
    const augment::ItemAdsIndex index = augment::BuildItemAdsIndex(w.catalog.ads);
    const auto pseudo = augment::MapPseudoSamples(augment::RetrieveRecSamples(rec_log, index),
                                                  index, 3, 25, w.catalog);
    w.ads_only = augment::JoinAdLog(w.ad_log, w.catalog);
    w.merged = augment::MergeTrainingSet(w.ad_log, pseudo, w.catalog, 26);
    w.model.vocab = model::VocabFromCatalog(w.catalog);
    w.model.embedding_dim = 4;
    w.model.attention_width = 5;
    w.model.backbone_widths = {8, 6};
    w.model.projection_dim = 4;
    w.model.head_widths = {4};
    w.model.discriminator_width = 4;
    w.train.epochs = 2;
    w.train.batch_size = 32;
    w.train.diagnostics_per_epoch = 2;
    return w;
  }();
  return world;
}

void ExpectSameTrajectory(const VariantRun& a, const VariantRun& b) {
  ASSERT_EQ(a.result.step_losses.size(), b.result.step_losses.size());
  ASSERT_GT(a.result.steps, 0);
  for (std::size_t i = 0; i < a.result.step_losses.size(); ++i) {
    // Bitwise: exact double equality, no tolerance.
    EXPECT_EQ(a.result.step_losses[i], b.result.step_losses[i]) << "step " << i;
  }
  for (const auto& [name, p] : a.model.params().entries()) {
    const auto& q = b.model.params().get(name);
    EXPECT_TRUE(p.value == q.value) << name;
  }
}

TEST(PropensityTest, IrEstimateOnToyLog) {
  sim::ImpressionLog log;
  // Ad 7: 4 candidacies, displayed twice. Ad 8: displayed in all 3 of its
  // candidacies. Ad 9 is displayed nowhere but sits in one candidate set.
  log.candidate_sets = {{7, 8, 9}, {7, 8}, {7, 8}, {7}};
  log.records = {{0, 0, 7, {}, 0, Source::kAd}, {0, 0, 8, {}, 1, Source::kAd},
                 {1, 0, 8, {}, 0, Source::kAd}, {2, 0, 8, {}, 0, Source::kAd},
                 {3, 0, 7, {}, 1, Source::kAd}};
  const auto p = PropensityEstimate(log, PropensitySource::kIrEstimate);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_DOUBLE_EQ(p.at(7), 2.5 / 5.0);
  EXPECT_DOUBLE_EQ(p.at(8), 3.5 / 4.0);
  EXPECT_LT(p.at(8), 1.0);
  EXPECT_DOUBLE_EQ(p.at(9), 0.5 / 2.0);
  EXPECT_FALSE(p.contains(10));
}

TEST(PropensityTest, SimulatorTruthUnderUniformIsSlotsOverCandidates) {
  sim::CatalogConfig c;
  c.num_users = 30;
  c.num_items = 300;
  const sim::Catalog catalog = sim::GenerateCatalog(c, 4);
  const sim::ImpressionLog log =
      sim::RunSessions(catalog, sim::Policy::kUniform, {}, nullptr, 5);
  SimulatorReplay replay;
  replay.catalog = &catalog;
  replay.policy = sim::Policy::kUniform;
  replay.replay_sessions = 100;
  const auto p = PropensityEstimate(log, PropensitySource::kSimulatorTruth, &replay);
  ASSERT_FALSE(p.empty());
  for (const auto& [ad, v] : p) EXPECT_DOUBLE_EQ(v, 10.0 / 50.0) << ad;
  EXPECT_THROW(PropensityEstimate(log, PropensitySource::kSimulatorTruth), ConfigError);
}

TEST(PropensityTest, EcpmTruthCoversEveryCandidateAd) {
  const World& w = TinyWorld();
  SimulatorReplay replay;
  replay.catalog = &w.catalog;
  replay.sessions.num_sessions = 40;
  replay.sessions.candidates_per_session = 12;
  replay.sessions.slots_per_session = 4;
  replay.proxy = sim::MakeNoisyProxy(w.catalog, 0.3, 22);
  replay.replay_sessions = 2000;
  replay.seed = 9;
  const auto p = PropensityEstimate(w.ad_log, PropensitySource::kSimulatorTruth, &replay);
  const auto counts = sim::CountImpressions(w.ad_log);
  EXPECT_EQ(p.size(), counts.size());
  for (const auto& [ad, v] : p) {
    EXPECT_GT(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(IpsWeightTest, Examples) {
  EXPECT_EQ(IpsWeight(0.25), 4.0);
  EXPECT_EQ(IpsWeight(0.05, 10.0), 10.0);
  EXPECT_EQ(IpsWeight(1.0), 1.0);
  EXPECT_EQ(IpsWeight(0.5, 10.0), 2.0);
  EXPECT_THROW(IpsWeight(0.0), ConfigError);
  EXPECT_THROW(IpsWeight(-0.1), ConfigError);
  EXPECT_THROW(IpsWeight(1.5), ConfigError);
  EXPECT_THROW(IpsWeight(std::nan("")), ConfigError);
  EXPECT_THROW(IpsWeight(0.5, 0.0), ConfigError);
}

TEST(IpsWeightTest, MaxWeightRespectsCapExactly) {
  const World& w = TinyWorld();
  const auto p = PropensityEstimate(w.ad_log, PropensitySource::kIrEstimate);
  const auto capped = SampleWeights(w.ads_only, p, 3.0);
  const auto raw = SampleWeights(w.ads_only, p, std::nullopt);
  ASSERT_EQ(capped.size(), w.ads_only.size());
  EXPECT_LE(*std::max_element(capped.begin(), capped.end()), 3.0);
  ASSERT_GT(*std::max_element(raw.begin(), raw.end()), 3.0) << "toy world never hits the cap";
  EXPECT_EQ(*std::max_element(capped.begin(), capped.end()), 3.0);
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_EQ(capped[i], std::min(raw[i], 3.0));
  std::map<int, double> missing;
  EXPECT_THROW(SampleWeights(w.ads_only, missing, std::nullopt), ConfigError);
}

TEST(VariantSpecTest, CapPresentIffIpsC) {
  EXPECT_NO_THROW(MakeSpec(VariantKind::kIpsC).Validate());
  EXPECT_EQ(*MakeSpec(VariantKind::kIpsC).cap, 10.0);
  VariantSpec s = MakeSpec(VariantKind::kIps);
  s.cap = 5.0;
  EXPECT_THROW(s.Validate(), ConfigError);
  s = MakeSpec(VariantKind::kIpsC);
  s.cap.reset();
  EXPECT_THROW(s.Validate(), ConfigError);
  s.cap = -1.0;
  EXPECT_THROW(s.Validate(), ConfigError);
  for (VariantKind k : {VariantKind::kBase, VariantKind::kDag, VariantKind::kIps,
                        VariantKind::kIpsC, VariantKind::kRec4Ad}) {
    EXPECT_EQ(ParseKind(KindName(k)), k);
  }
  EXPECT_THROW(ParseKind("IV"), ConfigError);
  EXPECT_EQ(ParsePropensitySource("ir_estimate"), PropensitySource::kIrEstimate);
  EXPECT_THROW(ParsePropensitySource("learned"), ConfigError);
}

TEST(VariantConfigTest, SwitchStates) {
  const World& w = TinyWorld();
  for (VariantKind k : {VariantKind::kBase, VariantKind::kDag, VariantKind::kIps,
                        VariantKind::kIpsC}) {
    const auto c = VariantModelConfig(MakeSpec(k), w.model);
    EXPECT_FALSE(c.use_sabn || c.use_alignment || c.use_decorrelation || c.use_source_heads);
  }
  const auto full = VariantModelConfig(MakeSpec(VariantKind::kRec4Ad), w.model);
  EXPECT_TRUE(full.use_sabn && full.use_alignment && full.use_decorrelation &&
              full.use_source_heads);
}

TEST(TrainVariantTest, DatasetMismatchIsRejected) {
  const World& w = TinyWorld();
  for (VariantKind k : {VariantKind::kBase, VariantKind::kIps, VariantKind::kIpsC}) {
    const auto p = PropensityEstimate(w.ad_log, PropensitySource::kIrEstimate);
    EXPECT_THROW(TrainVariant(MakeSpec(k), w.merged, &p, w.model, w.train, 1), ConfigError);
  }
  EXPECT_THROW(TrainVariant(MakeSpec(VariantKind::kIps), w.ads_only, nullptr, w.model, w.train, 1),
               ConfigError);
}

TEST(TrainVariantTest, Rec4AdWithSwitchesOffOnAdDataIsBase) {
  const World& w = TinyWorld();
  model::ModelConfig off = w.model;
  off.use_sabn = off.use_alignment = off.use_decorrelation = off.use_source_heads = false;
  const VariantRun base =
      TrainVariant(MakeSpec(VariantKind::kBase), w.ads_only, nullptr, w.model, w.train, 7);
  const VariantRun rec4ad =
      TrainVariant(MakeSpec(VariantKind::kRec4Ad), w.ads_only, nullptr, off, w.train, 7);
  ExpectSameTrajectory(base, rec4ad);
}

TEST(TrainVariantTest, IpsWithUnitPropensityIsBase) {
  const World& w = TinyWorld();
  std::map<int, double> ones;
  for (const auto& s : w.ads_only) ones[s.ad_id] = 1.0;
  const VariantRun base =
      TrainVariant(MakeSpec(VariantKind::kBase), w.ads_only, nullptr, w.model, w.train, 7);
  const VariantRun ips =
      TrainVariant(MakeSpec(VariantKind::kIps), w.ads_only, &ones, w.model, w.train, 7);
  ExpectSameTrajectory(base, ips);
}

TEST(TrainVariantTest, IpsCWithUnitCapIsBase) {
  const World& w = TinyWorld();
  const auto p = PropensityEstimate(w.ad_log, PropensitySource::kIrEstimate);
  VariantSpec spec = MakeSpec(VariantKind::kIpsC);
  spec.cap = 1.0;
  const VariantRun base =
      TrainVariant(MakeSpec(VariantKind::kBase), w.ads_only, nullptr, w.model, w.train, 7);
  const VariantRun ipsc = TrainVariant(spec, w.ads_only, &p, w.model, w.train, 7);
  ExpectSameTrajectory(base, ipsc);
  // Uncapped IPS on the same propensities does differ.
  const VariantRun ips =
      TrainVariant(MakeSpec(VariantKind::kIps), w.ads_only, &p, w.model, w.train, 7);
  EXPECT_NE(ips.result.step_losses, base.result.step_losses);
  for (double s : ips.result.step_weight_sums) EXPECT_TRUE(std::isfinite(s));
}

TEST(TrainVariantTest, DeterministicPerSeed) {
  const World& w = TinyWorld();
  const VariantRun a =
      TrainVariant(MakeSpec(VariantKind::kRec4Ad), w.merged, nullptr, w.model, w.train, 3);
  const VariantRun b =
      TrainVariant(MakeSpec(VariantKind::kRec4Ad), w.merged, nullptr, w.model, w.train, 3);
  ExpectSameTrajectory(a, b);
  const VariantRun c =
      TrainVariant(MakeSpec(VariantKind::kRec4Ad), w.merged, nullptr, w.model, w.train, 4);
  EXPECT_NE(a.result.step_losses, c.result.step_losses);
}

TEST(TrainVariantTest, DagSeesBothSourcesThroughOneHead) {
  const World& w = TinyWorld();
  const VariantRun dag =
      TrainVariant(MakeSpec(VariantKind::kDag), w.merged, nullptr, w.model, w.train, 2);
  // The rec-side copies are never touched when every row uses the ad layers.
  const auto fresh = model::Rec4AdModel(dag.config, 2);
  EXPECT_TRUE(dag.model.params().get("head/rec/1/W").value ==
              fresh.params().get("head/rec/1/W").value);
  EXPECT_FALSE(dag.model.params().get("head/ad/1/W").value ==
               fresh.params().get("head/ad/1/W").value);
}

TEST(WeightedBceTest, UnitWeightsMatchUnweighted) {
  diffcore::Matrix p(5, 1);
  p << 0.1, 0.4, 0.5, 0.9, 0.999;
  const std::vector<double> y = {0, 1, 1, 0, 1};
  const std::vector<double> ones(5, 1.0);
  diffcore::Tape tape;
  const double plain =
      diffcore::BinaryCrossEntropy(tape.constant(p), y, diffcore::Reduction::kSum).value()(0, 0);
  const double unit =
      diffcore::BinaryCrossEntropy(tape.constant(p), y, ones, diffcore::Reduction::kSum)
          .value()(0, 0);
  EXPECT_NEAR(plain, unit, 1e-12);
}

}  // namespace
}  // namespace rec4ad::baselines
