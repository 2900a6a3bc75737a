#include "rec4ad/pipeline/stages.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include "rec4ad/augment/augmentation.h"
#include "rec4ad/common/error.h"
#include "rec4ad/common/random.h"
#include "rec4ad/common/text.h"
#include "rec4ad/pipeline/manifest.h"
#include "rec4ad/sim/log_io.h"

namespace rec4ad::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Child-seed streams of one experiment seed.
enum Stream : std::uint64_t {
  kCatalogStream = 1,
  kProxyStream,
  kAdLogStream,
  kRecLogStream,
  kTestLogStream,
  kMappingStream,
  kMergeStream,
  kReplayStream,
  kInitStream,
};

std::mutex log_mutex;

void Log(const RunContext& ctx, const std::string& line) {
  if (ctx.log == nullptr) return;
  std::lock_guard lock(log_mutex);
  *ctx.log << line << std::endl;
}

class Stopwatch {
 public:
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string SeedTag(std::uint64_t seed) { return "[seed " + std::to_string(seed) + "] "; }

fs::path StageDir(const RunContext& ctx, std::uint64_t seed, const std::string& stage) {
  return SeedDir(ctx, seed) / stage;
}

fs::path EnsureDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

// Configuration subsets each stage depends on, chained through upstream.
json GenerateScope(const ExperimentConfig& c, std::uint64_t seed) {
  const json all = c.ToJson();
  return {{"catalog", all["catalog"]},
          {"proxy_noise_sigma", all["proxy_noise_sigma"]},
          {"logs", all["logs"]},
          {"seed", seed}};
}

json AugmentScope(const ExperimentConfig& c, std::uint64_t seed) {
  const json all = c.ToJson();
  return {{"upstream", JsonDigest(GenerateScope(c, seed))},
          {"augmentation", all["augmentation"]},
          {"replay_sessions", all["ips"]["replay_sessions"]}};
}

json TrainScope(const ExperimentConfig& c, std::uint64_t seed, const std::string& variant) {
  const json all = c.ToJson();
  return {{"upstream", JsonDigest(AugmentScope(c, seed))},
          {"model", all["model"]},
          {"train", all["train"]},
          {"variant", variant},
          {"propensity_source", all["ips"]["propensity_source"]},
          {"cap", all["ips"]["cap"]}};
}

json EvaluateScope(const ExperimentConfig& c, std::uint64_t seed, const std::string& variant) {
  return {{"upstream", JsonDigest(TrainScope(c, seed, variant))},
          {"evaluation", c.ToJson()["evaluation"]}};
}

std::string PropensityFile(baselines::PropensitySource s) {
  return "propensity_" + std::string(baselines::PropensitySourceName(s)) + ".tsv";
}

// Checks the upstream manifests a stage reads from.
std::map<std::string, std::string> VerifyGenerate(const RunContext& ctx, std::uint64_t seed) {
  return VerifyUpstream(StageDir(ctx, seed, "generate"), SeedDir(ctx, seed), "generate",
                        JsonDigest(GenerateScope(ctx.config, seed)));
}

std::map<std::string, std::string> VerifyAugment(const RunContext& ctx, std::uint64_t seed) {
  return VerifyUpstream(StageDir(ctx, seed, "augment"), SeedDir(ctx, seed), "augment",
                        JsonDigest(AugmentScope(ctx.config, seed)));
}

// The dataset a variant sees is pinned by the augment outputs.
std::string DatasetId(const std::map<std::string, std::string>& augment_outputs) {
  return JsonDigest(json(augment_outputs));
}

model::ModelConfig VariantConfig(const NamedVariant& v, const ExperimentConfig& c,
                                 const sim::Catalog& catalog) {
  model::ModelConfig m = c.model_config(catalog);
  m.use_sabn = v.use_sabn;
  m.use_alignment = v.use_alignment;
  m.use_decorrelation = v.use_decorrelation;
  return baselines::VariantModelConfig(v.spec, m);
}

json VariantMetadata(const NamedVariant& v, const model::ModelConfig& m,
                     const ExperimentConfig& c) {
  json meta = {{"variant", v.name},
               {"kind", baselines::KindName(v.spec.kind)},
               {"use_sabn", m.use_sabn},
               {"use_alignment", m.use_alignment},
               {"use_decorrelation", m.use_decorrelation},
               {"use_source_heads", m.use_source_heads},
               {"alpha", m.alpha},
               {"lambda1", m.lambda1},
               {"lambda2_configured", c.model.lambda2},
               {"lambda2_effective", m.lambda2},
               {"batch_size", c.batch_size},
               {"reference_batch_size", c.reference_batch_size},
               {"epochs", c.epochs},
               {"learning_rate", c.learning_rate}};
  if (v.spec.uses_propensity()) {
    meta["propensity_source"] = baselines::PropensitySourceName(v.spec.propensity_source);
    meta["cap"] = v.spec.cap ? json(*v.spec.cap) : json();
  }
  return meta;
}

json ReadJsonFile(const fs::path& path) {
  std::ifstream in = OpenIn(path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void WriteJsonFile(const fs::path& path, const json& j) {
  std::ofstream out = OpenOut(path);
  out << j.dump(2) << '\n';
  if (!out) throw FormatError("failed writing " + path.string());
}

// Runs `work(i)` for i in [0, n) on up to `threads` workers. The first
// failure in index order is rethrown.
template <class Work>
void ParallelFor(int n, int threads, Work work) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        work(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const int k = std::max(1, std::min(threads, n));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < k; ++t) pool.emplace_back(worker);
    worker();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void TrainOne(const RunContext& ctx, std::uint64_t seed, const std::string& name) {
  const Stopwatch clock;
  const ExperimentConfig& c = ctx.config;
  const NamedVariant v = ResolveVariant(name, c);
  const fs::path root = SeedDir(ctx, seed);
  const auto generated = VerifyGenerate(ctx, seed);
  const auto augmented = VerifyAugment(ctx, seed);
  const fs::path gen = StageDir(ctx, seed, "generate");
  const fs::path aug = StageDir(ctx, seed, "augment");
  const sim::Catalog catalog = sim::ReadCatalog(gen / "catalog.json");
  const auto data = augment::ReadSamples(aug / (v.spec.ads_only() ? "train_ads.tsv"
                                                                    : "train_merged.tsv"));
  std::map<int, double> propensity;
  if (v.spec.uses_propensity()) {
    propensity = sim::ReadPropensities(aug / PropensityFile(v.spec.propensity_source));
  }
  const baselines::VariantRun run = baselines::TrainVariant(
      v.spec, data, v.spec.uses_propensity() ? &propensity : nullptr, VariantConfig(v, c, catalog),
      c.train_config(), DeriveSeed(seed, kInitStream));

  const fs::path dir = EnsureDir(StageDir(ctx, seed, "train") / name);
  run.model.Save(dir / "model.ckpt");
  model::WriteCurve(dir / "curve.csv", run.result.curve);
  json summary = VariantMetadata(v, run.config, c);
  summary["dataset_id"] = DatasetId(augmented);
  summary["training_samples"] = data.size();
  summary["steps"] = run.result.steps;
  summary["step_losses"] = run.result.step_losses;
  summary["step_weight_sums"] = run.result.step_weight_sums;
  if (v.spec.uses_propensity()) {
    const auto w = baselines::SampleWeights(data, propensity, v.spec.cap);
    summary["max_sample_weight"] = *std::max_element(w.begin(), w.end());
  }
  WriteJsonFile(dir / "train.json", summary);

  RunManifest m;
  m.stage = "train";
  m.config_hash = JsonDigest(TrainScope(c, seed, name));
  m.inputs = augmented;
  m.inputs.insert(generated.begin(), generated.end());
  m.timings_seconds["train"] = clock.Seconds();
  WriteManifest(dir, root, m, {dir / "model.ckpt", dir / "curve.csv", dir / "train.json"});
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f s", clock.Seconds());
  Log(ctx, SeedTag(seed) + "trained " + name + " (" + std::to_string(run.result.steps) +
               " steps, " + buf + ")");
}

void EvaluateOne(const RunContext& ctx, std::uint64_t seed, const std::string& name) {
  const Stopwatch clock;
  const ExperimentConfig& c = ctx.config;
  const NamedVariant v = ResolveVariant(name, c);
  const fs::path root = SeedDir(ctx, seed);
  const auto generated = VerifyGenerate(ctx, seed);
  const auto augmented = VerifyAugment(ctx, seed);
  const fs::path train_dir = StageDir(ctx, seed, "train") / name;
  const auto trained = VerifyUpstream(train_dir, root, "train",
                                      JsonDigest(TrainScope(c, seed, name)));
  const fs::path gen = StageDir(ctx, seed, "generate");
  const fs::path aug = StageDir(ctx, seed, "augment");
  const sim::Catalog catalog = sim::ReadCatalog(gen / "catalog.json");
  // Refuses a checkpoint whose header disagrees with the configured network.
  model::Rec4AdModel model =
      model::Rec4AdModel::Load(train_dir / "model.ckpt", VariantConfig(v, c, catalog));
  const auto test = augment::ReadSamples(aug / "test.tsv");
  eval::ScoredSet set;
  set.predictions = model::PredictAll(model, test);
  for (const auto& s : test) {
    set.labels.push_back(s.label);
    set.ad_ids.push_back(s.ad_id);
  }
  for (double p : set.predictions) {
    if (!std::isfinite(p)) throw NumericalError("evaluate: non-finite prediction for " + name);
  }
  const std::map<int, double> ir = sim::ReadPropensities(aug / "ir.tsv");
  eval::MetricsReport report = eval::Score(set, ir, c.group_scheme, c.n_groups);
  report.variant = name;
  report.seed = seed;
  report.dataset_id = DatasetId(augmented);
  report.curve = model::ReadCurve(train_dir / "curve.csv");
  json meta = ReadJsonFile(train_dir / "train.json");
  for (const char* bulky : {"step_losses", "step_weight_sums", "dataset_id"}) meta.erase(bulky);
  report.metadata = meta;

  const fs::path dir = EnsureDir(StageDir(ctx, seed, "evaluate") / name);
  eval::WriteReport(dir / "report.json", report);
  RunManifest m;
  m.stage = "evaluate";
  m.config_hash = JsonDigest(EvaluateScope(c, seed, name));
  m.inputs = trained;
  m.inputs.insert(augmented.begin(), augmented.end());
  m.inputs.insert(generated.begin(), generated.end());
  m.timings_seconds["evaluate"] = clock.Seconds();
  WriteManifest(dir, root, m, {dir / "report.json"});
  char buf[96];
  std::snprintf(buf, sizeof buf, "AUC %.4f ECE %.4f", report.auc.value_or(NAN), report.ece);
  Log(ctx, SeedTag(seed) + "evaluated " + name + ": " + buf);
}

}  // namespace

fs::path SeedDir(const RunContext& ctx, std::uint64_t seed) {
  return ctx.out_dir / ("seed-" + std::to_string(seed));
}

fs::path ReportPath(const RunContext& ctx, std::uint64_t seed, const std::string& variant) {
  return StageDir(ctx, seed, "evaluate") / variant / "report.json";
}

void Generate(const RunContext& ctx, std::uint64_t seed) {
  if (!fs::is_directory(ctx.out_dir)) {
    throw ConfigError("output directory " + ctx.out_dir.string() + " does not exist");
  }
  const Stopwatch clock;
  const ExperimentConfig& c = ctx.config;
  const fs::path dir = EnsureDir(StageDir(ctx, seed, "generate"));
  const sim::Catalog catalog = sim::GenerateCatalog(c.catalog, DeriveSeed(seed, kCatalogStream));
  const sim::ScoringFn proxy =
      sim::MakeNoisyProxy(catalog, c.proxy_noise_sigma, DeriveSeed(seed, kProxyStream));
  RunManifest m;
  m.stage = "generate";
  m.config_hash = JsonDigest(GenerateScope(c, seed));
  std::vector<fs::path> outputs = {dir / "catalog.json"};
  sim::WriteCatalog(dir / "catalog.json", catalog);
  m.timings_seconds["catalog"] = clock.Seconds();
  const std::pair<const char*, std::pair<const LogSpec*, Stream>> logs[] = {
      {"ad", {&c.ad_log, kAdLogStream}},
      {"rec", {&c.rec_log, kRecLogStream}},
      {"test", {&c.test_log, kTestLogStream}}};
  for (const auto& [name, spec] : logs) {
    const Stopwatch t;
    const sim::ImpressionLog log = sim::RunSessions(
        catalog, spec.first->policy, spec.first->sessions,
        spec.first->policy == sim::Policy::kUniform ? nullptr : proxy, DeriveSeed(seed, spec.second));
    const fs::path path = dir / (std::string(name) + ".log");
    sim::WriteImpressionLog(path, log);
    outputs.push_back(path);
    outputs.push_back(sim::CandidatesPath(path));
    m.timings_seconds[std::string(name) + "_log"] = t.Seconds();
    Log(ctx, SeedTag(seed) + name + " log: " + std::to_string(log.records.size()) + " records");
  }
  WriteManifest(dir, SeedDir(ctx, seed), m, outputs);
}

void Augment(const RunContext& ctx, std::uint64_t seed) {
  const Stopwatch clock;
  const ExperimentConfig& c = ctx.config;
  const auto generated = VerifyGenerate(ctx, seed);
  const fs::path gen = StageDir(ctx, seed, "generate");
  const fs::path dir = EnsureDir(StageDir(ctx, seed, "augment"));
  const sim::Catalog catalog = sim::ReadCatalog(gen / "catalog.json");
  const sim::ImpressionLog ad_log = sim::ReadImpressionLog(gen / "ad.log");
  const sim::ImpressionLog rec_log = sim::ReadImpressionLog(gen / "rec.log");
  const sim::ImpressionLog test_log = sim::ReadImpressionLog(gen / "test.log");
  if (ad_log.source != sim::Source::kAd || rec_log.source != sim::Source::kRec ||
      test_log.source != sim::Source::kAd) {
    throw StaleInputError("augment: generated logs have unexpected sources");
  }

  const augment::ItemAdsIndex index = augment::BuildItemAdsIndex(catalog.ads);
  const auto kept = augment::RetrieveRecSamples(rec_log, index);
  const auto pseudo = augment::MapPseudoSamples(kept, index, c.augmentation_k,
                                                DeriveSeed(seed, kMappingStream), catalog);
  const std::uint64_t merge_seed = DeriveSeed(seed, kMergeStream);
  augment::WriteSamples(dir / "train_merged.tsv",
                        augment::MergeTrainingSet(ad_log, pseudo, catalog, merge_seed));
  augment::WriteSamples(dir / "train_ads.tsv",
                        augment::MergeTrainingSet(ad_log, {}, catalog, merge_seed));
  augment::WriteSamples(dir / "test.tsv", augment::JoinAdLog(test_log, catalog));
  sim::WritePropensities(dir / "ir.tsv", sim::ImpressionRatio(ad_log));
  Log(ctx, SeedTag(seed) + "augment: " + std::to_string(ad_log.records.size()) + " ad + " +
               std::to_string(pseudo.size()) + " pseudo samples");

  baselines::SimulatorReplay replay;
  replay.catalog = &catalog;
  replay.policy = c.ad_log.policy;
  replay.sessions = c.ad_log.sessions;
  replay.proxy = sim::MakeNoisyProxy(catalog, c.proxy_noise_sigma, DeriveSeed(seed, kProxyStream));
  replay.replay_sessions = c.propensity_replay_sessions;
  replay.seed = DeriveSeed(seed, kReplayStream);
  std::vector<fs::path> outputs = {dir / "train_merged.tsv", dir / "train_ads.tsv",
                                   dir / "test.tsv", dir / "ir.tsv"};
  for (auto source : {baselines::PropensitySource::kSimulatorTruth,
                      baselines::PropensitySource::kIrEstimate}) {
    const fs::path path = dir / PropensityFile(source);
    sim::WritePropensities(path, baselines::PropensityEstimate(ad_log, source, &replay));
    outputs.push_back(path);
  }
  RunManifest m;
  m.stage = "augment";
  m.config_hash = JsonDigest(AugmentScope(c, seed));
  m.inputs = generated;
  m.timings_seconds["augment"] = clock.Seconds();
  WriteManifest(dir, SeedDir(ctx, seed), m, outputs);
}

void Train(const RunContext& ctx, std::uint64_t seed, const std::vector<std::string>& variants) {
  for (const std::string& v : variants) ResolveVariant(v, ctx.config);
  ParallelFor(static_cast<int>(variants.size()), ctx.threads,
              [&](int i) { TrainOne(ctx, seed, variants[static_cast<std::size_t>(i)]); });
}

void Evaluate(const RunContext& ctx, std::uint64_t seed,
              const std::vector<std::string>& variants) {
  for (const std::string& v : variants) ResolveVariant(v, ctx.config);
  ParallelFor(static_cast<int>(variants.size()), ctx.threads,
              [&](int i) { EvaluateOne(ctx, seed, variants[static_cast<std::size_t>(i)]); });
}

void Ablate(const RunContext& ctx, std::uint64_t seed) {
  Train(ctx, seed, AblationVariants());
  Evaluate(ctx, seed, AblationVariants());
}

eval::Comparison Report(const RunContext& ctx, const std::vector<std::string>& variants) {
  const Stopwatch clock;
  std::vector<eval::MetricsReport> reports;
  RunManifest m;
  m.stage = "report";
  m.config_hash = JsonDigest(ctx.config.ToJson());
  for (std::uint64_t seed : ctx.config.seeds) {
    const fs::path eval_dir = StageDir(ctx, seed, "evaluate");
    if (!fs::is_directory(eval_dir)) {
      throw StaleInputError("no evaluated variants under " + eval_dir.string());
    }
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(eval_dir)) {
      const std::string name = entry.path().filename().string();
      if (variants.empty() ||
          std::find(variants.begin(), variants.end(), name) != variants.end()) {
        names.push_back(name);
      }
    }
    for (const std::string& v : variants) {
      if (std::find(names.begin(), names.end(), v) == names.end()) {
        throw StaleInputError("variant " + v + " was not evaluated for seed " +
                              std::to_string(seed));
      }
    }
    std::sort(names.begin(), names.end());
    for (const std::string& name : names) {
      const auto outputs = VerifyUpstream(eval_dir / name, SeedDir(ctx, seed), "evaluate",
                                          JsonDigest(EvaluateScope(ctx.config, seed, name)));
      for (const auto& [rel, digest] : outputs) {
        m.inputs["seed-" + std::to_string(seed) + "/" + rel] = digest;
      }
      reports.push_back(eval::ReadReport(eval_dir / name / "report.json"));
    }
  }
  // Stable order: BASE first, then as configured, then the rest by name.
  std::vector<std::string> order = {"BASE"};
  for (const std::string& v : ctx.config.variants) order.push_back(v);
  for (const std::string& v : AblationVariants()) order.push_back(v);
  const auto rank = [&](const std::string& v) {
    return std::find(order.begin(), order.end(), v) - order.begin();
  };
  std::stable_sort(reports.begin(), reports.end(),
                   [&](const eval::MetricsReport& a, const eval::MetricsReport& b) {
                     return rank(a.variant) < rank(b.variant);
                   });
  const bool has_base = std::any_of(reports.begin(), reports.end(),
                                    [](const auto& r) { return r.variant == "BASE"; });
  eval::Comparison comparison = eval::RenderReport(reports, has_base);
  const fs::path dir = EnsureDir(ctx.out_dir / "report");
  WriteJsonFile(dir / "comparison.json", comparison.document);
  {
    std::ofstream out = OpenOut(dir / "comparison.txt");
    out << comparison.table;
  }
  m.timings_seconds["report"] = clock.Seconds();
  WriteManifest(dir, ctx.out_dir, m, {dir / "comparison.json", dir / "comparison.txt"});
  return comparison;
}

}  // namespace rec4ad::pipeline
