// Acceptance run: one PASS/FAIL line per criterion, then a summary.
// Usage: acceptance [--work-dir DIR] [--criteria 1,2,...] [--strict]
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "CLI11.hpp"
#include "rec4ad/sim/log_io.h"
#include "rec4ad/augment/augmentation.h"
#include "rec4ad/baselines/variants.h"
#include "rec4ad/common/random.h"
#include "rec4ad/diffcore/ops.h"
#include "rec4ad/eval/metrics.h"
#include "rec4ad/eval/report.h"
#include "rec4ad/model/model.h"
#include "rec4ad/pipeline/config.h"
#include "rec4ad/pipeline/stages.h"
#include "rec4ad/sim/sessions.h"

namespace {

namespace fs = std::filesystem;
using namespace rec4ad;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

// --- 1. gradient certification ---------------------------------------------

Outcome GradientCertification() {
  sim::CatalogConfig cc;
  cc.num_users = 50;
  cc.num_items = 80;
  cc.num_categories = 6;
  cc.num_brands = 10;
  cc.num_campaigns = 5;
  cc.max_behavior_len = 5;
  const sim::Catalog catalog = sim::GenerateCatalog(cc, 41);
  model::ModelConfig config;  // published sizes, all switches on
  config.vocab = model::VocabFromCatalog(catalog);
  model::Rec4AdModel net(config, 42);
  std::mt19937_64 rng(43);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (auto& [name, p] : net.params().entries()) {
    if (!p.trainable) continue;
    for (Eigen::Index k = 0; k < p.value.size(); ++k) p.value.data()[k] += noise(rng);
  }
  std::vector<augment::UnifiedSample> rows;
  std::uniform_int_distribution<int> user(0, cc.num_users - 1);
  std::uniform_int_distribution<int> ad(0, static_cast<int>(catalog.ads.size()) - 1);
  for (int r = 0; r < 8; ++r) {
    rows.push_back(augment::JoinSample(catalog, user(rng), ad(rng), {r % 4, r % 3}, r % 3 == 0,
                                       r % 2 ? sim::Source::kRec : sim::Source::kAd));
  }
  diffcore::GradientCheckOptions options;
  options.max_entries_per_param = 48;
  const auto report = model::CertifyGradients(net, model::MakeBatch(rows, config.vocab), options);

  // Gradient reversal with the published alpha: -0.1 x upstream, bit for bit.
  diffcore::ParameterStore store;
  diffcore::Matrix x = diffcore::Matrix::Random(16, 32);
  diffcore::Matrix upstream = diffcore::Matrix::Random(16, 32);
  diffcore::Parameter& p = store.add("x", x);
  bool grl_exact = false;
  {
    diffcore::Tape tape;
    const auto rev = diffcore::GradientReversal(tape.param(p), 0.1);
    grl_exact = rev.value() == x;
    tape.backward(diffcore::Sum(diffcore::Mul(rev, tape.constant(upstream))));
  }
  for (Eigen::Index k = 0; k < upstream.size(); ++k) {
    grl_exact = grl_exact && p.grad.data()[k] == -0.1 * upstream.data()[k];
  }
  Outcome o;
  o.pass = report.max_rel_error <= 1e-4 && grl_exact;
  o.detail = "max rel err " + Fmt("%.2e", report.max_rel_error) + " over " +
             std::to_string(report.entries_checked) + " entries (worst " + report.worst_param +
             ", limit 1e-4); GRL backward " + (grl_exact ? "== -0.1 x upstream exactly" : "INEXACT");
  return o;
}

// --- 2. oracle equivalence ----------------------------------------------------

double PairwiseAuc(const std::vector<double>& s, const std::vector<double>& y) {
  double good = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1.0 || y[j] != 0.0) continue;
      pairs += 1.0;
      good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return good / pairs;
}

double HandEce(const std::vector<double>& p, const std::vector<double>& y) {
  double total = 0.0;
  for (int k = 0; k < 100; ++k) {
    double gap = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool in = p[i] >= k / 100.0 && (p[i] < (k + 1) / 100.0 || (k == 99 && p[i] <= 1.0));
      if (in) gap += y[i] - p[i];
    }
    total += std::abs(gap);
  }
  return total / static_cast<double>(p.size());
}

Outcome OracleEquivalence() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_auc = 0.0, worst_ece = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + static_cast<int>(rng() % 499);
    std::vector<double> s, y;
    for (int i = 0; i < n; ++i) {
      s.push_back(t % 2 ? std::round(u(rng) * 25.0) / 25.0 : u(rng));
      y.push_back(u(rng) < 0.35 ? 1.0 : 0.0);
    }
    y[0] = 1.0;
    y[1] = 0.0;
    worst_auc = std::max(worst_auc, std::abs(*eval::Auc(s, y) - PairwiseAuc(s, y)));
  }
  for (int t = 0; t < 20; ++t) {
    const int n = 10 + static_cast<int>(rng() % 490);
    std::vector<double> p, y;
    for (int i = 0; i < n; ++i) {
      p.push_back(i % 4 == 0 ? static_cast<double>(rng() % 101) / 100.0 : u(rng));
      y.push_back(u(rng) < p.back() ? 1.0 : 0.0);
    }
    worst_ece = std::max(worst_ece, std::abs(eval::Ece(p, y) - HandEce(p, y)));
  }
  return {worst_auc <= 1e-12 && worst_ece <= 1e-12,
          "AUC vs pairwise oracle (100 sets) max diff " + Fmt("%.1e", worst_auc) +
              "; ECE vs hand evaluation (20 sets) max diff " + Fmt("%.1e", worst_ece) +
              " (limit 1e-12)"};
}

// --- 3 and 4. bias and mechanism flip -------------------------------------------

struct BiasWorld {
  sim::Catalog catalog;
  sim::ScoringFn proxy;
  sim::ImpressionLog ad_log;
};

const BiasWorld& DefaultWorld() {
  static const BiasWorld w = [] {
    BiasWorld b;
    b.catalog = sim::GenerateCatalog(sim::CatalogConfig{}, 501);
    b.proxy = sim::MakeNoisyProxy(b.catalog, 0.3, 502);
    sim::SessionConfig sessions;  // 10^4 sessions, 50 candidates, 10 slots
    b.ad_log = sim::RunSessions(b.catalog, sim::Policy::kEcpm, sessions, b.proxy, 503);
    return b;
  }();
  return w;
}

Outcome BiasReproduction() {
  const BiasWorld& w = DefaultWorld();
  const auto ir = sim::ImpressionRatio(w.ad_log);
  const auto groups = sim::IrGroupPartition(ir, 12);
  const auto mean_ir = [&](const std::vector<int>& g) {
    double s = 0.0;
    for (int ad : g) s += ir.at(ad);
    return s / static_cast<double>(g.size());
  };
  const double top = mean_ir(groups.front()), bottom = mean_ir(groups.back());
  const double ratio = bottom > 0.0 ? top / bottom : INFINITY;
  return {ratio >= 10.0, "ECPM, 10^4 sessions, 12 IR groups: top " + Fmt("%.4f", top) +
                             " / bottom " + Fmt("%.4f", bottom) + " = " + Fmt("%.1f", ratio) +
                             " (need >= 10)"};
}

Outcome MechanismFlip() {
  const BiasWorld& w = DefaultWorld();
  std::map<std::int64_t, std::vector<int>> shown;
  std::map<std::int64_t, const sim::ImpressionRecord*> first;
  for (const auto& r : w.ad_log.records) {
    shown[r.session_id].push_back(r.subject_id);
    first.emplace(r.session_id, &r);
  }
  int changed = 0, sessions = 0;
  for (const auto& [sid, displayed] : shown) {
    const sim::ImpressionRecord& r = *first.at(sid);
    std::vector<int> flipped = sim::RankCandidates(
        w.catalog, sim::Policy::kPctr, sim::Source::kAd, w.catalog.users[r.user_id], r.context,
        w.ad_log.candidate_sets[static_cast<std::size_t>(sid)],
        static_cast<int>(displayed.size()), w.proxy, 0);
    std::set<int> a(displayed.begin(), displayed.end()), b(flipped.begin(), flipped.end());
    changed += a != b;
    ++sessions;
  }
  const double share = static_cast<double>(changed) / sessions;
  return {share >= 0.2, "PCTR re-rank changes the displayed set in " + Fmt("%.1f", 100 * share) +
                            "% of " + std::to_string(sessions) + " sessions (need >= 20%)"};
}

// --- 5 to 8 and 10. the desk-scale experiment -----------------------------------

struct Desk {
  pipeline::RunContext ctx;
  std::vector<eval::MetricsReport> base, rec4ad;  // index-aligned by seed
};

Desk& DeskRuns(const fs::path& work) {
  static Desk desk = [&] {
    Desk d;
    d.ctx.config = pipeline::ExperimentConfig();
    d.ctx.config.variants = {"BASE", "REC4AD"};
    d.ctx.out_dir = work / "desk";
    d.ctx.log = &std::cerr;
    fs::remove_all(d.ctx.out_dir);
    fs::create_directories(d.ctx.out_dir);
    for (std::uint64_t seed : d.ctx.config.seeds) {
      pipeline::Generate(d.ctx, seed);
      pipeline::Augment(d.ctx, seed);
      pipeline::Train(d.ctx, seed, d.ctx.config.variants);
      pipeline::Evaluate(d.ctx, seed, d.ctx.config.variants);
      d.base.push_back(eval::ReadReport(pipeline::ReportPath(d.ctx, seed, "BASE")));
      d.rec4ad.push_back(eval::ReadReport(pipeline::ReportPath(d.ctx, seed, "REC4AD")));
    }
    const eval::Comparison c = pipeline::Report(d.ctx);
    std::cerr << c.table;
    return d;
  }();
  return desk;
}

double Mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Outcome DirectionalDebiasing(const fs::path& work) {
  const Desk& d = DeskRuns(work);
  std::vector<double> a, b, ea, eb;
  for (std::size_t i = 0; i < d.base.size(); ++i) {
    a.push_back(d.rec4ad[i].auc.value_or(NAN));
    b.push_back(d.base[i].auc.value_or(NAN));
    ea.push_back(d.rec4ad[i].ece);
    eb.push_back(d.base[i].ece);
  }
  const eval::PairedTTest t = eval::PairedT(a, b);
  const double p = t.p_value.value_or(1.0);
  const bool ok = t.mean_diff >= 0.003 && p < 0.05 && Mean(ea) <= Mean(eb);
  return {ok, std::to_string(a.size()) + " seeds: AUC Rec4Ad " + Fmt("%.4f", Mean(a)) +
                  " vs Base " + Fmt("%.4f", Mean(b)) + ", diff " + Fmt("%+.4f", t.mean_diff) +
                  " (need >= +0.003), paired t p = " + Fmt("%.4f", p) +
                  " (need < 0.05); ECE " + Fmt("%.4f", Mean(ea)) + " vs " + Fmt("%.4f", Mean(eb)) +
                  " (need <=)"};
}

std::optional<double> GroupAuc(const eval::MetricsReport& r, const std::string& name) {
  for (const auto& g : r.groups) {
    if (g.name == name) return g.auc;
  }
  return std::nullopt;
}

Outcome GroupGains(const fs::path& work) {
  const Desk& d = DeskRuns(work);
  std::vector<double> top, bottom;
  for (std::size_t i = 0; i < d.base.size(); ++i) {
    const auto rt = GroupAuc(d.rec4ad[i], "G_top"), bt = GroupAuc(d.base[i], "G_top");
    const auto rb = GroupAuc(d.rec4ad[i], "G_bottom"), bb = GroupAuc(d.base[i], "G_bottom");
    if (!rt || !bt || !rb || !bb) return {false, "a group AUC is absent"};
    top.push_back(*rt - *bt);
    bottom.push_back(*rb - *bb);
  }
  const double gt = Mean(top), gb = Mean(bottom);
  return {gb >= gt && gt >= -0.001,
          "mean AUC gain G_bottom " + Fmt("%+.4f", gb) + " vs G_top " + Fmt("%+.4f", gt) +
              " (need bottom >= top, top >= -0.001)"};
}

Outcome AdversaryConvergence(const fs::path& work) {
  const Desk& d = DeskRuns(work);
  // Seed-averaged curve; every run shares the diagnostic schedule.
  const std::size_t points = d.rec4ad.front().curve.size();
  std::vector<double> mean(points, 0.0);
  std::string ends;
  for (const auto& r : d.rec4ad) {
    if (r.curve.size() != points) return {false, "curves differ in length"};
    for (std::size_t k = 0; k < points; ++k) mean[k] += r.curve[k].adversary_auc.value_or(NAN);
    ends += (ends.empty() ? "" : " ") + Fmt("%.3f", r.curve.back().adversary_auc.value_or(NAN));
  }
  for (double& v : mean) v /= static_cast<double>(d.rec4ad.size());
  // "Early": within the first epoch.
  double early_peak = 0.0;
  for (std::size_t k = 0; k < points && d.rec4ad.front().curve[k].epoch <= 1.0; ++k) {
    early_peak = std::max(early_peak, mean[k]);
  }
  const double end = mean.back();
  std::string curve;
  for (std::size_t k = 0; k < points; ++k) curve += (k ? " " : "") + Fmt("%.2f", mean[k]);
  return {early_peak > 0.6 && end >= 0.45 && end <= 0.55,
          "mean adversary AUC peaks " + Fmt("%.3f", early_peak) + " in epoch 1 (need > 0.6), ends " +
              Fmt("%.3f", end) + " (need [0.45, 0.55]); per-seed ends " + ends + "; curve " +
              curve};
}

Outcome DecorrelationEfficacy(const fs::path& work) {
  const Desk& d = DeskRuns(work);
  bool ok = true;
  std::string ratios, base_ratios;
  for (std::size_t i = 0; i < d.rec4ad.size(); ++i) {
    const auto& c = d.rec4ad[i].curve;
    const double r = c.back().mean_sq_xcorr / c.front().mean_sq_xcorr;
    ok = ok && r <= 0.5;
    ratios += (ratios.empty() ? "" : " ") + Fmt("%.2f", r);
    const auto& b = d.base[i].curve;
    base_ratios += (base_ratios.empty() ? "" : " ") +
                   Fmt("%.2f", b.back().mean_sq_xcorr / b.front().mean_sq_xcorr);
  }
  return {ok, "final/epoch-0 mean squared cross-correlation per seed: " + ratios +
                  " (need <= 0.50); without decorrelation (Base): " + base_ratios};
}

// --- 9. reduction identities ---------------------------------------------------

bool SameTrajectory(const baselines::VariantRun& a, const baselines::VariantRun& b) {
  if (a.result.step_losses != b.result.step_losses) return false;
  for (const auto& [name, p] : a.model.params().entries()) {
    if (!(p.value == b.model.params().get(name).value)) return false;
  }
  return true;
}

Outcome ReductionIdentities(const fs::path& work) {
  const Desk& d = DeskRuns(work);
  const fs::path seed_dir = pipeline::SeedDir(d.ctx, d.ctx.config.seeds.front());
  const sim::Catalog catalog = sim::ReadCatalog(seed_dir / "generate" / "catalog.json");
  auto ads = augment::ReadSamples(seed_dir / "augment" / "train_ads.tsv");
  ads.resize(std::min<std::size_t>(ads.size(), 4096));
  const auto propensity =
      sim::ReadPropensities(seed_dir / "augment" / "propensity_simulator_truth.tsv");
  const model::ModelConfig config = d.ctx.config.model_config(catalog);
  model::TrainConfig train = d.ctx.config.train_config();
  train.epochs = 1;
  const std::uint64_t seed = 77;
  using baselines::MakeSpec;
  using baselines::VariantKind;
  const auto base = baselines::TrainVariant(MakeSpec(VariantKind::kBase), ads, nullptr, config,
                                            train, seed);
  model::ModelConfig off = config;
  off.use_sabn = off.use_alignment = off.use_decorrelation = off.use_source_heads = false;
  const auto rec4ad =
      baselines::TrainVariant(MakeSpec(VariantKind::kRec4Ad), ads, nullptr, off, train, seed);
  std::map<int, double> ones;
  for (const auto& [ad, p] : propensity) ones[ad] = 1.0;
  const auto ips =
      baselines::TrainVariant(MakeSpec(VariantKind::kIps), ads, &ones, config, train, seed);
  baselines::VariantSpec capped = MakeSpec(VariantKind::kIpsC);
  capped.cap = 1.0;
  const auto ipsc = baselines::TrainVariant(capped, ads, &propensity, config, train, seed);
  const bool a = SameTrajectory(base, rec4ad), b = SameTrajectory(base, ips),
             c = SameTrajectory(base, ipsc);
  const auto word = [](bool x) { return x ? "bitwise" : "DIFFERS"; };
  return {a && b && c, std::to_string(base.result.steps) +
                           " steps at published sizes: REC4AD(off, ads only) " + word(a) +
                           ", IPS(unit propensity) " + word(b) + ", IPS-C(cap 1) " + word(c)};
}

// --- 10. determinism -----------------------------------------------------------

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome Determinism(const fs::path& work, const std::string& cli) {
  const Desk& d = DeskRuns(work);
  const std::uint64_t seed = d.ctx.config.seeds.front();
  const fs::path dir = work / "rerun";
  fs::remove_all(dir);
  fs::create_directories(dir);
  pipeline::ExperimentConfig config = d.ctx.config;
  const fs::path config_path = work / "rerun.json";
  std::ofstream(config_path) << config.ToJson().dump(2) << '\n';
  for (const char* stage : {"generate", "augment", "train", "evaluate"}) {
    const std::string cmd = cli + " " + stage + " --config " + config_path.string() +
                            " --out-dir " + dir.string() + " --seed " + std::to_string(seed) +
                            " --variant BASE,REC4AD";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      return {false, std::string("CLI stage ") + stage + " failed"};
    }
  }
  pipeline::RunContext rerun = d.ctx;
  rerun.out_dir = dir;
  bool same = true;
  for (const char* v : {"BASE", "REC4AD"}) {
    const std::string a = Slurp(pipeline::ReportPath(d.ctx, seed, v));
    const std::string b = Slurp(pipeline::ReportPath(rerun, seed, v));
    same = same && !a.empty() && a == b;
  }
  return {same, std::string("seed ") + std::to_string(seed) +
                    " rerun through the CLI: metrics reports " +
                    (same ? "bit-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = (fs::temp_directory_path() / "rec4ad_acceptance").string();
  std::vector<int> only;
  bool strict = false;
  std::string cli = REC4AD_CLI;
  app.add_option("--work-dir", work, "scratch directory for pipeline runs");
  app.add_option("--criteria", only, "run only these criteria")->delimiter(',');
  app.add_flag("--strict", strict, "exit non-zero when a criterion fails");
  app.add_option("--cli", cli, "path of the rec4ad tool");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const fs::path w = work;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient certification", GradientCertification},
      {"oracle equivalence", OracleEquivalence},
      {"bias reproduction", BiasReproduction},
      {"mechanism flip", MechanismFlip},
      {"directional debiasing", [&] { return DirectionalDebiasing(w); }},
      {"group gains", [&] { return GroupGains(w); }},
      {"adversary convergence", [&] { return AdversaryConvergence(w); }},
      {"decorrelation efficacy", [&] { return DecorrelationEfficacy(w); }},
      {"reduction identities", [&] { return ReductionIdentities(w); }},
      {"determinism", [&] { return Determinism(w, cli); }},
  };
  // ctest hides the output of passing tests, so the lines are kept on disk too.
  std::ofstream results(fs::path(work) / "results.txt");
  int passed = 0, run = 0;
  bool crashed = false;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
      crashed = true;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string line = std::string(o.pass ? "PASS" : "FAIL") + "  [" + std::to_string(id) +
                             "] " + criteria[i].first + ": " + o.detail + " (" +
                             Fmt("%.1f", secs) + " s)";
    std::cout << line << std::endl;
    results << line << '\n' << std::flush;
    passed += o.pass;
    ++run;
  }
  std::cout << passed << "/" << run << " criteria passed" << std::endl;
  results << passed << "/" << run << " criteria passed\n";
  if (crashed) return 2;
  return strict && passed != run ? 1 : 0;
}
