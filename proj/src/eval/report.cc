#include "rec4ad/eval/report.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "rec4ad/common/error.h"
#include "rec4ad/common/text.h"
#include "rec4ad/eval/metrics.h"
#include "rec4ad/sim/sessions.h"

namespace rec4ad::eval {

using nlohmann::json;

namespace {

constexpr const char* kReportSchema = "rec4ad.report/1";
constexpr const char* kComparisonSchema = "rec4ad.comparison/1";

json Optional(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> OptionalFrom(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

GroupMetrics ScoreGroup(const ScoredSet& set, const std::vector<std::size_t>& rows) {
  GroupMetrics g;
  g.samples = rows.size();
  if (rows.empty()) return g;
  std::vector<double> p, y;
  for (std::size_t r : rows) {
    p.push_back(set.predictions[r]);
    y.push_back(set.labels[r]);
  }
  g.positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1.0));
  g.auc = Auc(p, y);
  g.ece = Ece(p, y);
  return g;
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

Summary Summarise(const std::vector<double>& v) {
  Summary s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

std::string Fixed(double v, int digits, bool sign = false) {
  char buf[64];
  std::snprintf(buf, sizeof buf, sign ? "%+.*f" : "%.*f", digits, v);
  return buf;
}

std::string Pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

// Metric values of one variant keyed by seed, for one scope (overall or a group).
struct ScopeValues {
  std::map<std::uint64_t, double> auc;
  std::map<std::uint64_t, double> ece;
};

}  // namespace

void ScoredSet::Validate() const {
  if (predictions.size() != labels.size() || ad_ids.size() != labels.size()) {
    throw ShapeError("scored set: predictions, labels and ad ids differ in length");
  }
  for (double p : predictions) {
    if (!(p >= 0.0 && p <= 1.0)) throw ShapeError("scored set: prediction outside [0, 1]");
  }
}

std::vector<GroupMetrics> GroupReport(const ScoredSet& set, const std::map<int, double>& ir,
                                      GroupScheme scheme, int n_groups) {
  set.Validate();
  const int groups = scheme == GroupScheme::kQuartiles ? 4 : n_groups;
  if (groups < 1) throw ConfigError("group report: n_groups must be >= 1");
  for (int ad : set.ad_ids) {
    if (!ir.contains(ad)) throw ConfigError("group report: no IR for ad " + std::to_string(ad));
  }
  std::vector<std::vector<int>> partition;
  if (groups == 1) {
    partition.emplace_back();
    for (const auto& [ad, v] : ir) partition.back().push_back(ad);
  } else {
    partition = sim::IrGroupPartition(ir, groups);
  }
  std::map<int, std::size_t> group_of;
  for (std::size_t g = 0; g < partition.size(); ++g) {
    for (int ad : partition[g]) group_of[ad] = g;
  }
  std::vector<std::vector<std::size_t>> rows(partition.size());
  for (std::size_t i = 0; i < set.size(); ++i) rows[group_of.at(set.ad_ids[i])].push_back(i);

  std::vector<GroupMetrics> out;
  for (std::size_t g = 0; g < partition.size(); ++g) {
    GroupMetrics m = ScoreGroup(set, rows[g]);
    if (scheme == GroupScheme::kQuartiles) {
      static const char* const kNames[] = {"G_top", "G_q2", "G_q3", "G_bottom"};
      m.name = kNames[g];
    } else {
      m.name = "group_" + std::to_string(g + 1);
    }
    m.ads = partition[g].size();
    out.push_back(std::move(m));
  }
  return out;
}

double AdversaryAuc(std::span<const double> s_hat, std::span<const double> is_ad) {
  const std::optional<double> auc = Auc(s_hat, is_ad);
  if (!auc) throw ShapeError("adversary auc: the slice holds a single source");
  return *auc;
}

json MetricsReport::ToJson() const {
  json groups_json = json::array();
  for (const GroupMetrics& g : groups) {
    groups_json.push_back({{"name", g.name},
                           {"ads", g.ads},
                           {"samples", g.samples},
                           {"positives", g.positives},
                           {"auc", Optional(g.auc)},
                           {"ece", Optional(g.ece)}});
  }
  json curve_json = json::array();
  for (const CurvePoint& p : curve) {
    curve_json.push_back({{"epoch", p.epoch},
                          {"L_C", p.l_c},
                          {"L_A", p.l_a},
                          {"L_D", p.l_d},
                          {"adversary_auc", Optional(p.adversary_auc)},
                          {"mean_sq_xcorr", p.mean_sq_xcorr}});
  }
  return {{"schema", kReportSchema},
          {"variant", variant},
          {"seed", seed},
          {"dataset_id", dataset_id},
          {"samples", samples},
          {"auc", Optional(auc)},
          {"ece", ece},
          {"groups", groups_json},
          {"curve", curve_json},
          {"metadata", metadata}};
}

MetricsReport MetricsReport::FromJson(const json& j) {
  try {
    if (j.at("schema") != kReportSchema) throw FormatError("report: unknown schema");
    MetricsReport r;
    r.variant = j.at("variant").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.samples = j.at("samples").get<std::size_t>();
    r.auc = OptionalFrom(j.at("auc"));
    r.ece = j.at("ece").get<double>();
    for (const json& g : j.at("groups")) {
      r.groups.push_back({g.at("name").get<std::string>(), g.at("ads").get<std::size_t>(),
                          g.at("samples").get<std::size_t>(), g.at("positives").get<std::size_t>(),
                          OptionalFrom(g.at("auc")), OptionalFrom(g.at("ece"))});
    }
    for (const json& p : j.at("curve")) {
      r.curve.push_back({p.at("epoch").get<double>(), p.at("L_C").get<double>(),
                         p.at("L_A").get<double>(), p.at("L_D").get<double>(),
                         OptionalFrom(p.at("adversary_auc")), p.at("mean_sq_xcorr").get<double>()});
    }
    r.metadata = j.at("metadata");
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

MetricsReport Score(const ScoredSet& set, const std::map<int, double>& ir, GroupScheme scheme,
                    int n_groups) {
  set.Validate();
  MetricsReport r;
  r.samples = set.size();
  r.auc = Auc(set.predictions, set.labels);
  r.ece = Ece(set.predictions, set.labels);
  r.groups = GroupReport(set, ir, scheme, n_groups);
  return r;
}

void WriteReport(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out = OpenOut(path);
  out << report.ToJson().dump(2) << '\n';
  if (!out) throw FormatError("failed writing " + path.string());
}

MetricsReport ReadReport(const std::filesystem::path& path) {
  std::ifstream in = OpenIn(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return MetricsReport::FromJson(j);
}

PairedTTest PairedT(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("paired t-test: unequal sample sizes");
  PairedTTest r;
  r.n = a.size();
  if (r.n == 0) return r;
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const Summary s = Summarise(d);
  r.mean_diff = s.mean;
  if (r.n < 2) return r;
  if (s.std == 0.0) {
    const bool all_zero = std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; });
    r.t = all_zero ? 0.0 : std::copysign(INFINITY, s.mean);
    r.p_value = all_zero ? 1.0 : 0.0;
    return r;
  }
  r.t = s.mean / (s.std / std::sqrt(static_cast<double>(r.n)));
  const boost::math::students_t dist(static_cast<double>(r.n - 1));
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

Comparison RenderReport(std::span<const MetricsReport> reports, bool improvements,
                        const std::string& baseline) {
  if (reports.empty()) throw ConfigError("report: no inputs");
  std::vector<std::string> variants;
  std::vector<std::string> scopes = {"overall"};
  std::map<std::string, std::map<std::string, ScopeValues>> values;  // variant -> scope
  std::map<std::string, std::set<std::uint64_t>> seeds_of;
  std::map<std::uint64_t, std::string> dataset_of_seed;
  for (const MetricsReport& r : reports) {
    if (!seeds_of[r.variant].insert(r.seed).second) {
      throw ConfigError("report: duplicate report for " + r.variant + " seed " +
                        std::to_string(r.seed));
    }
    const auto [it, fresh] = dataset_of_seed.emplace(r.seed, r.dataset_id);
    if (!fresh && it->second != r.dataset_id) {
      throw ConfigError("report: seed " + std::to_string(r.seed) +
                        " reports disagree on the dataset");
    }
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) {
      variants.push_back(r.variant);
    }
    ScopeValues& overall = values[r.variant]["overall"];
    if (r.auc) overall.auc[r.seed] = *r.auc;
    overall.ece[r.seed] = r.ece;
    for (const GroupMetrics& g : r.groups) {
      if (std::find(scopes.begin(), scopes.end(), g.name) == scopes.end()) {
        scopes.push_back(g.name);
      }
      ScopeValues& sv = values[r.variant][g.name];
      if (g.auc) sv.auc[r.seed] = *g.auc;
      if (g.ece) sv.ece[r.seed] = *g.ece;
    }
  }
  if (improvements && !values.contains(baseline)) {
    throw ConfigError("report: improvements need a " + baseline + " report");
  }

  json doc = {{"schema", kComparisonSchema}, {"baseline", improvements ? json(baseline) : json()}};
  json variants_json = json::array();
  std::ostringstream table;
  for (const std::string& scope : scopes) {
    table << scope << '\n'
          << Pad("variant", 18) << Pad("seeds", 7) << Pad("AUC", 18) << Pad("Impv.", 10)
          << Pad("ECE", 18) << Pad("Impv.", 10) << "p(AUC)\n";
    for (const std::string& v : variants) {
      const ScopeValues& sv = values[v][scope];
      std::vector<double> aucs, eces;
      for (const auto& [seed, x] : sv.auc) aucs.push_back(x);
      for (const auto& [seed, x] : sv.ece) eces.push_back(x);
      const Summary auc = Summarise(aucs);
      const Summary ece = Summarise(eces);
      json row = {{"seeds", json(seeds_of[v])},
                  {"auc_mean", auc.n ? json(auc.mean) : json()},
                  {"auc_std", auc.n ? json(auc.std) : json()},
                  {"ece_mean", ece.n ? json(ece.mean) : json()},
                  {"ece_std", ece.n ? json(ece.std) : json()}};
      std::string auc_impv = "-", ece_impv = "-", p_text = "-";
      if (improvements) {
        // Paired over the seeds both variants scored.
        const ScopeValues& base = values[baseline][scope];
        std::vector<double> a, b, ea, eb;
        for (const auto& [seed, x] : sv.auc) {
          if (const auto it = base.auc.find(seed); it != base.auc.end()) {
            a.push_back(x);
            b.push_back(it->second);
          }
        }
        for (const auto& [seed, x] : sv.ece) {
          if (const auto it = base.ece.find(seed); it != base.ece.end()) {
            ea.push_back(it->second);
            eb.push_back(x);
          }
        }
        if (!a.empty()) {
          const PairedTTest t = PairedT(a, b);
          row["auc_impv"] = t.mean_diff;
          row["paired_n"] = t.n;
          row["t"] = std::isfinite(t.t) ? json(t.t) : json();
          row["p_value"] = Optional(v == baseline ? std::nullopt : t.p_value);
          auc_impv = Fixed(t.mean_diff, 4, true);
          if (v != baseline && t.p_value) p_text = Fixed(*t.p_value, 4);
        }
        if (!ea.empty()) {
          const double impv = Summarise(ea).mean - Summarise(eb).mean;
          row["ece_impv"] = impv;
          ece_impv = Fixed(impv, 4, true);
        }
      }
      doc["scopes"][scope][v] = row;
      const auto cell = [](const Summary& s) {
        return s.n ? Fixed(s.mean, 4) + " ± " + Fixed(s.std, 4) : std::string("absent");
      };
      table << Pad(v, 18) << Pad(std::to_string(seeds_of[v].size()), 7) << Pad(cell(auc), 19)
            << Pad(auc_impv, 10) << Pad(cell(ece), 19) << Pad(ece_impv, 10) << p_text << '\n';
    }
    table << '\n';
  }
  for (const std::string& v : variants) variants_json.push_back(v);
  doc["variants"] = variants_json;
  return {doc, table.str()};
}

}  // namespace rec4ad::eval
