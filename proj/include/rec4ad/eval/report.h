#ifndef REC4AD_EVAL_REPORT_H_
#define REC4AD_EVAL_REPORT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rec4ad/eval/curve.h"

namespace rec4ad::eval {

// Predictions, labels and ads of one evaluation set, index-aligned.
struct ScoredSet {
  std::vector<double> predictions;
  std::vector<double> labels;
  std::vector<int> ad_ids;

  // Throws ShapeError on unequal lengths or predictions outside [0, 1].
  void Validate() const;
  std::size_t size() const { return labels.size(); }
};

struct GroupMetrics {
  std::string name;
  std::size_t ads = 0;
  std::size_t samples = 0;
  std::size_t positives = 0;
  // Absent for an empty or single-class group.
  std::optional<double> auc;
  // Absent for an empty group.
  std::optional<double> ece;
  friend bool operator==(const GroupMetrics&, const GroupMetrics&) = default;
};

enum class GroupScheme { kQuartiles, kEqualGroups };

// Splits ads by descending IR into groups (four for kQuartiles, named
// G_top, G_q2, G_q3, G_bottom; n_groups otherwise, named group_1..group_n,
// group_1 holding the highest IR) and scores each group's samples.
// n_groups = 1 puts every ad in one group. Throws ConfigError when an ad of
// the set has no IR entry or n_groups < 1.
std::vector<GroupMetrics> GroupReport(const ScoredSet& set, const std::map<int, double>& ir,
                                      GroupScheme scheme, int n_groups = 4);

// AUC of discriminator outputs against the source flags (1 = ad). Throws
// ShapeError when the slice holds a single source.
double AdversaryAuc(std::span<const double> s_hat, std::span<const double> is_ad);

struct MetricsReport {
  std::string variant;
  std::uint64_t seed = 0;
  // Identity of the dataset the variant was trained and tested on.
  std::string dataset_id;
  std::size_t samples = 0;
  std::optional<double> auc;
  double ece = 0.0;
  std::vector<GroupMetrics> groups;
  std::vector<CurvePoint> curve;
  // Free-form variant metadata: switch states, effective loss weights.
  nlohmann::json metadata = nlohmann::json::object();

  nlohmann::json ToJson() const;
  static MetricsReport FromJson(const nlohmann::json& j);
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Scores a set overall and per group.
MetricsReport Score(const ScoredSet& set, const std::map<int, double>& ir, GroupScheme scheme,
                    int n_groups = 4);

void WriteReport(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport ReadReport(const std::filesystem::path& path);

struct PairedTTest {
  std::size_t n = 0;
  double mean_diff = 0.0;
  double t = 0.0;
  // Two-sided p-value; absent with fewer than two pairs.
  std::optional<double> p_value;
};

// Paired t-test of a - b. Zero spread gives p = 1 when every difference is
// zero and p = 0 otherwise. Throws ShapeError on unequal lengths.
PairedTTest PairedT(std::span<const double> a, std::span<const double> b);

struct Comparison {
  nlohmann::json document;
  std::string table;
};

// Aggregates reports per variant (mean and sample std over seeds) and
// compares every variant with the BASE variant over the seeds both share:
// AUC Impv. = AUC - AUC_BASE, ECE Impv. = ECE_BASE - ECE (positive is better
// for both), with a paired t-test on AUC. Throws ConfigError when `reports`
// is empty, BASE is missing while improvements are requested, a
// (variant, seed) pair repeats, or two reports of one seed disagree on the
// dataset.
Comparison RenderReport(std::span<const MetricsReport> reports, bool improvements = true,
                        const std::string& baseline = "BASE");

}  // namespace rec4ad::eval

#endif  // REC4AD_EVAL_REPORT_H_
