#include "rec4ad/eval/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "rec4ad/common/error.h"

namespace rec4ad::eval {
namespace {

void CheckInputs(std::span<const double> scores, std::span<const double> labels,
                 const char* what) {
  if (scores.size() != labels.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  }
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) throw ShapeError(std::string(what) + ": labels must be 0 or 1");
  }
}

}  // namespace

std::optional<double> Auc(std::span<const double> scores, std::span<const double> labels) {
  CheckInputs(scores, labels, "auc");
  const std::size_t n = scores.size();
  for (double s : scores) {
    if (std::isnan(s)) throw ShapeError("auc: NaN score");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (1-based, tie-averaged) ranks of the positives.
  double rank_sum = 0.0;
  double positives = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    double tied_positives = 0.0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      tied_positives += labels[order[j]];
      ++j;
    }
    const double mean_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    rank_sum += tied_positives * mean_rank;
    positives += tied_positives;
    i = j;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) return std::nullopt;
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

double Ece(std::span<const double> predictions, std::span<const double> labels, int n_buckets) {
  CheckInputs(predictions, labels, "ece");
  if (n_buckets < 1) throw ShapeError("ece: n_buckets must be >= 1");
  if (predictions.empty()) return 0.0;
  std::vector<double> gap(static_cast<std::size_t>(n_buckets), 0.0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double p = predictions[i];
    if (!(p >= 0.0 && p <= 1.0)) throw ShapeError("ece: prediction outside [0, 1]");
    // Bucket k is [k/K, (k+1)/K); the product p*K can round across an edge,
    // so the guess is corrected against the edges themselves.
    int k = static_cast<int>(p * n_buckets);
    if (k > 0 && p < static_cast<double>(k) / n_buckets) --k;
    if (k + 1 < n_buckets && p >= static_cast<double>(k + 1) / n_buckets) ++k;
    k = std::min(k, n_buckets - 1);
    gap[static_cast<std::size_t>(k)] += labels[i] - p;
  }
  double total = 0.0;
  for (double g : gap) total += std::abs(g);
  return total / static_cast<double>(predictions.size());
}

}  // namespace rec4ad::eval
