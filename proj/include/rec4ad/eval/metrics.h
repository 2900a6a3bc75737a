#ifndef REC4AD_EVAL_METRICS_H_
#define REC4AD_EVAL_METRICS_H_

#include <optional>
#include <span>

namespace rec4ad::eval {

// Probability that a random positive outranks a random negative, ties
// counting 1/2, via average ranks in O(n log n). Absent when either class is
// missing. Throws ShapeError when lengths differ or a label is not 0/1.
std::optional<double> Auc(std::span<const double> scores, std::span<const double> labels);

// (1/n) sum_k |sum_{i in bucket k} (y_i - p_i)| over n_buckets equal-width
// buckets on [0, 1]; a prediction of exactly 1 falls in the last bucket.
// Zero for an empty set. Throws ShapeError for predictions outside [0, 1].
double Ece(std::span<const double> predictions, std::span<const double> labels,
           int n_buckets = 100);

}  // namespace rec4ad::eval

#endif  // REC4AD_EVAL_METRICS_H_
