#ifndef REC4AD_EVAL_CURVE_H_
#define REC4AD_EVAL_CURVE_H_

#include <optional>

namespace rec4ad::eval {

// One point of a training curve.
struct CurvePoint {
  double epoch = 0.0;
  // Per-batch means of the raw loss terms since the previous point.
  double l_c = 0.0;
  double l_a = 0.0;
  double l_d = 0.0;
  // Discriminator AUC on the holdout (absent with a single-source holdout).
  std::optional<double> adversary_auc;
  // Mean over present sources of penalty / d^2 on the holdout.
  double mean_sq_xcorr = 0.0;
  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

}  // namespace rec4ad::eval

#endif  // REC4AD_EVAL_CURVE_H_
