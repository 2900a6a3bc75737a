#ifndef REC4AD_MODEL_TRAINER_H_
#define REC4AD_MODEL_TRAINER_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "rec4ad/diffcore/adam.h"
#include "rec4ad/eval/curve.h"
#include "rec4ad/model/model.h"

namespace rec4ad::model {

struct TrainConfig {
  int epochs = 3;
  int batch_size = 512;
  diffcore::AdamConfig adam;
  // Diagnostic points per epoch, plus one before the first step.
  int diagnostics_per_epoch = 4;
  // Fraction of the stream held out from each epoch (a fresh slice per
  // epoch) and used for the diagnostics.
  double holdout_fraction = 0.05;
};

using eval::CurvePoint;

struct TrainResult {
  std::vector<CurvePoint> curve;
  // Total loss of every optimiser step, in order.
  std::vector<double> step_losses;
  // Sum of IPS weights per step (empty weights count as 1).
  std::vector<double> step_weight_sums;
  int steps = 0;
};

// Trains `model` on samples with Adam. `weights` (optional, one per sample)
// become per-sample BCE weights. Batch order and holdout slices derive from
// `seed`; the last batch of an epoch absorbs the remainder.
TrainResult Train(Rec4AdModel& model, std::span<const augment::UnifiedSample> samples,
                  std::span<const double> weights, const TrainConfig& config,
                  std::uint64_t seed);

// Holdout diagnostics on the given rows in inference mode.
CurvePoint Diagnose(Rec4AdModel& model, std::span<const augment::UnifiedSample> samples,
                    std::span<const int> rows);

// Inference-mode predictions in chunks of `chunk` rows.
std::vector<double> PredictAll(Rec4AdModel& model, std::span<const augment::UnifiedSample> samples,
                               int chunk = 4096);

// CSV: epoch,L_C,L_A,L_D,adversary_auc,mean_sq_xcorr (empty cell when absent).
void WriteCurve(const std::filesystem::path& path, const std::vector<CurvePoint>& curve);
std::vector<CurvePoint> ReadCurve(const std::filesystem::path& path);

}  // namespace rec4ad::model

#endif  // REC4AD_MODEL_TRAINER_H_
