#include "rec4ad/model/trainer.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rec4ad/common/error.h"
#include "rec4ad/common/random.h"
#include "rec4ad/common/text.h"
#include "rec4ad/diffcore/ops.h"
#include "rec4ad/eval/metrics.h"

namespace rec4ad::model {

CurvePoint Diagnose(Rec4AdModel& model, std::span<const augment::UnifiedSample> samples,
                    std::span<const int> rows) {
  CurvePoint point;
  if (rows.empty()) return point;
  const BatchTensors batch = MakeBatch(samples, rows, model.config().vocab);
  Tape tape;
  const ForwardResult f = model.Forward(tape, batch, Mode::kInfer, false, true);
  const Matrix& s = f.s_hat.value();
  point.adversary_auc =
      eval::Auc(std::span<const double>(s.data(), static_cast<std::size_t>(s.rows())),
                batch.source);
  const double d = static_cast<double>(f.x_inv.cols());
  double total = 0.0;
  int sources = 0;
  for (const std::vector<int>* part : {&batch.ad_rows, &batch.rec_rows}) {
    if (part->size() < 2) continue;
    Tape t;
    Var p = t.constant(diffcore::GatherRows(f.x_inv, *part).value());
    Var q = t.constant(diffcore::GatherRows(f.x_con, *part).value());
    total += diffcore::PearsonPairwisePenalty(p, q, model.config().pearson_eps).value()(0, 0) /
             (d * d);
    ++sources;
  }
  point.mean_sq_xcorr = sources ? total / sources : 0.0;
  return point;
}

std::vector<double> PredictAll(Rec4AdModel& model, std::span<const augment::UnifiedSample> samples,
                               int chunk) {
  std::vector<double> out;
  out.reserve(samples.size());
  std::vector<int> idx;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(chunk));
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), static_cast<int>(start));
    const std::vector<double> part = model.Predict(MakeBatch(samples, idx, model.config().vocab));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

TrainResult Train(Rec4AdModel& model, std::span<const augment::UnifiedSample> samples,
                  std::span<const double> weights, const TrainConfig& config,
                  std::uint64_t seed) {
  if (config.epochs < 0 || config.batch_size < 2) {
    throw ConfigError("train: epochs must be >= 0 and batch_size >= 2");
  }
  if (!(config.holdout_fraction >= 0.0 && config.holdout_fraction < 1.0)) {
    throw ConfigError("train: holdout_fraction must lie in [0, 1)");
  }
  if (config.diagnostics_per_epoch < 1) throw ConfigError("train: diagnostics_per_epoch >= 1");
  if (!weights.empty() && weights.size() != samples.size()) {
    throw ConfigError("train: one weight per sample required");
  }
  if (samples.empty()) throw ConfigError("train: empty training set");

  const int n = static_cast<int>(samples.size());
  const int holdout = static_cast<int>(std::ceil(config.holdout_fraction * n));
  const int n_train = n - holdout;
  if (n_train < 2) throw ConfigError("train: too few samples after the holdout");
  const int batches = std::max(1, n_train / config.batch_size);

  TrainResult result;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  {
    Rng rng(DeriveSeed(seed, 301, 0));
    std::vector<int> first = order;
    std::shuffle(first.begin(), first.end(), rng);
    CurvePoint p0 = Diagnose(model, samples, std::span<const int>(first).first(holdout));
    p0.epoch = 0.0;
    result.curve.push_back(p0);
  }

  std::vector<double> batch_weights;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(DeriveSeed(seed, 301, static_cast<std::uint64_t>(epoch)));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::span<const int> held = std::span<const int>(order).first(holdout);
    const std::span<const int> train = std::span<const int>(order).subspan(holdout);
    double sum_c = 0.0, sum_a = 0.0, sum_d = 0.0;
    int window = 0;
    int next_point = 1;
    for (int b = 0; b < batches; ++b) {
      const int begin = b * config.batch_size;
      const int end = b + 1 == batches ? n_train : begin + config.batch_size;
      const std::span<const int> rows = train.subspan(begin, end - begin);
      batch_weights.clear();
      double weight_sum = static_cast<double>(rows.size());
      if (!weights.empty()) {
        for (int r : rows) batch_weights.push_back(weights[r]);
        weight_sum = std::accumulate(batch_weights.begin(), batch_weights.end(), 0.0);
      }
      const BatchTensors batch = MakeBatch(samples, rows, model.config().vocab, batch_weights);
      Tape tape;
      const LossTerms loss = model.Loss(tape, batch, Mode::kTrain, true);
      tape.backward(loss.total);
      diffcore::AdamStep(model.params(), config.adam);
      result.step_losses.push_back(loss.total.value()(0, 0));
      result.step_weight_sums.push_back(weight_sum);
      ++result.steps;
      sum_c += loss.l_c;
      sum_a += loss.l_a;
      sum_d += loss.l_d;
      ++window;
      // Diagnostic points at evenly spaced fractions of the epoch.
      while (next_point <= config.diagnostics_per_epoch &&
             (b + 1) * config.diagnostics_per_epoch >= next_point * batches) {
        CurvePoint p = Diagnose(model, samples, held);
        p.epoch = epoch + static_cast<double>(next_point) / config.diagnostics_per_epoch;
        p.l_c = sum_c / window;
        p.l_a = sum_a / window;
        p.l_d = sum_d / window;
        result.curve.push_back(p);
        sum_c = sum_a = sum_d = 0.0;
        window = 0;
        ++next_point;
      }
    }
  }
  return result;
}

void WriteCurve(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
  std::ofstream out = OpenOut(path);
  out << "epoch,L_C,L_A,L_D,adversary_auc,mean_sq_xcorr\n";
  for (const CurvePoint& p : curve) {
    out << FormatDouble(p.epoch) << ',' << FormatDouble(p.l_c) << ',' << FormatDouble(p.l_a)
        << ',' << FormatDouble(p.l_d) << ',';
    if (p.adversary_auc) out << FormatDouble(*p.adversary_auc);
    out << ',' << FormatDouble(p.mean_sq_xcorr) << '\n';
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

std::vector<CurvePoint> ReadCurve(const std::filesystem::path& path) {
  std::ifstream in = OpenIn(path);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,L_C,L_A,L_D,adversary_auc,mean_sq_xcorr") {
    throw FormatError(path.string() + ": not a curve file");
  }
  std::vector<CurvePoint> curve;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    const auto f = Split(line, ',');
    if (f.size() != 6) throw FormatError(path.string() + ":" + std::to_string(n) + ": 6 fields");
    CurvePoint p;
    p.epoch = ParseNumber<double>(f[0], path, n);
    p.l_c = ParseNumber<double>(f[1], path, n);
    p.l_a = ParseNumber<double>(f[2], path, n);
    p.l_d = ParseNumber<double>(f[3], path, n);
    if (!f[4].empty()) p.adversary_auc = ParseNumber<double>(f[4], path, n);
    p.mean_sq_xcorr = ParseNumber<double>(f[5], path, n);
    curve.push_back(p);
  }
  return curve;
}

}  // namespace rec4ad::model
