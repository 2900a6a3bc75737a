#include "rec4ad/diffcore/gradient_check.h"

#include <algorithm>
#include <cmath>

#include "rec4ad/common/error.h"

namespace rec4ad::diffcore {
namespace {

double Evaluate(const GraphBuilder& build) {
  Tape tape;
  const Var out = build(tape);
  if (out.rows() != 1 || out.cols() != 1) {
    throw ShapeError("gradient check requires a scalar graph output");
  }
  return out.value()(0, 0);
}

}  // namespace

GradientCheckReport FiniteDifferenceCheck(const GraphBuilder& build, ParameterStore& store,
                                          const GradientCheckOptions& options) {
  return FiniteDifferenceCheck(build, {{build, [](const std::string&) { return 1.0; }}}, store,
                               options);
}

GradientCheckReport FiniteDifferenceCheck(const GraphBuilder& tape_loss,
                                          const std::vector<ReferenceTerm>& reference,
                                          ParameterStore& store,
                                          const GradientCheckOptions& options) {
  store.zero_grad();
  {
    Tape tape;
    const Var out = tape_loss(tape);
    tape.backward(out);
  }
  GradientCheckReport report;
  for (auto& [name, p] : store.entries()) {
    if (!p.trainable) continue;
    const Matrix analytic =
        p.grad.size() == 0 ? Matrix::Zero(p.value.rows(), p.value.cols()) : p.grad;
    GradientCheckEntry entry;
    entry.name = name;
    const auto total = static_cast<std::size_t>(p.value.size());
    std::size_t stride = 1;
    if (options.max_entries_per_param != 0 && total > options.max_entries_per_param) {
      stride = (total + options.max_entries_per_param - 1) / options.max_entries_per_param;
    }
    std::vector<double> coefficients;
    for (const ReferenceTerm& term : reference) coefficients.push_back(term.coefficient(name));
    for (std::size_t k = 0; k < total; k += stride) {
      double& slot = p.value.data()[k];
      const double saved = slot;
      double numeric = 0.0;
      for (std::size_t t = 0; t < reference.size(); ++t) {
        if (coefficients[t] == 0.0) continue;
        auto at = [&](double offset) {
          slot = saved + offset;
          return Evaluate(reference[t].build);
        };
        // Five-point central stencil, O(step^4) truncation.
        auto stencil = [&](double h) {
          return (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        };
        // Large steps straddle relu kinks, small ones drown in round-off.
        // Walk a geometric ladder and keep the coarser estimate of the
        // adjacent pair that agrees best.
        double h = options.max_step;
        double coarse = stencil(h);
        double best = coarse;
        double best_gap = INFINITY;
        while (h / options.ladder_ratio >= options.min_step * (1.0 - 1e-9)) {
          h /= options.ladder_ratio;
          const double fine = stencil(h);
          const double gap = std::abs(coarse - fine);
          if (gap < best_gap) {
            best_gap = gap;
            best = coarse;
          }
          coarse = fine;
        }
        slot = saved;
        numeric += coefficients[t] * best;
      }
      const double a = analytic.data()[k];
      const double abs_err = std::abs(a - numeric);
      const double rel_err =
          abs_err / std::max({std::abs(a), std::abs(numeric), options.scale_floor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, rel_err);
      ++entry.checked;
    }
    report.entries_checked += entry.checked;
    report.max_abs_error = std::max(report.max_abs_error, entry.max_abs_error);
    if (entry.max_rel_error > report.max_rel_error || report.worst_param.empty()) {
      report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
      report.worst_param = entry.name;
    }
    report.params.push_back(std::move(entry));
  }
  store.zero_grad();
  return report;
}

}  // namespace rec4ad::diffcore
