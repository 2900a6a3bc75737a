#ifndef REC4AD_DIFFCORE_GRADIENT_CHECK_H_
#define REC4AD_DIFFCORE_GRADIENT_CHECK_H_

#include <functional>
#include <string>
#include <vector>

#include "rec4ad/diffcore/parameter_store.h"
#include "rec4ad/diffcore/tape.h"

namespace rec4ad::diffcore {

// Builds a scalar-valued graph on the given tape from the current contents
// of the store. Must be deterministic: repeated calls with unchanged
// parameters produce the same value.
using GraphBuilder = std::function<Var(Tape&)>;

struct GradientCheckOptions {
  // Step ladder: max_step, max_step / ratio, ... down to min_step.
  double max_step = 1e-3;
  double min_step = 1e-7;
  double ladder_ratio = 3.1622776601683795;  // sqrt(10)
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  // Gradients far below the floor are effectively compared in absolute
  // terms, where the O(eps * |f| / step) round-off of the quotient dominates.
  double scale_floor = 1e-3;
  // 0 checks every entry; otherwise a deterministic stride sample per
  // parameter of at most this many entries.
  std::size_t max_entries_per_param = 0;
};

struct GradientCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
};

struct GradientCheckReport {
  std::vector<GradientCheckEntry> params;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst_param;
};

// One term of a reference objective: the expected gradient of a parameter
// is sum_t coefficient_t(name) * d(term_t)/d(param). This lets graphs whose
// backward pass deliberately departs from the true derivative (gradient
// reversal) be certified against finite differences of their parts.
struct ReferenceTerm {
  GraphBuilder build;
  std::function<double(const std::string& param_name)> coefficient;
};

// Compares reverse-mode gradients of every trainable parameter against
// central differences. Parameter values are restored afterwards and
// gradients are left zeroed.
GradientCheckReport FiniteDifferenceCheck(const GraphBuilder& build,
                                          ParameterStore& store,
                                          const GradientCheckOptions& options = {});

// Reverse-mode gradients of `tape_loss` against the weighted central
// differences of `reference`.
GradientCheckReport FiniteDifferenceCheck(const GraphBuilder& tape_loss,
                                          const std::vector<ReferenceTerm>& reference,
                                          ParameterStore& store,
                                          const GradientCheckOptions& options = {});

}  // namespace rec4ad::diffcore

#endif  // REC4AD_DIFFCORE_GRADIENT_CHECK_H_
