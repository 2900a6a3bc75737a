#ifndef REC4AD_DIFFCORE_ADAM_H_
#define REC4AD_DIFFCORE_ADAM_H_

#include "rec4ad/diffcore/parameter_store.h"

namespace rec4ad::diffcore {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update over every trainable parameter, then zeroes all
// gradients. A parameter whose gradient was never populated is treated as
// having a zero gradient.
void AdamStep(ParameterStore& store, const AdamConfig& config);

}  // namespace rec4ad::diffcore

#endif  // REC4AD_DIFFCORE_ADAM_H_
