#include "rec4ad/diffcore/adam.h"

#include <cmath>

#include "rec4ad/common/error.h"

namespace rec4ad::diffcore {

void AdamStep(ParameterStore& store, const AdamConfig& config) {
  for (auto& [name, p] : store.entries()) {
    if (!p.trainable) {
      p.grad.resize(0, 0);
      continue;
    }
    if (p.first_moment.rows() != p.value.rows() || p.first_moment.cols() != p.value.cols() ||
        p.second_moment.rows() != p.value.rows() || p.second_moment.cols() != p.value.cols()) {
      throw ConfigError("missing or mis-shaped Adam state for parameter " + name);
    }
    ++p.step;
    const double t = static_cast<double>(p.step);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    if (p.grad.size() == 0) {
      // Zero gradient: decay the moments; the parameter still moves if it
      // carries momentum from earlier steps.
      p.first_moment *= config.beta1;
      p.second_moment *= config.beta2;
    } else {
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
        throw ShapeError("gradient shape mismatch for parameter " + name);
      }
      p.first_moment = config.beta1 * p.first_moment + (1.0 - config.beta1) * p.grad;
      p.second_moment =
          config.beta2 * p.second_moment + (1.0 - config.beta2) * p.grad.cwiseAbs2();
    }
    p.value.array() -= config.learning_rate * (p.first_moment.array() / correction1) /
                       ((p.second_moment.array() / correction2).sqrt() + config.eps);
    p.grad.resize(0, 0);
  }
}

}  // namespace rec4ad::diffcore
