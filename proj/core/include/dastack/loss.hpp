#pragma once

#include "dastack/matrix.hpp"

namespace dastack {

/// A scalar loss together with its gradients with respect to the two feature
/// matrices it was computed from. Gradient shapes match the inputs.
struct LossWithGrad {
  double value = 0.0;
  Matrix grad_source;
  Matrix grad_target;
};

}  // namespace dastack
