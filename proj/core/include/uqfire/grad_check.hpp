#pragma once

#include <functional>
#include <string>
#include <vector>

#include "uqfire/tensor.hpp"

namespace uqfire {

struct ParamGradError {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<ParamGradError> params;
  double tolerance = 0.0;
  bool passed() const;
  double worst() const;
};

/// Compares backward() against central finite differences for every element
/// of every parameter. `loss` must rebuild the graph from the current
/// parameter values and be deterministic (reseed any RNG inside it).
///
/// Relative error is |a - n| / max(|a|, |n|, abs_floor); the floor keeps
/// gradients that are zero on both sides from dividing by zero.
GradCheckReport grad_check(const std::function<Tensor()>& loss,
                           std::vector<Tensor> params,
                           std::vector<std::string> names = {},
                           double step = 1e-5, double tolerance = 1e-4,
                           double abs_floor = 1e-7);

}  // namespace uqfire
