#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "metavi/tensor.hpp"

namespace metavi {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Parameter entries sitting on a kink (one-sided differences disagree);
  // skipped rather than failed.
  std::size_t excluded = 0;
};

// Compares analytic gradients against central finite differences.
// loss_fn must run a deterministic forward pass on the given tape and return
// the scalar loss tensor; it is called repeatedly with perturbed parameters.
GradCheckResult grad_check(
    const std::function<Tensor(Tape&)>& loss_fn,
    const std::vector<std::pair<std::string, Tensor>>& params,
    double h = 1e-5);

}  // namespace metavi
