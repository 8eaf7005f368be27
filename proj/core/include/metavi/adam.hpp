#pragma once

#include <string>
#include <utility>
#include <vector>

#include "metavi/tensor.hpp"

namespace metavi {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed set of named parameter tensors.
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig cfg);

  // Reads grad buffers and updates parameters in place. Throws NumericError
  // naming the parameter if a gradient is NaN/Inf.
  void step();
  void zero_grad();

  std::size_t t() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<std::pair<std::string, Tensor>>& params() const {
    return params_;
  }

  // Flat optimizer state (m, v per parameter, in parameter order) for
  // checkpointing.
  std::vector<double> serialize_state() const;
  void restore_state(const std::vector<double>& flat, std::size_t t);

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
  AdamConfig cfg_;
};

}  // namespace metavi
