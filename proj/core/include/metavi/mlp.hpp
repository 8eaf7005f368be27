#pragma once

#include <string>
#include <vector>

#include "metavi/rng.hpp"
#include "metavi/tensor.hpp"

namespace metavi {

enum class Activation { identity, relu, leaky_relu, softplus };

Activation activation_from_string(const std::string& s);
std::string activation_to_string(Activation a);

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
  Activation act = Activation::identity;
};

// Plain fully-connected net over row-major batches (B x in -> B x out).
struct Mlp {
  std::vector<Linear> layers;

  // dims = {in, h1, ..., out}; hidden layers use `act`, the last layer is
  // linear. Weights get scaled-normal init (He-style), biases start at zero.
  static Mlp make(const std::vector<std::size_t>& dims, Activation act,
                  Rng& rng);

  Tensor forward(Tape& tape, const Tensor& x) const;

  std::size_t input_dim() const { return layers.front().weight.rows(); }
  std::size_t output_dim() const { return layers.back().weight.cols(); }
  std::size_t parameter_count() const;
  void collect_parameters(const std::string& prefix,
                          std::vector<std::pair<std::string, Tensor>>& out) const;
};

}  // namespace metavi
