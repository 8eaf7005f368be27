#include "metavi/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace metavi {

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "softplus") return Activation::softplus;
  throw std::invalid_argument("unknown activation: " + s);
}

std::string activation_to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::softplus: return "softplus";
  }
  return "identity";
}

Mlp Mlp::make(const std::vector<std::size_t>& dims, Activation act, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp::make: need >= 2 dims");
  Mlp mlp;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Linear lin;
    lin.weight = Tensor::zeros(dims[l], dims[l + 1]);
    lin.bias = Tensor::zeros(1, dims[l + 1]);
    double std_dev = std::sqrt(2.0 / static_cast<double>(dims[l]));
    for (double& w : lin.weight.data()) w = std_dev * rng.normal();
    lin.act = (l + 2 == dims.size()) ? Activation::identity : act;
    lin.weight.set_requires_grad(true);
    lin.bias.set_requires_grad(true);
    mlp.layers.push_back(std::move(lin));
  }
  return mlp;
}

Tensor Mlp::forward(Tape& tape, const Tensor& x) const {
  Tensor h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Linear& lin = layers[l];
    if (h.cols() != lin.weight.rows())
      throw ShapeError("Mlp layer " + std::to_string(l) + ": input dim " +
                       std::to_string(h.cols()) + " != weight rows " +
                       std::to_string(lin.weight.rows()));
    h = add_rowvec(tape, matmul(tape, h, lin.weight), lin.bias);
    switch (lin.act) {
      case Activation::identity: break;
      case Activation::relu: h = relu(tape, h); break;
      case Activation::leaky_relu: h = leaky_relu(tape, h); break;
      case Activation::softplus: h = softplus(tape, h); break;
    }
  }
  return h;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void Mlp::collect_parameters(
    const std::string& prefix,
    std::vector<std::pair<std::string, Tensor>>& out) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    out.emplace_back(prefix + ".w" + std::to_string(l), layers[l].weight);
    out.emplace_back(prefix + ".b" + std::to_string(l), layers[l].bias);
  }
}

}  // namespace metavi
