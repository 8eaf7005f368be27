#include "metavi/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace metavi {

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.lr <= 0.0) throw std::invalid_argument("Adam: lr must be > 0");
  for (auto& [name, p] : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& [name, p] = params_[k];
    const auto& g = p.grad();
    auto& val = p.data();
    for (std::size_t i = 0; i < val.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw NumericError("Adam: non-finite gradient in parameter '" + name +
                           "' at index " + std::to_string(i));
      m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g[i];
      v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      double mhat = m_[k][i] / bc1;
      double vhat = v_[k][i] / bc2;
      val[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

std::vector<double> Adam::serialize_state() const {
  std::vector<double> flat;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    flat.insert(flat.end(), m_[k].begin(), m_[k].end());
    flat.insert(flat.end(), v_[k].begin(), v_[k].end());
  }
  return flat;
}

void Adam::restore_state(const std::vector<double>& flat, std::size_t t) {
  std::size_t off = 0;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    std::size_t n = params_[k].second.size();
    if (off + 2 * n > flat.size())
      throw std::invalid_argument("Adam::restore_state: state too short");
    std::copy(flat.begin() + off, flat.begin() + off + n, m_[k].begin());
    off += n;
    std::copy(flat.begin() + off, flat.begin() + off + n, v_[k].begin());
    off += n;
  }
  if (off != flat.size())
    throw std::invalid_argument("Adam::restore_state: state length mismatch");
  t_ = t;
}

}  // namespace metavi
