#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metavi/distributions.hpp"
#include "metavi/mlp.hpp"
#include "metavi/tensor.hpp"

namespace metavi {

enum class PosteriorKind { gaussian, bernoulli };

PosteriorKind posterior_kind_from_string(const std::string& s);
std::string posterior_kind_to_string(PosteriorKind k);

// Posterior parameters as live graph tensors, one row per query point.
struct PosteriorTensors {
  PosteriorKind kind = PosteriorKind::gaussian;
  Tensor mean;     // B x z (gaussian)
  Tensor log_var;  // B x z (gaussian)
  Tensor logit;    // B x 1 (bernoulli)

  GaussianPosterior gaussian_at(std::size_t row) const;
  BernoulliPosterior bernoulli_at(std::size_t row) const;
};

// Permutation-invariant set encoder: per-element MLP followed by a
// compensated mean pool over the set axis.
struct SummaryNet {
  Mlp mlp;

  // dataset: N x d, N >= 1. Returns 1 x summary_dim.
  Tensor summarize(Tape& tape, const Tensor& dataset) const;
  std::size_t summary_dim() const { return mlp.output_dim(); }
};

// Doubly-amortized regressor: posterior params from (dataset summary, x).
struct MetaInferenceModel {
  SummaryNet summary;
  Mlp aggregator;  // input dim = obs dim + summary dim
  PosteriorKind kind = PosteriorKind::gaussian;
  std::size_t latent_dim = 1;

  PosteriorTensors infer(Tape& tape, const Tensor& dataset,
                         const Tensor& x) const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

// Singly-amortized inference model (plain VAE encoder).
struct InferenceModel {
  Mlp net;
  PosteriorKind kind = PosteriorKind::gaussian;
  std::size_t latent_dim = 1;

  PosteriorTensors infer(Tape& tape, const Tensor& x) const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

// Prior over z.
struct Prior {
  PosteriorKind kind = PosteriorKind::gaussian;
  double std_dev = 1.0;  // gaussian: N(0, std^2 I)
  double p = 0.5;        // bernoulli
};

// Prior + decoder. The decoder is either an MLP mapping z to likelihood
// parameters, or parameter-free: z (after the family link) IS the free
// parameter of the likelihood family.
struct GenerativeModel {
  Prior prior;
  std::optional<Mlp> decoder;
  Family likelihood;
  std::size_t obs_dim = 1;

  bool parameter_free() const { return !decoder.has_value(); }
  std::size_t parameter_count() const;

  // Likelihood parameters for a single latent value (links applied).
  DistParams decode(std::span<const double> z) const;

  // log p(x_row | z_row) for a batch; x is constant data, gradients flow to
  // z and decoder parameters. Returns B x 1.
  Tensor log_likelihood(Tape& tape, const Tensor& x, const Tensor& z) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

// Analytic KL(q || prior) per row for diagonal-Gaussian posteriors against a
// zero-mean isotropic Gaussian prior. Returns B x 1, differentiable.
Tensor kl_to_gaussian_prior(Tape& tape, const PosteriorTensors& q,
                            double prior_std);

// Gaussian log-density of constant targets under the posterior, summed over
// latent dims. Returns B x 1, differentiable w.r.t. posterior tensors.
Tensor gaussian_log_density(Tape& tape, const PosteriorTensors& q,
                            const Tensor& targets);

}  // namespace metavi
