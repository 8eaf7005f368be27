#pragma once

#include <map>
#include <string>
#include <vector>

#include "metavi/nets.hpp"
#include "metavi/tensor.hpp"

namespace metavi {

// A training objective value with its reconstruction/KL split. `total` stays
// attached to the tape so the caller can backprop through it; sign convention
// is "maximize total" (training loops minimize -total).
struct LossBreakdown {
  Tensor total;                       // 1x1, on tape
  double reconstruction = 0.0;        // E_q[log p(x|z)]
  double kl = 0.0;                    // KL(q || prior)
  std::vector<double> per_dataset;    // per-dataset totals when meta-batched

  double value() const { return total.item(); }
};

// Single-sample reparameterized ELBO with analytic Gaussian KL.
// noise: standard-normal draws, same shape as the posterior mean (B x z).
LossBreakdown elbo_from_posterior(Tape& tape, const PosteriorTensors& q,
                                  const GenerativeModel& gen, const Tensor& x,
                                  const Tensor& noise);

LossBreakdown elbo_mc(Tape& tape, const InferenceModel& inf,
                      const GenerativeModel& gen, const Tensor& x,
                      const Tensor& noise);

// Exact enumeration over a binary latent; no sampling.
LossBreakdown elbo_enumerated_from_posterior(Tape& tape,
                                             const PosteriorTensors& q,
                                             const GenerativeModel& gen,
                                             const Tensor& x);

LossBreakdown elbo_enumerated(Tape& tape, const InferenceModel& inf,
                              const GenerativeModel& gen, const Tensor& x);

// One meta-batch entry: a dataset id, the sample set standing in for its
// marginal, the query minibatch, and (for compiled inference) true latents.
struct MetaBatchEntry {
  std::string dataset_id;
  Tensor bundle;   // N x d fed to the summary network
  Tensor x;        // B x d query minibatch
  Tensor z_true;   // B x z, compiled inference only
  Tensor noise;    // B x z, reparameterized objectives only
};

// Average per-dataset ELBO with the posterior from meta_infer; enumerated for
// bernoulli posteriors, reparameterized otherwise.
LossBreakdown meta_elbo(
    Tape& tape, const MetaInferenceModel& meta,
    const std::map<std::string, const GenerativeModel*>& gens,
    const std::vector<MetaBatchEntry>& batch);

// Mean negative log-density of true latents under the meta-posterior.
// Returns the loss breakdown with total = -loss so that "maximize total"
// holds across all objectives.
LossBreakdown compiled_loss(Tape& tape, const MetaInferenceModel& meta,
                            const std::vector<MetaBatchEntry>& batch);

}  // namespace metavi
