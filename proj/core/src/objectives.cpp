#include "metavi/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace metavi {

namespace {

// z = mean + exp(log_var/2) * noise; noise is constant data.
Tensor reparam(Tape& tape, const PosteriorTensors& q, const Tensor& noise) {
  if (noise.rows() != q.mean.rows() || noise.cols() != q.mean.cols())
    throw ShapeError("reparam: noise shape mismatch");
  Tensor std_dev = exp(tape, scale(tape, q.log_var, 0.5));
  return add(tape, q.mean, mul(tape, std_dev, noise));
}

}  // namespace

LossBreakdown elbo_from_posterior(Tape& tape, const PosteriorTensors& q,
                                  const GenerativeModel& gen, const Tensor& x,
                                  const Tensor& noise) {
  if (q.kind != PosteriorKind::gaussian)
    throw std::invalid_argument("elbo_mc: posterior must be gaussian");
  Tensor z = reparam(tape, q, noise);
  Tensor recon = mean_all(tape, gen.log_likelihood(tape, x, z));
  Tensor kl = mean_all(tape, kl_to_gaussian_prior(tape, q, gen.prior.std_dev));
  LossBreakdown out;
  out.total = sub(tape, recon, kl);
  out.reconstruction = recon.item();
  out.kl = kl.item();
  return out;
}

LossBreakdown elbo_mc(Tape& tape, const InferenceModel& inf,
                      const GenerativeModel& gen, const Tensor& x,
                      const Tensor& noise) {
  return elbo_from_posterior(tape, inf.infer(tape, x), gen, x, noise);
}

LossBreakdown elbo_enumerated_from_posterior(Tape& tape,
                                             const PosteriorTensors& q,
                                             const GenerativeModel& gen,
                                             const Tensor& x) {
  if (q.kind != PosteriorKind::bernoulli)
    throw std::invalid_argument(
        "elbo_enumerated: posterior must be bernoulli (binary latent)");
  std::size_t b = x.rows();
  Tensor z0 = Tensor::zeros(b, 1);
  Tensor z1 = Tensor::full(b, 1, 1.0);
  Tensor ll0 = gen.log_likelihood(tape, x, z0);
  Tensor ll1 = gen.log_likelihood(tape, x, z1);

  Tensor q1 = sigmoid(tape, q.logit);
  Tensor q0 = add_scalar(tape, neg(tape, q1), 1.0);
  // Stable log q: log sigmoid(l) = -softplus(-l).
  Tensor log_q1 = neg(tape, softplus(tape, neg(tape, q.logit)));
  Tensor log_q0 = neg(tape, softplus(tape, q.logit));

  Tensor recon =
      add(tape, mul(tape, q1, ll1), mul(tape, q0, ll0));
  double log_p1 = std::log(gen.prior.p);
  double log_p0 = std::log1p(-gen.prior.p);
  Tensor kl = add(tape, mul(tape, q1, add_scalar(tape, log_q1, -log_p1)),
                  mul(tape, q0, add_scalar(tape, log_q0, -log_p0)));

  Tensor recon_mean = mean_all(tape, recon);
  Tensor kl_mean = mean_all(tape, kl);
  LossBreakdown out;
  out.total = sub(tape, recon_mean, kl_mean);
  out.reconstruction = recon_mean.item();
  out.kl = kl_mean.item();
  return out;
}

LossBreakdown elbo_enumerated(Tape& tape, const InferenceModel& inf,
                              const GenerativeModel& gen, const Tensor& x) {
  return elbo_enumerated_from_posterior(tape, inf.infer(tape, x), gen, x);
}

LossBreakdown meta_elbo(
    Tape& tape, const MetaInferenceModel& meta,
    const std::map<std::string, const GenerativeModel*>& gens,
    const std::vector<MetaBatchEntry>& batch) {
  if (batch.empty())
    throw std::invalid_argument("meta_elbo: empty meta-batch");
  LossBreakdown out;
  Tensor acc;
  double recon_acc = 0.0, kl_acc = 0.0;
  for (const auto& entry : batch) {
    auto it = gens.find(entry.dataset_id);
    if (it == gens.end())
      throw std::invalid_argument("meta_elbo: unknown dataset id '" +
                                  entry.dataset_id + "'");
    const GenerativeModel& gen = *it->second;
    PosteriorTensors q = meta.infer(tape, entry.bundle, entry.x);
    LossBreakdown part =
        q.kind == PosteriorKind::bernoulli
            ? elbo_enumerated_from_posterior(tape, q, gen, entry.x)
            : elbo_from_posterior(tape, q, gen, entry.x, entry.noise);
    out.per_dataset.push_back(part.value());
    recon_acc += part.reconstruction;
    kl_acc += part.kl;
    acc = acc.defined() ? add(tape, acc, part.total) : part.total;
  }
  double inv = 1.0 / static_cast<double>(batch.size());
  out.total = scale(tape, acc, inv);
  out.reconstruction = recon_acc * inv;
  out.kl = kl_acc * inv;
  return out;
}

LossBreakdown compiled_loss(Tape& tape, const MetaInferenceModel& meta,
                            const std::vector<MetaBatchEntry>& batch) {
  if (batch.empty())
    throw std::invalid_argument("compiled_loss: empty meta-batch");
  LossBreakdown out;
  Tensor acc;
  for (const auto& entry : batch) {
    PosteriorTensors q = meta.infer(tape, entry.bundle, entry.x);
    Tensor ll = mean_all(tape, gaussian_log_density(tape, q, entry.z_true));
    out.per_dataset.push_back(ll.item());
    acc = acc.defined() ? add(tape, acc, ll) : ll;
  }
  double inv = 1.0 / static_cast<double>(batch.size());
  out.total = scale(tape, acc, inv);
  out.reconstruction = out.total.item();
  out.kl = 0.0;
  return out;
}

}  // namespace metavi
