#pragma once

#include <span>
#include <string>
#include <vector>

#include "metavi/rng.hpp"
#include "metavi/tensor.hpp"

namespace metavi {

struct SupportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class FamilyTag {
  gaussian_fixed_var,
  log_normal_fixed_var,
  exponential,
  beta_symmetric,
  laplace_fixed_loc,
  weibull_fixed_scale,
  bernoulli,
  gaussian_full,
};

FamilyTag family_from_string(const std::string& s);
std::string family_to_string(FamilyTag tag);

// One exponential-family (or mixture-building-block) density with at most one
// fixed constant: variance 0.1 for the fixed-variance Gaussians/log-normals,
// location 0 for Laplace, scale 1 for Weibull.
struct Family {
  FamilyTag tag = FamilyTag::gaussian_fixed_var;
  double fixed = 0.1;

  static Family make(FamilyTag tag);
  // True when the free parameter must be positive (rate, shape, scale).
  bool needs_positivity_link() const;
  // Applies the family's link to a raw statistic: softplus for positive
  // parameters, identity otherwise.
  double link(double raw) const;
};

// A fully-specified member of a family. theta holds the free parameter(s):
// one scalar for the single-parameter families, a per-component mean vector
// for gaussian/log-normal used as a decoder likelihood, (mean, var) for
// gaussian_full, a probability for bernoulli.
struct DistParams {
  Family family;
  std::vector<double> theta;
};

// Log density (or log mass) of x, summed over i.i.d. components.
// Throws SupportError when any component of x is outside the support.
double log_prob(const DistParams& params, std::span<const double> x);

// Draws n i.i.d. components. Deterministic given the Rng state.
std::vector<double> sample(const DistParams& params, Rng& rng, std::size_t n);

// Diagonal-Gaussian variational posterior.
struct GaussianPosterior {
  std::vector<double> mean;
  std::vector<double> log_var;
};

struct BernoulliPosterior {
  double logit = 0.0;
};

// mean + exp(log_var / 2) * noise, elementwise.
std::vector<double> reparam_sample(const GaussianPosterior& post,
                                   std::span<const double> noise);

// Analytic KL(q || p) between diagonal Gaussians.
double kl_diag_gaussians(const GaussianPosterior& q,
                         const GaussianPosterior& p);

// softplus link, stable over the full double range.
double positivity_link(double raw);

}  // namespace metavi
