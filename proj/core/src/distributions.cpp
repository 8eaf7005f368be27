#include "metavi/distributions.hpp"

#include <cmath>
#include <numbers>

namespace metavi {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_support(bool ok, const std::string& msg) {
  if (!ok) throw SupportError(msg);
}

// Marsaglia-Tsang gamma sampler; alpha < 1 handled via the boost trick.
double sample_gamma(double alpha, Rng& rng) {
  if (alpha < 1.0) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    return sample_gamma(alpha + 1.0, rng) * std::pow(u, 1.0 / alpha);
  }
  double d = alpha - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = rng.normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
      return d * v;
  }
}

}  // namespace

FamilyTag family_from_string(const std::string& s) {
  if (s == "gaussian") return FamilyTag::gaussian_fixed_var;
  if (s == "log_normal") return FamilyTag::log_normal_fixed_var;
  if (s == "exponential") return FamilyTag::exponential;
  if (s == "beta_symmetric") return FamilyTag::beta_symmetric;
  if (s == "laplace") return FamilyTag::laplace_fixed_loc;
  if (s == "weibull") return FamilyTag::weibull_fixed_scale;
  if (s == "bernoulli") return FamilyTag::bernoulli;
  if (s == "gaussian_full") return FamilyTag::gaussian_full;
  throw std::invalid_argument("unknown family: " + s);
}

std::string family_to_string(FamilyTag tag) {
  switch (tag) {
    case FamilyTag::gaussian_fixed_var: return "gaussian";
    case FamilyTag::log_normal_fixed_var: return "log_normal";
    case FamilyTag::exponential: return "exponential";
    case FamilyTag::beta_symmetric: return "beta_symmetric";
    case FamilyTag::laplace_fixed_loc: return "laplace";
    case FamilyTag::weibull_fixed_scale: return "weibull";
    case FamilyTag::bernoulli: return "bernoulli";
    case FamilyTag::gaussian_full: return "gaussian_full";
  }
  return "gaussian";
}

Family Family::make(FamilyTag tag) {
  Family f;
  f.tag = tag;
  switch (tag) {
    case FamilyTag::gaussian_fixed_var:
    case FamilyTag::log_normal_fixed_var:
      f.fixed = 0.1;  // spherical variance
      break;
    case FamilyTag::laplace_fixed_loc:
      f.fixed = 0.0;  // location
      break;
    case FamilyTag::weibull_fixed_scale:
      f.fixed = 1.0;  // scale
      break;
    default:
      f.fixed = 0.0;
      break;
  }
  return f;
}

bool Family::needs_positivity_link() const {
  switch (tag) {
    case FamilyTag::exponential:
    case FamilyTag::beta_symmetric:
    case FamilyTag::laplace_fixed_loc:
    case FamilyTag::weibull_fixed_scale:
      return true;
    default:
      return false;
  }
}

double Family::link(double raw) const {
  return needs_positivity_link() ? positivity_link(raw) : raw;
}

double positivity_link(double raw) { return stable_softplus(raw); }

double log_prob(const DistParams& params, std::span<const double> x) {
  const Family& fam = params.family;
  const auto& th = params.theta;
  double total = 0.0;
  switch (fam.tag) {
    case FamilyTag::gaussian_fixed_var: {
      // theta: one shared mean, or a mean per component.
      double var = fam.fixed;
      for (std::size_t i = 0; i < x.size(); ++i) {
        double mu = th.size() == 1 ? th[0] : th.at(i);
        double d = x[i] - mu;
        total += -0.5 * (kLog2Pi + std::log(var)) - d * d / (2.0 * var);
      }
      break;
    }
    case FamilyTag::log_normal_fixed_var: {
      double var = fam.fixed;
      for (std::size_t i = 0; i < x.size(); ++i) {
        check_support(x[i] > 0.0, "log_normal: x must be > 0");
        double mu = th.size() == 1 ? th[0] : th.at(i);
        double lx = std::log(x[i]);
        double d = lx - mu;
        total += -lx - 0.5 * (kLog2Pi + std::log(var)) - d * d / (2.0 * var);
      }
      break;
    }
    case FamilyTag::exponential: {
      double rate = th.at(0);
      check_support(rate > 0.0, "exponential: rate must be > 0");
      for (double v : x) {
        check_support(v >= 0.0, "exponential: x must be >= 0");
        total += std::log(rate) - rate * v;
      }
      break;
    }
    case FamilyTag::beta_symmetric: {
      double a = th.at(0);
      check_support(a > 0.0, "beta: shape must be > 0");
      double log_beta = 2.0 * std::lgamma(a) - std::lgamma(2.0 * a);
      for (double v : x) {
        check_support(v > 0.0 && v < 1.0, "beta: x must be in (0,1)");
        total += (a - 1.0) * (std::log(v) + std::log1p(-v)) - log_beta;
      }
      break;
    }
    case FamilyTag::laplace_fixed_loc: {
      double b = th.at(0);
      check_support(b > 0.0, "laplace: scale must be > 0");
      double loc = fam.fixed;
      for (double v : x)
        total += -std::log(2.0 * b) - std::fabs(v - loc) / b;
      break;
    }
    case FamilyTag::weibull_fixed_scale: {
      double k = th.at(0);
      check_support(k > 0.0, "weibull: shape must be > 0");
      double scale = fam.fixed;
      for (double v : x) {
        check_support(v > 0.0, "weibull: x must be > 0");
        double r = v / scale;
        total += std::log(k / scale) + (k - 1.0) * std::log(r) -
                 std::pow(r, k);
      }
      break;
    }
    case FamilyTag::bernoulli: {
      double p = th.at(0);
      check_support(p > 0.0 && p < 1.0, "bernoulli: p must be in (0,1)");
      for (double v : x) {
        check_support(v == 0.0 || v == 1.0, "bernoulli: x must be 0 or 1");
        total += v == 1.0 ? std::log(p) : std::log1p(-p);
      }
      break;
    }
    case FamilyTag::gaussian_full: {
      double mu = th.at(0);
      double var = th.at(1);
      check_support(var > 0.0, "gaussian_full: variance must be > 0");
      for (double v : x) {
        double d = v - mu;
        total += -0.5 * (kLog2Pi + std::log(var)) - d * d / (2.0 * var);
      }
      break;
    }
  }
  return total;
}

std::vector<double> sample(const DistParams& params, Rng& rng, std::size_t n) {
  const Family& fam = params.family;
  const auto& th = params.theta;
  std::vector<double> out(n);
  switch (fam.tag) {
    case FamilyTag::gaussian_fixed_var: {
      double sd = std::sqrt(fam.fixed);
      for (std::size_t i = 0; i < n; ++i) {
        double mu = th.size() == 1 ? th[0] : th.at(i % th.size());
        out[i] = mu + sd * rng.normal();
      }
      break;
    }
    case FamilyTag::log_normal_fixed_var: {
      double sd = std::sqrt(fam.fixed);
      for (std::size_t i = 0; i < n; ++i) {
        double mu = th.size() == 1 ? th[0] : th.at(i % th.size());
        out[i] = std::exp(mu + sd * rng.normal());
      }
      break;
    }
    case FamilyTag::exponential: {
      double rate = th.at(0);
      for (auto& v : out) v = -std::log1p(-rng.uniform()) / rate;
      break;
    }
    case FamilyTag::beta_symmetric: {
      double a = th.at(0);
      for (auto& v : out) {
        double g1 = sample_gamma(a, rng);
        double g2 = sample_gamma(a, rng);
        v = g1 / (g1 + g2);
      }
      break;
    }
    case FamilyTag::laplace_fixed_loc: {
      double b = th.at(0);
      double loc = fam.fixed;
      for (auto& v : out) {
        double u = rng.uniform() - 0.5;
        v = loc - b * (u < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::fabs(u));
      }
      break;
    }
    case FamilyTag::weibull_fixed_scale: {
      double k = th.at(0);
      double scale = fam.fixed;
      for (auto& v : out)
        v = scale * std::pow(-std::log1p(-rng.uniform()), 1.0 / k);
      break;
    }
    case FamilyTag::bernoulli: {
      double p = th.at(0);
      for (auto& v : out) v = rng.uniform() < p ? 1.0 : 0.0;
      break;
    }
    case FamilyTag::gaussian_full: {
      double mu = th.at(0);
      double sd = std::sqrt(th.at(1));
      for (auto& v : out) v = mu + sd * rng.normal();
      break;
    }
  }
  return out;
}

std::vector<double> reparam_sample(const GaussianPosterior& post,
                                   std::span<const double> noise) {
  if (noise.size() != post.mean.size())
    throw ShapeError("reparam_sample: noise dim mismatch");
  std::vector<double> z(post.mean.size());
  for (std::size_t i = 0; i < z.size(); ++i)
    z[i] = post.mean[i] + std::exp(0.5 * post.log_var[i]) * noise[i];
  return z;
}

double kl_diag_gaussians(const GaussianPosterior& q,
                         const GaussianPosterior& p) {
  if (q.mean.size() != p.mean.size())
    throw ShapeError("kl_diag_gaussians: dim mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < q.mean.size(); ++i) {
    double vq = std::exp(q.log_var[i]);
    double vp = std::exp(p.log_var[i]);
    double d = q.mean[i] - p.mean[i];
    kl += 0.5 * (p.log_var[i] - q.log_var[i] + (vq + d * d) / vp - 1.0);
  }
  return kl;
}

}  // namespace metavi
