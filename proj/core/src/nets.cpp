#include "metavi/nets.hpp"

#include <cmath>

namespace metavi {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

PosteriorKind posterior_kind_from_string(const std::string& s) {
  if (s == "gaussian") return PosteriorKind::gaussian;
  if (s == "bernoulli") return PosteriorKind::bernoulli;
  throw std::invalid_argument("unknown posterior kind: " + s);
}

std::string posterior_kind_to_string(PosteriorKind k) {
  return k == PosteriorKind::gaussian ? "gaussian" : "bernoulli";
}

GaussianPosterior PosteriorTensors::gaussian_at(std::size_t row) const {
  GaussianPosterior p;
  for (std::size_t j = 0; j < mean.cols(); ++j) {
    p.mean.push_back(mean.at(row, j));
    p.log_var.push_back(log_var.at(row, j));
  }
  return p;
}

BernoulliPosterior PosteriorTensors::bernoulli_at(std::size_t row) const {
  return BernoulliPosterior{logit.at(row, 0)};
}

Tensor SummaryNet::summarize(Tape& tape, const Tensor& dataset) const {
  if (dataset.rows() < 1)
    throw ShapeError("summarize: dataset must contain at least one element");
  Tensor h = mlp.forward(tape, dataset);  // N x summary_dim
  return mean_rows(tape, h);
}

namespace {

PosteriorTensors split_head(Tape& tape, const Tensor& out, PosteriorKind kind,
                            std::size_t latent_dim) {
  PosteriorTensors post;
  post.kind = kind;
  if (kind == PosteriorKind::gaussian) {
    if (out.cols() != 2 * latent_dim)
      throw ShapeError("posterior head: expected " +
                       std::to_string(2 * latent_dim) + " outputs, got " +
                       std::to_string(out.cols()));
    post.mean = slice_cols(tape, out, 0, latent_dim);
    Tensor raw = slice_cols(tape, out, latent_dim, 2 * latent_dim);
    // Soft-clip the log-variance to [-30, 30] so exp() stays finite even for
    // an untrained net fed large-magnitude observations. Within the healthy
    // range the correction terms are ~exp(-30) and the map is the identity.
    constexpr double kBound = 30.0;
    raw = sub(tape, raw, softplus(tape, add_scalar(tape, raw, -kBound)));
    post.log_var =
        add(tape, raw,
            softplus(tape, neg(tape, add_scalar(tape, raw, kBound))));
  } else {
    if (out.cols() != 1)
      throw ShapeError("bernoulli posterior head must emit one logit");
    post.logit = out;
  }
  return post;
}

}  // namespace

PosteriorTensors MetaInferenceModel::infer(Tape& tape, const Tensor& dataset,
                                           const Tensor& x) const {
  Tensor s = summary.summarize(tape, dataset);
  Tensor inp = concat_rowvec(tape, x, s);
  Tensor out = aggregator.forward(tape, inp);
  return split_head(tape, out, kind, latent_dim);
}

std::vector<std::pair<std::string, Tensor>>
MetaInferenceModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  summary.mlp.collect_parameters("summary", out);
  aggregator.collect_parameters("aggregator", out);
  return out;
}

PosteriorTensors InferenceModel::infer(Tape& tape, const Tensor& x) const {
  Tensor out = net.forward(tape, x);
  return split_head(tape, out, kind, latent_dim);
}

std::vector<std::pair<std::string, Tensor>> InferenceModel::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  net.collect_parameters("encoder", out);
  return out;
}

std::size_t GenerativeModel::parameter_count() const {
  return decoder ? decoder->parameter_count() : 0;
}

DistParams GenerativeModel::decode(std::span<const double> z) const {
  DistParams out;
  out.family = likelihood;
  if (parameter_free()) {
    if (z.size() != 1)
      throw ShapeError("parameter-free decode expects scalar z");
    out.theta = {likelihood.link(z[0])};
    return out;
  }
  Tape scratch;
  Tensor zt = Tensor::from(std::vector<double>(z.begin(), z.end()), 1,
                           z.size());
  Tensor o = decoder->forward(scratch, zt);
  out.theta = o.data();
  if (likelihood.tag == FamilyTag::bernoulli) {
    for (double& v : out.theta) v = stable_sigmoid(v);
  } else if (likelihood.needs_positivity_link()) {
    for (double& v : out.theta) v = positivity_link(v);
  }
  return out;
}

Tensor GenerativeModel::log_likelihood(Tape& tape, const Tensor& x,
                                       const Tensor& z) const {
  std::size_t n = x.cols();
  double dn = static_cast<double>(n);

  if (!parameter_free()) {
    Tensor out = decoder->forward(tape, z);  // B x obs params
    if (likelihood.tag == FamilyTag::gaussian_fixed_var) {
      if (out.cols() != n)
        throw ShapeError("decoder output dim != observation dim");
      double var = likelihood.fixed;
      Tensor sq = square(tape, sub(tape, x, out));
      Tensor ll = scale(tape, row_sum(tape, sq), -1.0 / (2.0 * var));
      return add_scalar(tape, ll, -0.5 * dn * (kLog2Pi + std::log(var)));
    }
    if (likelihood.tag == FamilyTag::bernoulli) {
      if (out.cols() != n)
        throw ShapeError("decoder output dim != observation dim");
      // x*logit - softplus(logit), summed per row (x in [0,1]).
      Tensor term = sub(tape, mul(tape, x, out), softplus(tape, out));
      return row_sum(tape, term);
    }
    throw std::invalid_argument(
        "unsupported decoder likelihood family: " +
        family_to_string(likelihood.tag));
  }

  // Parameter-free decoders: z is B x 1 raw statistic; the link and the
  // family density are applied inside the graph.
  if (z.cols() != 1)
    throw ShapeError("parameter-free likelihood expects 1-D latent");

  switch (likelihood.tag) {
    case FamilyTag::gaussian_fixed_var: {
      double var = likelihood.fixed;
      Tensor mu = broadcast_col(tape, z, n);
      Tensor sq = square(tape, sub(tape, x, mu));
      Tensor ll = scale(tape, row_sum(tape, sq), -1.0 / (2.0 * var));
      return add_scalar(tape, ll, -0.5 * dn * (kLog2Pi + std::log(var)));
    }
    case FamilyTag::log_normal_fixed_var: {
      double var = likelihood.fixed;
      std::vector<double> logx(x.size());
      double log_jac = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i)
        logx[i] = std::log(x.data()[i]);
      Tensor lx = Tensor::from(std::move(logx), x.rows(), n);
      // row-wise -sum(log x) Jacobian term is constant w.r.t. z
      Tensor jac = row_sum(tape, scale(tape, lx, -1.0));
      (void)log_jac;
      Tensor mu = broadcast_col(tape, z, n);
      Tensor sq = square(tape, sub(tape, lx, mu));
      Tensor ll = scale(tape, row_sum(tape, sq), -1.0 / (2.0 * var));
      ll = add(tape, ll, jac);
      return add_scalar(tape, ll, -0.5 * dn * (kLog2Pi + std::log(var)));
    }
    case FamilyTag::exponential: {
      Tensor rate = softplus(tape, z);  // B x 1
      Tensor sum_x = row_sum(tape, x);  // constant B x 1
      Tensor ll = sub(tape, scale(tape, log_softplus(tape, z), dn),
                      mul(tape, rate, sum_x));
      return ll;
    }
    case FamilyTag::beta_symmetric: {
      Tensor a = softplus(tape, z);
      std::vector<double> s(x.rows(), 0.0);
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j)
          s[i] += std::log(x.at(i, j)) + std::log1p(-x.at(i, j));
      Tensor sx = Tensor::column(std::move(s));
      Tensor term1 = mul(tape, add_scalar(tape, a, -1.0), sx);
      Tensor log_beta = sub(tape, scale(tape, lgamma(tape, a), 2.0),
                            lgamma(tape, scale(tape, a, 2.0)));
      return sub(tape, term1, scale(tape, log_beta, dn));
    }
    case FamilyTag::laplace_fixed_loc: {
      std::vector<double> s(x.rows(), 0.0);
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j)
          s[i] += std::fabs(x.at(i, j) - likelihood.fixed);
      Tensor abs_sum = Tensor::column(std::move(s));
      Tensor log_b = log_softplus(tape, z);
      Tensor inv_b = exp(tape, neg(tape, log_b));
      Tensor ll = neg(tape, mul(tape, abs_sum, inv_b));
      ll = sub(tape, ll, scale(tape, log_b, dn));
      return add_scalar(tape, ll, -dn * std::log(2.0));
    }
    case FamilyTag::weibull_fixed_scale: {
      Tensor k = softplus(tape, z);
      std::vector<double> logx(x.size());
      std::vector<double> srow(x.rows(), 0.0);
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double lx = std::log(x.at(i, j) / likelihood.fixed);
          logx[i * n + j] = lx;
          srow[i] += lx;
        }
      Tensor lx = Tensor::from(std::move(logx), x.rows(), n);
      Tensor s = Tensor::column(std::move(srow));
      // sum_j (x_j/scale)^k = sum_j exp(k * log(x_j/scale))
      Tensor pow_sum =
          row_sum(tape, exp(tape, mul(tape, broadcast_col(tape, k, n), lx)));
      Tensor ll = scale(tape, log_softplus(tape, z), dn);
      ll = add(tape, ll, mul(tape, add_scalar(tape, k, -1.0), s));
      ll = sub(tape, ll, pow_sum);
      return add_scalar(tape, ll, -dn * std::log(likelihood.fixed));
    }
    default:
      throw std::invalid_argument(
          "unsupported parameter-free likelihood family: " +
          family_to_string(likelihood.tag));
  }
}

std::vector<std::pair<std::string, Tensor>> GenerativeModel::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  if (decoder) decoder->collect_parameters("decoder", out);
  return out;
}

Tensor kl_to_gaussian_prior(Tape& tape, const PosteriorTensors& q,
                            double prior_std) {
  if (q.kind != PosteriorKind::gaussian)
    throw std::invalid_argument("kl_to_gaussian_prior: gaussian posterior only");
  double pv = prior_std * prior_std;
  double zdim = static_cast<double>(q.mean.cols());
  Tensor var_q = exp(tape, q.log_var);
  Tensor quad = scale(
      tape, row_sum(tape, add(tape, var_q, square(tape, q.mean))), 1.0 / pv);
  Tensor ll = sub(tape, quad, row_sum(tape, q.log_var));
  ll = add_scalar(tape, ll, zdim * (std::log(pv) - 1.0));
  return scale(tape, ll, 0.5);
}

Tensor gaussian_log_density(Tape& tape, const PosteriorTensors& q,
                            const Tensor& targets) {
  if (q.kind != PosteriorKind::gaussian)
    throw std::invalid_argument("gaussian_log_density: gaussian posterior only");
  if (targets.rows() != q.mean.rows() || targets.cols() != q.mean.cols())
    throw ShapeError("gaussian_log_density: target shape mismatch");
  Tensor d2 = square(tape, sub(tape, targets, q.mean));
  Tensor inv_var = exp(tape, neg(tape, q.log_var));
  Tensor quad = row_sum(tape, mul(tape, d2, inv_var));
  Tensor ll = add(tape, quad, row_sum(tape, q.log_var));
  ll = add_scalar(tape, ll, static_cast<double>(q.mean.cols()) * kLog2Pi);
  return scale(tape, ll, -0.5);
}

}  // namespace metavi
