#include <doctest.h>

#include <cmath>
#include <map>

#include "metavi/grad_check.hpp"
#include "metavi/objectives.hpp"
#include "metavi/rng.hpp"

using namespace metavi;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Linear-Gaussian generative model with a closed-form posterior and marginal:
// z ~ N(0,1), x_j | z ~ N(a_j z + b_j, var). Everything below is derivable
// with pencil and paper, independent of the graph code.
struct ConjugateCase {
  std::vector<double> a, b, x;
  double var = 0.1;

  double posterior_precision() const {
    double prec = 1.0;
    for (double aj : a) prec += aj * aj / var;
    return prec;
  }
  double posterior_mean() const {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * (x[j] - b[j]) / var;
    return s / posterior_precision();
  }
  // log N(x; b, a a^T + var I) via the matrix determinant lemma.
  double log_marginal() const {
    std::size_t d = a.size();
    double aa = 0.0, quad = 0.0, cross = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double r = x[j] - b[j];
      aa += a[j] * a[j];
      quad += r * r;
      cross += a[j] * r;
    }
    double logdet = static_cast<double>(d) * std::log(var) +
                    std::log1p(aa / var);
    double maha = quad / var - (cross * cross) / (var * var * (1.0 + aa / var));
    return -0.5 * (static_cast<double>(d) * kLog2Pi + logdet + maha);
  }

  GenerativeModel model() const {
    GenerativeModel gen;
    gen.prior = {PosteriorKind::gaussian, 1.0, 0.5};
    gen.likelihood = Family::make(FamilyTag::gaussian_fixed_var);
    gen.obs_dim = a.size();
    Rng rng(0);
    gen.decoder = Mlp::make({1, a.size()}, Activation::identity, rng);
    Tensor& w = gen.decoder->layers[0].weight;
    Tensor& bias = gen.decoder->layers[0].bias;
    for (std::size_t j = 0; j < a.size(); ++j) {
      w.at(0, j) = a[j];
      bias.at(0, j) = b[j];
    }
    return gen;
  }
};

MetaInferenceModel tiny_meta(PosteriorKind kind, std::size_t obs_dim,
                             std::uint64_t seed) {
  Rng rng(seed);
  MetaInferenceModel meta;
  meta.summary.mlp = Mlp::make({obs_dim, 5, 4}, Activation::leaky_relu, rng);
  std::size_t head = kind == PosteriorKind::gaussian ? 2 : 1;
  meta.aggregator = Mlp::make({obs_dim + 4, 5, head}, Activation::relu, rng);
  meta.kind = kind;
  meta.latent_dim = 1;
  return meta;
}

}  // namespace

TEST_CASE("reparameterized ELBO at the exact posterior averages to the "
          "log marginal") {
  ConjugateCase c;
  c.a = {0.8, -0.4};
  c.b = {0.3, 0.1};
  c.x = {0.9, -0.2};
  GenerativeModel gen = c.model();

  double post_var = 1.0 / c.posterior_precision();
  PosteriorTensors q;
  q.kind = PosteriorKind::gaussian;
  q.mean = Tensor::scalar(c.posterior_mean());
  q.log_var = Tensor::scalar(std::log(post_var));
  Tensor x = Tensor::from(c.x, 1, 2);

  Rng rng(314);
  const std::size_t n = 20000;
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Tape tape;
    Tensor noise = Tensor::scalar(rng.normal());
    double v = elbo_from_posterior(tape, q, gen, x, noise).value();
    s1 += v;
    s2 += v * v;
  }
  double mean = s1 / n;
  double se = std::sqrt((s2 / n - mean * mean) / n);
  double oracle = c.log_marginal();
  INFO("mean ", mean, " oracle ", oracle, " se ", se);
  CHECK(std::fabs(mean - oracle) < 3.0 * se + 1e-9);
  // A mismatched posterior must fall strictly below the marginal.
  PosteriorTensors bad = q;
  bad.mean = Tensor::scalar(c.posterior_mean() + 1.0);
  Tape tape;
  CHECK(elbo_from_posterior(tape, bad, gen, x, Tensor::scalar(0.0)).value() <
        oracle);
}

TEST_CASE("enumerated ELBO matches an explicit two-term sum and is tight at "
          "the true posterior") {
  Rng rng(21);
  GenerativeModel gen;
  gen.prior = {PosteriorKind::bernoulli, 1.0, 0.5};
  gen.likelihood = Family::make(FamilyTag::gaussian_fixed_var);
  gen.obs_dim = 2;
  gen.decoder = Mlp::make({1, 2}, Activation::identity, rng);
  gen.decoder->layers[0].weight.at(0, 0) = 1.5;
  gen.decoder->layers[0].weight.at(0, 1) = -0.7;
  gen.decoder->layers[0].bias.at(0, 0) = 0.2;
  gen.decoder->layers[0].bias.at(0, 1) = 0.4;

  Tensor x = Tensor::from({0.5, 0.1}, 1, 2);

  auto log_lik = [&](double zv) {
    double zr[1] = {zv};
    DistParams dp = gen.decode(zr);
    std::vector<double> row = {0.5, 0.1};
    return log_prob(dp, row);
  };

  double logit = 0.35;
  PosteriorTensors q;
  q.kind = PosteriorKind::bernoulli;
  q.logit = Tensor::scalar(logit);

  double q1 = 1.0 / (1.0 + std::exp(-logit));
  double q0 = 1.0 - q1;
  double oracle = q1 * (log_lik(1.0) + std::log(0.5) - std::log(q1)) +
                  q0 * (log_lik(0.0) + std::log(0.5) - std::log(q0));
  Tape tape;
  double val = elbo_enumerated_from_posterior(tape, q, gen, x).value();
  CHECK(val == doctest::Approx(oracle).epsilon(1e-9));

  // With the exact posterior logit the bound equals the log marginal.
  double log_marginal = std::log(0.5 * std::exp(log_lik(0.0)) +
                                 0.5 * std::exp(log_lik(1.0)));
  double post_logit = log_lik(1.0) - log_lik(0.0);  // uniform prior
  PosteriorTensors exact;
  exact.kind = PosteriorKind::bernoulli;
  exact.logit = Tensor::scalar(post_logit);
  Tape tape2;
  double tight = elbo_enumerated_from_posterior(tape2, exact, gen, x).value();
  CHECK(std::fabs(tight - log_marginal) <= 1e-9);
  CHECK(val <= log_marginal + 1e-12);
}

TEST_CASE("meta objective over a single dataset equals the plain ELBO") {
  SUBCASE("binary latent, enumerated") {
    Rng rng(31);
    MetaInferenceModel meta = tiny_meta(PosteriorKind::bernoulli, 2, 5);
    GenerativeModel gen;
    gen.prior = {PosteriorKind::bernoulli, 1.0, 0.5};
    gen.likelihood = Family::make(FamilyTag::gaussian_fixed_var);
    gen.obs_dim = 2;
    gen.decoder = Mlp::make({1, 4, 2}, Activation::relu, rng);

    Tensor bundle = Tensor::zeros(15, 2);
    for (double& e : bundle.data()) e = rng.normal();
    Tensor x = Tensor::zeros(6, 2);
    for (double& e : x.data()) e = rng.normal();

    MetaBatchEntry entry;
    entry.dataset_id = "d0";
    entry.bundle = bundle;
    entry.x = x;
    std::map<std::string, const GenerativeModel*> gens{{"d0", &gen}};

    Tape t1;
    double meta_val = meta_elbo(t1, meta, gens, {entry}).value();
    Tape t2;
    PosteriorTensors q = meta.infer(t2, bundle, x);
    double plain = elbo_enumerated_from_posterior(t2, q, gen, x).value();
    CHECK(std::fabs(meta_val - plain) <= 1e-9);
  }

  SUBCASE("gaussian latent, reparameterized with shared noise") {
    Rng rng(32);
    MetaInferenceModel meta = tiny_meta(PosteriorKind::gaussian, 3, 6);
    GenerativeModel gen;
    gen.prior = {PosteriorKind::gaussian, 1.0, 0.5};
    gen.likelihood = Family::make(FamilyTag::gaussian_fixed_var);
    gen.obs_dim = 3;

    Tensor bundle = Tensor::zeros(12, 3);
    for (double& e : bundle.data()) e = 0.5 + 0.1 * rng.normal();
    Tensor x = Tensor::zeros(4, 3);
    for (double& e : x.data()) e = 0.5 + 0.1 * rng.normal();
    Tensor noise = Tensor::zeros(4, 1);
    for (double& e : noise.data()) e = rng.normal();

    MetaBatchEntry entry;
    entry.dataset_id = "d0";
    entry.bundle = bundle;
    entry.x = x;
    entry.noise = noise;
    std::map<std::string, const GenerativeModel*> gens{{"d0", &gen}};

    Tape t1;
    double meta_val = meta_elbo(t1, meta, gens, {entry}).value();
    Tape t2;
    PosteriorTensors q = meta.infer(t2, bundle, x);
    double plain = elbo_from_posterior(t2, q, gen, x, noise).value();
    CHECK(std::fabs(meta_val - plain) <= 1e-9);
  }
}

TEST_CASE("meta objective averages per-dataset terms and validates ids") {
  Rng rng(33);
  MetaInferenceModel meta = tiny_meta(PosteriorKind::bernoulli, 2, 7);
  GenerativeModel gen;
  gen.prior = {PosteriorKind::bernoulli, 1.0, 0.5};
  gen.likelihood = Family::make(FamilyTag::gaussian_fixed_var);
  gen.obs_dim = 2;
  gen.decoder = Mlp::make({1, 3, 2}, Activation::relu, rng);

  auto entry = [&](const std::string& id) {
    MetaBatchEntry e;
    e.dataset_id = id;
    e.bundle = Tensor::zeros(8, 2);
    e.x = Tensor::zeros(3, 2);
    Rng r(std::hash<std::string>{}(id));
    for (double& v : e.bundle.data()) v = r.normal();
    for (double& v : e.x.data()) v = r.normal();
    return e;
  };
  std::map<std::string, const GenerativeModel*> gens{{"a", &gen}, {"b", &gen}};

  Tape tape;
  LossBreakdown lb = meta_elbo(tape, meta, gens, {entry("a"), entry("b")});
  REQUIRE(lb.per_dataset.size() == 2);
  CHECK(lb.value() == doctest::Approx(
                          0.5 * (lb.per_dataset[0] + lb.per_dataset[1]))
                          .epsilon(1e-12));

  Tape t2;
  CHECK_THROWS(meta_elbo(t2, meta, gens, {entry("missing")}));
  Tape t3;
  CHECK_THROWS(meta_elbo(t3, meta, gens, {}));
}

TEST_CASE("compiled inference loss equals the mean posterior log-density of "
          "the true latents") {
  MetaInferenceModel meta = tiny_meta(PosteriorKind::gaussian, 1, 8);
  Rng rng(34);
  MetaBatchEntry entry;
  entry.dataset_id = "sim";
  entry.bundle = Tensor::zeros(10, 1);
  entry.x = Tensor::zeros(5, 1);
  entry.z_true = Tensor::zeros(5, 1);
  for (double& v : entry.bundle.data()) v = 1.0 + 0.2 * rng.normal();
  for (double& v : entry.x.data()) v = 1.0 + 0.2 * rng.normal();
  for (double& v : entry.z_true.data()) v = 0.3 * rng.uniform();

  Tape tape;
  LossBreakdown lb = compiled_loss(tape, meta, {entry});
  Tape t2;
  PosteriorTensors q = meta.infer(t2, entry.bundle, entry.x);
  double expect = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    double var = std::exp(q.log_var.at(i, 0));
    double d = entry.z_true.at(i, 0) - q.mean.at(i, 0);
    expect += -0.5 * (kLog2Pi + std::log(var)) - d * d / (2.0 * var);
  }
  expect /= 5.0;
  CHECK(lb.value() == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("meta objective gradients pass the finite-difference check") {
  // Smooth activations keep central differences clean; the piecewise-linear
  // activations get their own kink-aware check in the tensor suite.
  Rng rng(35);
  MetaInferenceModel meta;
  meta.summary.mlp = Mlp::make({2, 5, 4}, Activation::softplus, rng);
  meta.aggregator = Mlp::make({6, 5, 1}, Activation::softplus, rng);
  meta.kind = PosteriorKind::bernoulli;
  meta.latent_dim = 1;
  GenerativeModel gen;
  gen.prior = {PosteriorKind::bernoulli, 1.0, 0.5};
  gen.likelihood = Family::make(FamilyTag::gaussian_fixed_var);
  gen.obs_dim = 2;
  gen.decoder = Mlp::make({1, 3, 2}, Activation::softplus, rng);

  MetaBatchEntry entry;
  entry.dataset_id = "d";
  entry.bundle = Tensor::zeros(8, 2);
  entry.x = Tensor::zeros(3, 2);
  for (double& v : entry.bundle.data()) v = rng.normal();
  for (double& v : entry.x.data()) v = rng.normal();
  std::map<std::string, const GenerativeModel*> gens{{"d", &gen}};

  auto params = meta.named_parameters();
  for (auto& [n, t] : gen.named_parameters()) params.emplace_back(n, t);

  auto loss_fn = [&](Tape& tape) {
    return meta_elbo(tape, meta, gens, {entry}).total;
  };
  GradCheckResult res = grad_check(loss_fn, params);
  CHECK(res.checked > 0);
  CHECK(res.max_rel_error < 1e-4);
}
