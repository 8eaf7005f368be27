#include "metavi/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>

namespace metavi {

namespace {

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k,
                                        Rng& rng) {
  k = std::min(k, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i)
    std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return idx;
}

Tensor rows_subset(const Tensor& m, std::span<const std::size_t> idx) {
  Tensor out = Tensor::zeros(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      out.at(i, j) = m.at(idx[i], j);
  return out;
}

std::vector<std::size_t> mlp_dims(std::size_t in, std::size_t hidden,
                                  std::size_t n_layers, std::size_t out) {
  std::vector<std::size_t> dims{in};
  for (std::size_t l = 0; l + 1 < n_layers; ++l) dims.push_back(hidden);
  dims.push_back(out);
  return dims;
}

std::size_t observation_dim(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case ExperimentKind::mog: return 2;
    case ExperimentKind::physics: return 1;
    case ExperimentKind::expfam: return cfg.data.vec_dim;
    case ExperimentKind::mnist_pairs: return 784;
  }
  return 1;
}

GenerativeModel make_generative(const ExperimentConfig& cfg,
                                FamilyTag family, Rng& rng) {
  GenerativeModel gen;
  switch (cfg.experiment) {
    case ExperimentKind::mog:
      gen.prior = {PosteriorKind::bernoulli, 1.0, 0.5};
      gen.likelihood = Family::make(FamilyTag::gaussian_fixed_var);
      gen.obs_dim = 2;
      gen.decoder = Mlp::make(
          mlp_dims(1, cfg.arch.hidden_dim, cfg.arch.n_layers, 2),
          Activation::relu, rng);
      break;
    case ExperimentKind::expfam:
      gen.prior = {PosteriorKind::gaussian, cfg.arch.prior_std, 0.5};
      gen.likelihood = Family::make(family);
      gen.obs_dim = cfg.data.vec_dim;
      break;  // parameter-free
    case ExperimentKind::mnist_pairs:
      gen.prior = {PosteriorKind::gaussian, cfg.arch.prior_std, 0.5};
      gen.likelihood = Family::make(FamilyTag::bernoulli);
      gen.obs_dim = 784;
      gen.decoder = Mlp::make(
          mlp_dims(cfg.arch.latent_dim, cfg.arch.hidden_dim, cfg.arch.n_layers,
                   784),
          Activation::relu, rng);
      break;
    case ExperimentKind::physics:
      throw ConfigError("physics uses the simulator as a fixed generative model");
  }
  return gen;
}

ModelSet build_models_impl(
    const ExperimentConfig& cfg,
    const std::vector<std::pair<std::string, FamilyTag>>& gen_specs) {
  ModelSet ms;
  ms.cfg = cfg;
  Rng rng = Rng::substream(cfg.seed, "init");
  std::size_t obs = observation_dim(cfg);
  PosteriorKind kind = posterior_kind_from_string(cfg.arch.posterior);
  std::size_t head =
      kind == PosteriorKind::gaussian ? 2 * cfg.arch.latent_dim : 1;

  if (cfg.model == "metavae") {
    MetaInferenceModel meta;
    meta.summary.mlp = Mlp::make(
        mlp_dims(obs, cfg.arch.hidden_dim, cfg.arch.n_layers,
                 cfg.arch.summary_dim),
        Activation::leaky_relu, rng);
    meta.aggregator = Mlp::make(
        mlp_dims(obs + cfg.arch.summary_dim, cfg.arch.hidden_dim,
                 cfg.arch.n_layers, head),
        Activation::relu, rng);
    meta.kind = kind;
    meta.latent_dim = cfg.arch.latent_dim;
    ms.meta = std::move(meta);
  } else {
    InferenceModel inf;
    inf.net = Mlp::make(
        mlp_dims(obs, cfg.arch.hidden_dim, cfg.arch.n_layers, head),
        Activation::relu, rng);
    inf.kind = kind;
    inf.latent_dim = cfg.arch.latent_dim;
    ms.inference = std::move(inf);
  }

  if (cfg.experiment != ExperimentKind::physics)
    for (const auto& [id, fam] : gen_specs)
      ms.gens.emplace_back(id, make_generative(cfg, fam, rng));
  return ms;
}

std::vector<std::pair<std::string, FamilyTag>> gen_specs_from_data(
    const ExperimentConfig& cfg, const MetaDataset& data) {
  std::vector<std::pair<std::string, FamilyTag>> specs;
  if (cfg.experiment == ExperimentKind::physics) return specs;
  for (const auto& b : cfg.model == "vae"
                           ? std::vector<DatasetBundle>{data.train.at(0)}
                           : data.train) {
    FamilyTag fam = FamilyTag::gaussian_fixed_var;
    if (cfg.experiment == ExperimentKind::expfam)
      fam = family_from_string(b.provenance.at("family").get<std::string>());
    specs.emplace_back(b.id, fam);
  }
  return specs;
}

const char* kMnistImages = "train-images-idx3-ubyte";
const char* kMnistLabels = "train-labels-idx1-ubyte";

}  // namespace

const GenerativeModel* ModelSet::gen(const std::string& id) const {
  for (const auto& [gid, g] : gens)
    if (gid == id) return &g;
  return nullptr;
}

std::vector<std::pair<std::string, Tensor>> ModelSet::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  if (meta)
    for (auto& [n, t] : meta->named_parameters())
      out.emplace_back(n, t);
  if (inference)
    for (auto& [n, t] : inference->named_parameters())
      out.emplace_back(n, t);
  for (const auto& [id, g] : gens)
    for (auto& [n, t] : g.named_parameters())
      out.emplace_back("gen/" + id + "/" + n, t);
  return out;
}

ModelSet build_models(const ExperimentConfig& cfg, const MetaDataset& data) {
  return build_models_impl(cfg, gen_specs_from_data(cfg, data));
}

Checkpoint snapshot(const ModelSet& models, const Adam* opt,
                    std::uint64_t training_step) {
  Checkpoint ckpt;
  nlohmann::json gen_ids = nlohmann::json::array();
  nlohmann::json gen_fams = nlohmann::json::object();
  for (const auto& [id, g] : models.gens) {
    gen_ids.push_back(id);
    gen_fams[id] = family_to_string(g.likelihood.tag);
  }
  ckpt.architecture = {{"config", models.cfg.to_json()},
                       {"gen_ids", gen_ids},
                       {"gen_families", gen_fams}};
  for (const auto& [name, t] : models.named_parameters())
    ckpt.tensors.emplace_back(name, t.data());
  if (opt) {
    ckpt.optimizer_state = opt->serialize_state();
    ckpt.optimizer_step = opt->t();
  }
  ckpt.rng_seed = models.cfg.seed;
  ckpt.training_step = training_step;
  return ckpt;
}

ModelSet restore_models(const Checkpoint& ckpt) {
  ExperimentConfig cfg =
      parse_config(ckpt.architecture.at("config"), /*strict=*/false);
  std::vector<std::pair<std::string, FamilyTag>> specs;
  for (const auto& id : ckpt.architecture.at("gen_ids")) {
    std::string sid = id.get<std::string>();
    specs.emplace_back(
        sid, family_from_string(
                 ckpt.architecture.at("gen_families").at(sid).get<std::string>()));
  }
  ModelSet ms = build_models_impl(cfg, specs);
  std::map<std::string, std::vector<double>> saved;
  for (const auto& [name, data] : ckpt.tensors) saved[name] = data;
  for (auto& [name, t] : ms.named_parameters()) {
    auto it = saved.find(name);
    if (it == saved.end())
      throw CheckpointError("checkpoint missing tensor '" + name + "'");
    if (it->second.size() != t.size())
      throw CheckpointError("checkpoint tensor '" + name + "' size mismatch");
    t.data() = it->second;
  }
  return ms;
}

MetaDataset generate_data(const ExperimentConfig& cfg) {
  std::uint64_t data_seed = Rng::derive(cfg.seed, "data");
  switch (cfg.experiment) {
    case ExperimentKind::mog:
      return gen_mog_meta(data_seed,
                          cfg.model == "vae" ? 1 : cfg.data.n_datasets,
                          cfg.data.n_samples, cfg.data.n_test,
                          cfg.data.mean_low, cfg.data.mean_high);
    case ExperimentKind::physics: {
      if (cfg.model == "vae")
        return gen_physics_meta(data_seed, {cfg.data.baseline_length},
                                {cfg.data.baseline_angle},
                                cfg.data.runs_per_sim);
      return gen_physics_meta(data_seed, cfg.data.lengths, cfg.data.angles,
                              cfg.data.runs_per_sim);
    }
    case ExperimentKind::expfam: {
      if (cfg.model == "vae") {
        MetaDataset md;
        md.generator_spec = {{"kind", "expfam_single"},
                             {"family", cfg.data.baseline_family},
                             {"param", cfg.data.baseline_param}};
        Rng rng = Rng::substream(data_seed, "expfam_baseline");
        md.train.push_back(gen_expfam_bundle(
            rng, "expfam_baseline",
            family_from_string(cfg.data.baseline_family),
            cfg.data.baseline_param, cfg.data.vec_dim,
            cfg.data.n_realizations));
        return md;
      }
      return gen_expfam_meta(data_seed, cfg.data.families,
                             cfg.data.n_per_family, cfg.data.vec_dim,
                             cfg.data.n_realizations);
    }
    case ExperimentKind::mnist_pairs: {
      std::filesystem::path images = cfg.data.images_path;
      std::filesystem::path labels = cfg.data.labels_path;
      if (images.empty() || labels.empty()) {
        const char* dir = std::getenv("METAVI_DATA_DIR");
        if (!dir)
          throw DataError(
              "mnist_pairs: set data.images_path/labels_path or "
              "METAVI_DATA_DIR");
        if (images.empty()) images = std::filesystem::path(dir) / kMnistImages;
        if (labels.empty()) labels = std::filesystem::path(dir) / kMnistLabels;
      }
      DatasetBundle all = load_idx(images, labels);
      return make_digit_pairs(all, cfg.data.held_out, cfg.data.n_pairs,
                              data_seed, cfg.data.per_digit);
    }
  }
  throw ConfigError("unreachable experiment kind");
}

void MetricsRecord::write_csv(const std::filesystem::path& path) const {
  std::ofstream ofs(path, std::ios::trunc);
  if (!ofs) throw DataError("cannot write " + path.string());
  ofs << "step,total,recon,kl\n";
  for (const auto& r : epochs)
    ofs << r.step << "," << r.total << "," << r.recon << "," << r.kl << "\n";
}

nlohmann::json MetricsRecord::summary() const {
  return {{"run_id", run_id},
          {"eval_seed", eval_seed},
          {"epochs", epochs.size()},
          {"final_metrics", final_metrics},
          {"wall_time_sec", wall_time_sec}};
}

TrainResult train(const ExperimentConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  MetaDataset data = generate_data(cfg);
  if (data.train.empty()) throw DataError("train: no training bundles");
  ModelSet models = build_models(cfg, data);

  Adam opt(models.named_parameters(), AdamConfig{cfg.optim.lr});
  Rng rng = Rng::substream(cfg.seed, "training");
  PosteriorKind kind = posterior_kind_from_string(cfg.arch.posterior);

  std::size_t n_datasets = data.train.size();
  std::size_t points = data.train[0].size();
  std::size_t batch = std::min(cfg.optim.batch_size, points);
  std::size_t steps_per_epoch =
      n_datasets * ((points + batch - 1) / batch);

  TrainResult result;
  result.metrics.run_id = cfg.run_id();
  result.metrics.eval_seed = cfg.seed;
  Checkpoint last_good = snapshot(models, &opt, 0);
  std::uint64_t global_step = 0;

  for (std::size_t epoch = 0; epoch < cfg.optim.epochs; ++epoch) {
    double tot = 0.0, rec = 0.0, klv = 0.0;
    try {
      for (std::size_t s = 0; s < steps_per_epoch; ++s) {
        const DatasetBundle& bundle =
            data.train[n_datasets == 1 ? 0 : rng.below(n_datasets)];
        auto batch_idx = sample_indices(bundle.size(), batch, rng);
        Tensor x = rows_subset(bundle.observations, batch_idx);

        Tape tape;
        MetaBatchEntry entry;
        entry.dataset_id = bundle.id;
        entry.x = x;
        if (models.is_meta()) {
          auto bundle_idx =
              sample_indices(bundle.size(), cfg.arch.bundle_size, rng);
          entry.bundle = rows_subset(bundle.observations, bundle_idx);
        }
        if (kind == PosteriorKind::gaussian &&
            cfg.experiment != ExperimentKind::physics) {
          entry.noise = Tensor::zeros(x.rows(), cfg.arch.latent_dim);
          for (double& v : entry.noise.data()) v = rng.normal();
        }
        if (cfg.experiment == ExperimentKind::physics)
          entry.z_true = rows_subset(bundle.targets, batch_idx);

        LossBreakdown lb;
        if (models.is_meta()) {
          if (cfg.experiment == ExperimentKind::physics) {
            lb = compiled_loss(tape, *models.meta, {entry});
          } else {
            std::map<std::string, const GenerativeModel*> gens;
            gens[bundle.id] = models.gen(bundle.id);
            lb = meta_elbo(tape, *models.meta, gens, {entry});
          }
        } else {
          if (cfg.experiment == ExperimentKind::physics) {
            PosteriorTensors q = models.inference->infer(tape, x);
            Tensor ll =
                mean_all(tape, gaussian_log_density(tape, q, entry.z_true));
            lb.total = ll;
            lb.reconstruction = ll.item();
          } else {
            const GenerativeModel& gen = models.gens.at(0).second;
            lb = kind == PosteriorKind::bernoulli
                     ? elbo_enumerated(tape, *models.inference, gen, x)
                     : elbo_mc(tape, *models.inference, gen, x, entry.noise);
          }
        }
        if (!std::isfinite(lb.value()))
          throw NumericError("loss diverged at step " +
                             std::to_string(global_step));
        Tensor loss = neg(tape, lb.total);
        opt.zero_grad();
        tape.backward(loss);
        opt.step();
        ++global_step;
        tot += lb.value();
        rec += lb.reconstruction;
        klv += lb.kl;
      }
    } catch (const NumericError& e) {
      result.diverged = true;
      result.divergence_reason = e.what();
      result.checkpoint = last_good;
      auto t1 = std::chrono::steady_clock::now();
      result.metrics.wall_time_sec =
          std::chrono::duration<double>(t1 - t0).count();
      return result;
    }
    double inv = 1.0 / static_cast<double>(steps_per_epoch);
    result.metrics.epochs.push_back(
        {global_step, tot * inv, rec * inv, klv * inv});
    last_good = snapshot(models, &opt, global_step);
  }

  result.checkpoint = std::move(last_good);
  auto t1 = std::chrono::steady_clock::now();
  result.metrics.wall_time_sec =
      std::chrono::duration<double>(t1 - t0).count();
  return result;
}

double clustering_error(std::span<const int> predicted,
                        std::span<const int> truth) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw std::invalid_argument("clustering_error: length mismatch or empty");
  std::size_t mismatch = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if ((predicted[i] != 0) != (truth[i] != 0)) ++mismatch;
  return static_cast<double>(std::min(mismatch, predicted.size() - mismatch)) /
         static_cast<double>(predicted.size());
}

Tensor embed_posterior(const ModelSet& models, const DatasetBundle& bundle,
                       const Tensor& x, std::uint64_t seed) {
  Tape tape;
  PosteriorTensors q;
  if (models.is_meta()) {
    Rng rng = Rng::substream(seed, "embed_bundle");
    auto idx =
        sample_indices(bundle.size(), models.cfg.arch.bundle_size, rng);
    Tensor b = rows_subset(bundle.observations, idx);
    q = models.meta->infer(tape, b, x);
  } else {
    q = models.inference->infer(tape, x);
  }
  return q.kind == PosteriorKind::gaussian ? q.mean : q.logit;
}

double eval_mog(const Checkpoint& ckpt, std::size_t n_test_mixtures,
                std::uint64_t seed) {
  ModelSet models = restore_models(ckpt);
  const auto& cfg = models.cfg;
  double err_sum = 0.0;
  for (std::size_t i = 0; i < n_test_mixtures; ++i) {
    Rng rng = Rng::substream(seed, "eval_mog", i);
    DatasetBundle b =
        gen_mog_bundle(rng, "eval_" + std::to_string(i), cfg.data.n_samples,
                       cfg.data.mean_low, cfg.data.mean_high);
    Tensor logits =
        embed_posterior(models, b, b.observations, Rng::derive(seed, "bundle", i));
    std::vector<int> pred(b.size());
    for (std::size_t r = 0; r < b.size(); ++r)
      pred[r] = logits.at(r, 0) > 0.0 ? 1 : 0;
    err_sum += clustering_error(pred, b.labels);
  }
  return err_sum / static_cast<double>(n_test_mixtures);
}

double PhysicsGrid::region_mean(double l_lo, double l_hi, double a_lo,
                                double a_hi) const {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t li = 0; li < lengths.size(); ++li)
    for (std::size_t ai = 0; ai < angles.size(); ++ai)
      if (lengths[li] >= l_lo && lengths[li] <= l_hi && angles[ai] >= a_lo &&
          angles[ai] <= a_hi) {
        sum += cell(li, ai);
        ++count;
      }
  if (count == 0) throw std::invalid_argument("region_mean: empty region");
  return sum / static_cast<double>(count);
}

void PhysicsGrid::write_csv(const std::filesystem::path& path) const {
  std::ofstream ofs(path, std::ios::trunc);
  if (!ofs) throw DataError("cannot write " + path.string());
  ofs << "L,A,mse\n";
  for (std::size_t li = 0; li < lengths.size(); ++li)
    for (std::size_t ai = 0; ai < angles.size(); ++ai)
      ofs << lengths[li] << "," << angles[ai] << "," << cell(li, ai) << "\n";
}

PhysicsGrid eval_physics_grid(const Checkpoint& ckpt, std::uint64_t seed) {
  ModelSet models = restore_models(ckpt);
  const auto& cfg = models.cfg;
  PhysicsGrid grid;
  for (double l = 2.0; l <= 20.0 + 1e-9; l += 2.0) grid.lengths.push_back(l);
  for (double a = 5.0; a <= 85.0 + 1e-9; a += 5.0) grid.angles.push_back(a);
  std::size_t idx = 0;
  for (double l : grid.lengths)
    for (double a : grid.angles) {
      Rng rng = Rng::substream(seed, "eval_physics", idx);
      InclineSpec spec{l, a};
      DatasetBundle b = gen_physics_bundle(
          rng, "cell", spec, cfg.eval.runs_per_cell);
      Tensor means = embed_posterior(models, b, b.observations,
                                     Rng::derive(seed, "cell_bundle", idx));
      double se = 0.0;
      for (std::size_t r = 0; r < b.size(); ++r) {
        double d = means.at(r, 0) - b.targets.at(r, 0);
        se += d * d;
      }
      grid.mse.push_back(se / static_cast<double>(b.size()));
      ++idx;
    }
  return grid;
}

namespace {

// Predicts a parameter from a scalar statistic by averaging the k nearest
// calibration pairs (statistic, parameter) along the statistic axis.
double knn_readout(const std::vector<std::pair<double, double>>& calib,
                   double s, std::size_t k) {
  auto it = std::lower_bound(
      calib.begin(), calib.end(), std::pair<double, double>{s, -1e300});
  std::size_t hi_i = static_cast<std::size_t>(it - calib.begin());
  std::size_t lo_i = hi_i;  // [lo_i, hi_i) = neighbours taken so far
  double sum = 0.0;
  for (std::size_t taken = 0; taken < k && (lo_i > 0 || hi_i < calib.size());
       ++taken) {
    bool take_lo = hi_i >= calib.size() ||
                   (lo_i > 0 && s - calib[lo_i - 1].first <=
                                    calib[hi_i].first - s);
    sum += take_lo ? calib[--lo_i].second : calib[hi_i++].second;
  }
  return sum / static_cast<double>(hi_i - lo_i);
}

}  // namespace

MseCurve eval_expfam(const Checkpoint& ckpt, FamilyTag family, double lo,
                     double hi, double step, std::size_t realizations,
                     std::uint64_t seed) {
  ModelSet models = restore_models(ckpt);
  const auto& cfg = models.cfg;
  Family fam = Family::make(family);

  // For families the model trained on, the latent is the family parameter by
  // construction and is read out through the family link. A family outside
  // the training mix has no such readout: the latent is only a learned
  // statistic of the data, so we calibrate a nearest-neighbour regression
  // from statistic to parameter on independently drawn bundles and apply it
  // on the evaluation grid.
  bool trained_on = false;
  for (const auto& [id, gm] : models.gens)
    if (gm.likelihood.tag == family) trained_on = true;

  // A parameter is estimated from a whole dataset: the raw posterior
  // statistic is averaged over every observation in the bundle before the
  // readout, so each realization yields one dataset-level estimate.
  const std::size_t n_set = std::max<std::size_t>(cfg.arch.bundle_size, 8);
  auto dataset_statistic = [&](const DatasetBundle& b, std::uint64_t s_seed) {
    Tensor raw = embed_posterior(models, b, b.observations, s_seed);
    double s = 0.0;
    for (std::size_t r = 0; r < raw.rows(); ++r) s += raw.at(r, 0);
    return s / static_cast<double>(raw.rows());
  };

  std::vector<std::pair<double, double>> calib;
  if (!trained_on) {
    const std::size_t n_calib = 400;
    for (std::size_t i = 0; i < n_calib; ++i) {
      Rng rng = Rng::substream(seed, "expfam_calib", i);
      double p = rng.uniform(lo, hi);
      if (fam.needs_positivity_link())
        while (p < 0.1) p = rng.uniform(lo, hi);
      DatasetBundle b = gen_expfam_bundle(rng, "calib", family, p,
                                          cfg.data.vec_dim, n_set);
      calib.emplace_back(dataset_statistic(b, Rng::derive(seed, "efc", i)),
                         p);
    }
    std::sort(calib.begin(), calib.end());
  }

  MseCurve curve;
  std::size_t g = 0;
  for (double p = lo; p <= hi + 1e-9; p += step, ++g) {
    if (fam.needs_positivity_link() && p <= 1e-6) continue;
    double se = 0.0;
    for (std::size_t i = 0; i < realizations; ++i) {
      Rng rng = Rng::substream(seed, "eval_expfam", g * 1024 + i);
      DatasetBundle b = gen_expfam_bundle(rng, "grid", family, p,
                                          cfg.data.vec_dim, n_set);
      double s =
          dataset_statistic(b, Rng::derive(seed, "efb", g * 1024 + i));
      double est = trained_on ? fam.link(s) : knn_readout(calib, s, 9);
      se += (est - p) * (est - p);
    }
    curve.params.push_back(p);
    curve.mse.push_back(se / static_cast<double>(realizations));
  }
  return curve;
}

double linear_probe(const Tensor& features, const std::vector<int>& labels,
                    std::uint64_t seed) {
  std::size_t n = features.rows(), d = features.cols();
  if (labels.size() != n || n < 10)
    throw ConfigError("linear_probe: need >= 10 labeled rows");

  Rng rng = Rng::substream(seed, "probe_split");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n - 1; i > 0; --i)
    std::swap(idx[i], idx[rng.below(i + 1)]);
  std::size_t n_train = (n * 4) / 5;

  bool has0 = false, has1 = false;
  for (std::size_t i = 0; i < n_train; ++i)
    (labels[idx[i]] == 0 ? has0 : has1) = true;
  if (!has0 || !has1)
    throw ConfigError("linear_probe: single-class training split");

  // Full-batch GD on L2-regularized logistic loss; the step size is the
  // inverse of a Lipschitz bound so no line search is needed.
  const double lambda = 1e-4;
  std::vector<double> w(d + 1, 0.0);
  double max_sq = 0.0;
  for (std::size_t i = 0; i < n_train; ++i) {
    double sq = 1.0;
    for (std::size_t j = 0; j < d; ++j)
      sq += features.at(idx[i], j) * features.at(idx[i], j);
    max_sq = std::max(max_sq, sq);
  }
  double lr = 1.0 / (0.25 * max_sq + lambda);

  std::vector<double> grad(d + 1);
  for (int iter = 0; iter < 5000; ++iter) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n_train; ++i) {
      std::size_t r = idx[i];
      double z = w[d];
      for (std::size_t j = 0; j < d; ++j) z += w[j] * features.at(r, j);
      double err = stable_sigmoid(z) - static_cast<double>(labels[r]);
      for (std::size_t j = 0; j < d; ++j) grad[j] += err * features.at(r, j);
      grad[d] += err;
    }
    double inv = 1.0 / static_cast<double>(n_train);
    double norm_sq = 0.0;
    for (std::size_t j = 0; j <= d; ++j) {
      grad[j] = grad[j] * inv + 2.0 * lambda * w[j];
      norm_sq += grad[j] * grad[j];
    }
    if (std::sqrt(norm_sq) < 1e-6) break;
    for (std::size_t j = 0; j <= d; ++j) w[j] -= lr * grad[j];
  }

  std::size_t correct = 0;
  for (std::size_t i = n_train; i < n; ++i) {
    std::size_t r = idx[i];
    double z = w[d];
    for (std::size_t j = 0; j < d; ++j) z += w[j] * features.at(r, j);
    if ((z > 0.0 ? 1 : 0) == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n - n_train);
}

std::vector<PairAccuracy> eval_digit_pairs(const Checkpoint& ckpt,
                                           const MetaDataset& pairs,
                                           std::uint64_t seed) {
  ModelSet models = restore_models(ckpt);
  std::vector<PairAccuracy> out;
  for (const auto& bundle : pairs.test) {
    std::size_t n = bundle.size();
    Tensor features =
        Tensor::zeros(n, models.cfg.arch.latent_dim);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> one{i};
      Tensor x = rows_subset(bundle.observations, one);
      Tensor mean = embed_posterior(
          models, bundle, x, Rng::derive(seed, "pair_" + bundle.id, i));
      for (std::size_t j = 0; j < mean.cols(); ++j)
        features.at(i, j) = mean.at(0, j);
    }
    double acc = linear_probe(features, bundle.labels,
                              Rng::derive(seed, "probe_" + bundle.id));
    out.push_back({bundle.id, acc});
  }
  return out;
}

std::vector<std::pair<double, double>> finetune_eval(
    const Checkpoint& ckpt, const DatasetBundle& target,
    const std::vector<double>& fractions, std::uint64_t seed) {
  ModelSet models = restore_models(ckpt);
  if (!models.is_meta() || models.cfg.experiment != ExperimentKind::mog)
    throw ConfigError("finetune_eval expects a MoG MetaVAE checkpoint");
  const auto& cfg = models.cfg;

  std::vector<std::pair<double, double>> curve;
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    double frac = fractions[fi];
    std::size_t n_use = static_cast<std::size_t>(
        std::floor(frac * static_cast<double>(target.size())));
    if (n_use < 2)
      throw ConfigError("finetune_eval: fraction yields < 2 samples");

    Rng rng = Rng::substream(seed, "finetune", fi);
    auto subset_idx = sample_indices(target.size(), n_use, rng);
    Tensor subset = rows_subset(target.observations, subset_idx);

    // Fresh decoder; the meta-inference net stays frozen.
    GenerativeModel gen = make_generative(cfg, FamilyTag::gaussian_fixed_var,
                                          rng);
    Adam opt(gen.named_parameters(), AdamConfig{cfg.optim.lr});
    std::size_t batch = std::min(cfg.optim.batch_size, n_use);
    std::map<std::string, const GenerativeModel*> gens{{"ft", &gen}};
    for (std::size_t step = 0; step < 500; ++step) {
      auto bi = sample_indices(n_use, batch, rng);
      std::vector<std::size_t> rows(bi.size());
      for (std::size_t k = 0; k < bi.size(); ++k) rows[k] = bi[k];
      MetaBatchEntry entry;
      entry.dataset_id = "ft";
      entry.x = rows_subset(subset, rows);
      auto si = sample_indices(n_use, cfg.arch.bundle_size, rng);
      entry.bundle = rows_subset(subset, si);
      Tape tape;
      LossBreakdown lb = meta_elbo(tape, *models.meta, gens, {entry});
      Tensor loss = neg(tape, lb.total);
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
    }

    // Clustering error on the full target, summary drawn from the subset.
    Tape tape;
    auto si = sample_indices(n_use, cfg.arch.bundle_size, rng);
    Tensor b = rows_subset(subset, si);
    PosteriorTensors q =
        models.meta->infer(tape, b, target.observations);
    std::vector<int> pred(target.size());
    for (std::size_t r = 0; r < target.size(); ++r)
      pred[r] = q.logit.at(r, 0) > 0.0 ? 1 : 0;
    curve.emplace_back(frac, clustering_error(pred, target.labels));
  }
  return curve;
}

double mean_latent_l2(const ModelSet& models, const DatasetBundle& base,
                      const std::vector<DatasetBundle>& variants,
                      std::uint64_t seed) {
  Tensor base_emb =
      embed_posterior(models, base, base.observations, Rng::derive(seed, "l2", 0));
  double total = 0.0;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const auto& var = variants[v];
    if (var.observations.cols() != base.observations.cols() ||
        var.size() != base.size())
      throw ShapeError("mean_latent_l2: bundle shapes must match");
    Tensor emb = embed_posterior(models, var, var.observations,
                                 Rng::derive(seed, "l2", v + 1));
    double dist = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < base_emb.cols(); ++j) {
        double d = base_emb.at(i, j) - emb.at(i, j);
        sq += d * d;
      }
      dist += std::sqrt(sq);
    }
    total += dist / static_cast<double>(base.size());
  }
  return variants.empty() ? 0.0
                          : total / static_cast<double>(variants.size());
}

}  // namespace metavi
