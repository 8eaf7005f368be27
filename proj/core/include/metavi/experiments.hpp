#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metavi/adam.hpp"
#include "metavi/checkpoint.hpp"
#include "metavi/config.hpp"
#include "metavi/objectives.hpp"

namespace metavi {

struct MetricsRecord {
  std::string run_id;
  std::uint64_t eval_seed = 0;
  struct EpochRow {
    std::uint64_t step = 0;
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
  };
  std::vector<EpochRow> epochs;
  nlohmann::json final_metrics = nlohmann::json::object();
  double wall_time_sec = 0.0;

  // One row per epoch: step,total,recon,kl.
  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json summary() const;
};

// Live networks for one run, either freshly initialized from a config or
// restored from a checkpoint.
struct ModelSet {
  ExperimentConfig cfg;
  std::optional<MetaInferenceModel> meta;
  std::optional<InferenceModel> inference;
  std::vector<std::pair<std::string, GenerativeModel>> gens;

  bool is_meta() const { return meta.has_value(); }
  const GenerativeModel* gen(const std::string& id) const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

ModelSet build_models(const ExperimentConfig& cfg, const MetaDataset& data);
ModelSet restore_models(const Checkpoint& ckpt);
Checkpoint snapshot(const ModelSet& models, const Adam* opt,
                    std::uint64_t training_step);

struct TrainResult {
  Checkpoint checkpoint;
  MetricsRecord metrics;
  bool diverged = false;
  std::string divergence_reason;  // empty unless diverged
};

// Runs the objective picked by (experiment, model) under Adam. Deterministic
// given cfg.seed. On divergence returns the last epoch-boundary checkpoint
// with diverged = true.
TrainResult train(const ExperimentConfig& cfg);

// Materializes the training data a config describes (used by train and the
// gen-data subcommand).
MetaDataset generate_data(const ExperimentConfig& cfg);

// Permutation-matched binary misclassification rate, in [0, 0.5].
double clustering_error(std::span<const int> predicted,
                        std::span<const int> truth);

// Mean permutation-matched clustering error over freshly sampled unseen
// mixtures.
double eval_mog(const Checkpoint& ckpt, std::size_t n_test_mixtures,
                std::uint64_t seed);

struct PhysicsGrid {
  std::vector<double> lengths;
  std::vector<double> angles;
  std::vector<double> mse;  // lengths-major: mse[li * angles.size() + ai]
  double cell(std::size_t li, std::size_t ai) const {
    return mse[li * angles.size() + ai];
  }
  // Mean over cells with L in [l_lo, l_hi] and A in [a_lo, a_hi].
  double region_mean(double l_lo, double l_hi, double a_lo, double a_hi) const;
  void write_csv(const std::filesystem::path& path) const;
};

PhysicsGrid eval_physics_grid(const Checkpoint& ckpt, std::uint64_t seed);

struct MseCurve {
  std::vector<double> params;
  std::vector<double> mse;
};

// Posterior-mean parameter recovery MSE over a parameter grid, link applied.
MseCurve eval_expfam(const Checkpoint& ckpt, FamilyTag family, double lo,
                     double hi, double step, std::size_t realizations,
                     std::uint64_t seed);

// Logistic-regression probe (L2 1e-4, full-batch GD) on an 80/20 split.
double linear_probe(const Tensor& features, const std::vector<int>& labels,
                    std::uint64_t seed);

struct PairAccuracy {
  std::string pair_id;
  double accuracy = 0.0;
};

std::vector<PairAccuracy> eval_digit_pairs(const Checkpoint& ckpt,
                                           const MetaDataset& pairs,
                                           std::uint64_t seed);

// Freezes the meta-inference net, trains a fresh decoder on the given
// fraction of the target bundle, reports clustering error per fraction.
std::vector<std::pair<double, double>> finetune_eval(
    const Checkpoint& ckpt, const DatasetBundle& target,
    const std::vector<double>& fractions, std::uint64_t seed);

// Mean L2 distance between posterior-mean embeddings of matched items.
double mean_latent_l2(const ModelSet& models, const DatasetBundle& base,
                      const std::vector<DatasetBundle>& variants,
                      std::uint64_t seed);

// Posterior parameters for every row of x: means (gaussian) or logits
// (bernoulli), with the summary bundle subsampled at a fixed seed.
Tensor embed_posterior(const ModelSet& models, const DatasetBundle& bundle,
                       const Tensor& x, std::uint64_t seed);

}  // namespace metavi
