#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "metavi/distributions.hpp"
#include "metavi/rng.hpp"
#include "metavi/tensor.hpp"

namespace metavi {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A finite sample set standing in for one marginal distribution.
struct DatasetBundle {
  std::string id;
  Tensor observations;              // N x d
  std::vector<int> labels;          // optional, length N
  Tensor targets;                   // optional N x k real targets (e.g. friction)
  nlohmann::json provenance;        // generator spec + seed + true parameters

  std::size_t size() const { return observations.rows(); }
  bool has_labels() const { return !labels.empty(); }
  bool has_targets() const { return targets.defined(); }
};

struct MetaDataset {
  std::vector<DatasetBundle> train;
  std::vector<DatasetBundle> test;
  nlohmann::json generator_spec;
};

// --- mixture-of-Gaussians meta-distribution ----------------------------------

// Each bundle: 2-D points from an even two-component mixture, isotropic
// variance 0.1, component means drawn from U(-5,5)^2, labels 0/1.
MetaDataset gen_mog_meta(std::uint64_t seed, std::size_t n_datasets,
                         std::size_t n_samples, std::size_t n_test = 10,
                         double mean_low = -5.0, double mean_high = 5.0);

DatasetBundle gen_mog_bundle(Rng& rng, const std::string& id,
                             std::size_t n_samples, double mean_low,
                             double mean_high);

// --- exponential-family meta-distribution ------------------------------------

struct ExpFamRange {
  FamilyTag family = FamilyTag::gaussian_fixed_var;
  double low = -5.0;
  double high = 5.0;
};

// Default parameter ranges: Gaussian mean U(-5,5), log-normal mean U(-2,2),
// exponential rate U(0,3).
ExpFamRange default_expfam_range(FamilyTag family);

// Each bundle: n_realizations i.i.d. vec_dim-D vectors whose components share
// one free parameter; true parameter kept in provenance.
MetaDataset gen_expfam_meta(std::uint64_t seed,
                            const std::vector<ExpFamRange>& family_mix,
                            std::size_t n_per_family = 30,
                            std::size_t vec_dim = 20,
                            std::size_t n_realizations = 256,
                            std::size_t n_test_per_family = 5);

DatasetBundle gen_expfam_bundle(Rng& rng, const std::string& id,
                                FamilyTag family, double param,
                                std::size_t vec_dim,
                                std::size_t n_realizations);

// --- inclined-plane simulator -------------------------------------------------

struct InclineSpec {
  double length = 10.0;      // meters, [1, 20]
  double angle_deg = 45.0;   // degrees, (0, 90)
  double gravity = 9.8;
};

struct NonSlidingError : DataError {
  using DataError::DataError;
};

// Descent time under constant-acceleration kinematics:
// t = sqrt(2L / (g (sin A - mu cos A))). Throws NonSlidingError when
// mu >= tan(A).
double simulate_incline(const InclineSpec& spec, double mu);

// Friction prior used per run: mu ~ U(0, 0.9 tan A).
double sample_friction(const InclineSpec& spec, Rng& rng);

// 25 train simulators on the L x A grid, runs_per_sim (time, mu) pairs each.
MetaDataset gen_physics_meta(std::uint64_t seed,
                             const std::vector<double>& lengths = {2, 4, 6, 8,
                                                                   10},
                             const std::vector<double>& angles = {20, 30, 40,
                                                                  50, 60},
                             std::size_t runs_per_sim = 1000);

DatasetBundle gen_physics_bundle(Rng& rng, const std::string& id,
                                 const InclineSpec& spec,
                                 std::size_t runs_per_sim);

// --- MNIST --------------------------------------------------------------------

// IDX ingestion: images scaled to [0,1], flattened to N x 784.
DatasetBundle load_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path);

// Balanced digit-pair bundles over the 8 non-held-out digits; test bundles
// are the unseen pairs plus the held-out pair.
MetaDataset make_digit_pairs(const DatasetBundle& bundle,
                             std::pair<int, int> held_out, std::size_t n_pairs,
                             std::uint64_t seed,
                             std::size_t per_digit = 200);

// --- persistence ---------------------------------------------------------------

// Directory layout: meta.json + one "MVD1"-framed file per bundle.
void save_meta_dataset(const std::filesystem::path& dir, const MetaDataset& md);
MetaDataset load_meta_dataset(const std::filesystem::path& dir);

}  // namespace metavi
