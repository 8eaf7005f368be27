#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "metavi/datagen.hpp"

namespace metavi {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { mog, physics, expfam, mnist_pairs };

ExperimentKind experiment_kind_from_string(const std::string& s);
std::string experiment_kind_to_string(ExperimentKind k);

// Fully-resolved run description. Every field has a per-experiment default;
// `provenance` records whether each resolved key came from the file or a
// default.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::mog;
  std::string model = "metavae";  // "metavae" | "vae"
  std::uint64_t seed = 1;

  struct Data {
    // mog
    std::size_t n_datasets = 50;
    std::size_t n_samples = 100;
    std::size_t n_test = 10;
    double mean_low = -5.0;
    double mean_high = 5.0;
    // physics
    std::vector<double> lengths = {2, 4, 6, 8, 10};
    std::vector<double> angles = {20, 30, 40, 50, 60};
    std::size_t runs_per_sim = 1000;
    double baseline_length = 10.0;
    double baseline_angle = 45.0;
    // expfam
    std::vector<ExpFamRange> families;
    std::size_t n_per_family = 30;
    std::size_t vec_dim = 20;
    std::size_t n_realizations = 256;
    std::string baseline_family = "gaussian";
    double baseline_param = -1.2;
    // mnist
    std::size_t n_pairs = 10;
    std::pair<int, int> held_out = {3, 7};
    std::size_t per_digit = 200;
    std::string images_path;
    std::string labels_path;
  } data;

  struct Arch {
    std::size_t hidden_dim = 10;
    std::size_t n_layers = 3;
    std::size_t summary_dim = 10;
    std::size_t bundle_size = 20;
    std::size_t latent_dim = 1;
    std::string posterior = "bernoulli";  // "bernoulli" | "gaussian"
    double prior_std = 1.0;
  } arch;

  struct Optim {
    double lr = 2e-4;
    std::size_t batch_size = 20;
    std::size_t epochs = 500;
  } optim;

  struct Eval {
    std::size_t n_test_mixtures = 1000;
    std::size_t runs_per_cell = 200;
    double grid_step = 1.0;   // physics grid step over L and A
    double param_lo = -10.0;  // expfam parameter grid
    double param_hi = 10.0;
    double param_step = 0.1;
    std::size_t realizations_per_point = 10;
  } eval;

  nlohmann::json provenance;  // key path -> "config" | "default"

  nlohmann::json to_json() const;
  // Stable content hash of the semantic config (including seed).
  std::string run_id() const;
};

// Parses and validates a config. strict=true rejects unknown keys with a
// nearest-valid-key suggestion.
ExperimentConfig parse_config(const nlohmann::json& j, bool strict = true);
ExperimentConfig parse_config_file(const std::filesystem::path& path,
                                   bool strict = true);

}  // namespace metavi
