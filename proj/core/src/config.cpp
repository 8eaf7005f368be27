#include "metavi/config.hpp"

#include <algorithm>
#include <fstream>

namespace metavi {

ExperimentKind experiment_kind_from_string(const std::string& s) {
  if (s == "mog") return ExperimentKind::mog;
  if (s == "physics") return ExperimentKind::physics;
  if (s == "expfam") return ExperimentKind::expfam;
  if (s == "mnist_pairs") return ExperimentKind::mnist_pairs;
  throw ConfigError("unknown experiment kind: '" + s +
                    "' (expected mog|physics|expfam|mnist_pairs)");
}

std::string experiment_kind_to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::mog: return "mog";
    case ExperimentKind::physics: return "physics";
    case ExperimentKind::expfam: return "expfam";
    case ExperimentKind::mnist_pairs: return "mnist_pairs";
  }
  return "mog";
}

namespace {

std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

void check_keys(const nlohmann::json& obj, const std::string& path,
                const std::vector<std::string>& allowed, bool strict) {
  if (!strict || !obj.is_object()) return;
  for (const auto& [key, val] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) != allowed.end())
      continue;
    std::string best;
    std::size_t best_d = SIZE_MAX;
    for (const auto& cand : allowed) {
      std::size_t d = levenshtein(key, cand);
      if (d < best_d) {
        best_d = d;
        best = cand;
      }
    }
    std::string msg = "unknown key '" + path + key + "'";
    if (best_d <= 3) msg += " (did you mean '" + path + best + "'?)";
    throw ConfigError(msg);
  }
}

template <class T>
void take(const nlohmann::json& obj, const std::string& key,
          const std::string& path, T& out, nlohmann::json& prov) {
  if (obj.is_object() && obj.contains(key)) {
    try {
      out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for '" + path + key + "': " + e.what());
    }
    prov[path + key] = "config";
  } else {
    prov[path + key] = "default";
  }
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& j, bool strict) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(j, "", {"experiment", "model", "seed", "data", "arch", "optim",
                     "eval"},
             strict);
  if (!j.contains("experiment"))
    throw ConfigError("missing required key 'experiment'");

  ExperimentConfig cfg;
  cfg.experiment =
      experiment_kind_from_string(j.at("experiment").get<std::string>());
  cfg.provenance["experiment"] = "config";
  take(j, "model", "", cfg.model, cfg.provenance);
  if (cfg.model != "metavae" && cfg.model != "vae")
    throw ConfigError("model must be 'metavae' or 'vae', got '" + cfg.model +
                      "'");
  take(j, "seed", "", cfg.seed, cfg.provenance);

  // Per-experiment defaults, then file overrides.
  switch (cfg.experiment) {
    case ExperimentKind::mog:
      cfg.arch = {10, 3, 10, 20, 1, "bernoulli", 1.0};
      cfg.optim = cfg.model == "vae" ? ExperimentConfig::Optim{1e-3, 100, 200}
                                     : ExperimentConfig::Optim{2e-4, 20, 500};
      break;
    case ExperimentKind::physics:
      cfg.arch = {10, 3, 10, 20, 1, "gaussian", 1.0};
      cfg.optim = {2e-4, 64, 10};
      break;
    case ExperimentKind::expfam:
      cfg.arch = {400, 3, 400, 20, 1, "gaussian", 5.0};
      cfg.optim = {2e-4, 20, 100};
      cfg.data.families = {default_expfam_range(FamilyTag::gaussian_fixed_var)};
      break;
    case ExperimentKind::mnist_pairs:
      cfg.arch = {400, 3, 400, 10, 40, "gaussian", 1.0};
      cfg.optim = {2e-4, 100, 100};
      break;
  }

  const nlohmann::json data = j.contains("data") ? j.at("data")
                                                 : nlohmann::json::object();
  check_keys(data, "data.",
             {"n_datasets", "n_samples", "n_test", "mean_low", "mean_high",
              "lengths", "angles", "runs_per_sim", "baseline_length",
              "baseline_angle", "families", "n_per_family", "vec_dim",
              "n_realizations", "baseline_family", "baseline_param", "n_pairs",
              "held_out", "per_digit", "images_path", "labels_path"},
             strict);
  auto& d = cfg.data;
  take(data, "n_datasets", "data.", d.n_datasets, cfg.provenance);
  take(data, "n_samples", "data.", d.n_samples, cfg.provenance);
  take(data, "n_test", "data.", d.n_test, cfg.provenance);
  take(data, "mean_low", "data.", d.mean_low, cfg.provenance);
  take(data, "mean_high", "data.", d.mean_high, cfg.provenance);
  take(data, "lengths", "data.", d.lengths, cfg.provenance);
  take(data, "angles", "data.", d.angles, cfg.provenance);
  take(data, "runs_per_sim", "data.", d.runs_per_sim, cfg.provenance);
  take(data, "baseline_length", "data.", d.baseline_length, cfg.provenance);
  take(data, "baseline_angle", "data.", d.baseline_angle, cfg.provenance);
  take(data, "n_per_family", "data.", d.n_per_family, cfg.provenance);
  take(data, "vec_dim", "data.", d.vec_dim, cfg.provenance);
  take(data, "n_realizations", "data.", d.n_realizations, cfg.provenance);
  take(data, "baseline_family", "data.", d.baseline_family, cfg.provenance);
  take(data, "baseline_param", "data.", d.baseline_param, cfg.provenance);
  take(data, "n_pairs", "data.", d.n_pairs, cfg.provenance);
  take(data, "per_digit", "data.", d.per_digit, cfg.provenance);
  take(data, "images_path", "data.", d.images_path, cfg.provenance);
  take(data, "labels_path", "data.", d.labels_path, cfg.provenance);
  if (data.contains("held_out")) {
    auto v = data.at("held_out").get<std::vector<int>>();
    if (v.size() != 2) throw ConfigError("data.held_out must have 2 digits");
    d.held_out = {v[0], v[1]};
    cfg.provenance["data.held_out"] = "config";
  } else {
    cfg.provenance["data.held_out"] = "default";
  }
  if (data.contains("families")) {
    d.families.clear();
    for (const auto& f : data.at("families")) {
      if (f.is_string()) {
        d.families.push_back(
            default_expfam_range(family_from_string(f.get<std::string>())));
      } else {
        check_keys(f, "data.families[].", {"family", "low", "high"}, strict);
        ExpFamRange r =
            default_expfam_range(family_from_string(f.at("family")));
        if (f.contains("low")) r.low = f.at("low").get<double>();
        if (f.contains("high")) r.high = f.at("high").get<double>();
        d.families.push_back(r);
      }
    }
    cfg.provenance["data.families"] = "config";
  } else {
    cfg.provenance["data.families"] = "default";
  }

  const nlohmann::json arch = j.contains("arch") ? j.at("arch")
                                                 : nlohmann::json::object();
  check_keys(arch, "arch.",
             {"hidden_dim", "n_layers", "summary_dim", "bundle_size",
              "latent_dim", "posterior", "prior_std"},
             strict);
  take(arch, "hidden_dim", "arch.", cfg.arch.hidden_dim, cfg.provenance);
  take(arch, "n_layers", "arch.", cfg.arch.n_layers, cfg.provenance);
  take(arch, "summary_dim", "arch.", cfg.arch.summary_dim, cfg.provenance);
  take(arch, "bundle_size", "arch.", cfg.arch.bundle_size, cfg.provenance);
  take(arch, "latent_dim", "arch.", cfg.arch.latent_dim, cfg.provenance);
  take(arch, "posterior", "arch.", cfg.arch.posterior, cfg.provenance);
  take(arch, "prior_std", "arch.", cfg.arch.prior_std, cfg.provenance);
  if (cfg.arch.posterior != "gaussian" && cfg.arch.posterior != "bernoulli")
    throw ConfigError("arch.posterior must be 'gaussian' or 'bernoulli'");

  const nlohmann::json optim = j.contains("optim") ? j.at("optim")
                                                   : nlohmann::json::object();
  check_keys(optim, "optim.", {"learning_rate", "lr", "batch_size", "epochs"},
             strict);
  take(optim, "learning_rate", "optim.", cfg.optim.lr, cfg.provenance);
  take(optim, "lr", "optim.", cfg.optim.lr, cfg.provenance);
  take(optim, "batch_size", "optim.", cfg.optim.batch_size, cfg.provenance);
  take(optim, "epochs", "optim.", cfg.optim.epochs, cfg.provenance);

  const nlohmann::json ev = j.contains("eval") ? j.at("eval")
                                               : nlohmann::json::object();
  check_keys(ev, "eval.",
             {"n_test_mixtures", "runs_per_cell", "grid_step", "param_lo",
              "param_hi", "param_step", "realizations_per_point"},
             strict);
  take(ev, "n_test_mixtures", "eval.", cfg.eval.n_test_mixtures,
       cfg.provenance);
  take(ev, "runs_per_cell", "eval.", cfg.eval.runs_per_cell, cfg.provenance);
  take(ev, "grid_step", "eval.", cfg.eval.grid_step, cfg.provenance);
  take(ev, "param_lo", "eval.", cfg.eval.param_lo, cfg.provenance);
  take(ev, "param_hi", "eval.", cfg.eval.param_hi, cfg.provenance);
  take(ev, "param_step", "eval.", cfg.eval.param_step, cfg.provenance);
  take(ev, "realizations_per_point", "eval.",
       cfg.eval.realizations_per_point, cfg.provenance);

  // Range checks.
  if (cfg.optim.lr <= 0.0) throw ConfigError("optim.lr must be > 0");
  if (cfg.optim.batch_size < 1) throw ConfigError("optim.batch_size must be >= 1");
  if (cfg.optim.epochs < 1) throw ConfigError("optim.epochs must be >= 1");
  if (cfg.data.n_samples < 2) throw ConfigError("data.n_samples must be >= 2");
  if (!(cfg.data.mean_low < cfg.data.mean_high))
    throw ConfigError("data.mean_low must be < data.mean_high");
  if (cfg.arch.bundle_size < 1) throw ConfigError("arch.bundle_size must be >= 1");
  if (cfg.arch.latent_dim < 1) throw ConfigError("arch.latent_dim must be >= 1");

  return cfg;
}

ExperimentConfig parse_config_file(const std::filesystem::path& path,
                                   bool strict) {
  std::ifstream ifs(path);
  if (!ifs) throw ConfigError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ifs);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return parse_config(j, strict);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json fams = nlohmann::json::array();
  for (const auto& r : data.families)
    fams.push_back({{"family", family_to_string(r.family)},
                    {"low", r.low},
                    {"high", r.high}});
  return {
      {"experiment", experiment_kind_to_string(experiment)},
      {"model", model},
      {"seed", seed},
      {"data",
       {{"n_datasets", data.n_datasets},
        {"n_samples", data.n_samples},
        {"n_test", data.n_test},
        {"mean_low", data.mean_low},
        {"mean_high", data.mean_high},
        {"lengths", data.lengths},
        {"angles", data.angles},
        {"runs_per_sim", data.runs_per_sim},
        {"baseline_length", data.baseline_length},
        {"baseline_angle", data.baseline_angle},
        {"families", fams},
        {"n_per_family", data.n_per_family},
        {"vec_dim", data.vec_dim},
        {"n_realizations", data.n_realizations},
        {"baseline_family", data.baseline_family},
        {"baseline_param", data.baseline_param},
        {"n_pairs", data.n_pairs},
        {"held_out", {data.held_out.first, data.held_out.second}},
        {"per_digit", data.per_digit},
        {"images_path", data.images_path},
        {"labels_path", data.labels_path}}},
      {"arch",
       {{"hidden_dim", arch.hidden_dim},
        {"n_layers", arch.n_layers},
        {"summary_dim", arch.summary_dim},
        {"bundle_size", arch.bundle_size},
        {"latent_dim", arch.latent_dim},
        {"posterior", arch.posterior},
        {"prior_std", arch.prior_std}}},
      {"optim",
       {{"lr", optim.lr},
        {"batch_size", optim.batch_size},
        {"epochs", optim.epochs}}},
      {"eval",
       {{"n_test_mixtures", eval.n_test_mixtures},
        {"runs_per_cell", eval.runs_per_cell},
        {"grid_step", eval.grid_step},
        {"param_lo", eval.param_lo},
        {"param_hi", eval.param_hi},
        {"param_step", eval.param_step},
        {"realizations_per_point", eval.realizations_per_point}}}};
}

std::string ExperimentConfig::run_id() const {
  std::string dump = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : dump) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace metavi
