// Command-line front end: gen-data, train, eval, sweep, plot-data.
//
// Exit codes: 0 success, 2 config error, 3 data/artifact error, 4 numeric
// divergence, 1 anything else.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "metavi/checkpoint.hpp"
#include "metavi/config.hpp"
#include "metavi/datagen.hpp"
#include "metavi/experiments.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct Divergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::uint64_t> parse_u64_csv(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoull(tok));
  }
  if (out.empty()) throw metavi::ConfigError("empty CSV list: '" + s + "'");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream ofs(path, std::ios::trunc | std::ios::binary);
  if (!ofs) throw metavi::DataError("cannot write " + path.string());
  ofs << text;
}

// Every artifact directory carries a manifest sufficient to reproduce it.
// wall_time and timestamps are the only non-deterministic fields; all other
// artifacts are byte-identical across re-runs of the same config + seed.
void write_manifest(const fs::path& dir, const metavi::ExperimentConfig& cfg,
                    const std::string& status,
                    const std::vector<std::string>& artifacts,
                    double wall_time_sec) {
  json m = {{"run_id", cfg.run_id()},
            {"config", cfg.to_json()},
            {"status", status},
            {"artifacts", artifacts},
            {"wall_time_sec", wall_time_sec},
            {"timestamps",
             {{"finished_unix",
               std::chrono::duration_cast<std::chrono::seconds>(
                   std::chrono::system_clock::now().time_since_epoch())
                   .count()}}}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

metavi::ExperimentConfig load_config(const std::string& path, bool strict,
                                     std::uint64_t seed_override,
                                     bool have_seed) {
  metavi::ExperimentConfig cfg = metavi::parse_config_file(path, strict);
  if (have_seed) cfg.seed = seed_override;
  return cfg;
}

fs::path run_dir(const fs::path& out, const metavi::ExperimentConfig& cfg) {
  fs::path dir = out / cfg.run_id();
  fs::create_directories(dir);
  return dir;
}

// --- train -------------------------------------------------------------------

fs::path do_train(const metavi::ExperimentConfig& cfg, const fs::path& out,
                  bool quiet = false) {
  fs::path dir = run_dir(out, cfg);
  fs::path ckpt_path = dir / "checkpoint.mvi";

  // Content-hash run ids make sweeps resumable: a finished run is skipped.
  fs::path manifest = dir / "manifest.json";
  if (fs::exists(manifest) && fs::exists(ckpt_path)) {
    std::ifstream ifs(manifest);
    json m = json::parse(ifs, nullptr, /*allow_exceptions=*/false);
    if (!m.is_discarded() && m.value("status", "") == "done") {
      if (!quiet)
        std::cout << "skip (done): " << dir.string() << "\n";
      return dir;
    }
  }

  write_manifest(dir, cfg, "running", {}, 0.0);
  metavi::TrainResult res = metavi::train(cfg);
  metavi::save_checkpoint(ckpt_path, res.checkpoint);
  res.metrics.write_csv(dir / "metrics.csv");
  if (res.diverged) {
    write_manifest(dir, cfg, "failed",
                   {"checkpoint.mvi", "metrics.csv"},
                   res.metrics.wall_time_sec);
    throw Divergence("training diverged; last stable checkpoint kept at " +
                     ckpt_path.string());
  }
  write_manifest(dir, cfg, "done", {"checkpoint.mvi", "metrics.csv"},
                 res.metrics.wall_time_sec);
  if (!quiet)
    std::cout << "trained " << cfg.run_id() << " -> " << ckpt_path.string()
              << " (" << res.metrics.epochs.size() << " epochs, "
              << res.metrics.wall_time_sec << "s)\n";
  return dir;
}

// --- eval --------------------------------------------------------------------

void do_eval(const fs::path& ckpt_path, const fs::path& out,
             std::uint64_t seed) {
  if (!fs::exists(ckpt_path))
    throw metavi::DataError("checkpoint not found: " + ckpt_path.string());
  metavi::Checkpoint ckpt = metavi::load_checkpoint(ckpt_path);
  metavi::ExperimentConfig cfg =
      metavi::parse_config(ckpt.architecture.at("config"), false);
  fs::create_directories(out);

  json metrics = {{"run_id", cfg.run_id()}, {"eval_seed", seed}};
  switch (cfg.experiment) {
    case metavi::ExperimentKind::mog: {
      double err = metavi::eval_mog(ckpt, cfg.eval.n_test_mixtures, seed);
      metrics["mean_clustering_error"] = err;
      metrics["n_test_mixtures"] = cfg.eval.n_test_mixtures;
      break;
    }
    case metavi::ExperimentKind::physics: {
      metavi::PhysicsGrid grid = metavi::eval_physics_grid(ckpt, seed);
      grid.write_csv(out / "physics_grid.csv");
      metrics["region_mse"] = grid.region_mean(2.0, 20.0, 20.0, 70.0);
      metrics["full_grid_mse"] = grid.region_mean(2.0, 20.0, 5.0, 85.0);
      metrics["grid_csv"] = "physics_grid.csv";
      break;
    }
    case metavi::ExperimentKind::expfam: {
      json curves = json::object();
      for (const auto& range : cfg.data.families) {
        metavi::MseCurve c = metavi::eval_expfam(
            ckpt, range.family, cfg.eval.param_lo, cfg.eval.param_hi,
            cfg.eval.param_step, cfg.eval.realizations_per_point, seed);
        std::string name = metavi::family_to_string(range.family);
        std::ofstream ofs(out / ("mse_curve_" + name + ".csv"),
                          std::ios::trunc);
        ofs << "param,mse\n";
        double total = 0.0;
        for (std::size_t i = 0; i < c.params.size(); ++i) {
          ofs << c.params[i] << "," << c.mse[i] << "\n";
          total += c.mse[i];
        }
        curves[name] = {{"csv", "mse_curve_" + name + ".csv"},
                        {"mean_mse", total / static_cast<double>(
                                                 std::max<std::size_t>(
                                                     1, c.mse.size()))}};
      }
      metrics["curves"] = curves;
      break;
    }
    case metavi::ExperimentKind::mnist_pairs: {
      metavi::MetaDataset pairs = metavi::generate_data(cfg);
      auto accs = metavi::eval_digit_pairs(ckpt, pairs, seed);
      json per_pair = json::object();
      for (const auto& pa : accs) per_pair[pa.pair_id] = pa.accuracy;
      metrics["pair_accuracy"] = per_pair;
      break;
    }
  }
  write_text(out / "metrics.json", metrics.dump(2) + "\n");
  std::cout << metrics.dump(2) << "\n";
}

// --- sweep -------------------------------------------------------------------

void do_sweep(const metavi::ExperimentConfig& base,
              const std::vector<std::uint64_t>& sizes,
              const std::vector<std::uint64_t>& seeds, const fs::path& out) {
  struct Cell {
    std::uint64_t size, seed;
    metavi::ExperimentConfig cfg;
  };
  std::vector<Cell> cells;
  for (std::uint64_t size : sizes)
    for (std::uint64_t seed : seeds) {
      metavi::ExperimentConfig cfg = base;
      cfg.data.n_datasets = size;
      cfg.seed = seed;
      cells.push_back({size, seed, cfg});
    }
  // Deterministic summary order regardless of completion order.
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    return a.cfg.run_id() < b.cfg.run_id();
  });

  std::vector<std::future<double>> errs;
  for (const auto& cell : cells)
    errs.push_back(std::async(std::launch::async, [&out, cell] {
      fs::path dir = do_train(cell.cfg, out, /*quiet=*/true);
      metavi::Checkpoint ckpt =
          metavi::load_checkpoint(dir / "checkpoint.mvi");
      double err = metavi::eval_mog(ckpt, cell.cfg.eval.n_test_mixtures,
                                    metavi::Rng::derive(cell.seed, "eval"));
      write_text(dir / "metrics.json",
                 json{{"run_id", cell.cfg.run_id()},
                      {"mean_clustering_error", err}}
                         .dump(2) +
                     "\n");
      return err;
    }));

  fs::create_directories(out);
  std::ofstream ofs(out / "sweep_summary.csv", std::ios::trunc);
  ofs << "run_id,size,seed,mean_clustering_error\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    double err = errs[i].get();
    ofs << cells[i].cfg.run_id() << "," << cells[i].size << ","
        << cells[i].seed << "," << err << "\n";
  }
  std::cout << "sweep complete: " << cells.size() << " runs -> "
            << (out / "sweep_summary.csv").string() << "\n";
}

// --- plot-data ---------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream ifs(path);
  if (!ifs) throw metavi::DataError("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(ifs, line)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(tok);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw metavi::DataError("empty metric file: " + path.string());
  return rows;
}

std::size_t find_column(const std::vector<std::string>& header,
                        const std::vector<std::string>& candidates,
                        const fs::path& path) {
  for (const auto& c : candidates)
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == c) return i;
  throw metavi::DataError("metric file " + path.string() +
                          " is missing a '" + candidates.front() +
                          "' column");
}

void do_plot_data(const std::string& kind, const fs::path& in,
                  const fs::path& out_path) {
  auto rows = read_csv(in);
  const auto& header = rows.front();
  std::ostringstream body;
  if (kind == "heatmap") {
    std::size_t rc = find_column(header, {"L", "row"}, in);
    std::size_t cc = find_column(header, {"A", "col"}, in);
    std::size_t vc = find_column(header, {"mse", "value"}, in);
    body << "row,col,value\n";
    for (std::size_t i = 1; i < rows.size(); ++i)
      body << rows[i].at(rc) << "," << rows[i].at(cc) << ","
           << rows[i].at(vc) << "\n";
  } else {  // curve; preserves the input ordering of x values
    std::size_t xc = find_column(header, {"param", "size", "step", "x"}, in);
    std::size_t yc = find_column(
        header, {"mse", "mean_clustering_error", "total", "y"}, in);
    body << "x,y,series\n";
    std::string series = in.stem().string();
    for (std::size_t i = 1; i < rows.size(); ++i)
      body << rows[i].at(xc) << "," << rows[i].at(yc) << "," << series
           << "\n";
  }
  write_text(out_path, body.str());
  std::cout << "wrote " << out_path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meta-amortized variational inference toolkit"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, sizes_csv, seeds_csv, kind = "curve";
  std::string in_path, out_dir = "runs";
  std::uint64_t seed = 0;
  bool strict = true;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* copt = sub->add_option("--config", config_path, "config JSON path");
    if (needs_config) copt->required();
    sub->add_option("--seed", seed, "master seed (overrides config)");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_flag("--strict,!--lenient", strict,
                  "reject unknown config keys (default: strict)");
  };

  auto* c_gen = app.add_subcommand("gen-data", "materialize a dataset");
  add_common(c_gen, true);

  auto* c_train = app.add_subcommand("train", "train a model");
  add_common(c_train, true);

  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  c_eval->add_option("--checkpoint", checkpoint_path, "checkpoint path")
      ->required();
  c_eval->add_option("--seed", seed, "evaluation seed");
  c_eval->add_option("--out", out_dir, "output directory");

  auto* c_sweep = app.add_subcommand("sweep", "seed x size grid of runs");
  add_common(c_sweep, true);
  c_sweep->add_option("--sizes", sizes_csv, "CSV of meta-training sizes")
      ->required();
  c_sweep->add_option("--seeds", seeds_csv, "CSV of seeds")->required();

  auto* c_plot = app.add_subcommand("plot-data", "convert metrics to plot CSV");
  c_plot->add_option("--in", in_path, "input metric CSV")->required();
  c_plot->add_option("--kind", kind, "curve | heatmap")
      ->check(CLI::IsMember({"curve", "heatmap"}));
  c_plot->add_option("--out", out_dir, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    bool have_seed = app.count_all() && (c_gen->count("--seed") ||
                                         c_train->count("--seed") ||
                                         c_sweep->count("--seed"));
    if (c_gen->parsed()) {
      auto cfg = load_config(config_path, strict, seed, have_seed);
      metavi::MetaDataset md = metavi::generate_data(cfg);
      fs::path dir = run_dir(out_dir, cfg) / "data";
      metavi::save_meta_dataset(dir, md);
      write_manifest(dir.parent_path(), cfg, "done", {"data"}, 0.0);
      std::cout << "wrote " << md.train.size() << " train / "
                << md.test.size() << " test bundles -> " << dir.string()
                << "\n";
    } else if (c_train->parsed()) {
      do_train(load_config(config_path, strict, seed, have_seed), out_dir);
    } else if (c_eval->parsed()) {
      do_eval(checkpoint_path, out_dir, seed);
    } else if (c_sweep->parsed()) {
      do_sweep(load_config(config_path, strict, seed, have_seed),
               parse_u64_csv(sizes_csv), parse_u64_csv(seeds_csv), out_dir);
    } else if (c_plot->parsed()) {
      do_plot_data(kind, in_path, out_dir);
    }
  } catch (const metavi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const metavi::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const metavi::CheckpointError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const Divergence& e) {
    std::cerr << "numeric divergence: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const metavi::NumericError& e) {
    std::cerr << "numeric divergence: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
