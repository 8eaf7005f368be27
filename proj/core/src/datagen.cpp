#include "metavi/datagen.hpp"

#include "metavi/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace metavi {

namespace {

void shuffle_rows(Tensor& obs, std::vector<int>& labels, Rng& rng) {
  std::size_t n = obs.rows(), d = obs.cols();
  for (std::size_t i = n - 1; i > 0; --i) {
    std::size_t j = rng.below(i + 1);
    for (std::size_t c = 0; c < d; ++c)
      std::swap(obs.at(i, c), obs.at(j, c));
    if (!labels.empty()) std::swap(labels[i], labels[j]);
  }
}

}  // namespace

DatasetBundle gen_mog_bundle(Rng& rng, const std::string& id,
                             std::size_t n_samples, double mean_low,
                             double mean_high) {
  if (n_samples < 2) throw DataError("gen_mog_bundle: need n_samples >= 2");
  double m0x = rng.uniform(mean_low, mean_high);
  double m0y = rng.uniform(mean_low, mean_high);
  double m1x = rng.uniform(mean_low, mean_high);
  double m1y = rng.uniform(mean_low, mean_high);
  double sd = std::sqrt(0.1);

  std::size_t n1 = n_samples / 2;       // floor
  std::size_t n0 = n_samples - n1;      // ceil
  DatasetBundle b;
  b.id = id;
  b.observations = Tensor::zeros(n_samples, 2);
  b.labels.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    bool comp1 = i >= n0;
    double mx = comp1 ? m1x : m0x;
    double my = comp1 ? m1y : m0y;
    b.observations.at(i, 0) = mx + sd * rng.normal();
    b.observations.at(i, 1) = my + sd * rng.normal();
    b.labels[i] = comp1 ? 1 : 0;
  }
  shuffle_rows(b.observations, b.labels, rng);
  b.provenance = {{"kind", "mog"},
                  {"mean0", {m0x, m0y}},
                  {"mean1", {m1x, m1y}},
                  {"variance", 0.1}};
  return b;
}

MetaDataset gen_mog_meta(std::uint64_t seed, std::size_t n_datasets,
                         std::size_t n_samples, std::size_t n_test,
                         double mean_low, double mean_high) {
  MetaDataset md;
  md.generator_spec = {{"kind", "mog"},
                       {"seed", seed},
                       {"n_datasets", n_datasets},
                       {"n_samples", n_samples},
                       {"mean_low", mean_low},
                       {"mean_high", mean_high}};
  for (std::size_t i = 0; i < n_datasets; ++i) {
    Rng rng = Rng::substream(seed, "mog_train", i);
    md.train.push_back(gen_mog_bundle(rng, "mog_train_" + std::to_string(i),
                                      n_samples, mean_low, mean_high));
  }
  for (std::size_t i = 0; i < n_test; ++i) {
    Rng rng = Rng::substream(seed, "mog_test", i);
    md.test.push_back(gen_mog_bundle(rng, "mog_test_" + std::to_string(i),
                                     n_samples, mean_low, mean_high));
  }
  return md;
}

ExpFamRange default_expfam_range(FamilyTag family) {
  switch (family) {
    case FamilyTag::gaussian_fixed_var: return {family, -5.0, 5.0};
    case FamilyTag::log_normal_fixed_var: return {family, -2.0, 2.0};
    case FamilyTag::exponential: return {family, 0.0, 3.0};
    case FamilyTag::beta_symmetric: return {family, 0.0, 5.0};
    case FamilyTag::laplace_fixed_loc: return {family, 0.0, 5.0};
    case FamilyTag::weibull_fixed_scale: return {family, 0.0, 5.0};
    default:
      throw DataError("no default range for family " +
                      family_to_string(family));
  }
}

DatasetBundle gen_expfam_bundle(Rng& rng, const std::string& id,
                                FamilyTag family, double param,
                                std::size_t vec_dim,
                                std::size_t n_realizations) {
  DistParams dp;
  dp.family = Family::make(family);
  dp.theta = {param};
  DatasetBundle b;
  b.id = id;
  b.observations = Tensor::zeros(n_realizations, vec_dim);
  for (std::size_t i = 0; i < n_realizations; ++i) {
    auto row = sample(dp, rng, vec_dim);
    for (std::size_t j = 0; j < vec_dim; ++j) b.observations.at(i, j) = row[j];
  }
  b.provenance = {{"kind", "expfam"},
                  {"family", family_to_string(family)},
                  {"param", param}};
  return b;
}

MetaDataset gen_expfam_meta(std::uint64_t seed,
                            const std::vector<ExpFamRange>& family_mix,
                            std::size_t n_per_family, std::size_t vec_dim,
                            std::size_t n_realizations,
                            std::size_t n_test_per_family) {
  if (family_mix.empty())
    throw DataError("gen_expfam_meta: empty family mix");
  for (const auto& r : family_mix)
    if (!(r.low < r.high))
      throw DataError("gen_expfam_meta: invalid range for family " +
                      family_to_string(r.family));
  MetaDataset md;
  nlohmann::json fams = nlohmann::json::array();
  for (const auto& r : family_mix)
    fams.push_back({{"family", family_to_string(r.family)},
                    {"low", r.low},
                    {"high", r.high}});
  md.generator_spec = {{"kind", "expfam"},
                       {"seed", seed},
                       {"families", fams},
                       {"n_per_family", n_per_family},
                       {"vec_dim", vec_dim},
                       {"n_realizations", n_realizations}};

  auto draw_param = [](const ExpFamRange& r, Rng& rng) {
    double p = rng.uniform(r.low, r.high);
    // positive-parameter families: keep away from the degenerate boundary
    Family f = Family::make(r.family);
    if (f.needs_positivity_link())
      while (p < 0.1) p = rng.uniform(r.low, r.high);
    return p;
  };

  for (std::size_t fi = 0; fi < family_mix.size(); ++fi) {
    const auto& r = family_mix[fi];
    std::string fname = family_to_string(r.family);
    for (std::size_t i = 0; i < n_per_family; ++i) {
      Rng rng = Rng::substream(seed, "expfam_train_" + fname, i);
      double p = draw_param(r, rng);
      md.train.push_back(gen_expfam_bundle(
          rng, "expfam_train_" + fname + "_" + std::to_string(i), r.family, p,
          vec_dim, n_realizations));
    }
    for (std::size_t i = 0; i < n_test_per_family; ++i) {
      Rng rng = Rng::substream(seed, "expfam_test_" + fname, i);
      double p = draw_param(r, rng);
      md.test.push_back(gen_expfam_bundle(
          rng, "expfam_test_" + fname + "_" + std::to_string(i), r.family, p,
          vec_dim, n_realizations));
    }
  }
  return md;
}

double simulate_incline(const InclineSpec& spec, double mu) {
  if (!(spec.angle_deg > 0.0 && spec.angle_deg < 90.0))
    throw DataError("simulate_incline: angle must be in (0, 90) degrees");
  if (mu < 0.0) throw DataError("simulate_incline: mu must be >= 0");
  double a_rad = spec.angle_deg * std::numbers::pi / 180.0;
  double accel = spec.gravity * (std::sin(a_rad) - mu * std::cos(a_rad));
  if (accel <= 0.0)
    throw NonSlidingError("simulate_incline: mu >= tan(A), box does not slide");
  return std::sqrt(2.0 * spec.length / accel);
}

double sample_friction(const InclineSpec& spec, Rng& rng) {
  // Cap the friction range at a fixed value so the shape of the descent-time
  // distribution (not just its scale) varies with the incline angle; a purely
  // angle-proportional range makes the angle unrecoverable from times alone.
  double a_rad = spec.angle_deg * std::numbers::pi / 180.0;
  return rng.uniform(0.0, std::min(0.9 * std::tan(a_rad), 0.3));
}

DatasetBundle gen_physics_bundle(Rng& rng, const std::string& id,
                                 const InclineSpec& spec,
                                 std::size_t runs_per_sim) {
  DatasetBundle b;
  b.id = id;
  b.observations = Tensor::zeros(runs_per_sim, 1);
  b.targets = Tensor::zeros(runs_per_sim, 1);
  for (std::size_t i = 0; i < runs_per_sim; ++i) {
    double mu = sample_friction(spec, rng);
    b.observations.at(i, 0) = simulate_incline(spec, mu);
    b.targets.at(i, 0) = mu;
  }
  b.provenance = {{"kind", "physics"},
                  {"length", spec.length},
                  {"angle_deg", spec.angle_deg},
                  {"gravity", spec.gravity}};
  return b;
}

MetaDataset gen_physics_meta(std::uint64_t seed,
                             const std::vector<double>& lengths,
                             const std::vector<double>& angles,
                             std::size_t runs_per_sim) {
  MetaDataset md;
  md.generator_spec = {{"kind", "physics"},
                       {"seed", seed},
                       {"lengths", lengths},
                       {"angles", angles},
                       {"runs_per_sim", runs_per_sim}};
  std::size_t idx = 0;
  for (double l : lengths)
    for (double a : angles) {
      Rng rng = Rng::substream(seed, "physics_train", idx);
      InclineSpec spec{l, a};
      md.train.push_back(gen_physics_bundle(
          rng, "physics_L" + std::to_string(l) + "_A" + std::to_string(a),
          spec, runs_per_sim));
      ++idx;
    }
  return md;
}

// --- IDX ------------------------------------------------------------------

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("IDX: truncated while reading " + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

DatasetBundle load_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw DataError("cannot open IDX images: " + images_path.string());
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw DataError("cannot open IDX labels: " + labels_path.string());

  std::uint32_t magic_i = read_be32(img, "image magic");
  if (magic_i != 0x00000803u)
    throw DataError("bad IDX image magic in " + images_path.string());
  std::uint32_t n = read_be32(img, "image count");
  std::uint32_t rows = read_be32(img, "image rows");
  std::uint32_t cols = read_be32(img, "image cols");

  std::uint32_t magic_l = read_be32(lab, "label magic");
  if (magic_l != 0x00000801u)
    throw DataError("bad IDX label magic in " + labels_path.string());
  std::uint32_t n_labels = read_be32(lab, "label count");
  if (n != n_labels)
    throw DataError("IDX count mismatch: " + std::to_string(n) + " images vs " +
                    std::to_string(n_labels) + " labels");

  std::size_t dim = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> pix(static_cast<std::size_t>(n) * dim);
  img.read(reinterpret_cast<char*>(pix.data()),
           static_cast<std::streamsize>(pix.size()));
  if (!img) throw DataError("IDX: truncated image payload");
  std::vector<unsigned char> labs(n);
  lab.read(reinterpret_cast<char*>(labs.data()), n);
  if (!lab) throw DataError("IDX: truncated label payload");

  DatasetBundle b;
  b.id = images_path.stem().string();
  b.observations = Tensor::zeros(n, dim);
  auto& data = b.observations.data();
  for (std::size_t i = 0; i < pix.size(); ++i)
    data[i] = static_cast<double>(pix[i]) / 255.0;
  b.labels.assign(labs.begin(), labs.end());
  b.provenance = {{"kind", "idx"}, {"images", images_path.string()}};
  return b;
}

MetaDataset make_digit_pairs(const DatasetBundle& bundle,
                             std::pair<int, int> held_out, std::size_t n_pairs,
                             std::uint64_t seed, std::size_t per_digit) {
  if (!bundle.has_labels())
    throw DataError("make_digit_pairs: bundle has no labels");

  std::vector<int> digits;
  for (int d = 0; d <= 9; ++d)
    if (d != held_out.first && d != held_out.second) digits.push_back(d);

  std::vector<std::pair<int, int>> candidates;
  for (std::size_t i = 0; i < digits.size(); ++i)
    for (std::size_t j = i + 1; j < digits.size(); ++j)
      candidates.emplace_back(digits[i], digits[j]);
  if (n_pairs > candidates.size())
    throw DataError("make_digit_pairs: requested " + std::to_string(n_pairs) +
                    " pairs, only " + std::to_string(candidates.size()) +
                    " candidates");

  // Pools per digit, split 80/20 between train-bundle and test-bundle images.
  std::vector<std::vector<std::size_t>> pool(10);
  for (std::size_t i = 0; i < bundle.size(); ++i)
    pool[bundle.labels[i]].push_back(i);

  Rng rng = Rng::substream(seed, "digit_pairs");
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[rng.below(i + 1)]);

  std::size_t d = bundle.observations.cols();
  auto build = [&](std::pair<int, int> pr, bool from_test_pool,
                   const std::string& id) {
    DatasetBundle out;
    out.id = id;
    out.observations = Tensor::zeros(2 * per_digit, d);
    out.labels.resize(2 * per_digit);
    std::size_t row = 0;
    for (int side = 0; side < 2; ++side) {
      int digit = side == 0 ? pr.first : pr.second;
      const auto& p = pool[digit];
      if (p.empty())
        throw DataError("make_digit_pairs: no images of digit " +
                        std::to_string(digit));
      std::size_t split = (p.size() * 4) / 5;
      std::size_t lo = from_test_pool ? split : 0;
      std::size_t hi = from_test_pool ? p.size() : split;
      for (std::size_t k = 0; k < per_digit; ++k) {
        std::size_t src = p[lo + rng.below(hi - lo)];
        for (std::size_t c = 0; c < d; ++c)
          out.observations.at(row, c) = bundle.observations.at(src, c);
        out.labels[row] = side;
        ++row;
      }
    }
    out.provenance = {{"kind", "digit_pair"},
                      {"digits", {pr.first, pr.second}}};
    return out;
  };

  MetaDataset md;
  md.generator_spec = {{"kind", "digit_pairs"},
                       {"held_out", {held_out.first, held_out.second}},
                       {"n_pairs", n_pairs},
                       {"seed", seed},
                       {"per_digit", per_digit}};
  for (std::size_t i = 0; i < n_pairs; ++i) {
    auto pr = candidates[order[i]];
    md.train.push_back(build(pr, false,
                             "pair_" + std::to_string(pr.first) + "_" +
                                 std::to_string(pr.second)));
  }
  for (std::size_t i = n_pairs; i < candidates.size(); ++i) {
    auto pr = candidates[order[i]];
    md.test.push_back(build(pr, true,
                            "pair_" + std::to_string(pr.first) + "_" +
                                std::to_string(pr.second)));
  }
  md.test.push_back(build(held_out, true,
                          "pair_" + std::to_string(held_out.first) + "_" +
                              std::to_string(held_out.second)));
  return md;
}

// --- persistence ------------------------------------------------------------

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

void save_bundle(const std::filesystem::path& path, const DatasetBundle& b) {
  nlohmann::json header = {{"id", b.id},
                           {"rows", b.observations.rows()},
                           {"cols", b.observations.cols()},
                           {"labels", b.labels},
                           {"provenance", b.provenance}};
  std::vector<std::vector<double>> blocks = {b.observations.data()};
  if (b.has_targets()) {
    header["target_cols"] = b.targets.cols();
    blocks.push_back(b.targets.data());
  }
  write_framed(path, "MVD1", kDatasetVersion, header, blocks);
}

DatasetBundle load_bundle(const std::filesystem::path& path) {
  FramedFile f = read_framed(path, "MVD1", kDatasetVersion);
  DatasetBundle b;
  b.id = f.header.at("id").get<std::string>();
  std::size_t rows = f.header.at("rows").get<std::size_t>();
  std::size_t cols = f.header.at("cols").get<std::size_t>();
  b.observations = Tensor::from(std::move(f.blocks.at(0)), rows, cols);
  b.labels = f.header.at("labels").get<std::vector<int>>();
  b.provenance = f.header.at("provenance");
  if (f.header.contains("target_cols")) {
    std::size_t tc = f.header.at("target_cols").get<std::size_t>();
    b.targets = Tensor::from(std::move(f.blocks.at(1)), rows, tc);
  }
  return b;
}

}  // namespace

void save_meta_dataset(const std::filesystem::path& dir,
                       const MetaDataset& md) {
  std::filesystem::create_directories(dir);
  nlohmann::json index = {{"generator_spec", md.generator_spec},
                          {"train", nlohmann::json::array()},
                          {"test", nlohmann::json::array()}};
  for (std::size_t i = 0; i < md.train.size(); ++i) {
    std::string name = "train_" + std::to_string(i) + ".mvd";
    save_bundle(dir / name, md.train[i]);
    index["train"].push_back(name);
  }
  for (std::size_t i = 0; i < md.test.size(); ++i) {
    std::string name = "test_" + std::to_string(i) + ".mvd";
    save_bundle(dir / name, md.test[i]);
    index["test"].push_back(name);
  }
  std::ofstream ofs(dir / "meta.json", std::ios::trunc);
  ofs << index.dump(2) << "\n";
  if (!ofs) throw DataError("cannot write " + (dir / "meta.json").string());
}

MetaDataset load_meta_dataset(const std::filesystem::path& dir) {
  std::ifstream ifs(dir / "meta.json");
  if (!ifs) throw DataError("cannot open " + (dir / "meta.json").string());
  nlohmann::json index = nlohmann::json::parse(ifs);
  MetaDataset md;
  md.generator_spec = index.at("generator_spec");
  for (const auto& name : index.at("train"))
    md.train.push_back(load_bundle(dir / name.get<std::string>()));
  for (const auto& name : index.at("test"))
    md.test.push_back(load_bundle(dir / name.get<std::string>()));
  return md;
}

}  // namespace metavi
