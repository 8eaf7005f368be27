#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>

#include "metavi/datagen.hpp"

using namespace metavi;
namespace fs = std::filesystem;

namespace {

// Independent oracle: integrate x'' = g (sin A - mu cos A) with classic
// fourth-order Runge-Kutta at dt = 1e-4 and interpolate the crossing of L.
double rk4_descent_time(const InclineSpec& spec, double mu) {
  double rad = spec.angle_deg * 3.14159265358979323846 / 180.0;
  double acc = spec.gravity * (std::sin(rad) - mu * std::cos(rad));
  const double dt = 1e-4;
  double x = 0.0, v = 0.0, t = 0.0;
  while (x < spec.length) {
    // State derivative is (v, acc); acc is constant, but run the full RK4
    // update anyway so the oracle is a genuine integrator.
    double k1x = v, k1v = acc;
    double k2x = v + 0.5 * dt * k1v, k2v = acc;
    double k3x = v + 0.5 * dt * k2v, k3v = acc;
    double k4x = v + dt * k3v, k4v = acc;
    double nx = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
    double nv = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
    if (nx >= spec.length) {
      // Linear interpolation within the final step.
      double frac = (spec.length - x) / (nx - x);
      return t + frac * dt;
    }
    x = nx;
    v = nv;
    t += dt;
  }
  return t;
}

void write_u32_be(std::ofstream& ofs, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  ofs.write(reinterpret_cast<char*>(b), 4);
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("metavi_dg_" + name);
}

void write_idx_images(const fs::path& p, std::size_t n,
                      std::uint32_t magic = 0x803) {
  std::ofstream ofs(p, std::ios::binary | std::ios::trunc);
  write_u32_be(ofs, magic);
  write_u32_be(ofs, static_cast<std::uint32_t>(n));
  write_u32_be(ofs, 28);
  write_u32_be(ofs, 28);
  for (std::size_t i = 0; i < n * 784; ++i) {
    unsigned char px = static_cast<unsigned char>((i * 7 + i / 784) % 256);
    ofs.write(reinterpret_cast<char*>(&px), 1);
  }
}

void write_idx_labels(const fs::path& p, const std::vector<int>& labels,
                      std::uint32_t magic = 0x801) {
  std::ofstream ofs(p, std::ios::binary | std::ios::trunc);
  write_u32_be(ofs, magic);
  write_u32_be(ofs, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    unsigned char b = static_cast<unsigned char>(l);
    ofs.write(reinterpret_cast<char*>(&b), 1);
  }
}

}  // namespace

TEST_CASE("incline descent time matches an RK4 integration oracle") {
  double max_diff = 0.0;
  std::size_t points = 0;
  for (double length : {1.0, 3.0, 7.0, 12.0, 20.0}) {
    for (double angle : {15.0, 30.0, 45.0, 60.0, 75.0}) {
      for (double frac : {0.0, 0.3, 0.6, 0.89}) {
        InclineSpec spec{length, angle};
        double mu = frac * std::tan(angle * 3.14159265358979323846 / 180.0);
        double closed = simulate_incline(spec, mu);
        double rk4 = rk4_descent_time(spec, mu);
        max_diff = std::max(max_diff, std::fabs(closed - rk4));
        ++points;
      }
    }
  }
  CHECK(points == 100);
  CHECK(max_diff < 1e-4);
}

TEST_CASE("incline rejects non-sliding and out-of-range inputs") {
  InclineSpec spec{10.0, 30.0};
  double tan30 = std::tan(30.0 * 3.14159265358979323846 / 180.0);
  CHECK_THROWS_AS(simulate_incline(spec, tan30), NonSlidingError);
  CHECK_THROWS_AS(simulate_incline(spec, tan30 * 1.5), NonSlidingError);
  CHECK_THROWS_AS(simulate_incline(spec, -0.1), DataError);
  CHECK_THROWS_AS(simulate_incline(InclineSpec{10.0, 0.0}, 0.1), DataError);
  CHECK_THROWS_AS(simulate_incline(InclineSpec{10.0, 90.0}, 0.1), DataError);
  CHECK(simulate_incline(spec, 0.0) ==
        doctest::Approx(std::sqrt(2.0 * 10.0 / (9.8 * 0.5))));
}

TEST_CASE("friction prior stays below the sliding threshold") {
  Rng rng(4);
  InclineSpec spec{5.0, 40.0};
  double bound = std::min(
      0.9 * std::tan(40.0 * 3.14159265358979323846 / 180.0), 0.3);
  for (int i = 0; i < 1000; ++i) {
    double mu = sample_friction(spec, rng);
    REQUIRE(mu >= 0.0);
    REQUIRE(mu < bound);
  }
  InclineSpec shallow{5.0, 10.0};
  double shallow_bound =
      0.9 * std::tan(10.0 * 3.14159265358979323846 / 180.0);
  for (int i = 0; i < 1000; ++i) {
    double mu = sample_friction(shallow, rng);
    REQUIRE(mu >= 0.0);
    REQUIRE(mu < shallow_bound);
  }
}

TEST_CASE("mixture bundles are balanced and deterministic") {
  MetaDataset a = gen_mog_meta(7, 4, 101, 2);
  MetaDataset b = gen_mog_meta(7, 4, 101, 2);
  REQUIRE(a.train.size() == 4);
  REQUIRE(a.test.size() == 2);
  for (std::size_t i = 0; i < 4; ++i) {
    const DatasetBundle& bun = a.train[i];
    REQUIRE(bun.size() == 101);
    REQUIRE(bun.labels.size() == 101);
    int ones = 0;
    for (int l : bun.labels) ones += l;
    CHECK(std::abs(2 * ones - 101) <= 1);  // near-even split
    CHECK(bun.observations.data() == b.train[i].observations.data());
    // Labeled points sit near their component's mean.
    auto m0 = bun.provenance.at("mean0").get<std::vector<double>>();
    auto m1 = bun.provenance.at("mean1").get<std::vector<double>>();
    double sd = std::sqrt(0.1);
    for (std::size_t r = 0; r < bun.size(); ++r) {
      const auto& m = bun.labels[r] ? m1 : m0;
      double dx = bun.observations.at(r, 0) - m[0];
      double dy = bun.observations.at(r, 1) - m[1];
      CHECK(std::sqrt(dx * dx + dy * dy) < 6.0 * sd);
    }
  }
  // Different bundles come from different mixtures.
  CHECK(a.train[0].provenance.at("mean0") != a.train[1].provenance.at("mean0"));
}

TEST_CASE("exponential-family bundles respect support and provenance") {
  std::vector<ExpFamRange> mix = {default_expfam_range(FamilyTag::exponential),
                                  default_expfam_range(
                                      FamilyTag::gaussian_fixed_var)};
  MetaDataset md = gen_expfam_meta(11, mix, 3, 5, 16, 1);
  REQUIRE(md.train.size() == 6);
  REQUIRE(md.test.size() == 2);
  for (const auto& b : md.train) {
    std::string fam = b.provenance.at("family").get<std::string>();
    double param = b.provenance.at("param").get<double>();
    REQUIRE(b.observations.rows() == 16);
    REQUIRE(b.observations.cols() == 5);
    if (fam == "exponential") {
      CHECK(param > 0.0);
      CHECK(param <= 3.0);
      for (double v : b.observations.data()) CHECK(v >= 0.0);
    } else {
      CHECK(param >= -5.0);
      CHECK(param <= 5.0);
    }
  }
  CHECK_THROWS_AS(gen_expfam_meta(1, {}, 3, 5, 16), DataError);
}

TEST_CASE("physics meta-dataset covers the simulator grid") {
  MetaDataset md = gen_physics_meta(13, {2, 4}, {20, 30, 40}, 50);
  REQUIRE(md.train.size() == 6);
  std::set<std::pair<double, double>> cells;
  for (const auto& b : md.train) {
    cells.insert({b.provenance.at("length").get<double>(),
                  b.provenance.at("angle_deg").get<double>()});
    REQUIRE(b.size() == 50);
    REQUIRE(b.has_targets());
    for (std::size_t i = 0; i < b.size(); ++i) {
      double t = b.observations.at(i, 0);
      double mu = b.targets.at(i, 0);
      InclineSpec spec{b.provenance.at("length").get<double>(),
                       b.provenance.at("angle_deg").get<double>()};
      CHECK(t == doctest::Approx(simulate_incline(spec, mu)).epsilon(1e-12));
    }
  }
  CHECK(cells.size() == 6);
}

TEST_CASE("idx ingestion scales pixels and validates headers") {
  fs::path img = temp_path("images.idx");
  fs::path lab = temp_path("labels.idx");
  write_idx_images(img, 6);
  write_idx_labels(lab, {0, 1, 2, 3, 4, 5});

  DatasetBundle b = load_idx(img, lab);
  REQUIRE(b.observations.rows() == 6);
  REQUIRE(b.observations.cols() == 784);
  CHECK(b.labels == std::vector<int>{0, 1, 2, 3, 4, 5});
  for (double v : b.observations.data()) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
  CHECK(b.observations.at(0, 1) == doctest::Approx(7.0 / 255.0));

  fs::path bad_img = temp_path("bad_images.idx");
  write_idx_images(bad_img, 6, /*magic=*/0x777);
  CHECK_THROWS_AS(load_idx(bad_img, lab), DataError);

  fs::path bad_lab = temp_path("bad_labels.idx");
  write_idx_labels(bad_lab, {0, 1, 2});  // count mismatch
  CHECK_THROWS_AS(load_idx(img, bad_lab), DataError);

  fs::path missing = temp_path("missing.idx");
  fs::remove(missing);
  CHECK_THROWS_AS(load_idx(missing, lab), DataError);
}

TEST_CASE("digit-pair construction excludes the held-out pair from training") {
  // Synthetic 8-class problem standing in for digits.
  std::size_t per_class = 30;
  DatasetBundle all;
  all.id = "synthetic";
  all.observations = Tensor::zeros(per_class * 10, 16);
  for (int d = 0; d < 10; ++d)
    for (std::size_t i = 0; i < per_class; ++i) {
      all.labels.push_back(d);
      for (std::size_t j = 0; j < 16; ++j)
        all.observations.at(d * per_class + i, j) = d + 0.01 * i;
    }

  MetaDataset md = make_digit_pairs(all, {3, 7}, 4, 17, 10);
  REQUIRE(md.train.size() == 4);
  for (const auto& b : md.train) {
    std::set<int> digits(b.labels.begin(), b.labels.end());
    // Binary labels inside a bundle; the digit pair lives in provenance.
    CHECK(digits.size() == 2);
    auto pair = b.provenance.at("digits").get<std::vector<int>>();
    CHECK(pair.size() == 2);
    for (int d : pair) {
      CHECK(d != 3);
      CHECK(d != 7);
    }
  }
  bool has_held_out = false;
  for (const auto& b : md.test) {
    auto pair = b.provenance.at("digits").get<std::vector<int>>();
    if ((pair[0] == 3 && pair[1] == 7) || (pair[0] == 7 && pair[1] == 3))
      has_held_out = true;
  }
  CHECK(has_held_out);
}
