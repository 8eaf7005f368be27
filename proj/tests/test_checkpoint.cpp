#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "metavi/checkpoint.hpp"
#include "metavi/datagen.hpp"

using namespace metavi;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("metavi_test_" + name);
}

Checkpoint sample_checkpoint() {
  Checkpoint ckpt;
  ckpt.architecture = {{"layers", {3, 5, 2}}, {"kind", "demo"}};
  ckpt.tensors = {{"w0", {1.0, -2.5, 3.25, 0.125}},
                  {"b0", {0.0, 1e-300, -1e300}}};
  ckpt.optimizer_state = {0.1, 0.2, 0.3};
  ckpt.optimizer_step = 17;
  ckpt.rng_seed = 42;
  ckpt.training_step = 1234;
  return ckpt;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream ifs(p, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(ifs)),
                           std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream ofs(p, std::ios::binary | std::ios::trunc);
  ofs.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("checkpoint roundtrip is bit-exact") {
  fs::path p = temp_path("roundtrip.mvi");
  Checkpoint a = sample_checkpoint();
  save_checkpoint(p, a);
  Checkpoint b = load_checkpoint(p);

  CHECK(a.architecture == b.architecture);
  CHECK(a.optimizer_step == b.optimizer_step);
  CHECK(a.rng_seed == b.rng_seed);
  CHECK(a.training_step == b.training_step);
  REQUIRE(a.tensors.size() == b.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    CHECK(a.tensors[i].first == b.tensors[i].first);
    REQUIRE(a.tensors[i].second.size() == b.tensors[i].second.size());
    CHECK(std::memcmp(a.tensors[i].second.data(), b.tensors[i].second.data(),
                      a.tensors[i].second.size() * sizeof(double)) == 0);
  }
  REQUIRE(a.optimizer_state.size() == b.optimizer_state.size());
  CHECK(std::memcmp(a.optimizer_state.data(), b.optimizer_state.data(),
                    a.optimizer_state.size() * sizeof(double)) == 0);

  // Saving twice produces byte-identical files.
  fs::path p2 = temp_path("roundtrip2.mvi");
  save_checkpoint(p2, a);
  CHECK(read_bytes(p) == read_bytes(p2));
}

TEST_CASE("bad magic or version raises VersionError") {
  fs::path p = temp_path("version.mvi");
  save_checkpoint(p, sample_checkpoint());
  auto bytes = read_bytes(p);

  auto corrupted = bytes;
  corrupted[0] = 'X';  // magic
  fs::path pm = temp_path("badmagic.mvi");
  write_bytes(pm, corrupted);
  CHECK_THROWS_AS(load_checkpoint(pm), VersionError);

  corrupted = bytes;
  corrupted[4] = 99;  // version u32 low byte
  fs::path pv = temp_path("badversion.mvi");
  write_bytes(pv, corrupted);
  CHECK_THROWS_AS(load_checkpoint(pv), VersionError);
}

TEST_CASE("truncated files raise TruncatedError") {
  fs::path p = temp_path("trunc.mvi");
  save_checkpoint(p, sample_checkpoint());
  auto bytes = read_bytes(p);
  bytes.resize(bytes.size() - 7);
  fs::path pt = temp_path("trunc_cut.mvi");
  write_bytes(pt, bytes);
  CHECK_THROWS_AS(load_checkpoint(pt), TruncatedError);

  fs::path pe = temp_path("trunc_tiny.mvi");
  write_bytes(pe, {'M', 'V'});
  CHECK_THROWS_AS(load_checkpoint(pe), TruncatedError);
}

TEST_CASE("payload corruption raises ChecksumError") {
  fs::path p = temp_path("crc.mvi");
  save_checkpoint(p, sample_checkpoint());
  auto bytes = read_bytes(p);
  bytes[bytes.size() - 10] ^= 0x40;  // flip a bit inside the last f64 block
  fs::path pc = temp_path("crc_flip.mvi");
  write_bytes(pc, bytes);
  CHECK_THROWS_AS(load_checkpoint(pc), ChecksumError);
}

TEST_CASE("missing checkpoint file raises TruncatedError with the path") {
  fs::path p = temp_path("does_not_exist.mvi");
  fs::remove(p);
  CHECK_THROWS_WITH_AS(load_checkpoint(p),
                       doctest::Contains("does_not_exist"), CheckpointError);
}

TEST_CASE("framed dataset files roundtrip through the directory format") {
  MetaDataset md = gen_mog_meta(99, 3, 20, 2);
  fs::path dir = temp_path("mvd_roundtrip");
  fs::remove_all(dir);
  save_meta_dataset(dir, md);
  MetaDataset back = load_meta_dataset(dir);

  REQUIRE(back.train.size() == md.train.size());
  REQUIRE(back.test.size() == md.test.size());
  CHECK(back.generator_spec == md.generator_spec);
  for (std::size_t i = 0; i < md.train.size(); ++i) {
    const auto& a = md.train[i];
    const auto& b = back.train[i];
    CHECK(a.id == b.id);
    CHECK(a.labels == b.labels);
    CHECK(a.provenance == b.provenance);
    REQUIRE(a.observations.size() == b.observations.size());
    CHECK(std::memcmp(a.observations.data().data(),
                      b.observations.data().data(),
                      a.observations.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("generic framing detects a wrong magic") {
  fs::path p = temp_path("frame.bin");
  write_framed(p, "MVD1", 1, {{"k", 1}}, {{1.0, 2.0}});
  FramedFile f = read_framed(p, "MVD1", 1);
  CHECK(f.header.at("k") == 1);
  REQUIRE(f.blocks.size() == 1);
  CHECK(f.blocks[0] == std::vector<double>{1.0, 2.0});
  CHECK_THROWS_AS(read_framed(p, "MVI1", 1), VersionError);
}
