#include "metavi/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace metavi {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

std::uint32_t crc32(const unsigned char* data, std::size_t len,
                    std::uint32_t seed) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = seed ^ 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i)
    c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

namespace {

void append_u32(std::string& buf, std::uint32_t v) {
  buf.append(reinterpret_cast<const char*>(&v), 4);
}

}  // namespace

void write_framed(const std::filesystem::path& path, const char magic[4],
                  std::uint32_t version, const nlohmann::json& header,
                  const std::vector<std::vector<double>>& blocks) {
  nlohmann::json full = header;
  std::vector<std::size_t> lens;
  for (const auto& b : blocks) lens.push_back(b.size());
  full["block_lens"] = lens;
  std::string hdr = full.dump();

  std::string buf;
  buf.append(magic, 4);
  append_u32(buf, version);
  append_u32(buf, static_cast<std::uint32_t>(hdr.size()));
  buf += hdr;
  for (const auto& b : blocks)
    buf.append(reinterpret_cast<const char*>(b.data()), b.size() * 8);
  std::uint32_t crc =
      crc32(reinterpret_cast<const unsigned char*>(buf.data()), buf.size());
  append_u32(buf, crc);

  std::ofstream ofs(path, std::ios::binary | std::ios::trunc);
  if (!ofs) throw CheckpointError("cannot open for write: " + path.string());
  ofs.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!ofs) throw CheckpointError("write failed: " + path.string());
}

FramedFile read_framed(const std::filesystem::path& path, const char magic[4],
                       std::uint32_t expected_version) {
  std::ifstream ifs(path, std::ios::binary);
  if (!ifs) throw CheckpointError("cannot open: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(ifs)),
                  std::istreambuf_iterator<char>());

  // Identity checks first (magic, version), then structural length checks
  // (truncation), and the checksum only once the frame is structurally
  // sound, so each failure mode maps to its own error type.
  if (buf.size() < 16) throw TruncatedError("file too short: " + path.string());
  if (std::memcmp(buf.data(), magic, 4) != 0)
    throw VersionError("bad magic in " + path.string());

  std::uint32_t version, hdr_len;
  std::memcpy(&version, buf.data() + 4, 4);
  std::memcpy(&hdr_len, buf.data() + 8, 4);
  if (version != expected_version)
    throw VersionError("version " + std::to_string(version) + " != expected " +
                       std::to_string(expected_version) + " in " +
                       path.string());
  if (12 + static_cast<std::size_t>(hdr_len) + 4 > buf.size())
    throw TruncatedError("header overruns file: " + path.string());

  FramedFile out;
  try {
    out.header = nlohmann::json::parse(buf.substr(12, hdr_len));
  } catch (const nlohmann::json::exception&) {
    throw ChecksumError("corrupt header in " + path.string());
  }

  std::size_t off = 12 + hdr_len;
  std::vector<std::size_t> lens =
      out.header.at("block_lens").get<std::vector<std::size_t>>();
  std::size_t payload = 0;
  for (std::size_t len : lens) payload += len * 8;
  if (off + payload + 4 > buf.size())
    throw TruncatedError("payload truncated in " + path.string());
  if (off + payload + 4 != buf.size())
    throw TruncatedError("trailing bytes in " + path.string());

  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  std::uint32_t actual = crc32(
      reinterpret_cast<const unsigned char*>(buf.data()), buf.size() - 4);
  if (stored_crc != actual)
    throw ChecksumError("CRC mismatch in " + path.string());

  for (std::size_t len : lens) {
    std::vector<double> block(len);
    std::memcpy(block.data(), buf.data() + off, len * 8);
    out.blocks.push_back(std::move(block));
    off += len * 8;
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& ckpt) {
  nlohmann::json header;
  header["architecture"] = ckpt.architecture;
  nlohmann::json names = nlohmann::json::array();
  std::vector<std::vector<double>> blocks;
  for (const auto& [name, data] : ckpt.tensors) {
    names.push_back(name);
    blocks.push_back(data);
  }
  header["tensor_names"] = names;
  header["optimizer_step"] = ckpt.optimizer_step;
  header["rng_seed"] = ckpt.rng_seed;
  header["training_step"] = ckpt.training_step;
  blocks.push_back(ckpt.optimizer_state);
  write_framed(path, "MVI1", Checkpoint::kVersion, header, blocks);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  FramedFile f = read_framed(path, "MVI1", Checkpoint::kVersion);
  Checkpoint ckpt;
  ckpt.architecture = f.header.at("architecture");
  ckpt.optimizer_step = f.header.at("optimizer_step").get<std::uint64_t>();
  ckpt.rng_seed = f.header.at("rng_seed").get<std::uint64_t>();
  ckpt.training_step = f.header.at("training_step").get<std::uint64_t>();
  auto names = f.header.at("tensor_names").get<std::vector<std::string>>();
  if (f.blocks.size() != names.size() + 1)
    throw TruncatedError("block count mismatch in " + path.string());
  for (std::size_t i = 0; i < names.size(); ++i)
    ckpt.tensors.emplace_back(names[i], std::move(f.blocks[i]));
  ckpt.optimizer_state = std::move(f.blocks.back());
  return ckpt;
}

}  // namespace metavi
