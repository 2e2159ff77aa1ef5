#include "capfuse/mmfc.hpp"

#include <cstring>
#include <fstream>

#include "binio.hpp"

namespace capfuse {

namespace binio {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open file '" + path + "'");
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw DataError("read failed for '" + path + "'");
  return bytes;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace binio

namespace {

constexpr char kMagic[4] = {'M', 'M', 'F', 'C'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_features(std::span<const FeatureBundle> bundles) {
  binio::Writer w;
  w.bytes(kMagic, 4);
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(bundles.size()));
  for (const FeatureBundle& b : bundles) {
    w.str(b.video_id);
    w.u16(static_cast<std::uint16_t>(b.modalities.size()));
    for (const auto& [name, m] : b.modalities) {
      w.str(name);
      w.u32(static_cast<std::uint32_t>(m.rows));
      w.u32(static_cast<std::uint32_t>(m.cols));
      w.bytes(m.data.data(), m.data.size() * 4);
    }
  }
  return w.buf;
}

std::vector<FeatureBundle> decode_features(std::span<const std::uint8_t> bytes) {
  binio::Reader r{bytes};
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("mmfc: bad magic", 0);
  }
  r.pos = 4;
  const std::uint16_t version = r.u16("version");
  if (version != kVersion) {
    throw FormatError("mmfc: unsupported version " + std::to_string(version), 4);
  }
  const std::uint32_t count = r.u32("bundle count");
  std::vector<FeatureBundle> bundles;
  bundles.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    FeatureBundle b;
    b.video_id = r.str("video id");
    const std::uint16_t n_mod = r.u16("modality count");
    b.modalities.reserve(n_mod);
    for (std::uint16_t mi = 0; mi < n_mod; ++mi) {
      std::string name = r.str("modality name");
      const std::uint32_t rows = r.u32("row count");
      const std::uint32_t cols = r.u32("column count");
      Matrix m(static_cast<int>(rows), static_cast<int>(cols));
      r.f32s(m.data.data(), m.data.size(), "feature values");
      b.modalities.emplace_back(std::move(name), std::move(m));
    }
    bundles.push_back(std::move(b));
  }
  if (r.pos != bytes.size()) {
    throw FormatError("mmfc: trailing bytes after last bundle", r.pos);
  }
  return bundles;
}

void write_features(std::span<const FeatureBundle> bundles, const std::string& path) {
  binio::write_file(path, encode_features(bundles));
}

std::vector<FeatureBundle> read_features(const std::string& path) {
  return decode_features(binio::read_file(path));
}

}  // namespace capfuse
