#include "kws/features/container.hpp"

#include <cmath>

#include "kws/binary_io.hpp"
#include "kws/error.hpp"

namespace kws {

std::vector<std::uint8_t> encode_features(const FeatureSequence& f) {
  io::ByteWriter w;
  w.magic("KWSF");
  w.u16(kFeatureFormatVersion);
  w.u16(static_cast<std::uint16_t>(f.kind));
  w.u32(static_cast<std::uint32_t>(f.num_frames()));
  w.u32(static_cast<std::uint32_t>(f.dim()));
  w.f32(f.frame_rate);
  const float* p = f.frames.data();
  for (Eigen::Index i = 0; i < f.frames.size(); ++i) w.f32(p[i]);
  return w.release();
}

FeatureSequence decode_features(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("KWSF", "feature container");
  const auto version_at = r.offset();
  const auto version = r.u16("format version");
  if (version != kFeatureFormatVersion)
    throw FormatError("unsupported feature container version " + std::to_string(version),
                      version_at);
  const auto kind_at = r.offset();
  const auto kind = r.u16("feature kind");
  if (kind > static_cast<std::uint16_t>(FeatureKind::kOther))
    throw FormatError("unknown feature kind " + std::to_string(kind), kind_at);
  const auto T = r.u32("frame count");
  const auto D = r.u32("dimension");
  const float rate = r.f32("frame rate");
  const std::uint64_t n = static_cast<std::uint64_t>(T) * D;
  r.need(4 * n, "feature payload");

  FeatureSequence f;
  f.kind = static_cast<FeatureKind>(kind);
  f.frame_rate = rate;
  f.frames.resize(T, D);
  float* p = f.frames.data();
  for (std::uint64_t i = 0; i < n; ++i) p[i] = r.f32();
  if (r.remaining() != 0)
    throw FormatError("trailing bytes after feature payload", r.offset());
  return f;
}

void write_features(const FeatureSequence& f, const std::filesystem::path& path) {
  io::write_file(path, encode_features(f));
}

FeatureSequence read_features(const std::filesystem::path& path) {
  return decode_features(io::read_file(path));
}

}  // namespace kws
