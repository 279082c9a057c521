#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kws/features/feature_sequence.hpp"

namespace kws {

// "KWSF" | version u16 | kind u16 | T u32 | D u32 | frame_rate f32 | T*D f32,
// all little-endian, row-major payload.
inline constexpr std::uint16_t kFeatureFormatVersion = 1;

std::vector<std::uint8_t> encode_features(const FeatureSequence& f);
FeatureSequence decode_features(std::span<const std::uint8_t> bytes);

void write_features(const FeatureSequence& f, const std::filesystem::path& path);
FeatureSequence read_features(const std::filesystem::path& path);

}  // namespace kws
