#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kws/nn/network.hpp"

namespace kws::nn {

// "KWSM" | version u16 | spec hash (32 bytes) | spec canonical text (u32 length + bytes)
// | per layer: weight rows u32, cols u32, f64 values (row-major); bias length u32, f64 values
// | optimizer slots: present u8, then slot1 and slot2 laid out like the parameters
// | epochs_completed u64 | step u64 | seed u64.
inline constexpr std::uint16_t kModelFormatVersion = 1;

struct Model {
  NetworkSpec spec;
  NetworkState state;
};

std::vector<std::uint8_t> encode_model(const NetworkSpec& spec, const NetworkState& state);
Model decode_model(std::span<const std::uint8_t> bytes);

void save_state(const std::filesystem::path& path, const NetworkSpec& spec, const NetworkState& state);
// Loads any model file.
Model load_model(const std::filesystem::path& path);
// Refuses (ConfigError) a file whose spec hash differs from `expected`.
NetworkState load_state(const std::filesystem::path& path, const NetworkSpec& expected);

}  // namespace kws::nn
