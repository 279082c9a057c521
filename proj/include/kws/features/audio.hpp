#pragma once

#include <array>
#include <filesystem>
#include <vector>

namespace kws {

struct AudioBuffer {
  std::vector<float> samples;  // [-1, 1]
  int sample_rate = 16000;
};

// Rates accepted by the WAV reader; there is no resampler.
inline constexpr std::array<int, 6> kSupportedSampleRates{8000, 16000, 22050, 32000, 44100, 48000};

bool is_supported_sample_rate(int rate);

// Mono 16-bit PCM RIFF/WAVE only. Throws DataError for anything else.
AudioBuffer read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioBuffer& audio);

}  // namespace kws
