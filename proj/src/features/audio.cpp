#include "kws/features/audio.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kws/binary_io.hpp"
#include "kws/error.hpp"

namespace kws {

bool is_supported_sample_rate(int rate) {
  return std::find(kSupportedSampleRates.begin(), kSupportedSampleRates.end(), rate) !=
         kSupportedSampleRates.end();
}

namespace {

std::string supported_rates_text() {
  std::ostringstream os;
  for (std::size_t i = 0; i < kSupportedSampleRates.size(); ++i)
    os << (i ? ", " : "") << kSupportedSampleRates[i];
  return os.str();
}

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  const std::string name = path.string();
  io::ByteReader r(bytes);
  r.expect_magic("RIFF", name);
  r.u32("RIFF size");
  r.expect_magic("WAVE", name);

  bool have_fmt = false;
  int channels = 0, rate = 0, bits = 0;
  while (r.remaining() >= 8) {
    const std::string id = r.chars(4, "chunk id");
    const std::uint32_t size = r.u32("chunk size");
    if (id == "fmt ") {
      if (size < 16) throw FormatError(name + ": fmt chunk too small", r.offset());
      const auto format = r.u16("audio format");
      channels = r.u16("channels");
      rate = static_cast<int>(r.u32("sample rate"));
      r.u32("byte rate");
      r.u16("block align");
      bits = r.u16("bits per sample");
      r.skip(size - 16 + (size & 1u), "fmt chunk");
      if (format != 1) throw DataError(name + ": only PCM WAV is supported (format " +
                                       std::to_string(format) + ")");
      if (channels != 1)
        throw DataError(name + ": only mono audio is supported (" + std::to_string(channels) +
                        " channels)");
      if (bits != 16)
        throw DataError(name + ": only 16-bit samples are supported (" + std::to_string(bits) +
                        " bits)");
      if (!is_supported_sample_rate(rate))
        throw DataError(name + ": unsupported sample rate " + std::to_string(rate) +
                        " Hz; supported rates: " + supported_rates_text());
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(name + ": data chunk before fmt chunk", r.offset());
      r.need(size, "data chunk");
      AudioBuffer audio;
      audio.sample_rate = rate;
      audio.samples.resize(size / 2);
      for (auto& s : audio.samples)
        s = static_cast<float>(static_cast<std::int16_t>(r.u16("sample"))) / 32768.0f;
      return audio;
    } else {
      r.skip(size + (size & 1u), "chunk " + id);
    }
  }
  throw FormatError(name + ": no data chunk", r.offset());
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio) {
  if (!is_supported_sample_rate(audio.sample_rate))
    throw DataError("unsupported sample rate " + std::to_string(audio.sample_rate) +
                    "; supported rates: " + supported_rates_text());
  const auto n = static_cast<std::uint32_t>(audio.samples.size());
  io::ByteWriter w;
  w.magic("RIFF");
  w.u32(36 + 2 * n);
  w.magic("WAVE");
  w.magic("fmt ");
  w.u32(16);
  w.u16(1);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(audio.sample_rate));
  w.u32(static_cast<std::uint32_t>(audio.sample_rate) * 2);
  w.u16(2);
  w.u16(16);
  w.magic("data");
  w.u32(2 * n);
  for (float s : audio.samples) {
    const double clamped = std::clamp(static_cast<double>(s), -1.0, 32767.0 / 32768.0);
    w.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clamped * 32768.0))));
  }
  io::write_file(path, w.data());
}

}  // namespace kws
