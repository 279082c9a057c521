#include "kws/eval/complexity.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <thread>

#include "kws/error.hpp"

namespace kws::eval {

std::string to_string(Approach a) {
  switch (a) {
    case Approach::kDtw: return "DTW";
    case Approach::kCnn: return "CNN";
    case Approach::kCnnDtw: return "CNN_DTW";
  }
  return "?";
}

std::uint64_t count_dtw_window(int template_frames, int window_frames, int dim) {
  const auto m = static_cast<std::uint64_t>(template_frames), n = static_cast<std::uint64_t>(window_frames);
  const auto d = static_cast<std::uint64_t>(dim);
  return m * n * d + (m + n) * d;
}

std::uint64_t count_dtw_template(int template_frames, int utterance_frames, int dim, int frame_skip) {
  if (template_frames < 1 || utterance_frames < 1 || dim < 1 || frame_skip < 1)
    throw ConfigError("DTW complexity needs positive template/utterance lengths, dim and frame skip");
  std::uint64_t total = 0;
  for (int q = 0; q < utterance_frames; q += frame_skip) {
    total += count_dtw_window(template_frames, std::min(template_frames, utterance_frames - q), dim);
    if (q + template_frames >= utterance_frames) break;
  }
  return total;
}

std::uint64_t count_network(const nn::NetworkSpec& spec, int input_height) {
  const int h = input_height > 0 ? input_height : (spec.input.h > 0 ? spec.input.h : spec.min_input_height());
  const nn::Shape in{spec.input.c, h, spec.input.w};
  const auto shapes = spec.infer_shapes(in);
  std::uint64_t total = 0;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& ls = spec.layers[l];
    const nn::Shape& src = l == 0 ? in : shapes[l - 1];
    const nn::Shape& dst = shapes[l];
    switch (ls.kind) {
      case nn::LayerKind::kConv2d:
        total += static_cast<std::uint64_t>(dst.size()) * ls.kernel_h * ls.kernel_w * src.c;
        break;
      case nn::LayerKind::kDense:
      case nn::LayerKind::kTiedDense:
        total += static_cast<std::uint64_t>(src.size()) * dst.size();
        break;
      default:
        break;
    }
  }
  return total;
}

std::uint64_t count_multiplications(const ComplexityConfig& cfg) {
  if (cfg.utterance_frames < 1) throw ConfigError("complexity config needs utterance_frames");
  switch (cfg.approach) {
    case Approach::kDtw: {
      if (cfg.template_frames.empty()) throw ConfigError("DTW complexity config needs template lengths");
      std::uint64_t total = 0;
      for (int m : cfg.template_frames) total += count_dtw_template(m, cfg.utterance_frames, cfg.dim, cfg.frame_skip);
      return total;
    }
    case Approach::kCnn: {
      if (!cfg.network) throw ConfigError("CNN complexity config needs the classifier network");
      const int window = cfg.network->input.h;
      const int positions = std::max(1, cfg.utterance_frames - window + 1);
      return static_cast<std::uint64_t>(positions) * count_network(*cfg.network);
    }
    case Approach::kCnnDtw:
      if (!cfg.network) throw ConfigError("CNN-DTW complexity config needs the network");
      return count_network(*cfg.network, std::max(cfg.utterance_frames, cfg.network->min_input_height()));
  }
  throw ConfigError("unknown approach");
}

RuntimeStats benchmark_runtime(const std::function<void()>& fn, int repetitions) {
  if (repetitions < 1) throw ConfigError("benchmark needs at least one repetition");
  RuntimeStats s;
  for (int r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    s.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  auto sorted = s.seconds;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  s.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  return s;
}

std::string hardware_description() {
  std::ifstream in("/proc/cpuinfo");
  std::string line, model = "unknown CPU";
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(colon + 2);
      break;
    }
  }
  return model + ", " + std::to_string(std::max(1u, std::thread::hardware_concurrency())) +
         " hardware threads, measured on 1 thread";
}

std::string format_complexity_report(const std::vector<ComplexityRow>& rows, double audio_seconds) {
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof buf, "# per %.1f s of input; %s\n", audio_seconds, hardware_description().c_str());
  out += buf;
  out += "approach\tmultiplications\tmedian_s\tmean_s\tconfig\n";
  for (const auto& r : rows) {
    if (r.runtime)
      std::snprintf(buf, sizeof buf, "%s\t%llu\t%.6g\t%.6g\t%s\n", to_string(r.approach).c_str(),
                    static_cast<unsigned long long>(r.multiplications), r.runtime->median, r.runtime->mean,
                    r.config.c_str());
    else
      std::snprintf(buf, sizeof buf, "%s\t%llu\t-\t-\t%s\n", to_string(r.approach).c_str(),
                    static_cast<unsigned long long>(r.multiplications), r.config.c_str());
    out += buf;
  }
  return out;
}

}  // namespace kws::eval
