#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kws/nn/network.hpp"

namespace kws::eval {

enum class Approach { kDtw, kCnn, kCnnDtw };
std::string to_string(Approach a);

// Multiplications only. DTW: D per frame-pair cosine for every cell of every
// window's cost matrix, plus the frame norms (D each) once per window.
// Networks: conv output_elements x kh x kw x in_channels, dense in x out;
// the classifier is charged once per window position (step 1).
struct ComplexityConfig {
  Approach approach = Approach::kDtw;
  int utterance_frames = 0;
  int dim = 39;
  std::vector<int> template_frames;  // DTW: one entry per template
  int frame_skip = 3;                // DTW window step
  std::optional<nn::NetworkSpec> network;  // CNN / CNN-DTW
};

std::uint64_t count_dtw_window(int template_frames, int window_frames, int dim);
std::uint64_t count_dtw_template(int template_frames, int utterance_frames, int dim, int frame_skip);
// Multiplications of one forward pass over an input of the given time length
// (0 = the network's fixed input height).
std::uint64_t count_network(const nn::NetworkSpec& spec, int input_height = 0);
std::uint64_t count_multiplications(const ComplexityConfig& cfg);

struct RuntimeStats {
  std::vector<double> seconds;
  double median = 0.0;
  double mean = 0.0;
};

// Runs `fn` `repetitions` times on the calling thread.
RuntimeStats benchmark_runtime(const std::function<void()>& fn, int repetitions);
std::string hardware_description();

struct ComplexityRow {
  Approach approach = Approach::kDtw;
  std::uint64_t multiplications = 0;
  std::optional<RuntimeStats> runtime;
  std::string config;
};

std::string format_complexity_report(const std::vector<ComplexityRow>& rows, double audio_seconds);

}  // namespace kws::eval
