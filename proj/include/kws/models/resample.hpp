#pragma once

#include "kws/features/feature_sequence.hpp"

namespace kws::models {

// Natural cubic spline per dimension, sampled at target_t uniformly spaced
// points over the original frame positions (linear when T == 2).
FeatureSequence resample_time(const FeatureSequence& f, int target_t = 60);

}  // namespace kws::models
