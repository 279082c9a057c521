#include "kws/features/feature_sequence.hpp"

#include <cmath>

#include "kws/error.hpp"

namespace kws {

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kMfcc: return "MFCC";
    case FeatureKind::kBnf: return "BNF";
    case FeatureKind::kAe: return "AE";
    case FeatureKind::kCae: return "CAE";
    case FeatureKind::kOther: return "OTHER";
  }
  return "OTHER";
}

FeatureKind feature_kind_from_string(const std::string& name) {
  if (name == "MFCC") return FeatureKind::kMfcc;
  if (name == "BNF") return FeatureKind::kBnf;
  if (name == "AE") return FeatureKind::kAe;
  if (name == "CAE") return FeatureKind::kCae;
  if (name == "OTHER") return FeatureKind::kOther;
  throw ConfigError("unknown feature kind '" + name + "'");
}

FeatureSequence FeatureSequence::slice(int begin, int end) const {
  FeatureSequence out;
  out.frames = frames.middleRows(begin, end - begin);
  out.frame_rate = frame_rate;
  out.kind = kind;
  return out;
}

void validate(const FeatureSequence& f, const std::string& context) {
  if (f.num_frames() < 1) throw DataError(context + ": no frames");
  if (f.dim() < 1) throw DataError(context + ": zero feature dimension");
  if (!f.frames.allFinite()) throw DataError(context + ": non-finite feature value");
}

}  // namespace kws
