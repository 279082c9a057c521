#include "kws/models/resample.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_interp.h>

#include <memory>
#include <vector>

#include "kws/error.hpp"

namespace kws::models {

FeatureSequence resample_time(const FeatureSequence& f, int target_t) {
  const int T = f.num_frames(), D = f.dim();
  if (T < 2) throw DataError("resample_time needs at least 2 frames, got " + std::to_string(T));
  if (target_t < 1) throw ConfigError("resample_time target length must be >= 1");
  FeatureSequence out;
  out.kind = f.kind;
  out.frame_rate = f.frame_rate * (target_t > 1 ? static_cast<double>(target_t - 1) / (T - 1) : 1.0);
  out.frames.resize(target_t, D);
  if (T == target_t) {
    out.frames = f.frames;
    return out;
  }
  std::vector<double> knots(static_cast<std::size_t>(T)), values(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) knots[t] = t;
  std::vector<double> at(static_cast<std::size_t>(target_t));
  for (int i = 0; i < target_t; ++i)
    at[i] = target_t == 1 ? 0.0 : std::min<double>(T - 1, static_cast<double>(i) * (T - 1) / (target_t - 1));

  const gsl_interp_type* type = T >= 3 ? gsl_interp_cspline : gsl_interp_linear;
  std::unique_ptr<gsl_interp, decltype(&gsl_interp_free)> interp(gsl_interp_alloc(type, T), gsl_interp_free);
  std::unique_ptr<gsl_interp_accel, decltype(&gsl_interp_accel_free)> acc(gsl_interp_accel_alloc(),
                                                                          gsl_interp_accel_free);
  if (!interp || !acc) throw NumericError("resample_time: interpolation allocation failed");
  for (int d = 0; d < D; ++d) {
    for (int t = 0; t < T; ++t) values[t] = f.frames(t, d);
    if (gsl_interp_init(interp.get(), knots.data(), values.data(), static_cast<std::size_t>(T)) != GSL_SUCCESS)
      throw NumericError("resample_time: spline setup failed");
    gsl_interp_accel_reset(acc.get());
    for (int i = 0; i < target_t; ++i)
      out.frames(i, d) = static_cast<float>(gsl_interp_eval(interp.get(), knots.data(), values.data(), at[i], acc.get()));
  }
  return out;
}

}  // namespace kws::models
