#pragma once

#include <cstdint>
#include <vector>

#include "i2v/tensor.hpp"

namespace i2v {

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

// One bias-corrected Adam step that descends the loss whose gradient sits in
// param.grad(). Moments are allocated on the first call. Throws GradError if
// the parameter has no gradient.
void adam_step(Tensor& param, AdamState& state, double step_size);

// Clamps x_adv into [x - eps, x + eps] and then into [0, 1].
Tensor project_linf(const Tensor& x_adv, const Tensor& x, double eps);

inline constexpr double kPixelMin = 0.0;
inline constexpr double kPixelMax = 1.0;

}  // namespace i2v
