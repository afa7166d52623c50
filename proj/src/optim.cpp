#include "i2v/optim.hpp"

#include <algorithm>
#include <cmath>

#include "i2v/error.hpp"

namespace i2v {

void adam_step(Tensor& param, AdamState& state, double step_size) {
  if (!param.has_grad()) throw GradError("adam_step: parameter has no gradient");
  const auto g = param.grad();
  auto p = param.mutable_data();
  if (state.first_moment.empty()) {
    state.first_moment.assign(p.size(), 0.0);
    state.second_moment.assign(p.size(), 0.0);
  }
  if (state.first_moment.size() != p.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                     " values, parameter has " + std::to_string(p.size()));
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g[i];
    v = state.beta2 * v + (1.0 - state.beta2) * g[i] * g[i];
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    p[i] -= step_size * m_hat / (std::sqrt(v_hat) + state.eps_hat);
  }
}

Tensor project_linf(const Tensor& x_adv, const Tensor& x, double eps) {
  if (x_adv.numel() != x.numel()) {
    throw ShapeError("project_linf: shape mismatch " + shape_str(x_adv.shape()) + " vs " + shape_str(x.shape()));
  }
  std::vector<double> out(x.numel());
  const auto a = x_adv.data();
  const auto b = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = std::clamp(a[i], b[i] - eps, b[i] + eps);
    out[i] = std::clamp(v, kPixelMin, kPixelMax);
  }
  return Tensor::from(x.shape(), std::move(out));
}

}  // namespace i2v
