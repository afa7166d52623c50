#include "i2v/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "i2v/error.hpp"
#include "i2v/kernels.hpp"

namespace i2v {

namespace {

using detail::Node;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Parent i wants a gradient.
bool wants(const Node& self, std::size_t i) { return self.parents[i] && self.parents[i]->requires_grad; }

std::vector<double>& pgrad(Node& self, std::size_t i) { return self.parents[i]->ensure_grad(); }
const std::vector<double>& pdata(const Node& self, std::size_t i) { return *self.parents[i]->data; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!wants(self, p)) continue;
      auto& g = pgrad(self, p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& x = pdata(self, 0);
    const auto& y = pdata(self, 1);
    if (wants(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (wants(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  }, "mul");
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  return make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  }, "scale");
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    const auto& x = pdata(self, 0);
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) g[i] += self.grad[i];
    }
  }, "relu");
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result({}, {s}, {a}, [](Node& self) {
    auto& g = pgrad(self, 0);
    for (auto& v : g) v += self.grad[0];
  }, "sum");
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

namespace {

Tensor conv_impl(const Tensor& input, const Tensor& kernel, const Tensor& bias, ConvGeometry geo,
                 Shape out_shape_prefix, const char* op) {
  geo.resolve();
  Shape out_shape = std::move(out_shape_prefix);
  std::vector<double> out(geo.out_size());
  kernels::conv_forward(geo, input.data(), kernel.data(),
                        bias.defined() ? bias.data() : std::span<const double>{}, out);
  std::vector<Tensor> parents{input, kernel};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(out_shape), std::move(out), std::move(parents), [geo](Node& self) {
    if (wants(self, 0)) kernels::conv_backward_input(geo, self.grad, pdata(self, 1), pgrad(self, 0));
    const bool has_bias = self.parents.size() > 2 && wants(self, 2);
    if (wants(self, 1)) {
      std::span<double> gb = has_bias ? std::span<double>(pgrad(self, 2)) : std::span<double>{};
      kernels::conv_backward_weight(geo, self.grad, pdata(self, 0), pgrad(self, 1), gb);
    } else if (has_bias) {
      const std::size_t plane = geo.out_t * geo.out_h * geo.out_w;
      auto& gb = pgrad(self, 2);
      for (std::size_t c = 0; c < geo.out_c; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += self.grad[c * plane + i];
        gb[c] += s;
      }
    }
  }, op);
}

void check_bias(const Tensor& bias, std::size_t out_c, const char* op) {
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_c)) {
    throw ShapeError(std::string(op) + ": bias shape " + shape_str(bias.shape()) + " must be [" +
                     std::to_string(out_c) + "]");
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, const ConvParams& params) {
  if (input.rank() != 3) throw ShapeError("conv2d: input must be [C,H,W], got " + shape_str(input.shape()));
  if (kernel.rank() != 4) {
    throw ShapeError("conv2d: kernel must be [Cout,Cin,kh,kw], got " + shape_str(kernel.shape()));
  }
  if (kernel.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d: input channels " + std::to_string(input.dim(0)) + " != kernel input channels " +
                     std::to_string(kernel.dim(1)));
  }
  check_bias(bias, kernel.dim(0), "conv2d");
  ConvGeometry geo;
  geo.in_c = input.dim(0);
  geo.in_h = input.dim(1);
  geo.in_w = input.dim(2);
  geo.out_c = kernel.dim(0);
  geo.k_h = kernel.dim(2);
  geo.k_w = kernel.dim(3);
  geo.stride = {1, params.stride[1], params.stride[2]};
  geo.pad = {0, params.padding[1], params.padding[2]};
  geo.resolve();
  return conv_impl(input, kernel, bias, geo, {geo.out_c, geo.out_h, geo.out_w}, "conv2d");
}

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, const ConvParams& params) {
  if (input.rank() != 4) throw ShapeError("conv3d: input must be [C,T,H,W], got " + shape_str(input.shape()));
  if (kernel.rank() != 5) {
    throw ShapeError("conv3d: kernel must be [Cout,Cin,kt,kh,kw], got " + shape_str(kernel.shape()));
  }
  if (kernel.dim(1) != input.dim(0)) {
    throw ShapeError("conv3d: input channels " + std::to_string(input.dim(0)) + " != kernel input channels " +
                     std::to_string(kernel.dim(1)));
  }
  check_bias(bias, kernel.dim(0), "conv3d");
  ConvGeometry geo;
  geo.in_c = input.dim(0);
  geo.in_t = input.dim(1);
  geo.in_h = input.dim(2);
  geo.in_w = input.dim(3);
  geo.out_c = kernel.dim(0);
  geo.k_t = kernel.dim(2);
  geo.k_h = kernel.dim(3);
  geo.k_w = kernel.dim(4);
  geo.stride = params.stride;
  geo.pad = params.padding;
  geo.resolve();
  return conv_impl(input, kernel, bias, geo, {geo.out_c, geo.out_t, geo.out_h, geo.out_w}, "conv3d");
}

Tensor max_pool(const Tensor& input, std::array<std::size_t, 3> window) {
  PoolGeometry geo;
  const bool volumetric = input.rank() == 4;
  if (input.rank() == 3) {
    geo = {input.dim(0), 1, input.dim(1), input.dim(2), {1, window[1], window[2]}};
  } else if (volumetric) {
    geo = {input.dim(0), input.dim(1), input.dim(2), input.dim(3), window};
  } else {
    throw ShapeError("max_pool: input must be [C,H,W] or [C,T,H,W], got " + shape_str(input.shape()));
  }
  geo.resolve();
  std::vector<double> out(geo.out_size());
  auto argmax = std::make_shared<std::vector<std::size_t>>(geo.out_size());
  kernels::max_pool_forward(geo, input.data(), out, *argmax);
  Shape shape = volumetric ? Shape{geo.c, geo.out_t, geo.out_h, geo.out_w} : Shape{geo.c, geo.out_h, geo.out_w};
  return make_result(std::move(shape), std::move(out), {input}, [argmax](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t o = 0; o < argmax->size(); ++o) g[(*argmax)[o]] += self.grad[o];
  }, "max_pool");
}

Tensor global_avg_pool(const Tensor& input) {
  if (input.rank() < 2) throw ShapeError("global_avg_pool: need [C, ...], got " + shape_str(input.shape()));
  const std::size_t c = input.dim(0);
  const std::size_t plane = input.numel() / c;
  std::vector<double> out(c);
  const auto x = input.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += x[ch * plane + i];
    out[ch] = s / static_cast<double>(plane);
  }
  return make_result({c}, std::move(out), {input}, [plane](Node& self) {
    auto& g = pgrad(self, 0);
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t ch = 0; ch < self.grad.size(); ++ch) {
      const double v = self.grad[ch] * inv;
      for (std::size_t i = 0; i < plane; ++i) g[ch * plane + i] += v;
    }
  }, "global_avg_pool");
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 1) throw ShapeError("linear: input must be a vector, got " + shape_str(x.shape()));
  if (weight.rank() != 2 || weight.dim(1) != x.dim(0)) {
    throw ShapeError("linear: weight " + shape_str(weight.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  }
  const std::size_t k = weight.dim(0);
  const std::size_t n = weight.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != k)) {
    throw ShapeError("linear: bias shape " + shape_str(bias.shape()) + " must be [" + std::to_string(k) + "]");
  }
  std::vector<double> out(k);
  const auto xv = x.data();
  const auto w = weight.data();
  for (std::size_t r = 0; r < k; ++r) {
    double s = bias.defined() ? bias.data()[r] : 0.0;
    for (std::size_t j = 0; j < n; ++j) s += w[r * n + j] * xv[j];
    out[r] = s;
  }
  std::vector<Tensor> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result({k}, std::move(out), std::move(parents), [k, n](Node& self) {
    const auto& xv = pdata(self, 0);
    const auto& w = pdata(self, 1);
    if (wants(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t j = 0; j < n; ++j) g[j] += w[r * n + j] * self.grad[r];
    }
    if (wants(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t j = 0; j < n; ++j) g[r * n + j] += self.grad[r] * xv[j];
    }
    if (self.parents.size() > 2 && wants(self, 2)) {
      auto& g = pgrad(self, 2);
      for (std::size_t r = 0; r < k; ++r) g[r] += self.grad[r];
    }
  }, "linear");
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return make_result(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()), {a},
                     [](Node& self) {
                       auto& g = pgrad(self, 0);
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                     },
                     "reshape");
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.rank() != 1) throw ShapeError("cross_entropy: logits must be a vector");
  if (label >= logits.numel()) {
    throw ShapeError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     std::to_string(logits.numel()) + " classes");
  }
  const auto z = logits.data();
  const double zmax = *std::max_element(z.begin(), z.end());
  double denom = 0.0;
  for (double v : z) denom += std::exp(v - zmax);
  const double loss = std::log(denom) + zmax - z[label];
  return make_result({}, {loss}, {logits}, [label](Node& self) {
    const auto& z = pdata(self, 0);
    const double zmax = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - zmax);
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double p = std::exp(z[i] - zmax) / denom;
      g[i] += self.grad[0] * (p - (i == label ? 1.0 : 0.0));
    }
  }, "cross_entropy");
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw ShapeError("cosine_similarity: element count mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const auto x = a.data();
  const auto y = b.data();
  double dot = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (yy == 0.0) throw NumericError("cosine_similarity: reference feature has zero norm");
  const double na = std::sqrt(xx), nb = std::sqrt(yy);
  const double denom = na * nb + kCosineGuard;
  return make_result({}, {dot / denom}, {a, b}, [dot, na, nb, denom](Node& self) {
    const auto& x = pdata(self, 0);
    const auto& y = pdata(self, 1);
    const double g0 = self.grad[0];
    // d/da = b/D - dot * |b| * a / (|a| D^2), symmetric in b.
    auto side = [&](std::size_t p, const std::vector<double>& mine, const std::vector<double>& other,
                    double n_mine, double n_other) {
      if (!wants(self, p)) return;
      auto& g = pgrad(self, p);
      const double c1 = 1.0 / denom;
      const double c2 = n_mine > 0.0 ? dot * n_other / (n_mine * denom * denom) : 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * (other[i] * c1 - mine[i] * c2);
    };
    side(0, x, y, na, nb);
    side(1, y, x, nb, na);
  }, "cosine_similarity");
}

Tensor feature_std(const Tensor& a) {
  const std::size_t n = a.numel();
  if (n == 0) throw ShapeError("feature_std of empty tensor");
  const auto x = a.data();
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(n);
  // Corrected two-pass: the second term cancels the rounding error in mu,
  // so a constant tensor gives exactly 0.
  double sq = 0.0, lin = 0.0;
  for (double v : x) {
    sq += (v - mu) * (v - mu);
    lin += v - mu;
  }
  const double var = std::max(0.0, (sq - lin * lin / static_cast<double>(n)) / static_cast<double>(n));
  const double sd = std::sqrt(var);
  return make_result({}, {sd}, {a}, [mu, sd, n](Node& self) {
    if (sd == 0.0) return;  // subgradient 0 at the minimum
    const auto& x = pdata(self, 0);
    auto& g = pgrad(self, 0);
    const double c = self.grad[0] / (static_cast<double>(n) * sd);
    for (std::size_t i = 0; i < n; ++i) g[i] += c * (x[i] - mu);
  }, "feature_std");
}

std::size_t argmax(const Tensor& a) {
  const auto d = a.data();
  if (d.empty()) throw ShapeError("argmax of empty tensor");
  return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

}  // namespace i2v
