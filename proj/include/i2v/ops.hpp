#pragma once

#include <array>
#include <cstddef>

#include "i2v/tensor.hpp"

namespace i2v {

struct ConvParams {
  std::array<std::size_t, 3> stride{1, 1, 1};  // (time, height, width)
  std::array<std::size_t, 3> padding{0, 0, 0};
};

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);

// Reductions to a scalar
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// input [C_in, H, W], kernel [C_out, C_in, k, k'], bias [C_out] or undefined.
// Only params.stride[1..2] / padding[1..2] are used.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias = {},
              const ConvParams& params = {});
// input [C_in, T, H, W], kernel [C_out, C_in, k_t, k, k'], bias [C_out] or undefined.
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias = {},
              const ConvParams& params = {});

// Non-overlapping max pooling over the trailing 2 or 3 axes of a
// [C, H, W] or [C, T, H, W] input. window = (t, h, w); t ignored for rank 3.
Tensor max_pool(const Tensor& input, std::array<std::size_t, 3> window);

// [C, ...] -> [C], mean over all trailing axes.
Tensor global_avg_pool(const Tensor& input);

// x [N], weight [K, N], bias [K] or undefined -> [K]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

// Differentiable reshape (copies values).
Tensor reshape(const Tensor& a, Shape shape);

// Softmax cross-entropy of one logit vector against an integer label.
Tensor cross_entropy(const Tensor& logits, std::size_t label);

// Added to the denominator of cosine_similarity.
inline constexpr double kCosineGuard = 1e-12;

// a.b / (|a||b| + guard) over the flattened tensors. Throws NumericError when
// b has exactly zero norm.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

// Population standard deviation over all elements.
Tensor feature_std(const Tensor& a);

std::size_t argmax(const Tensor& a);

}  // namespace i2v
