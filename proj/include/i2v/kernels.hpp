#pragma once

// Dense compute kernels behind the differentiable ops.
//
// Two implementations share every signature:
//   i2v::kernels            loop-reordered, OpenMP-parallel over channels
//   i2v::kernels::reference textbook serial loops, kept for tests and the benchmark
//
// The parallel kernels partition work by output channel (forward, weight
// gradient) or input channel (input gradient). Every output element is owned
// by exactly one thread and accumulated in a fixed order, so results do not
// depend on the thread count.

#include <array>
#include <cstddef>
#include <span>

namespace i2v {

// Geometry of a 3-D cross-correlation over a C x T x H x W volume.
// A 2-D convolution is the special case T = kt = 1.
struct ConvGeometry {
  std::size_t in_c = 0, in_t = 1, in_h = 0, in_w = 0;
  std::size_t out_c = 0, k_t = 1, k_h = 1, k_w = 1;
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};
  std::size_t out_t = 0, out_h = 0, out_w = 0;

  // Fills out_* from the rest; throws ShapeError naming the bad axis.
  void resolve();
  std::size_t in_size() const { return in_c * in_t * in_h * in_w; }
  std::size_t out_size() const { return out_c * out_t * out_h * out_w; }
  std::size_t kernel_size() const { return out_c * in_c * k_t * k_h * k_w; }
};

// Non-overlapping max pooling (stride == window), floor semantics.
struct PoolGeometry {
  std::size_t c = 0, in_t = 1, in_h = 0, in_w = 0;
  std::array<std::size_t, 3> window{1, 1, 1};
  std::size_t out_t = 0, out_h = 0, out_w = 0;

  void resolve();
  std::size_t in_size() const { return c * in_t * in_h * in_w; }
  std::size_t out_size() const { return c * out_t * out_h * out_w; }
};

namespace kernels {

// out = conv(in, w) + bias; bias may be empty.
void conv_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> w,
                  std::span<const double> bias, std::span<double> out);
// grad_in += conv^T(grad_out, w)
void conv_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                         std::span<const double> w, std::span<double> grad_in);
// grad_w += corr(grad_out, in); grad_b += sum(grad_out) when grad_b is non-empty.
void conv_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                          std::span<const double> in, std::span<double> grad_w,
                          std::span<double> grad_b);

// argmax receives the flat input index of each window's maximum.
void max_pool_forward(const PoolGeometry& g, std::span<const double> in, std::span<double> out,
                      std::span<std::size_t> argmax);

namespace reference {

void conv_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> w,
                  std::span<const double> bias, std::span<double> out);
void conv_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                         std::span<const double> w, std::span<double> grad_in);
void conv_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                          std::span<const double> in, std::span<double> grad_w,
                          std::span<double> grad_b);
void max_pool_forward(const PoolGeometry& g, std::span<const double> in, std::span<double> out,
                      std::span<std::size_t> argmax);

}  // namespace reference
}  // namespace kernels
}  // namespace i2v
