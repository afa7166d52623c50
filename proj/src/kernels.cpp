#include "i2v/kernels.hpp"

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>

#include "i2v/error.hpp"

namespace i2v {

namespace {

using Index = std::ptrdiff_t;

std::size_t out_extent(const char* axis, std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  if (s == 0) throw ShapeError(std::string("stride along ") + axis + " must be positive");
  if (k == 0) throw ShapeError(std::string("kernel extent along ") + axis + " must be positive");
  if (in == 0) throw ShapeError(std::string("input extent along ") + axis + " is zero");
  if (in + 2 * p < k) {
    throw ShapeError(std::string("kernel extent ") + std::to_string(k) + " exceeds padded input " +
                     std::to_string(in + 2 * p) + " along " + axis);
  }
  return (in + 2 * p - k) / s + 1;
}

// Output positions o for which o*s + k - p lands inside [0, in).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t k,
                                                std::size_t s, std::size_t p) {
  std::size_t lo = p > k ? (p - k + s - 1) / s : 0;
  if (in - 1 + p < k) return {0, 0};
  std::size_t hi = std::min(out, (in - 1 + p - k) / s + 1);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

}  // namespace

void ConvGeometry::resolve() {
  out_t = out_extent("time", in_t, k_t, stride[0], pad[0]);
  out_h = out_extent("height", in_h, k_h, stride[1], pad[1]);
  out_w = out_extent("width", in_w, k_w, stride[2], pad[2]);
  if (in_c == 0) throw ShapeError("input channel count is zero");
  if (out_c == 0) throw ShapeError("output channel count is zero");
}

void PoolGeometry::resolve() {
  const char* axes[3] = {"time", "height", "width"};
  const std::size_t ins[3] = {in_t, in_h, in_w};
  std::size_t outs[3];
  for (int a = 0; a < 3; ++a) {
    if (window[a] == 0) throw ShapeError(std::string("pool window along ") + axes[a] + " is zero");
    if (ins[a] < window[a]) {
      throw ShapeError(std::string("pool window ") + std::to_string(window[a]) + " exceeds input extent " +
                       std::to_string(ins[a]) + " along " + axes[a]);
    }
    outs[a] = ins[a] / window[a];
  }
  out_t = outs[0];
  out_h = outs[1];
  out_w = outs[2];
}

namespace kernels {

void conv_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> w,
                  std::span<const double> bias, std::span<double> out) {
  const std::size_t in_plane = g.in_t * g.in_h * g.in_w;
  const std::size_t out_plane = g.out_t * g.out_h * g.out_w;
  const Index n_out = static_cast<Index>(g.out_c);

#pragma omp parallel for schedule(static)
  for (Index co = 0; co < n_out; ++co) {
    double* o = out.data() + co * out_plane;
    const double b = bias.empty() ? 0.0 : bias[co];
    std::fill(o, o + out_plane, b);
    for (std::size_t ci = 0; ci < g.in_c; ++ci) {
      const double* ich = in.data() + ci * in_plane;
      const double* wk = w.data() + ((co * g.in_c + ci) * g.k_t) * g.k_h * g.k_w;
      for (std::size_t kt = 0; kt < g.k_t; ++kt) {
        const auto [t_lo, t_hi] = valid_range(g.out_t, g.in_t, kt, g.stride[0], g.pad[0]);
        for (std::size_t kh = 0; kh < g.k_h; ++kh) {
          const auto [h_lo, h_hi] = valid_range(g.out_h, g.in_h, kh, g.stride[1], g.pad[1]);
          for (std::size_t kw = 0; kw < g.k_w; ++kw) {
            const auto [w_lo, w_hi] = valid_range(g.out_w, g.in_w, kw, g.stride[2], g.pad[2]);
            const double wv = wk[(kt * g.k_h + kh) * g.k_w + kw];
            for (std::size_t ot = t_lo; ot < t_hi; ++ot) {
              const std::size_t it = ot * g.stride[0] + kt - g.pad[0];
              for (std::size_t oh = h_lo; oh < h_hi; ++oh) {
                const std::size_t ih = oh * g.stride[1] + kh - g.pad[1];
                const double* irow = ich + (it * g.in_h + ih) * g.in_w;
                double* orow = o + (ot * g.out_h + oh) * g.out_w;
                if (g.stride[2] == 1) {
                  const double* src = irow + kw - g.pad[2];
                  for (std::size_t ow = w_lo; ow < w_hi; ++ow) orow[ow] += wv * src[ow];
                } else {
                  for (std::size_t ow = w_lo; ow < w_hi; ++ow) {
                    orow[ow] += wv * irow[ow * g.stride[2] + kw - g.pad[2]];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                         std::span<const double> w, std::span<double> grad_in) {
  const std::size_t in_plane = g.in_t * g.in_h * g.in_w;
  const std::size_t out_plane = g.out_t * g.out_h * g.out_w;
  const Index n_in = static_cast<Index>(g.in_c);

#pragma omp parallel for schedule(static)
  for (Index ci = 0; ci < n_in; ++ci) {
    double* gi = grad_in.data() + ci * in_plane;
    for (std::size_t co = 0; co < g.out_c; ++co) {
      const double* go = grad_out.data() + co * out_plane;
      const double* wk = w.data() + ((co * g.in_c + ci) * g.k_t) * g.k_h * g.k_w;
      for (std::size_t kt = 0; kt < g.k_t; ++kt) {
        const auto [t_lo, t_hi] = valid_range(g.out_t, g.in_t, kt, g.stride[0], g.pad[0]);
        for (std::size_t kh = 0; kh < g.k_h; ++kh) {
          const auto [h_lo, h_hi] = valid_range(g.out_h, g.in_h, kh, g.stride[1], g.pad[1]);
          for (std::size_t kw = 0; kw < g.k_w; ++kw) {
            const auto [w_lo, w_hi] = valid_range(g.out_w, g.in_w, kw, g.stride[2], g.pad[2]);
            const double wv = wk[(kt * g.k_h + kh) * g.k_w + kw];
            for (std::size_t ot = t_lo; ot < t_hi; ++ot) {
              const std::size_t it = ot * g.stride[0] + kt - g.pad[0];
              for (std::size_t oh = h_lo; oh < h_hi; ++oh) {
                const std::size_t ih = oh * g.stride[1] + kh - g.pad[1];
                double* girow = gi + (it * g.in_h + ih) * g.in_w;
                const double* gorow = go + (ot * g.out_h + oh) * g.out_w;
                if (g.stride[2] == 1) {
                  double* dst = girow + kw - g.pad[2];
                  for (std::size_t ow = w_lo; ow < w_hi; ++ow) dst[ow] += wv * gorow[ow];
                } else {
                  for (std::size_t ow = w_lo; ow < w_hi; ++ow) {
                    girow[ow * g.stride[2] + kw - g.pad[2]] += wv * gorow[ow];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                          std::span<const double> in, std::span<double> grad_w,
                          std::span<double> grad_b) {
  const std::size_t in_plane = g.in_t * g.in_h * g.in_w;
  const std::size_t out_plane = g.out_t * g.out_h * g.out_w;
  const Index n_out = static_cast<Index>(g.out_c);

#pragma omp parallel for schedule(static)
  for (Index co = 0; co < n_out; ++co) {
    const double* go = grad_out.data() + co * out_plane;
    if (!grad_b.empty()) {
      double s = 0.0;
      for (std::size_t i = 0; i < out_plane; ++i) s += go[i];
      grad_b[co] += s;
    }
    for (std::size_t ci = 0; ci < g.in_c; ++ci) {
      const double* ich = in.data() + ci * in_plane;
      double* gw = grad_w.data() + ((co * g.in_c + ci) * g.k_t) * g.k_h * g.k_w;
      for (std::size_t kt = 0; kt < g.k_t; ++kt) {
        const auto [t_lo, t_hi] = valid_range(g.out_t, g.in_t, kt, g.stride[0], g.pad[0]);
        for (std::size_t kh = 0; kh < g.k_h; ++kh) {
          const auto [h_lo, h_hi] = valid_range(g.out_h, g.in_h, kh, g.stride[1], g.pad[1]);
          for (std::size_t kw = 0; kw < g.k_w; ++kw) {
            const auto [w_lo, w_hi] = valid_range(g.out_w, g.in_w, kw, g.stride[2], g.pad[2]);
            double acc = 0.0;
            for (std::size_t ot = t_lo; ot < t_hi; ++ot) {
              const std::size_t it = ot * g.stride[0] + kt - g.pad[0];
              for (std::size_t oh = h_lo; oh < h_hi; ++oh) {
                const std::size_t ih = oh * g.stride[1] + kh - g.pad[1];
                const double* irow = ich + (it * g.in_h + ih) * g.in_w;
                const double* gorow = go + (ot * g.out_h + oh) * g.out_w;
                for (std::size_t ow = w_lo; ow < w_hi; ++ow) {
                  acc += gorow[ow] * irow[ow * g.stride[2] + kw - g.pad[2]];
                }
              }
            }
            gw[(kt * g.k_h + kh) * g.k_w + kw] += acc;
          }
        }
      }
    }
  }
}

void max_pool_forward(const PoolGeometry& g, std::span<const double> in, std::span<double> out,
                      std::span<std::size_t> argmax) {
  const std::size_t in_plane = g.in_t * g.in_h * g.in_w;
  const std::size_t out_plane = g.out_t * g.out_h * g.out_w;
  const auto [wt, wh, ww] = g.window;
  const Index n = static_cast<Index>(g.c);

#pragma omp parallel for schedule(static)
  for (Index c = 0; c < n; ++c) {
    const std::size_t base = c * in_plane;
    std::size_t o = c * out_plane;
    for (std::size_t ot = 0; ot < g.out_t; ++ot) {
      for (std::size_t oh = 0; oh < g.out_h; ++oh) {
        for (std::size_t ow = 0; ow < g.out_w; ++ow, ++o) {
          std::size_t best = base + ((ot * wt) * g.in_h + oh * wh) * g.in_w + ow * ww;
          double best_v = in[best];
          for (std::size_t dt = 0; dt < wt; ++dt) {
            for (std::size_t dh = 0; dh < wh; ++dh) {
              const std::size_t row = base + ((ot * wt + dt) * g.in_h + oh * wh + dh) * g.in_w + ow * ww;
              for (std::size_t dw = 0; dw < ww; ++dw) {
                if (in[row + dw] > best_v) {
                  best_v = in[row + dw];
                  best = row + dw;
                }
              }
            }
          }
          out[o] = best_v;
          argmax[o] = best;
        }
      }
    }
  }
}

namespace reference {

namespace {

std::size_t in_index(const ConvGeometry& g, std::size_t c, std::size_t t, std::size_t h, std::size_t w) {
  return ((c * g.in_t + t) * g.in_h + h) * g.in_w + w;
}
std::size_t out_index(const ConvGeometry& g, std::size_t c, std::size_t t, std::size_t h, std::size_t w) {
  return ((c * g.out_t + t) * g.out_h + h) * g.out_w + w;
}
std::size_t w_index(const ConvGeometry& g, std::size_t co, std::size_t ci, std::size_t t, std::size_t h,
                    std::size_t w) {
  return (((co * g.in_c + ci) * g.k_t + t) * g.k_h + h) * g.k_w + w;
}

// Input coordinate hit by output o and tap k, or -1 when it falls in the padding.
Index source(std::size_t o, std::size_t k, std::size_t s, std::size_t p, std::size_t in) {
  const Index i = static_cast<Index>(o * s + k) - static_cast<Index>(p);
  return (i < 0 || i >= static_cast<Index>(in)) ? -1 : i;
}

}  // namespace

void conv_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> w,
                  std::span<const double> bias, std::span<double> out) {
  for (std::size_t co = 0; co < g.out_c; ++co)
    for (std::size_t ot = 0; ot < g.out_t; ++ot)
      for (std::size_t oh = 0; oh < g.out_h; ++oh)
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          double s = bias.empty() ? 0.0 : bias[co];
          for (std::size_t ci = 0; ci < g.in_c; ++ci)
            for (std::size_t kt = 0; kt < g.k_t; ++kt)
              for (std::size_t kh = 0; kh < g.k_h; ++kh)
                for (std::size_t kw = 0; kw < g.k_w; ++kw) {
                  const Index it = source(ot, kt, g.stride[0], g.pad[0], g.in_t);
                  const Index ih = source(oh, kh, g.stride[1], g.pad[1], g.in_h);
                  const Index iw = source(ow, kw, g.stride[2], g.pad[2], g.in_w);
                  if (it < 0 || ih < 0 || iw < 0) continue;
                  s += in[in_index(g, ci, it, ih, iw)] * w[w_index(g, co, ci, kt, kh, kw)];
                }
          out[out_index(g, co, ot, oh, ow)] = s;
        }
}

void conv_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                         std::span<const double> w, std::span<double> grad_in) {
  // Gather form: each input element sums over every (output, tap) that read it.
  auto hit = [](std::size_t i, std::size_t k, std::size_t s, std::size_t p, std::size_t out) -> Index {
    const Index num = static_cast<Index>(i + p) - static_cast<Index>(k);
    if (num < 0 || num % static_cast<Index>(s) != 0) return -1;
    const Index o = num / static_cast<Index>(s);
    return o < static_cast<Index>(out) ? o : -1;
  };
  for (std::size_t ci = 0; ci < g.in_c; ++ci)
    for (std::size_t it = 0; it < g.in_t; ++it)
      for (std::size_t ih = 0; ih < g.in_h; ++ih)
        for (std::size_t iw = 0; iw < g.in_w; ++iw) {
          double s = 0.0;
          for (std::size_t co = 0; co < g.out_c; ++co)
            for (std::size_t kt = 0; kt < g.k_t; ++kt)
              for (std::size_t kh = 0; kh < g.k_h; ++kh)
                for (std::size_t kw = 0; kw < g.k_w; ++kw) {
                  const Index ot = hit(it, kt, g.stride[0], g.pad[0], g.out_t);
                  const Index oh = hit(ih, kh, g.stride[1], g.pad[1], g.out_h);
                  const Index ow = hit(iw, kw, g.stride[2], g.pad[2], g.out_w);
                  if (ot < 0 || oh < 0 || ow < 0) continue;
                  s += grad_out[out_index(g, co, ot, oh, ow)] * w[w_index(g, co, ci, kt, kh, kw)];
                }
          grad_in[in_index(g, ci, it, ih, iw)] += s;
        }
}

void conv_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                          std::span<const double> in, std::span<double> grad_w,
                          std::span<double> grad_b) {
  for (std::size_t co = 0; co < g.out_c; ++co) {
    if (!grad_b.empty()) {
      double s = 0.0;
      for (std::size_t i = 0; i < g.out_t * g.out_h * g.out_w; ++i) {
        s += grad_out[co * g.out_t * g.out_h * g.out_w + i];
      }
      grad_b[co] += s;
    }
    for (std::size_t ci = 0; ci < g.in_c; ++ci)
      for (std::size_t kt = 0; kt < g.k_t; ++kt)
        for (std::size_t kh = 0; kh < g.k_h; ++kh)
          for (std::size_t kw = 0; kw < g.k_w; ++kw) {
            double s = 0.0;
            for (std::size_t ot = 0; ot < g.out_t; ++ot)
              for (std::size_t oh = 0; oh < g.out_h; ++oh)
                for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                  const Index it = source(ot, kt, g.stride[0], g.pad[0], g.in_t);
                  const Index ih = source(oh, kh, g.stride[1], g.pad[1], g.in_h);
                  const Index iw = source(ow, kw, g.stride[2], g.pad[2], g.in_w);
                  if (it < 0 || ih < 0 || iw < 0) continue;
                  s += grad_out[out_index(g, co, ot, oh, ow)] * in[in_index(g, ci, it, ih, iw)];
                }
            grad_w[w_index(g, co, ci, kt, kh, kw)] += s;
          }
  }
}

void max_pool_forward(const PoolGeometry& g, std::span<const double> in, std::span<double> out,
                      std::span<std::size_t> argmax) {
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ot = 0; ot < g.out_t; ++ot)
      for (std::size_t oh = 0; oh < g.out_h; ++oh)
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          std::size_t best = 0;
          bool first = true;
          for (std::size_t dt = 0; dt < g.window[0]; ++dt)
            for (std::size_t dh = 0; dh < g.window[1]; ++dh)
              for (std::size_t dw = 0; dw < g.window[2]; ++dw) {
                const std::size_t idx = ((c * g.in_t + ot * g.window[0] + dt) * g.in_h + oh * g.window[1] + dh) *
                                            g.in_w +
                                        ow * g.window[2] + dw;
                if (first || in[idx] > in[best]) {
                  best = idx;
                  first = false;
                }
              }
          const std::size_t o = ((c * g.out_t + ot) * g.out_h + oh) * g.out_w + ow;
          out[o] = in[best];
          argmax[o] = best;
        }
}

}  // namespace reference
}  // namespace kernels
}  // namespace i2v
