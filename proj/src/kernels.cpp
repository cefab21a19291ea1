#include "stripnet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stripnet/errors.hpp"

namespace stripnet::kernels {

namespace {

// Upper bound on im2col scratch elements per row tile.
constexpr std::size_t kTileElems = std::size_t{1} << 17;

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  for (std::size_t l = 0; i < n; ++i, ++l) acc[l] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <class T>
T sum(const T* a, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l];
  }
  for (std::size_t l = 0; i < n; ++i, ++l) acc[l] += a[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

struct ConvGeometry {
  std::size_t batch, cin, cout, h, w, kh, kw, ph, pw, k;
  std::size_t tile_rows;
};

template <class T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& weight) {
  const Shape4& xs = input.shape();
  const Shape4& ws = weight.shape();
  if (ws.c != xs.c) {
    throw ContractViolation("conv2d: input has " + std::to_string(xs.c) +
                            " channels but weight expects " + std::to_string(ws.c));
  }
  if (ws.h % 2 == 0 || ws.w % 2 == 0) {
    throw ContractViolation("conv2d: kernel extents must be odd, got " + ws.str());
  }
  ConvGeometry g{};
  g.batch = xs.n;
  g.cin = xs.c;
  g.cout = ws.n;
  g.h = xs.h;
  g.w = xs.w;
  g.kh = ws.h;
  g.kw = ws.w;
  g.ph = ws.h / 2;
  g.pw = ws.w / 2;
  g.k = g.cin * g.kh * g.kw;
  g.tile_rows = std::clamp<std::size_t>(kTileElems / std::max<std::size_t>(1, g.k * g.w), 1, g.h);
  return g;
}

// cols[k][p] for rows [y0, y0 + rows), k = (ci, dy, dx), p = (y - y0) * w + x.
template <class T>
void im2col(const T* image, const ConvGeometry& g, std::size_t y0, std::size_t rows, T* cols) {
  const std::size_t p_count = rows * g.w;
  std::size_t k = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const T* plane = image + ci * g.h * g.w;
    for (std::size_t dy = 0; dy < g.kh; ++dy) {
      for (std::size_t dx = 0; dx < g.kw; ++dx, ++k) {
        T* row_out = cols + k * p_count;
        for (std::size_t r = 0; r < rows; ++r) {
          T* dst = row_out + r * g.w;
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y0 + r + dy) - static_cast<std::ptrdiff_t>(g.ph);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.w, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(sy) * g.w;
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(dx) - static_cast<std::ptrdiff_t>(g.pw);
          for (std::size_t x = 0; x < g.w; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) + shift;
            dst[x] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(g.w)) ? T{0} : src[sx];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, const ConvGeometry& g, std::size_t y0, std::size_t rows, T* image) {
  const std::size_t p_count = rows * g.w;
  std::size_t k = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    T* plane = image + ci * g.h * g.w;
    for (std::size_t dy = 0; dy < g.kh; ++dy) {
      for (std::size_t dx = 0; dx < g.kw; ++dx, ++k) {
        const T* row_in = cols + k * p_count;
        for (std::size_t r = 0; r < rows; ++r) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y0 + r + dy) - static_cast<std::ptrdiff_t>(g.ph);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          const T* src = row_in + r * g.w;
          T* dst = plane + static_cast<std::size_t>(sy) * g.w;
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(dx) - static_cast<std::ptrdiff_t>(g.pw);
          const std::size_t x_lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
          const std::size_t x_hi = shift > 0 ? g.w - static_cast<std::size_t>(shift) : g.w;
          for (std::size_t x = x_lo; x < x_hi; ++x) dst[x + shift] += src[x];
        }
      }
    }
  }
}

void check_bias(const Shape4& bias, std::size_t cout, const char* op) {
  if (bias.numel() != cout) {
    throw ContractViolation(std::string(op) + ": bias has " + std::to_string(bias.numel()) +
                            " elements, expected " + std::to_string(cout));
  }
}

void check_same_shape(const Shape4& a, const Shape4& b, const char* op) {
  if (!(a == b)) throw ContractViolation(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  const ConvGeometry g = conv_geometry(input, weight);
  check_bias(bias.shape(), g.cout, "conv2d");
  Tensor<T> out(Shape4{g.batch, g.cout, g.h, g.w});
  std::vector<T> cols(g.k * g.tile_rows * g.w);
  const T* wt = weight.data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* image = input.data() + n * g.cin * g.h * g.w;
    for (std::size_t y0 = 0; y0 < g.h; y0 += g.tile_rows) {
      const std::size_t rows = std::min(g.tile_rows, g.h - y0);
      const std::size_t p_count = rows * g.w;
      im2col(image, g, y0, rows, cols.data());
      std::size_t co = 0;
      // Four output channels at a time share each cols row.
      for (; co + 4 <= g.cout; co += 4) {
        T* o0 = &out.at(n, co, y0, 0);
        T* o1 = o0 + g.h * g.w;
        T* o2 = o1 + g.h * g.w;
        T* o3 = o2 + g.h * g.w;
        std::fill(o0, o0 + p_count, bias[co]);
        std::fill(o1, o1 + p_count, bias[co + 1]);
        std::fill(o2, o2 + p_count, bias[co + 2]);
        std::fill(o3, o3 + p_count, bias[co + 3]);
        const T* w0 = wt + co * g.k;
        const T* w1 = w0 + g.k;
        const T* w2 = w1 + g.k;
        const T* w3 = w2 + g.k;
        for (std::size_t k = 0; k < g.k; ++k) {
          const T* c = cols.data() + k * p_count;
          const T a0 = w0[k], a1 = w1[k], a2 = w2[k], a3 = w3[k];
          for (std::size_t p = 0; p < p_count; ++p) {
            const T v = c[p];
            o0[p] += a0 * v;
            o1[p] += a1 * v;
            o2[p] += a2 * v;
            o3[p] += a3 * v;
          }
        }
      }
      for (; co < g.cout; ++co) {
        T* o = &out.at(n, co, y0, 0);
        std::fill(o, o + p_count, bias[co]);
        const T* wr = wt + co * g.k;
        for (std::size_t k = 0; k < g.k; ++k) {
          const T* c = cols.data() + k * p_count;
          const T a = wr[k];
          for (std::size_t p = 0; p < p_count; ++p) o[p] += a * c[p];
        }
      }
    }
  }
  return out;
}

template <class T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                               const Tensor<T>& grad_out, bool need_input_grad) {
  const ConvGeometry g = conv_geometry(input, weight);
  check_same_shape(grad_out.shape(), Shape4{g.batch, g.cout, g.h, g.w}, "conv2d_backward");
  Conv2dGrads<T> grads{std::nullopt, Tensor<T>(weight.shape()), Tensor<T>(Shape4{g.cout, 1, 1, 1})};
  if (need_input_grad) grads.input.emplace(input.shape());
  std::vector<T> cols(g.k * g.tile_rows * g.w);
  std::vector<T> gcols(need_input_grad ? cols.size() : 0);
  const T* wt = weight.data();
  T* gw = grads.weight.data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* image = input.data() + n * g.cin * g.h * g.w;
    for (std::size_t co = 0; co < g.cout; ++co) {
      grads.bias[co] += sum(&grad_out.at(n, co, 0, 0), g.h * g.w);
    }
    for (std::size_t y0 = 0; y0 < g.h; y0 += g.tile_rows) {
      const std::size_t rows = std::min(g.tile_rows, g.h - y0);
      const std::size_t p_count = rows * g.w;
      im2col(image, g, y0, rows, cols.data());
      for (std::size_t co = 0; co < g.cout; ++co) {
        const T* go = &grad_out.at(n, co, y0, 0);
        T* gwr = gw + co * g.k;
        for (std::size_t k = 0; k < g.k; ++k) gwr[k] += dot(go, cols.data() + k * p_count, p_count);
      }
      if (need_input_grad) {
        std::fill(gcols.begin(), gcols.end(), T{0});
        for (std::size_t co = 0; co < g.cout; ++co) {
          const T* go = &grad_out.at(n, co, y0, 0);
          const T* wr = wt + co * g.k;
          for (std::size_t k = 0; k < g.k; ++k) {
            T* gc = gcols.data() + k * p_count;
            const T a = wr[k];
            for (std::size_t p = 0; p < p_count; ++p) gc[p] += a * go[p];
          }
        }
        col2im_add(gcols.data(), g, y0, rows, grads.input->data() + n * g.cin * g.h * g.w);
      }
    }
  }
  return grads;
}

namespace {
template <class T>
void check_transpose(const Tensor<T>& input, const Tensor<T>& weight) {
  const Shape4& ws = weight.shape();
  if (ws.n != input.shape().c) {
    throw ContractViolation("conv2d_transpose: input has " + std::to_string(input.shape().c) +
                            " channels but weight expects " + std::to_string(ws.n));
  }
  if (ws.h != 2 || ws.w != 2) throw ContractViolation("conv2d_transpose: kernel must be 2x2, got " + ws.str());
}
}  // namespace

template <class T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  check_transpose(input, weight);
  const Shape4& xs = input.shape();
  const std::size_t cin = xs.c, cout = weight.shape().c, h = xs.h, w = xs.w, hw = h * w;
  check_bias(bias.shape(), cout, "conv2d_transpose");
  Tensor<T> out(Shape4{xs.n, cout, 2 * h, 2 * w});
  std::vector<T> acc(hw);
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t dy = 0; dy < 2; ++dy) {
        for (std::size_t dx = 0; dx < 2; ++dx) {
          std::fill(acc.begin(), acc.end(), bias[co]);
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T a = weight.at(ci, co, dy, dx);
            const T* src = &input.at(n, ci, 0, 0);
            for (std::size_t p = 0; p < hw; ++p) acc[p] += a * src[p];
          }
          for (std::size_t y = 0; y < h; ++y) {
            T* dst = &out.at(n, co, 2 * y + dy, dx);
            const T* src = acc.data() + y * w;
            for (std::size_t x = 0; x < w; ++x) dst[2 * x] = src[x];
          }
        }
      }
    }
  }
  return out;
}

template <class T>
Conv2dGrads<T> conv2d_transpose_backward(const Tensor<T>& input, const Tensor<T>& weight,
                                         const Tensor<T>& grad_out, bool need_input_grad) {
  check_transpose(input, weight);
  const Shape4& xs = input.shape();
  const std::size_t cin = xs.c, cout = weight.shape().c, h = xs.h, w = xs.w, hw = h * w;
  check_same_shape(grad_out.shape(), Shape4{xs.n, cout, 2 * h, 2 * w}, "conv2d_transpose_backward");
  Conv2dGrads<T> grads{std::nullopt, Tensor<T>(weight.shape()), Tensor<T>(Shape4{cout, 1, 1, 1})};
  if (need_input_grad) grads.input.emplace(input.shape());
  std::vector<T> sub(hw);
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t co = 0; co < cout; ++co) {
      grads.bias[co] += sum(&grad_out.at(n, co, 0, 0), 4 * hw);
      for (std::size_t dy = 0; dy < 2; ++dy) {
        for (std::size_t dx = 0; dx < 2; ++dx) {
          for (std::size_t y = 0; y < h; ++y) {
            const T* src = &grad_out.at(n, co, 2 * y + dy, dx);
            for (std::size_t x = 0; x < w; ++x) sub[y * w + x] = src[2 * x];
          }
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T* xin = &input.at(n, ci, 0, 0);
            grads.weight.at(ci, co, dy, dx) += dot(xin, sub.data(), hw);
            if (need_input_grad) {
              T* gx = &grads.input->at(n, ci, 0, 0);
              const T a = weight.at(ci, co, dy, dx);
              for (std::size_t p = 0; p < hw; ++p) gx[p] += a * sub[p];
            }
          }
        }
      }
    }
  }
  return grads;
}

template <class T>
PoolResult<T> maxpool2(const Tensor<T>& input) {
  const Shape4& s = input.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ContractViolation("maxpool2: odd spatial extent " + s.str());
  PoolResult<T> r{Tensor<T>(Shape4{s.n, s.c, s.h / 2, s.w / 2}), {}};
  r.argmax.resize(r.output.numel());
  std::size_t o = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t y = 0; y < s.h; y += 2) {
        for (std::size_t x = 0; x < s.w; x += 2, ++o) {
          const std::size_t base = input.offset(n, c, y, x);
          const std::size_t cand[4] = {base, base + 1, base + s.w, base + s.w + 1};
          std::size_t best = cand[0];
          for (std::size_t i = 1; i < 4; ++i) {
            if (input[cand[i]] > input[best]) best = cand[i];
          }
          r.output[o] = input[best];
          r.argmax[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return r;
}

template <class T>
Tensor<T> maxpool2_backward(const Shape4& input_shape, std::span<const std::uint32_t> argmax,
                            const Tensor<T>& grad_out) {
  if (argmax.size() != grad_out.numel()) throw ContractViolation("maxpool2_backward: routing size mismatch");
  Tensor<T> gx(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += grad_out[i];
  return gx;
}

template <class T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) throw ContractViolation("concat_channels: no operands");
  const Shape4 first = parts[0]->shape();
  std::size_t channels = 0;
  for (const Tensor<T>* p : parts) {
    const Shape4& s = p->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ContractViolation("concat_channels: operand " + s.str() + " does not match " + first.str());
    }
    channels += s.c;
  }
  Tensor<T> out(Shape4{first.n, channels, first.h, first.w});
  const std::size_t plane = first.h * first.w;
  T* dst = out.data();
  for (std::size_t n = 0; n < first.n; ++n) {
    for (const Tensor<T>* p : parts) {
      const std::size_t chunk = p->shape().c * plane;
      const T* src = p->data() + n * chunk;
      dst = std::copy(src, src + chunk, dst);
    }
  }
  return out;
}

template <class T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& whole, std::span<const std::size_t> widths) {
  const Shape4& s = whole.shape();
  std::size_t total = 0;
  for (std::size_t c : widths) total += c;
  if (total != s.c) throw ContractViolation("split_channels: widths do not sum to " + std::to_string(s.c));
  std::vector<Tensor<T>> parts;
  parts.reserve(widths.size());
  for (std::size_t c : widths) parts.emplace_back(Shape4{s.n, c, s.h, s.w});
  const std::size_t plane = s.h * s.w;
  const T* src = whole.data();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const std::size_t chunk = widths[i] * plane;
      std::copy(src, src + chunk, parts[i].data() + n * chunk);
      src += chunk;
    }
  }
  return parts;
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  check_same_shape(x.shape(), grad_out.shape(), "relu_backward");
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) g[i] = x[i] > T{0} ? grad_out[i] : T{0};
  return g;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  constexpr T lo = std::numeric_limits<T>::denorm_min();
  const T hi = std::nextafter(T{1}, T{0});
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T v = x[i];
    T s;
    if (v >= T{0}) {
      s = T{1} / (T{1} + std::exp(-v));
    } else {
      const T e = std::exp(v);
      s = e / (T{1} + e);
    }
    y[i] = std::clamp(s, lo, hi);
  }
  return y;
}

template <class T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  check_same_shape(y.shape(), grad_out.shape(), "sigmoid_backward");
  Tensor<T> g(y.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) g[i] = grad_out[i] * y[i] * (T{1} - y[i]);
  return g;
}

template <class T>
double bce(const Tensor<T>& prob, const Tensor<T>& target) {
  check_same_shape(prob.shape(), target.shape(), "bce");
  double total = 0.0;
  for (std::size_t i = 0; i < prob.numel(); ++i) {
    const double p = std::clamp(static_cast<double>(prob[i]), kBceClamp, 1.0 - kBceClamp);
    const double y = static_cast<double>(target[i]);
    total -= y * std::log(p) + (1.0 - y) * std::log1p(-p);
  }
  return total / static_cast<double>(prob.numel());
}

template <class T>
Tensor<T> bce_backward(const Tensor<T>& prob, const Tensor<T>& target, double grad_loss) {
  check_same_shape(prob.shape(), target.shape(), "bce_backward");
  Tensor<T> g(prob.shape());
  const double scale = grad_loss / static_cast<double>(prob.numel());
  for (std::size_t i = 0; i < prob.numel(); ++i) {
    const double p = static_cast<double>(prob[i]);
    if (p < kBceClamp || p > 1.0 - kBceClamp) continue;
    const double y = static_cast<double>(target[i]);
    g[i] = static_cast<T>(scale * (-y / p + (1.0 - y) / (1.0 - p)));
  }
  return g;
}

template <class T>
double bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target) {
  check_same_shape(logits.shape(), target.shape(), "bce_with_logits");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    const double z = static_cast<double>(logits[i]);
    const double y = static_cast<double>(target[i]);
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  return total / static_cast<double>(logits.numel());
}

template <class T>
Tensor<T> bce_with_logits_backward(const Tensor<T>& logits, const Tensor<T>& target, double grad_loss) {
  check_same_shape(logits.shape(), target.shape(), "bce_with_logits_backward");
  Tensor<T> g(logits.shape());
  const double scale = grad_loss / static_cast<double>(logits.numel());
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    const double z = static_cast<double>(logits[i]);
    const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    g[i] = static_cast<T>(scale * (s - static_cast<double>(target[i])));
  }
  return g;
}

#define STRIPNET_INSTANTIATE(T)                                                                  \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Conv2dGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                          bool);                                                 \
  template Tensor<T> conv2d_transpose(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template Conv2dGrads<T> conv2d_transpose_backward(const Tensor<T>&, const Tensor<T>&,         \
                                                    const Tensor<T>&, bool);                    \
  template PoolResult<T> maxpool2(const Tensor<T>&);                                            \
  template Tensor<T> maxpool2_backward(const Shape4&, std::span<const std::uint32_t>,           \
                                       const Tensor<T>&);                                        \
  template Tensor<T> concat_channels(std::span<const Tensor<T>* const>);                        \
  template std::vector<Tensor<T>> split_channels(const Tensor<T>&, std::span<const std::size_t>); \
  template Tensor<T> relu(const Tensor<T>&);                                                    \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                 \
  template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);                      \
  template double bce(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> bce_backward(const Tensor<T>&, const Tensor<T>&, double);                  \
  template double bce_with_logits(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> bce_with_logits_backward(const Tensor<T>&, const Tensor<T>&, double);

STRIPNET_INSTANTIATE(float)
STRIPNET_INSTANTIATE(double)

#undef STRIPNET_INSTANTIATE

}  // namespace stripnet::kernels
