#include "amgan/ops.hpp"

#include "amgan/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace amgan::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite value in output");
  }
}

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

// Builds the output tensor and, when any input tracks gradients, records a
// tape node. fn receives the output gradient buffer.
template <class F>
Tensor emit(const char* op, Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs, F&& fn) {
  check_finite(data, op);
  Tensor out(std::move(shape), std::move(data), false);
  bool track = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) track = track || (t.defined() && t.requires_grad());
  }
  if (track) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorImpl>> ins;
    for (const auto& t : inputs) {
      if (t.defined()) ins.push_back(t.impl());
    }
    TensorImpl* o = out.impl().get();
    tape().record(std::move(ins), out.impl(), [o, fn = std::forward<F>(fn)]() { fn(o->grad.data()); });
  }
  return out;
}

TensorImpl* raw(const Tensor& t) { return t.defined() ? t.impl().get() : nullptr; }

double* target(TensorImpl* t) { return t ? grad_target(*t) : nullptr; }

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), op, "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// cols[(c*K + k), b*P + t] = sig[b, c, t*stride - pad + k], zero outside.
void im2col(const double* sig, std::size_t B, std::size_t C, std::size_t Ls, std::size_t K, std::size_t stride,
            std::size_t pad, std::size_t P, double* cols) {
  const std::size_t width = B * P;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < K; ++k) {
      double* row = cols + (c * K + k) * width;
      for (std::size_t b = 0; b < B; ++b) {
        const double* s = sig + (b * C + c) * Ls;
        for (std::size_t t = 0; t < P; ++t) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(pad);
          row[b * P + t] = (pos >= 0 && pos < static_cast<std::ptrdiff_t>(Ls)) ? s[pos] : 0.0;
        }
      }
    }
  }
}

// Adjoint of im2col: scatters (accumulates) columns back into sig.
void col2im(const double* cols, std::size_t B, std::size_t C, std::size_t Ls, std::size_t K, std::size_t stride,
            std::size_t pad, std::size_t P, double* sig) {
  const std::size_t width = B * P;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < K; ++k) {
      const double* row = cols + (c * K + k) * width;
      for (std::size_t b = 0; b < B; ++b) {
        double* s = sig + (b * C + c) * Ls;
        for (std::size_t t = 0; t < P; ++t) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(pad);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(Ls)) s[pos] += row[b * P + t];
        }
      }
    }
  }
}

// [B,C,L] <-> [C, B*L]
std::vector<double> to_channel_major(const double* x, std::size_t B, std::size_t C, std::size_t L) {
  std::vector<double> out(B * C * L);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      std::copy_n(x + (b * C + c) * L, L, out.data() + c * B * L + b * L);
    }
  }
  return out;
}

void add_from_channel_major(const double* m, std::size_t B, std::size_t C, std::size_t L, double* x) {
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* src = m + c * B * L + b * L;
      double* dst = x + (b * C + c) * L;
      for (std::size_t l = 0; l < L; ++l) dst[l] += src[l];
    }
  }
}

}  // namespace

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ShapeError("conv1d: stride must be positive");
  if (length + 2 * padding < kernel) throw ShapeError("conv1d: input shorter than kernel");
  return (length + 2 * padding - kernel) / stride + 1;
}

std::size_t conv_transpose_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                         std::size_t padding) {
  if (stride == 0) throw ShapeError("conv_transpose1d: stride must be positive");
  const std::size_t full = (length - 1) * stride + kernel;
  if (full <= 2 * padding) throw ShapeError("conv_transpose1d: padding too large");
  return full - 2 * padding;
}

Tensor add(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "add");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  auto* pa = raw(a);
  auto* pb = raw(b);
  const std::size_t n = y.size();
  return emit("add", a.shape(), std::move(y), {a, b}, [pa, pb, n](const double* g) {
    if (double* ga = target(pa)) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    if (double* gb = target(pb)) for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "sub");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] - b.data()[i];
  auto* pa = raw(a);
  auto* pb = raw(b);
  const std::size_t n = y.size();
  return emit("sub", a.shape(), std::move(y), {a, b}, [pa, pb, n](const double* g) {
    if (double* ga = target(pa)) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    if (double* gb = target(pb)) for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "mul");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  auto* pa = raw(a);
  auto* pb = raw(b);
  const std::size_t n = y.size();
  return emit("mul", a.shape(), std::move(y), {a, b}, [pa, pb, n](const double* g) {
    if (double* ga = target(pa)) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * pb->data[i];
    if (double* gb = target(pb)) for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * pa->data[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> y(a.data().begin(), a.data().end());
  for (double& v : y) v *= s;
  auto* pa = raw(a);
  return emit("scale", a.shape(), std::move(y), {a}, [pa, s](const double* g) {
    if (double* ga = target(pa)) for (std::size_t i = 0; i < pa->data.size(); ++i) ga[i] += s * g[i];
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> y(a.data().begin(), a.data().end());
  for (double& v : y) v += s;
  auto* pa = raw(a);
  return emit("add_scalar", a.shape(), std::move(y), {a}, [pa](const double* g) {
    if (double* ga = target(pa)) for (std::size_t i = 0; i < pa->data.size(); ++i) ga[i] += g[i];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto* pa = raw(a);
  return emit("sum", {1}, {s}, {a}, [pa](const double* g) {
    if (double* ga = target(pa)) for (std::size_t i = 0; i < pa->data.size(); ++i) ga[i] += g[0];
  });
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double n = static_cast<double>(a.numel());
  auto* pa = raw(a);
  return emit("mean", {1}, {s / n}, {a}, [pa, n](const double* g) {
    if (double* ga = target(pa)) for (std::size_t i = 0; i < pa->data.size(); ++i) ga[i] += g[0] / n;
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  const double n = static_cast<double>(a.numel());
  auto* pa = raw(a);
  auto* pb = raw(b);
  return emit("mse", {1}, {s / n}, {a, b}, [pa, pb, n](const double* g) {
    double* ga = target(pa);
    double* gb = target(pb);
    const double k = 2.0 * g[0] / n;
    for (std::size_t i = 0; i < pa->data.size(); ++i) {
      const double d = k * (pa->data[i] - pb->data[i]);
      if (ga) ga[i] += d;
      if (gb) gb[i] -= d;
    }
  });
}

namespace {
thread_local KinkSignature* g_kinks = nullptr;
}  // namespace

KinkSignature::KinkSignature() {
  if (g_kinks != nullptr) throw InvalidInput("KinkSignature: already active on this thread");
  g_kinks = this;
}

KinkSignature::~KinkSignature() { g_kinks = nullptr; }

void observe_kinks(const std::vector<double>& x) {
  if (g_kinks == nullptr) return;
  std::uint64_t h = g_kinks->hash_;
  for (double v : x) h = (h ^ (v > 0.0 ? 1u : 0u)) * 1099511628211ull;
  g_kinks->hash_ = h;
}

Tensor relu(const Tensor& a) { return leaky_relu(a, 0.0); }

Tensor leaky_relu(const Tensor& a, double slope) {
  std::vector<double> y(a.data().begin(), a.data().end());
  observe_kinks(y);
  for (double& v : y) v = v > 0.0 ? v : slope * v;
  auto* pa = raw(a);
  return emit(slope == 0.0 ? "relu" : "leaky_relu", a.shape(), std::move(y), {a}, [pa, slope](const double* g) {
    if (double* ga = target(pa)) {
      for (std::size_t i = 0; i < pa->data.size(); ++i) ga[i] += pa->data[i] > 0.0 ? g[i] : slope * g[i];
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  auto y = std::make_shared<std::vector<double>>(a.numel());
  for (std::size_t i = 0; i < y->size(); ++i) (*y)[i] = stable_sigmoid(a.data()[i]);
  auto* pa = raw(a);
  return emit("sigmoid", a.shape(), *y, {a}, [pa, y](const double* g) {
    if (double* ga = target(pa)) {
      for (std::size_t i = 0; i < y->size(); ++i) ga[i] += g[i] * (*y)[i] * (1.0 - (*y)[i]);
    }
  });
}

Tensor log_sigmoid(const Tensor& a) {
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double x = a.data()[i];
    y[i] = std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
  }
  auto* pa = raw(a);
  return emit("log_sigmoid", a.shape(), std::move(y), {a}, [pa](const double* g) {
    if (double* ga = target(pa)) {
      for (std::size_t i = 0; i < pa->data.size(); ++i) ga[i] += g[i] * stable_sigmoid(-pa->data[i]);
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0), "matmul",
          shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> y(m * n);
  MapMat(y.data(), ix(m), ix(n)).noalias() = CMapMat(a.data().data(), ix(m), ix(k)) * CMapMat(b.data().data(), ix(k), ix(n));
  auto* pa = raw(a);
  auto* pb = raw(b);
  return emit("matmul", {m, n}, std::move(y), {a, b}, [pa, pb, m, k, n](const double* g) {
    CMapMat G(g, ix(m), ix(n));
    if (double* ga = target(pa)) MapMat(ga, ix(m), ix(k)).noalias() += G * CMapMat(pb->data.data(), ix(k), ix(n)).transpose();
    if (double* gb = target(pb)) MapMat(gb, ix(k), ix(n)).noalias() += CMapMat(pa->data.data(), ix(m), ix(k)).transpose() * G;
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1), "bmm",
          shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const std::size_t N = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> y(N * m * n);
  for (std::size_t i = 0; i < N; ++i) {
    MapMat(y.data() + i * m * n, ix(m), ix(n)).noalias() =
        CMapMat(a.data().data() + i * m * k, ix(m), ix(k)) * CMapMat(b.data().data() + i * k * n, ix(k), ix(n));
  }
  auto* pa = raw(a);
  auto* pb = raw(b);
  return emit("bmm", {N, m, n}, std::move(y), {a, b}, [pa, pb, N, m, k, n](const double* g) {
    double* ga = target(pa);
    double* gb = target(pb);
    for (std::size_t i = 0; i < N; ++i) {
      CMapMat G(g + i * m * n, ix(m), ix(n));
      if (ga) MapMat(ga + i * m * k, ix(m), ix(k)).noalias() += G * CMapMat(pb->data.data() + i * k * n, ix(k), ix(n)).transpose();
      if (gb) MapMat(gb + i * k * n, ix(k), ix(n)).noalias() += CMapMat(pa->data.data() + i * m * k, ix(m), ix(k)).transpose() * G;
    }
  });
}

Tensor transpose12(const Tensor& a) {
  require(a.rank() == 3, "transpose12", "expected rank 3, got " + shape_string(a.shape()));
  const std::size_t N = a.dim(0), r = a.dim(1), c = a.dim(2);
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < N; ++i) {
    MapMat(y.data() + i * r * c, ix(c), ix(r)) = CMapMat(a.data().data() + i * r * c, ix(r), ix(c)).transpose();
  }
  auto* pa = raw(a);
  return emit("transpose12", {N, c, r}, std::move(y), {a}, [pa, N, r, c](const double* g) {
    if (double* ga = target(pa)) {
      for (std::size_t i = 0; i < N; ++i) {
        MapMat(ga + i * r * c, ix(r), ix(c)) += CMapMat(g + i * r * c, ix(c), ix(r)).transpose();
      }
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(numel(shape) == a.numel(), "reshape", shape_string(a.shape()) + " -> " + shape_string(shape));
  auto* pa = raw(a);
  return emit("reshape", std::move(shape), std::vector<double>(a.data().begin(), a.data().end()), {a},
              [pa](const double* g) {
                if (double* ga = target(pa)) for (std::size_t i = 0; i < pa->data.size(); ++i) ga[i] += g[i];
              });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  require(axis < a.rank(), "softmax", "axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t len = a.dim(axis);
  auto y = std::make_shared<std::vector<double>>(a.numel());
  const double* x = a.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, x[base + j * inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(x[base + j * inner] - mx);
        (*y)[base + j * inner] = e;
        s += e;
      }
      for (std::size_t j = 0; j < len; ++j) (*y)[base + j * inner] /= s;
    }
  }
  auto* pa = raw(a);
  return emit("softmax", a.shape(), *y, {a}, [pa, y, outer, inner, len](const double* g) {
    double* ga = target(pa);
    if (!ga) return;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * (*y)[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t p = base + j * inner;
          ga[p] += (*y)[p] * (g[p] - dot);
        }
      }
    }
  });
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  require(!xs.empty(), "concat", "no inputs");
  const Shape& s0 = xs[0].shape();
  require(axis < s0.size(), "concat", "axis out of range");
  std::size_t total = 0;
  for (const auto& t : xs) {
    require(t.rank() == s0.size(), "concat", "rank mismatch");
    for (std::size_t d = 0; d < s0.size(); ++d) {
      if (d != axis) require(t.dim(d) == s0[d], "concat", "shape mismatch " + shape_string(t.shape()));
    }
    total += t.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Shape shape = s0;
  shape[axis] = total;
  std::vector<double> y(outer * total * inner);
  std::vector<std::size_t> widths;
  std::vector<TensorImpl*> parts;
  std::size_t offset = 0;
  for (const auto& t : xs) {
    const std::size_t w = t.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(t.data().data() + o * w, w, y.data() + o * total * inner + offset);
    }
    offset += w;
    widths.push_back(w);
    parts.push_back(raw(t));
  }
  const std::size_t row = total * inner;
  return emit("concat", std::move(shape), std::move(y), xs, [parts, widths, outer, row](const double* g) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      if (double* gp = target(parts[p])) {
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = g + o * row + off;
          double* dst = gp + o * widths[p];
          for (std::size_t i = 0; i < widths[p]; ++i) dst[i] += src[i];
        }
      }
      off += widths[p];
    }
  });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride, std::size_t padding) {
  require(x.rank() == 3 && w.rank() == 3 && x.dim(1) == w.dim(1), "conv1d",
          "x " + shape_string(x.shape()) + " w " + shape_string(w.shape()));
  const std::size_t B = x.dim(0), Cin = x.dim(1), L = x.dim(2), Cout = w.dim(0), K = w.dim(2);
  if (bias.defined()) require(bias.rank() == 1 && bias.dim(0) == Cout, "conv1d", "bias shape");
  const std::size_t P = conv_output_length(L, K, stride, padding);

  auto cols = std::make_shared<std::vector<double>>(Cin * K * B * P);
  im2col(x.data().data(), B, Cin, L, K, stride, padding, P, cols->data());
  RowMat om = CMapMat(w.data().data(), ix(Cout), ix(Cin * K)) * CMapMat(cols->data(), ix(Cin * K), ix(B * P));
  std::vector<double> y(B * Cout * P);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < Cout; ++co) {
      const double bv = bias.defined() ? bias.data()[co] : 0.0;
      double* dst = y.data() + (b * Cout + co) * P;
      for (std::size_t t = 0; t < P; ++t) dst[t] = om(ix(co), ix(b * P + t)) + bv;
    }
  }
  auto* px = raw(x);
  auto* pw = raw(w);
  auto* pb = raw(bias);
  return emit("conv1d", {B, Cout, P}, std::move(y), {x, w, bias},
              [px, pw, pb, cols, B, Cin, L, Cout, K, P, stride, padding](const double* g) {
                RowMat gm(ix(Cout), ix(B * P));
                for (std::size_t b = 0; b < B; ++b) {
                  for (std::size_t co = 0; co < Cout; ++co) {
                    const double* src = g + (b * Cout + co) * P;
                    for (std::size_t t = 0; t < P; ++t) gm(ix(co), ix(b * P + t)) = src[t];
                  }
                }
                CMapMat cm(cols->data(), ix(Cin * K), ix(B * P));
                if (double* gw = target(pw)) MapMat(gw, ix(Cout), ix(Cin * K)).noalias() += gm * cm.transpose();
                if (double* gb = target(pb)) {
                  for (std::size_t co = 0; co < Cout; ++co) gb[co] += gm.row(ix(co)).sum();
                }
                if (double* gx = target(px)) {
                  RowMat dcols = CMapMat(pw->data.data(), ix(Cout), ix(Cin * K)).transpose() * gm;
                  col2im(dcols.data(), B, Cin, L, K, stride, padding, P, gx);
                }
              });
}

Tensor conv_transpose1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
                        std::size_t padding) {
  require(x.rank() == 3 && w.rank() == 3 && x.dim(1) == w.dim(0), "conv_transpose1d",
          "x " + shape_string(x.shape()) + " w " + shape_string(w.shape()));
  const std::size_t B = x.dim(0), Cin = x.dim(1), L = x.dim(2), Cout = w.dim(1), K = w.dim(2);
  if (bias.defined()) require(bias.rank() == 1 && bias.dim(0) == Cout, "conv_transpose1d", "bias shape");
  const std::size_t Lout = conv_transpose_output_length(L, K, stride, padding);

  auto xm = std::make_shared<std::vector<double>>(to_channel_major(x.data().data(), B, Cin, L));
  RowMat cols = CMapMat(w.data().data(), ix(Cin), ix(Cout * K)).transpose() * CMapMat(xm->data(), ix(Cin), ix(B * L));
  std::vector<double> y(B * Cout * Lout, 0.0);
  col2im(cols.data(), B, Cout, Lout, K, stride, padding, L, y.data());
  if (bias.defined()) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t co = 0; co < Cout; ++co) {
        double* dst = y.data() + (b * Cout + co) * Lout;
        for (std::size_t t = 0; t < Lout; ++t) dst[t] += bias.data()[co];
      }
    }
  }
  auto* px = raw(x);
  auto* pw = raw(w);
  auto* pb = raw(bias);
  return emit("conv_transpose1d", {B, Cout, Lout}, std::move(y), {x, w, bias},
              [px, pw, pb, xm, B, Cin, L, Cout, K, Lout, stride, padding](const double* g) {
                std::vector<double> dcols(Cout * K * B * L);
                im2col(g, B, Cout, Lout, K, stride, padding, L, dcols.data());
                CMapMat dc(dcols.data(), ix(Cout * K), ix(B * L));
                if (double* gw = target(pw)) {
                  MapMat(gw, ix(Cin), ix(Cout * K)).noalias() += CMapMat(xm->data(), ix(Cin), ix(B * L)) * dc.transpose();
                }
                if (double* gb = target(pb)) {
                  for (std::size_t b = 0; b < B; ++b) {
                    for (std::size_t co = 0; co < Cout; ++co) {
                      const double* src = g + (b * Cout + co) * Lout;
                      for (std::size_t t = 0; t < Lout; ++t) gb[co] += src[t];
                    }
                  }
                }
                if (double* gx = target(px)) {
                  RowMat dx = CMapMat(pw->data.data(), ix(Cin), ix(Cout * K)) * dc;
                  add_from_channel_major(dx.data(), B, Cin, L, gx);
                }
              });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, Mode mode, BatchNormOptions opt) {
  require(x.rank() == 3, "batch_norm", "expected [B,C,L], got " + shape_string(x.shape()));
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var}) {
    require(t->rank() == 1 && t->dim(0) == C, "batch_norm", "parameter shape " + shape_string(t->shape()));
  }
  const std::size_t N = B * L;
  std::vector<double> mu(C), invstd(C);
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  const double* xd = x.data().data();
  for (std::size_t c = 0; c < C; ++c) {
    double m, var;
    if (mode == Mode::Train) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t l = 0; l < L; ++l) s += xd[(b * C + c) * L + l];
      }
      m = s / static_cast<double>(N);
      double ss = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t l = 0; l < L; ++l) {
          const double d = xd[(b * C + c) * L + l] - m;
          ss += d * d;
        }
      }
      var = ss / static_cast<double>(N);
      const double unbiased = N > 1 ? ss / static_cast<double>(N - 1) : var;
      auto rm = running_mean.mutable_data();
      auto rv = running_var.mutable_data();
      rm[c] = (1.0 - opt.momentum) * rm[c] + opt.momentum * m;
      rv[c] = (1.0 - opt.momentum) * rv[c] + opt.momentum * unbiased;
    } else {
      m = running_mean.data()[c];
      var = running_var.data()[c];
    }
    mu[c] = m;
    invstd[c] = 1.0 / std::sqrt(var + opt.eps);
  }
  std::vector<double> y(x.numel());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t l = 0; l < L; ++l) {
        const std::size_t i = (b * C + c) * L + l;
        (*xhat)[i] = (xd[i] - mu[c]) * invstd[c];
        y[i] = gamma.data()[c] * (*xhat)[i] + beta.data()[c];
      }
    }
  }
  auto* px = raw(x);
  auto* pg = raw(gamma);
  auto* pbeta = raw(beta);
  const bool train = mode == Mode::Train;
  return emit("batch_norm", x.shape(), std::move(y), {x, gamma, beta},
              [px, pg, pbeta, xhat, invstd, B, C, L, N, train](const double* g) {
                double* gx = target(px);
                double* gg = target(pg);
                double* gbeta = target(pbeta);
                for (std::size_t c = 0; c < C; ++c) {
                  double sum_dy = 0.0, sum_dy_xhat = 0.0;
                  for (std::size_t b = 0; b < B; ++b) {
                    for (std::size_t l = 0; l < L; ++l) {
                      const std::size_t i = (b * C + c) * L + l;
                      sum_dy += g[i];
                      sum_dy_xhat += g[i] * (*xhat)[i];
                    }
                  }
                  if (gg) gg[c] += sum_dy_xhat;
                  if (gbeta) gbeta[c] += sum_dy;
                  if (!gx) continue;
                  const double k = pg->data[c] * invstd[c];
                  const double n = static_cast<double>(N);
                  for (std::size_t b = 0; b < B; ++b) {
                    for (std::size_t l = 0; l < L; ++l) {
                      const std::size_t i = (b * C + c) * L + l;
                      gx[i] += train ? k * (g[i] - sum_dy / n - (*xhat)[i] * sum_dy_xhat / n) : k * g[i];
                    }
                  }
                }
              });
}

Tensor global_avg_pool(const Tensor& x) {
  require(x.rank() == 3, "global_avg_pool", "expected [B,C,L], got " + shape_string(x.shape()));
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  std::vector<double> y(B * C, 0.0);
  for (std::size_t r = 0; r < B * C; ++r) {
    double s = 0.0;
    for (std::size_t l = 0; l < L; ++l) s += x.data()[r * L + l];
    y[r] = s / static_cast<double>(L);
  }
  auto* px = raw(x);
  return emit("global_avg_pool", {B, C}, std::move(y), {x}, [px, B, C, L](const double* g) {
    if (double* gx = target(px)) {
      for (std::size_t r = 0; r < B * C; ++r) {
        for (std::size_t l = 0; l < L; ++l) gx[r * L + l] += g[r] / static_cast<double>(L);
      }
    }
  });
}

Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(1), "fully_connected",
          "x " + shape_string(x.shape()) + " w " + shape_string(w.shape()));
  const std::size_t B = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (bias.defined()) require(bias.rank() == 1 && bias.dim(0) == out, "fully_connected", "bias shape");
  std::vector<double> y(B * out);
  MapMat Y(y.data(), ix(B), ix(out));
  Y.noalias() = CMapMat(x.data().data(), ix(B), ix(in)) * CMapMat(w.data().data(), ix(out), ix(in)).transpose();
  if (bias.defined()) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t o = 0; o < out; ++o) y[b * out + o] += bias.data()[o];
    }
  }
  auto* px = raw(x);
  auto* pw = raw(w);
  auto* pb = raw(bias);
  return emit("fully_connected", {B, out}, std::move(y), {x, w, bias}, [px, pw, pb, B, in, out](const double* g) {
    CMapMat G(g, ix(B), ix(out));
    if (double* gx = target(px)) MapMat(gx, ix(B), ix(in)).noalias() += G * CMapMat(pw->data.data(), ix(out), ix(in));
    if (double* gw = target(pw)) MapMat(gw, ix(out), ix(in)).noalias() += G.transpose() * CMapMat(px->data.data(), ix(B), ix(in));
    if (double* gb = target(pb)) {
      for (std::size_t o = 0; o < out; ++o) gb[o] += G.col(ix(o)).sum();
    }
  });
}

}  // namespace amgan::ad
