#include "scopeqa/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "scopeqa/kernels/kernels.hpp"

namespace scopeqa::nn {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

using kernels::GemmShape;
using kernels::Trans;

void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  require(a == b, ErrorCode::kShape,
          std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
              shape_string(b));
}

template <class T>
void accumulate_into(Tensor<T>& dst, const Tensor<T>& src, T factor = T(1)) {
  kernels::axpy(dst.size(), factor, src.data(), dst.data());
}

// Lays out each (c, ky, kx) receptive-field tap as one row of `col`,
// spatial output positions along the row.
// Output columns [lo, hi) whose input column ox * stride + kx - pad is inside [0, w).
struct ColumnRange {
  std::size_t lo, hi;
};

inline ColumnRange valid_columns(std::size_t w, std::size_t kx, std::size_t stride,
                                 std::size_t pad, std::size_t wo) {
  const std::size_t lo = kx >= pad ? 0 : (pad - kx + stride - 1) / stride;
  const std::size_t end = w + pad;  // ix < w  <=>  ox * stride + kx < w + pad
  const std::size_t hi = end > kx ? std::min(wo, (end - kx + stride - 1) / stride) : 0;
  return {std::min(lo, hi), hi};
}

template <class T>
void im2col(const T* img, std::size_t channels, std::size_t h, std::size_t w,
            std::size_t k, std::size_t stride, std::size_t pad, std::size_t ho,
            std::size_t wo, T* col) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = img + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = col + ((c * k + ky) * k + kx) * ho * wo;
        const auto [lo, hi] = valid_columns(w, kx, stride, pad, wo);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ky) - std::ptrdiff_t(pad);
          T* out = row + oy * wo;
          if (iy < 0 || iy >= std::ptrdiff_t(h)) {
            std::fill(out, out + wo, T(0));
            continue;
          }
          std::fill(out, out + lo, T(0));
          std::fill(out + hi, out + wo, T(0));
          const T* src = plane + std::size_t(iy) * w;
          if (lo == hi) continue;
          if (stride == 1) {
            std::copy(src + (lo + kx - pad), src + (hi + kx - pad), out + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) out[ox] = src[ox * stride + kx - pad];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, std::size_t channels, std::size_t h, std::size_t w,
                std::size_t k, std::size_t stride, std::size_t pad,
                std::size_t ho, std::size_t wo, T* img) {
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = img + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = col + ((c * k + ky) * k + kx) * ho * wo;
        const auto [lo, hi] = valid_columns(w, kx, stride, pad, wo);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ky) - std::ptrdiff_t(pad);
          if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
          if (lo == hi) continue;
          T* dst = plane + std::size_t(iy) * w;
          const T* src = row + oy * wo;
          if (stride == 1) {
            T* d = dst + (kx - pad + lo);  // lo + kx >= pad by construction
            for (std::size_t ox = lo; ox < hi; ++ox) d[ox - lo] += src[ox];
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * stride + kx - pad] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  check_same_shape(av.shape(), bv.shape(), "add");
  Tensor<T> out = av;
  accumulate_into(out, bv);
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const Tensor<T>& up = t.grad(self);
    if (t.requires_grad(a)) accumulate_into(t.grad(a), up);
    if (t.requires_grad(b)) accumulate_into(t.grad(b), up);
  });
}

template <class T>
Var sub(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  check_same_shape(av.shape(), bv.shape(), "sub");
  Tensor<T> out = av;
  accumulate_into(out, bv, T(-1));
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const Tensor<T>& up = t.grad(self);
    if (t.requires_grad(a)) accumulate_into(t.grad(a), up);
    if (t.requires_grad(b)) accumulate_into(t.grad(b), up, T(-1));
  });
}

template <class T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  check_same_shape(av.shape(), bv.shape(), "mul");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const Tensor<T>& up = t.grad(self);
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor<T>& ga = t.grad(a);
      for (std::size_t i = 0; i < up.size(); ++i) ga[i] += up[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& gb = t.grad(b);
      for (std::size_t i = 0; i < up.size(); ++i) gb[i] += up[i] * av[i];
    }
  });
}

template <class T>
Var scale(Tape<T>& tape, Var a, T factor) {
  Tensor<T> out = tape.value(a);
  for (T& v : out.storage()) v *= factor;
  return tape.record(std::move(out), {a}, [a, factor](Tape<T>& t, Var self) {
    accumulate_into(t.grad(a), t.grad(self), factor);
  });
}

template <class T>
Var square(Tape<T>& tape, Var a) {
  const Tensor<T>& av = tape.value(a);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * av[i];
  return tape.record(std::move(out), {a}, [a](Tape<T>& t, Var self) {
    const Tensor<T>& up = t.grad(self);
    const Tensor<T>& av = t.value(a);
    Tensor<T>& ga = t.grad(a);
    for (std::size_t i = 0; i < up.size(); ++i) ga[i] += T(2) * av[i] * up[i];
  });
}

template <class T>
Var sum(Tape<T>& tape, Var a) {
  const Tensor<T>& av = tape.value(a);
  T total = T(0);
  for (T v : av.values()) total += v;
  return tape.record(Tensor<T>(Shape{1}, total), {a}, [a](Tape<T>& t, Var self) {
    const T up = t.grad(self)[0];
    for (T& g : t.grad(a).storage()) g += up;
  });
}

template <class T>
Var reshape(Tape<T>& tape, Var a, Shape shape) {
  Tensor<T> out = tape.value(a).reshaped(std::move(shape));
  return tape.record(std::move(out), {a}, [a](Tape<T>& t, Var self) {
    accumulate_into(t.grad(a), t.grad(self));
  });
}

template <class T>
Var relu(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (T& v : out.storage()) v = v > T(0) ? v : T(0);
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, Var self) {
    const Tensor<T>& up = t.grad(self);
    const Tensor<T>& xv = t.value(x);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < up.size(); ++i) {
      if (xv[i] > T(0)) gx[i] += up[i];
    }
  });
}

template <class T>
Var tanh(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (T& v : out.storage()) v = std::tanh(v);
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, Var self) {
    const Tensor<T>& up = t.grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < up.size(); ++i) gx[i] += up[i] * (T(1) - y[i] * y[i]);
  });
}

template <class T>
Var conv2d(Tape<T>& tape, Var x, Var w, std::size_t stride, std::size_t padding) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  require(xv.rank() == 4 && wv.rank() == 4, ErrorCode::kShape,
          "conv2d expects NCHW input and OIHW weights");
  require(stride >= 1, ErrorCode::kPrecondition, "conv2d stride must be >= 1");
  const std::size_t n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
  const std::size_t cout = wv.dim(0), k = wv.dim(2);
  require(wv.dim(1) == cin && wv.dim(3) == k, ErrorCode::kShape,
          "conv2d weight " + shape_string(wv.shape()) + " incompatible with input " +
              shape_string(xv.shape()));
  require(h + 2 * padding >= k && wd + 2 * padding >= k, ErrorCode::kShape,
          "conv2d kernel larger than padded input");
  const std::size_t ho = (h + 2 * padding - k) / stride + 1;
  const std::size_t wo = (wd + 2 * padding - k) / stride + 1;
  const std::size_t kk = cin * k * k, hw = ho * wo;
  const bool direct = (k == 1 && stride == 1 && padding == 0);

  Tensor<T> out(Shape{n, cout, ho, wo});
  std::vector<T> col(direct ? 0 : kk * hw);
  for (std::size_t b = 0; b < n; ++b) {
    const T* img = xv.data() + b * cin * h * wd;
    const T* cols = img;
    if (!direct) {
      im2col(img, cin, h, wd, k, stride, padding, ho, wo, col.data());
      cols = col.data();
    }
    GemmShape s{cout, hw, kk, kk, hw, hw, Trans::kNo, Trans::kNo, false};
    kernels::gemm(s, wv.data(), cols, out.data() + b * cout * hw);
  }

  return tape.record(std::move(out), {x, w},
                     [=](Tape<T>& t, Var self) {
    const Tensor<T>& up = t.grad(self);
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& wv = t.value(w);
    const bool need_x = t.requires_grad(x);
    const bool need_w = t.requires_grad(w);
    std::vector<T> col(direct ? 0 : kk * hw);
    std::vector<T> dcol(need_x && !direct ? kk * hw : 0);
    Tensor<T>* gw = need_w ? &t.grad(w) : nullptr;
    Tensor<T>* gx = need_x ? &t.grad(x) : nullptr;
    for (std::size_t b = 0; b < n; ++b) {
      const T* img = xv.data() + b * cin * h * wd;
      const T* dy = up.data() + b * cout * hw;
      if (need_w) {
        const T* cols = img;
        if (!direct) {
          im2col(img, cin, h, wd, k, stride, padding, ho, wo, col.data());
          cols = col.data();
        }
        // dW[cout x kk] += dY[cout x hw] * cols[kk x hw]^T
        GemmShape s{cout, kk, hw, hw, hw, kk, Trans::kNo, Trans::kYes, true};
        kernels::gemm(s, dy, cols, gw->data());
      }
      if (need_x) {
        T* dimg = gx->data() + b * cin * h * wd;
        // dcols[kk x hw] = W[cout x kk]^T * dY[cout x hw]
        if (direct) {
          GemmShape s{kk, hw, cout, kk, hw, hw, Trans::kYes, Trans::kNo, true};
          kernels::gemm(s, wv.data(), dy, dimg);
        } else {
          GemmShape s{kk, hw, cout, kk, hw, hw, Trans::kYes, Trans::kNo, false};
          kernels::gemm(s, wv.data(), dy, dcol.data());
          col2im_add(dcol.data(), cin, h, wd, k, stride, padding, ho, wo, dimg);
        }
      }
    }
  });
}

template <class T>
Var fully_connected(Tape<T>& tape, Var x, Var w, Var b) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  require(xv.rank() == 2 && wv.rank() == 2 && xv.dim(1) == wv.dim(1),
          ErrorCode::kShape,
          "fully_connected: input " + shape_string(xv.shape()) + " vs weight " +
              shape_string(wv.shape()));
  const std::size_t n = xv.dim(0), in = xv.dim(1), outs = wv.dim(0);
  const bool has_bias = b.valid();
  if (has_bias) {
    require(tape.value(b).size() == outs, ErrorCode::kShape,
            "fully_connected: bias length mismatch");
  }
  Tensor<T> out(Shape{n, outs});
  GemmShape s{n, outs, in, in, in, outs, Trans::kNo, Trans::kYes, false};
  kernels::gemm(s, xv.data(), wv.data(), out.data());
  if (has_bias) {
    const Tensor<T>& bv = tape.value(b);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t o = 0; o < outs; ++o) out[r * outs + o] += bv[o];
  }
  auto rule = [=](Tape<T>& t, Var self) {
    const Tensor<T>& up = t.grad(self);
    if (t.requires_grad(x)) {
      GemmShape gs{n, in, outs, outs, in, in, Trans::kNo, Trans::kNo, true};
      kernels::gemm(gs, up.data(), t.value(w).data(), t.grad(x).data());
    }
    if (t.requires_grad(w)) {
      GemmShape gs{outs, in, n, outs, in, in, Trans::kYes, Trans::kNo, true};
      kernels::gemm(gs, up.data(), t.value(x).data(), t.grad(w).data());
    }
    if (has_bias && t.requires_grad(b)) {
      Tensor<T>& gb = t.grad(b);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < outs; ++o) gb[o] += up[r * outs + o];
    }
  };
  if (has_bias) return tape.record(std::move(out), {x, w, b}, rule);
  return tape.record(std::move(out), {x, w}, rule);
}

template <class T>
Var global_avg_pool(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  require(xv.rank() == 4, ErrorCode::kShape, "global_avg_pool expects NCHW");
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor<T> out(Shape{n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    T acc = T(0);
    const T* p = xv.data() + i * hw;
    for (std::size_t j = 0; j < hw; ++j) acc += p[j];
    out[i] = acc / T(hw);
  }
  return tape.record(std::move(out), {x}, [x, n, c, hw](Tape<T>& t, Var self) {
    const Tensor<T>& up = t.grad(self);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < n * c; ++i) {
      const T g = up[i] / T(hw);
      T* p = gx.data() + i * hw;
      for (std::size_t j = 0; j < hw; ++j) p[j] += g;
    }
  });
}

template <class T>
Var softmax(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  require(xv.rank() == 2, ErrorCode::kShape, "softmax expects N x C");
  const std::size_t n = xv.dim(0), c = xv.dim(1);
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const T* in = xv.data() + r * c;
    T* o = out.data() + r * c;
    const T mx = *std::max_element(in, in + c);
    T total = T(0);
    for (std::size_t j = 0; j < c; ++j) total += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) o[j] /= total;
  }
  return tape.record(std::move(out), {x}, [x, n, c](Tape<T>& t, Var self) {
    const Tensor<T>& up = t.grad(self);
    const Tensor<T>& s = t.value(self);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t r = 0; r < n; ++r) {
      const T* sr = s.data() + r * c;
      const T* ur = up.data() + r * c;
      T inner = T(0);
      for (std::size_t j = 0; j < c; ++j) inner += ur[j] * sr[j];
      for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += sr[j] * (ur[j] - inner);
    }
  });
}

template <class T>
Var log_softmax(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  require(xv.rank() == 2, ErrorCode::kShape, "log_softmax expects N x C");
  const std::size_t n = xv.dim(0), c = xv.dim(1);
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const T* in = xv.data() + r * c;
    T* o = out.data() + r * c;
    const T mx = *std::max_element(in, in + c);
    T total = T(0);
    for (std::size_t j = 0; j < c; ++j) total += std::exp(in[j] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) o[j] = in[j] - lse;
  }
  return tape.record(std::move(out), {x}, [x, n, c](Tape<T>& t, Var self) {
    const Tensor<T>& up = t.grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t r = 0; r < n; ++r) {
      const T* ur = up.data() + r * c;
      T total = T(0);
      for (std::size_t j = 0; j < c; ++j) total += ur[j];
      for (std::size_t j = 0; j < c; ++j)
        gx[r * c + j] += ur[j] - std::exp(y[r * c + j]) * total;
    }
  });
}

template <class T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta, BatchNormStats<T>& stats,
               BatchNormMode mode) {
  const Tensor<T>& xv = tape.value(x);
  require(xv.rank() == 2 || xv.rank() == 4, ErrorCode::kShape,
          "batch_norm expects N x C or N x C x H x W");
  const std::size_t n = xv.dim(0), c = xv.dim(1);
  const std::size_t inner = xv.rank() == 4 ? xv.dim(2) * xv.dim(3) : 1;
  const std::size_t count = n * inner;
  require(tape.value(gamma).size() == c && tape.value(beta).size() == c &&
              stats.running_mean.size() == c && stats.running_var.size() == c,
          ErrorCode::kShape, "batch_norm parameter length mismatch");
  const bool train = mode == BatchNormMode::kTrain;
  require(!train || count >= 2, ErrorCode::kPrecondition,
          "batch_norm in train mode needs at least 2 values per channel");

  std::vector<T> mean(c), inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (train) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv.data() + (b * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) s += double(p[j]);
      }
      const double mu = s / double(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv.data() + (b * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) {
          const double d = double(p[j]) - mu;
          ss += d * d;
        }
      }
      const double var = ss / double(count);
      mean[ch] = T(mu);
      inv_std[ch] = T(1.0 / std::sqrt(var + stats.eps));
      const double m = stats.momentum;
      stats.running_mean[ch] = T((1.0 - m) * double(stats.running_mean[ch]) + m * mu);
      stats.running_var[ch] = T((1.0 - m) * double(stats.running_var[ch]) +
                                m * ss / double(count - 1));
    } else {
      mean[ch] = stats.running_mean[ch];
      inv_std[ch] = T(1.0 / std::sqrt(double(stats.running_var[ch]) + stats.eps));
    }
  }

  const Tensor<T>& gv = tape.value(gamma);
  const Tensor<T>& bv = tape.value(beta);
  Tensor<T> out(xv.shape());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* p = xv.data() + (b * c + ch) * inner;
      T* o = out.data() + (b * c + ch) * inner;
      const T g = gv[ch] * inv_std[ch], mu = mean[ch], be = bv[ch];
      for (std::size_t j = 0; j < inner; ++j) o[j] = (p[j] - mu) * g + be;
    }
  }

  return tape.record(std::move(out), {x, gamma, beta},
                     [=](Tape<T>& t, Var self) {
    const Tensor<T>& up = t.grad(self);
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& gv = t.value(gamma);
    std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* p = xv.data() + (b * c + ch) * inner;
        const T* u = up.data() + (b * c + ch) * inner;
        double s0 = 0.0, s1 = 0.0;
        for (std::size_t j = 0; j < inner; ++j) {
          s0 += double(u[j]);
          s1 += double(u[j]) * double((p[j] - mean[ch]) * inv_std[ch]);
        }
        sum_dy[ch] += s0;
        sum_dy_xhat[ch] += s1;
      }
    }
    if (t.requires_grad(gamma)) {
      Tensor<T>& gg = t.grad(gamma);
      for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += T(sum_dy_xhat[ch]);
    }
    if (t.requires_grad(beta)) {
      Tensor<T>& gb = t.grad(beta);
      for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += T(sum_dy[ch]);
    }
    if (!t.requires_grad(x)) return;
    Tensor<T>& gx = t.grad(x);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* p = xv.data() + (b * c + ch) * inner;
        const T* u = up.data() + (b * c + ch) * inner;
        T* g = gx.data() + (b * c + ch) * inner;
        const T scale_ch = gv[ch] * inv_std[ch];
        if (train) {
          const T mdy = T(sum_dy[ch] / double(count));
          const T mdyx = T(sum_dy_xhat[ch] / double(count));
          for (std::size_t j = 0; j < inner; ++j) {
            const T xhat = (p[j] - mean[ch]) * inv_std[ch];
            g[j] += scale_ch * (u[j] - mdy - xhat * mdyx);
          }
        } else {
          for (std::size_t j = 0; j < inner; ++j) g[j] += scale_ch * u[j];
        }
      }
    }
  });
}

template <class T>
Var cross_entropy(Tape<T>& tape, Var probs, std::span<const std::int32_t> labels) {
  const Tensor<T>& pv = tape.value(probs);
  require(pv.rank() == 2 && pv.dim(0) == labels.size(), ErrorCode::kShape,
          "cross_entropy: probabilities " + shape_string(pv.shape()) + " vs " +
              std::to_string(labels.size()) + " labels");
  const std::size_t n = pv.dim(0), c = pv.dim(1);
  constexpr double kFloor = 1e-12;
  std::vector<std::int32_t> lab(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    require(lab[r] >= 0 && std::size_t(lab[r]) < c, ErrorCode::kPrecondition,
            "cross_entropy: label out of range");
    total -= std::log(std::max(double(pv[r * c + std::size_t(lab[r])]), kFloor));
  }
  return tape.record(Tensor<T>(Shape{1}, T(total / double(n))), {probs},
                     [probs, lab, n, c](Tape<T>& t, Var self) {
    const T up = t.grad(self)[0];
    const Tensor<T>& pv = t.value(probs);
    Tensor<T>& gp = t.grad(probs);
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t idx = r * c + std::size_t(lab[r]);
      if (double(pv[idx]) > kFloor) gp[idx] -= up / (T(n) * pv[idx]);
    }
  });
}

template <class T>
Var nll_loss(Tape<T>& tape, Var log_probs, std::span<const std::int32_t> labels) {
  const Tensor<T>& lv = tape.value(log_probs);
  require(lv.rank() == 2 && lv.dim(0) == labels.size(), ErrorCode::kShape,
          "nll_loss: log-probabilities " + shape_string(lv.shape()) + " vs " +
              std::to_string(labels.size()) + " labels");
  const std::size_t n = lv.dim(0), c = lv.dim(1);
  std::vector<std::int32_t> lab(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    require(lab[r] >= 0 && std::size_t(lab[r]) < c, ErrorCode::kPrecondition,
            "nll_loss: label out of range");
    total -= double(lv[r * c + std::size_t(lab[r])]);
  }
  return tape.record(Tensor<T>(Shape{1}, T(total / double(n))), {log_probs},
                     [log_probs, lab, n, c](Tape<T>& t, Var self) {
    const T up = t.grad(self)[0];
    Tensor<T>& g = t.grad(log_probs);
    for (std::size_t r = 0; r < n; ++r) g[r * c + std::size_t(lab[r])] -= up / T(n);
  });
}

template <class T>
Var pearson_loss(Tape<T>& tape, Var predicted, std::span<const T> target,
                 PearsonDiagnostics* diag) {
  const Tensor<T>& pv = tape.value(predicted);
  const std::size_t n = pv.size();
  require(n == target.size(), ErrorCode::kShape,
          "pearson_loss: " + std::to_string(n) + " predictions vs " +
              std::to_string(target.size()) + " targets");
  require(n >= 2, ErrorCode::kPrecondition, "pearson_loss needs at least 2 values");

  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += double(pv[i]);
    my += double(target[i]);
  }
  mx /= double(n);
  my /= double(n);
  std::vector<double> dx(n), dy(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dx[i] = double(pv[i]) - mx;
    dy[i] = double(target[i]) - my;
    sxy += dx[i] * dy[i];
    sxx += dx[i] * dx[i];
    syy += dy[i] * dy[i];
  }
  if (diag != nullptr) diag->degenerate = (sxx == 0.0 || syy == 0.0);
  const double cov = sxy / double(n);
  const double vx = sxx / double(n) + kPearsonVarianceGuard;
  const double vy = syy / double(n) + kPearsonVarianceGuard;
  const double denom = std::sqrt(vx * vy);
  const double r = cov / denom;

  return tape.record(Tensor<T>(Shape{1}, T(1.0 - r)), {predicted},
                     [predicted, dx = std::move(dx), dy = std::move(dy), cov, vx,
                      denom, n](Tape<T>& t, Var self) {
    const double up = double(t.grad(self)[0]);
    Tensor<T>& g = t.grad(predicted);
    const double k = -up / (double(n) * denom);
    for (std::size_t i = 0; i < n; ++i) g[i] += T(k * (dy[i] - cov / vx * dx[i]));
  });
}

#define SCOPEQA_INSTANTIATE_OPS(T)                                               \
  template Var add<T>(Tape<T>&, Var, Var);                                       \
  template Var sub<T>(Tape<T>&, Var, Var);                                       \
  template Var mul<T>(Tape<T>&, Var, Var);                                       \
  template Var scale<T>(Tape<T>&, Var, T);                                       \
  template Var square<T>(Tape<T>&, Var);                                         \
  template Var sum<T>(Tape<T>&, Var);                                            \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                 \
  template Var relu<T>(Tape<T>&, Var);                                           \
  template Var tanh<T>(Tape<T>&, Var);                                           \
  template Var conv2d<T>(Tape<T>&, Var, Var, std::size_t, std::size_t);          \
  template Var fully_connected<T>(Tape<T>&, Var, Var, Var);                      \
  template Var global_avg_pool<T>(Tape<T>&, Var);                                \
  template Var softmax<T>(Tape<T>&, Var);                                        \
  template Var log_softmax<T>(Tape<T>&, Var);                                    \
  template Var batch_norm<T>(Tape<T>&, Var, Var, Var, BatchNormStats<T>&,        \
                             BatchNormMode);                                     \
  template Var cross_entropy<T>(Tape<T>&, Var, std::span<const std::int32_t>);   \
  template Var nll_loss<T>(Tape<T>&, Var, std::span<const std::int32_t>);        \
  template Var pearson_loss<T>(Tape<T>&, Var, std::span<const T>,                \
                               PearsonDiagnostics*);

SCOPEQA_INSTANTIATE_OPS(float)
SCOPEQA_INSTANTIATE_OPS(double)

#undef SCOPEQA_INSTANTIATE_OPS

}  // namespace scopeqa::nn
