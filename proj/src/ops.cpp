#include "recnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace recnet::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Calls f(index_in_a, index_in_b) for every element of a, where b's shape is
// a's with some dims collapsed to 1. The last axis is handled as the inner loop.
template <typename F>
void for_each_broadcast(const Shape& a, const Shape& b, F&& f) {
  const int rank = static_cast<int>(a.size());
  if (rank == 0) {
    f(0, 0);
    return;
  }
  std::vector<int64_t> bstride(static_cast<size_t>(rank), 0);
  int64_t s = 1;
  for (int i = rank - 1; i >= 0; --i) {
    bstride[static_cast<size_t>(i)] = (b[static_cast<size_t>(i)] == 1) ? 0 : s;
    s *= b[static_cast<size_t>(i)];
  }
  const int64_t inner = a[static_cast<size_t>(rank - 1)];
  const int64_t inner_stride = bstride[static_cast<size_t>(rank - 1)];
  const int64_t outer = inner == 0 ? 0 : shape_numel(a) / inner;
  std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
  int64_t ia = 0;
  for (int64_t o = 0; o < outer; ++o) {
    int64_t ib = 0;
    for (int i = 0; i < rank - 1; ++i) ib += idx[static_cast<size_t>(i)] * bstride[static_cast<size_t>(i)];
    for (int64_t j = 0; j < inner; ++j) f(ia++, ib + j * inner_stride);
    for (int i = rank - 2; i >= 0; --i) {
      if (++idx[static_cast<size_t>(i)] < a[static_cast<size_t>(i)]) break;
      idx[static_cast<size_t>(i)] = 0;
    }
  }
}

void require_broadcastable(const Shape& a, const Shape& b, const char* what) {
  bool ok = a.size() == b.size();
  for (size_t i = 0; ok && i < a.size(); ++i) ok = b[i] == a[i] || b[i] == 1;
  if (!ok) {
    throw std::invalid_argument(std::string(what) + ": cannot broadcast " + shape_str(b) + " to " + shape_str(a));
  }
}

template <typename Fwd, typename Bwd>
Var unary(const Var& a, Fwd fwd, Bwd bwd) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = fwd(x[i]);
  Tensor saved_x = a.requires_grad() && grad_enabled() ? x : Tensor();
  Tensor saved_y = a.requires_grad() && grad_enabled() ? y : Tensor();
  return Var::from_op(std::move(y), {a},
                      [bwd, sx = std::move(saved_x), sy = std::move(saved_y)](const Tensor& g,
                                                                              std::vector<Tensor*>& grads) {
                        Tensor& gx = *grads[0];
                        for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * bwd(sx[i], sy[i]);
                      });
}

struct ConvGeometry {
  int64_t n, h, w, cin, kh, kw, cout, ph, pw;
  int64_t rows() const { return n * h * w; }
  int64_t cols() const { return kh * kw * cin; }
};

// Fills col (rows x cols, row-major) with the receptive fields of pixels [r0, r0+rows).
void im2col(const double* x, const ConvGeometry& g, int64_t r0, int64_t rows, double* col) {
  const int64_t k = g.cols();
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t p = r0 + r;
    const int64_t px = p % g.w;
    const int64_t py = (p / g.w) % g.h;
    const int64_t pn = p / (g.w * g.h);
    double* dst = col + r * k;
    for (int64_t ky = 0; ky < g.kh; ++ky) {
      const int64_t iy = py + ky - g.ph;
      for (int64_t kx = 0; kx < g.kw; ++kx, dst += g.cin) {
        const int64_t ix = px + kx - g.pw;
        if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) {
          std::fill(dst, dst + g.cin, 0.0);
        } else {
          const double* src = x + ((pn * g.h + iy) * g.w + ix) * g.cin;
          std::copy(src, src + g.cin, dst);
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, int64_t r0, int64_t rows, double* dx) {
  const int64_t k = g.cols();
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t p = r0 + r;
    const int64_t px = p % g.w;
    const int64_t py = (p / g.w) % g.h;
    const int64_t pn = p / (g.w * g.h);
    const double* src = col + r * k;
    for (int64_t ky = 0; ky < g.kh; ++ky) {
      const int64_t iy = py + ky - g.ph;
      for (int64_t kx = 0; kx < g.kw; ++kx, src += g.cin) {
        const int64_t ix = px + kx - g.pw;
        if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) continue;
        double* dst = dx + ((pn * g.h + iy) * g.w + ix) * g.cin;
        for (int64_t c = 0; c < g.cin; ++c) dst[c] += src[c];
      }
    }
  }
}

int64_t chunk_rows(const ConvGeometry& g) {
  constexpr int64_t kBudget = int64_t{1} << 19;  // doubles per im2col buffer
  return std::clamp<int64_t>(kBudget / std::max<int64_t>(g.cols(), 1), 64, std::max<int64_t>(g.rows(), 1));
}

}  // namespace

// --- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.same_shape(y)) {
    Tensor out = x;
    out.add_(y);
    return Var::from_op(std::move(out), {a, b}, [](const Tensor& g, std::vector<Tensor*>& grads) {
      if (grads[0]) grads[0]->add_(g);
      if (grads[1]) grads[1]->add_(g);
    });
  }
  require_broadcastable(x.shape(), y.shape(), "add");
  Tensor out = x;
  for_each_broadcast(x.shape(), y.shape(), [&](int64_t i, int64_t j) { out[i] += y[j]; });
  return Var::from_op(std::move(out), {a, b}, [sa = x.shape(), sb = y.shape()](const Tensor& g, std::vector<Tensor*>& grads) {
    if (grads[0]) grads[0]->add_(g);
    if (grads[1]) {
      Tensor& gb = *grads[1];
      for_each_broadcast(sa, sb, [&](int64_t i, int64_t j) { gb[j] += g[i]; });
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= y[i];
  return Var::from_op(std::move(out), {a, b}, [](const Tensor& g, std::vector<Tensor*>& grads) {
    if (grads[0]) grads[0]->add_(g);
    if (grads[1]) {
      Tensor& gb = *grads[1];
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_broadcastable(x.shape(), y.shape(), "mul");
  Tensor out(x.shape());
  for_each_broadcast(x.shape(), y.shape(), [&](int64_t i, int64_t j) { out[i] = x[i] * y[j]; });
  const bool keep = grad_enabled() && (a.requires_grad() || b.requires_grad());
  return Var::from_op(std::move(out), {a, b},
                      [sx = keep ? x : Tensor(), sy = keep ? y : Tensor()](const Tensor& g,
                                                                           std::vector<Tensor*>& grads) {
                        Tensor* ga = grads[0];
                        Tensor* gb = grads[1];
                        for_each_broadcast(sx.shape(), sy.shape(), [&](int64_t i, int64_t j) {
                          if (ga) (*ga)[i] += g[i] * sy[j];
                          if (gb) (*gb)[j] += g[i] * sx[i];
                        });
                      });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "div");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] / y[i];
  return Var::from_op(std::move(out), {a, b}, [x, y](const Tensor& g, std::vector<Tensor*>& grads) {
    for (int64_t i = 0; i < g.numel(); ++i) {
      if (grads[0]) (*grads[0])[i] += g[i] / y[i];
      if (grads[1]) (*grads[1])[i] -= g[i] * x[i] / (y[i] * y[i]);
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  out.scale_(s);
  return Var::from_op(std::move(out), {a}, [s](const Tensor& g, std::vector<Tensor*>& grads) {
    Tensor& ga = *grads[0];
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += s * g[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v += s;
  return Var::from_op(std::move(out), {a}, [](const Tensor& g, std::vector<Tensor*>& grads) { grads[0]->add_(g); });
}

Var one_minus(const Var& a) {
  Tensor out(a.shape());
  const Tensor& x = a.value();
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = 1.0 - x[i];
  return Var::from_op(std::move(out), {a}, [](const Tensor& g, std::vector<Tensor*>& grads) {
    Tensor& ga = *grads[0];
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] -= g[i];
  });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var channel_affine(const Var& x, const std::vector<double>& scale_c, const std::vector<double>& shift_c) {
  const Tensor& in = x.value();
  require_nhwc(in, "channel_affine");
  const int64_t c = in.channels();
  if (static_cast<int64_t>(scale_c.size()) != c || static_cast<int64_t>(shift_c.size()) != c) {
    throw std::invalid_argument("channel_affine: coefficient count does not match channels");
  }
  Tensor out(in.shape());
  for (int64_t i = 0; i < in.numel(); ++i) out[i] = in[i] * scale_c[static_cast<size_t>(i % c)] + shift_c[static_cast<size_t>(i % c)];
  return Var::from_op(std::move(out), {x}, [scale_c, c](const Tensor& g, std::vector<Tensor*>& grads) {
    Tensor& gx = *grads[0];
    for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * scale_c[static_cast<size_t>(i % c)];
  });
}

// --- reductions ------------------------------------------------------------

Var sum(const Var& a) {
  Tensor out(Shape{1}, a.value().sum());
  return Var::from_op(std::move(out), {a}, [](const Tensor& g, std::vector<Tensor*>& grads) {
    const double s = g[0];
    for (double& v : grads[0]->values()) v += s;
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().numel());
  if (n == 0) throw std::invalid_argument("mean of an empty tensor");
  Tensor out(Shape{1}, a.value().sum() / n);
  return Var::from_op(std::move(out), {a}, [n](const Tensor& g, std::vector<Tensor*>& grads) {
    const double s = g[0] / n;
    for (double& v : grads[0]->values()) v += s;
  });
}

Var channel_max(const Var& x) {
  const Tensor& in = x.value();
  require_nhwc(in, "channel_max");
  const int64_t c = in.channels();
  const int64_t pixels = in.numel() / c;
  Tensor out(Shape{in.batch(), in.height(), in.width(), 1});
  std::vector<int64_t> argmax(static_cast<size_t>(pixels));
  for (int64_t p = 0; p < pixels; ++p) {
    const double* row = in.data() + p * c;
    int64_t best = 0;
    for (int64_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    argmax[static_cast<size_t>(p)] = best;
    out[p] = row[best];
  }
  return Var::from_op(std::move(out), {x}, [argmax = std::move(argmax), c](const Tensor& g, std::vector<Tensor*>& grads) {
    Tensor& gx = *grads[0];
    for (int64_t p = 0; p < g.numel(); ++p) gx[p * c + argmax[static_cast<size_t>(p)]] += g[p];
  });
}

Var channel_mean(const Var& x) {
  const Tensor& in = x.value();
  require_nhwc(in, "channel_mean");
  const int64_t c = in.channels();
  const int64_t pixels = in.numel() / c;
  Tensor out(Shape{in.batch(), in.height(), in.width(), 1});
  for (int64_t p = 0; p < pixels; ++p) {
    double s = 0.0;
    for (int64_t j = 0; j < c; ++j) s += in[p * c + j];
    out[p] = s / static_cast<double>(c);
  }
  return Var::from_op(std::move(out), {x}, [c](const Tensor& g, std::vector<Tensor*>& grads) {
    Tensor& gx = *grads[0];
    const double inv = 1.0 / static_cast<double>(c);
    for (int64_t p = 0; p < g.numel(); ++p)
      for (int64_t j = 0; j < c; ++j) gx[p * c + j] += g[p] * inv;
  });
}

Var spatial_mean(const Var& x) {
  const Tensor& in = x.value();
  require_nhwc(in, "spatial_mean");
  const int64_t n = in.batch(), c = in.channels(), hw = in.height() * in.width();
  Tensor out(Shape{n, 1, 1, c});
  for (int64_t b = 0; b < n; ++b)
    for (int64_t p = 0; p < hw; ++p)
      for (int64_t j = 0; j < c; ++j) out[b * c + j] += in[(b * hw + p) * c + j];
  out.scale_(1.0 / static_cast<double>(hw));
  return Var::from_op(std::move(out), {x}, [n, c, hw](const Tensor& g, std::vector<Tensor*>& grads) {
    Tensor& gx = *grads[0];
    const double inv = 1.0 / static_cast<double>(hw);
    for (int64_t b = 0; b < n; ++b)
      for (int64_t p = 0; p < hw; ++p)
        for (int64_t j = 0; j < c; ++j) gx[(b * hw + p) * c + j] += g[b * c + j] * inv;
  });
}

// --- structure -------------------------------------------------------------

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Tensor& first = parts.front().value();
  require_nhwc(first, "concat_channels");
  std::vector<int64_t> widths;
  int64_t total = 0;
  for (const Var& p : parts) {
    const Tensor& t = p.value();
    require_nhwc(t, "concat_channels");
    if (t.batch() != first.batch() || t.height() != first.height() || t.width() != first.width()) {
      throw std::invalid_argument("concat_channels: spatial mismatch " + shape_str(first.shape()) + " vs " +
                                  shape_str(t.shape()));
    }
    widths.push_back(t.channels());
    total += t.channels();
  }
  const int64_t pixels = first.batch() * first.height() * first.width();
  Tensor out(Shape{first.batch(), first.height(), first.width(), total});
  int64_t offset = 0;
  for (size_t i = 0; i < parts.size(); ++i) {
    const Tensor& t = parts[i].value();
    const int64_t w = widths[i];
    for (int64_t p = 0; p < pixels; ++p) std::copy_n(t.data() + p * w, w, out.data() + p * total + offset);
    offset += w;
  }
  return Var::from_op(std::move(out), parts, [widths, total, pixels](const Tensor& g, std::vector<Tensor*>& grads) {
    int64_t off = 0;
    for (size_t i = 0; i < grads.size(); ++i) {
      const int64_t w = widths[i];
      if (grads[i]) {
        double* dst = grads[i]->data();
        for (int64_t p = 0; p < pixels; ++p)
          for (int64_t j = 0; j < w; ++j) dst[p * w + j] += g[p * total + off + j];
      }
      off += w;
    }
  });
}

// --- convolution -----------------------------------------------------------

Var conv2d(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& in = x.value();
  const Tensor& w = weight.value();
  require_nhwc(in, "conv2d input");
  if (w.rank() != 4 || w.dim(2) != in.channels() || w.dim(0) % 2 == 0 || w.dim(1) % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel " + shape_str(w.shape()) + " incompatible with input " +
                                shape_str(in.shape()));
  }
  const ConvGeometry geo{in.batch(), in.height(), in.width(), in.channels(), w.dim(0), w.dim(1), w.dim(3),
                         w.dim(0) / 2, w.dim(1) / 2};
  if (bias.defined() && (bias.value().rank() != 1 || bias.value().dim(0) != geo.cout)) {
    throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()) + " does not match kernel");
  }
  const int64_t rows = geo.rows(), k = geo.cols();
  Tensor out(Shape{geo.n, geo.h, geo.w, geo.cout});
  ConstMapMat wm(w.data(), k, geo.cout);
  MapMat ym(out.data(), rows, geo.cout);
  if (geo.kh == 1 && geo.kw == 1) {
    ym.noalias() = ConstMapMat(in.data(), rows, k) * wm;
  } else {
    const int64_t step = chunk_rows(geo);
    AlignedBuffer col(static_cast<size_t>(step * k));
    for (int64_t r0 = 0; r0 < rows; r0 += step) {
      const int64_t nr = std::min(step, rows - r0);
      im2col(in.data(), geo, r0, nr, col.data());
      ym.middleRows(r0, nr).noalias() = ConstMapMat(col.data(), nr, k) * wm;
    }
  }
  if (bias.defined()) {
    const Eigen::Map<const Eigen::RowVectorXd> bv(bias.value().data(), geo.cout);
    ym.rowwise() += bv;
  }
  const bool keep = grad_enabled() && (x.requires_grad() || weight.requires_grad() || (bias.defined() && bias.requires_grad()));
  return Var::from_op(
      std::move(out), {x, weight, bias},
      [geo, sx = keep ? in : Tensor(), sw = keep ? w : Tensor()](const Tensor& g, std::vector<Tensor*>& grads) {
        const int64_t rows = geo.rows(), k = geo.cols();
        ConstMapMat gy(g.data(), rows, geo.cout);
        ConstMapMat wm(sw.data(), k, geo.cout);
        if (grads[2]) {
          Eigen::Map<Eigen::RowVectorXd> gb(grads[2]->data(), geo.cout);
          gb += gy.colwise().sum();
        }
        if (geo.kh == 1 && geo.kw == 1) {
          if (grads[1]) MapMat(grads[1]->data(), k, geo.cout).noalias() += ConstMapMat(sx.data(), rows, k).transpose() * gy;
          if (grads[0]) MapMat(grads[0]->data(), rows, k).noalias() += gy * wm.transpose();
          return;
        }
        const int64_t step = chunk_rows(geo);
        AlignedBuffer col(static_cast<size_t>(step * k));
        for (int64_t r0 = 0; r0 < rows; r0 += step) {
          const int64_t nr = std::min(step, rows - r0);
          if (grads[1]) {
            im2col(sx.data(), geo, r0, nr, col.data());
            MapMat(grads[1]->data(), k, geo.cout).noalias() += ConstMapMat(col.data(), nr, k).transpose() * gy.middleRows(r0, nr);
          }
          if (grads[0]) {
            MapMat(col.data(), nr, k).noalias() = gy.middleRows(r0, nr) * wm.transpose();
            col2im_add(col.data(), geo, r0, nr, grads[0]->data());
          }
        }
      });
}

Var depthwise_conv2d(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& in = x.value();
  const Tensor& w = weight.value();
  require_nhwc(in, "depthwise_conv2d input");
  if (w.rank() != 3 || w.dim(2) != in.channels() || w.dim(0) % 2 == 0 || w.dim(1) % 2 == 0) {
    throw std::invalid_argument("depthwise_conv2d: kernel " + shape_str(w.shape()) + " incompatible with input " +
                                shape_str(in.shape()));
  }
  const int64_t n = in.batch(), h = in.height(), wd = in.width(), c = in.channels();
  const int64_t kh = w.dim(0), kw = w.dim(1), ph = kh / 2, pw = kw / 2;
  if (bias.defined() && (bias.value().rank() != 1 || bias.value().dim(0) != c)) {
    throw std::invalid_argument("depthwise_conv2d: bias shape does not match channels");
  }
  Tensor out(in.shape());
  for (int64_t b = 0; b < n; ++b)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t xx = 0; xx < wd; ++xx) {
        double* dst = &out.at(b, y, xx, 0);
        if (bias.defined()) std::copy_n(bias.value().data(), c, dst);
        for (int64_t ky = 0; ky < kh; ++ky) {
          const int64_t iy = y + ky - ph;
          if (iy < 0 || iy >= h) continue;
          for (int64_t kx = 0; kx < kw; ++kx) {
            const int64_t ix = xx + kx - pw;
            if (ix < 0 || ix >= wd) continue;
            const double* src = &in.at(b, iy, ix, 0);
            const double* wk = w.data() + (ky * kw + kx) * c;
            for (int64_t j = 0; j < c; ++j) dst[j] += wk[j] * src[j];
          }
        }
      }
  const bool keep = grad_enabled() && (x.requires_grad() || weight.requires_grad() || (bias.defined() && bias.requires_grad()));
  return Var::from_op(std::move(out), {x, weight, bias},
                      [sx = keep ? in : Tensor(), sw = keep ? w : Tensor()](const Tensor& g, std::vector<Tensor*>& grads) {
                        const int64_t n = sx.batch(), h = sx.height(), wd = sx.width(), c = sx.channels();
                        const int64_t kh = sw.dim(0), kw = sw.dim(1), ph = kh / 2, pw = kw / 2;
                        Tensor* gx = grads[0];
                        Tensor* gw = grads[1];
                        Tensor* gb = grads[2];
                        for (int64_t b = 0; b < n; ++b)
                          for (int64_t y = 0; y < h; ++y)
                            for (int64_t xx = 0; xx < wd; ++xx) {
                              const double* go = &g.at(b, y, xx, 0);
                              if (gb)
                                for (int64_t j = 0; j < c; ++j) (*gb)[j] += go[j];
                              for (int64_t ky = 0; ky < kh; ++ky) {
                                const int64_t iy = y + ky - ph;
                                if (iy < 0 || iy >= h) continue;
                                for (int64_t kx = 0; kx < kw; ++kx) {
                                  const int64_t ix = xx + kx - pw;
                                  if (ix < 0 || ix >= wd) continue;
                                  const int64_t woff = (ky * kw + kx) * c;
                                  if (gw) {
                                    const double* src = &sx.at(b, iy, ix, 0);
                                    double* dw = gw->data() + woff;
                                    for (int64_t j = 0; j < c; ++j) dw[j] += go[j] * src[j];
                                  }
                                  if (gx) {
                                    double* dx = &gx->at(b, iy, ix, 0);
                                    const double* wk = sw.data() + woff;
                                    for (int64_t j = 0; j < c; ++j) dx[j] += go[j] * wk[j];
                                  }
                                }
                              }
                            }
                      });
}

Var max_pool2x2(const Var& x) {
  const Tensor& in = x.value();
  require_nhwc(in, "max_pool2x2");
  const int64_t n = in.batch(), h = in.height() / 2, w = in.width() / 2, c = in.channels();
  if (h == 0 || w == 0) throw std::invalid_argument("max_pool2x2: input too small " + shape_str(in.shape()));
  Tensor out(Shape{n, h, w, c});
  std::vector<int64_t> src_index(static_cast<size_t>(out.numel()));
  for (int64_t b = 0; b < n; ++b)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t xx = 0; xx < w; ++xx)
        for (int64_t j = 0; j < c; ++j) {
          int64_t best = ((b * in.height() + 2 * y) * in.width() + 2 * xx) * c + j;
          for (int64_t dy = 0; dy < 2; ++dy)
            for (int64_t dx = 0; dx < 2; ++dx) {
              const int64_t idx = ((b * in.height() + 2 * y + dy) * in.width() + 2 * xx + dx) * c + j;
              if (in[idx] > in[best]) best = idx;
            }
          const int64_t o = ((b * h + y) * w + xx) * c + j;
          out[o] = in[best];
          src_index[static_cast<size_t>(o)] = best;
        }
  return Var::from_op(std::move(out), {x}, [src_index = std::move(src_index)](const Tensor& g, std::vector<Tensor*>& grads) {
    Tensor& gx = *grads[0];
    for (int64_t o = 0; o < g.numel(); ++o) gx[src_index[static_cast<size_t>(o)]] += g[o];
  });
}

// --- normalization and attention -------------------------------------------

Var instance_norm(const Var& x, double eps) {
  const Tensor& in = x.value();
  require_nhwc(in, "instance_norm");
  const int64_t n = in.batch(), hw = in.height() * in.width(), c = in.channels();
  const auto count = static_cast<double>(hw);
  Tensor xhat(in.shape());
  std::vector<double> inv_std(static_cast<size_t>(n * c));
  std::vector<double> mu(static_cast<size_t>(c)), var(static_cast<size_t>(c)), lo(static_cast<size_t>(c)), hi(static_cast<size_t>(c));
  for (int64_t b = 0; b < n; ++b) {
    const double* base = in.data() + b * hw * c;
    std::fill(mu.begin(), mu.end(), 0.0);
    std::fill(var.begin(), var.end(), 0.0);
    std::copy_n(base, c, lo.begin());
    std::copy_n(base, c, hi.begin());
    for (int64_t p = 0; p < hw; ++p)
      for (int64_t j = 0; j < c; ++j) {
        const double v = base[p * c + j];
        mu[static_cast<size_t>(j)] += v;
        lo[static_cast<size_t>(j)] = std::min(lo[static_cast<size_t>(j)], v);
        hi[static_cast<size_t>(j)] = std::max(hi[static_cast<size_t>(j)], v);
      }
    for (double& m : mu) m /= count;
    for (int64_t p = 0; p < hw; ++p)
      for (int64_t j = 0; j < c; ++j) {
        const double d = base[p * c + j] - mu[static_cast<size_t>(j)];
        var[static_cast<size_t>(j)] += d * d;
      }
    for (int64_t j = 0; j < c; ++j) {
      const auto sj = static_cast<size_t>(j);
      const double s = 1.0 / std::sqrt(var[sj] / count + eps);
      inv_std[static_cast<size_t>(b * c + j)] = s;
      const bool constant = lo[sj] == hi[sj];
      for (int64_t p = 0; p < hw; ++p) {
        const int64_t i = (b * hw + p) * c + j;
        xhat[i] = constant ? 0.0 : (in[i] - mu[sj]) * s;
      }
    }
  }
  Tensor saved = grad_enabled() && x.requires_grad() ? xhat : Tensor();
  return Var::from_op(std::move(xhat), {x},
                      [n, hw, c, xh = std::move(saved), inv_std = std::move(inv_std)](const Tensor& g,
                                                                                      std::vector<Tensor*>& grads) {
                        Tensor& gx = *grads[0];
                        const auto count = static_cast<double>(hw);
                        std::vector<double> mg(static_cast<size_t>(c)), mgx(static_cast<size_t>(c));
                        for (int64_t b = 0; b < n; ++b) {
                          std::fill(mg.begin(), mg.end(), 0.0);
                          std::fill(mgx.begin(), mgx.end(), 0.0);
                          for (int64_t p = 0; p < hw; ++p)
                            for (int64_t j = 0; j < c; ++j) {
                              const int64_t i = (b * hw + p) * c + j;
                              mg[static_cast<size_t>(j)] += g[i];
                              mgx[static_cast<size_t>(j)] += g[i] * xh[i];
                            }
                          for (int64_t p = 0; p < hw; ++p)
                            for (int64_t j = 0; j < c; ++j) {
                              const auto sj = static_cast<size_t>(j);
                              const int64_t i = (b * hw + p) * c + j;
                              gx[i] += inv_std[static_cast<size_t>(b * c + j)] *
                                       (g[i] - mg[sj] / count - xh[i] * mgx[sj] / count);
                            }
                        }
                      });
}

namespace {

struct AttentionGeometry {
  int64_t n, positions, channels, heads, d;
};

AttentionGeometry attention_geometry(const Tensor& q, const Tensor& k, int heads) {
  require_nhwc(q, "channel_attention");
  require_same_shape(q, k, "channel_attention q/k");
  if (heads <= 0 || q.channels() % heads != 0) {
    throw std::invalid_argument("channel_attention: " + std::to_string(q.channels()) +
                                " channels not divisible into " + std::to_string(heads) + " heads");
  }
  return {q.batch(), q.height() * q.width(), q.channels(), heads, q.channels() / heads};
}

// Row-wise softmax of Q^T K / t for one (sample, head).
RowMat attention_matrix(const double* q, const double* k, const AttentionGeometry& g, double temperature) {
  ConstStridedMap qm(q, g.positions, g.d, Eigen::OuterStride<>(g.channels));
  ConstStridedMap km(k, g.positions, g.d, Eigen::OuterStride<>(g.channels));
  RowMat s = (qm.transpose() * km) / temperature;
  for (int64_t i = 0; i < g.d; ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
  return s;
}

}  // namespace

Tensor channel_attention_weights(const Tensor& q, const Tensor& k, int heads, double temperature) {
  const AttentionGeometry g = attention_geometry(q, k, heads);
  Tensor out(Shape{g.n, g.heads, g.d, g.d});
  for (int64_t b = 0; b < g.n; ++b)
    for (int64_t h = 0; h < g.heads; ++h) {
      const int64_t off = b * g.positions * g.channels + h * g.d;
      RowMat p = attention_matrix(q.data() + off, k.data() + off, g, temperature);
      std::copy_n(p.data(), g.d * g.d, out.data() + (b * g.heads + h) * g.d * g.d);
    }
  return out;
}

Var channel_attention(const Var& q, const Var& k, const Var& v, int heads, double temperature) {
  const AttentionGeometry g = attention_geometry(q.value(), k.value(), heads);
  require_same_shape(q.value(), v.value(), "channel_attention q/v");
  Tensor out(q.shape());
  std::vector<RowMat> probs;
  probs.reserve(static_cast<size_t>(g.n * g.heads));
  for (int64_t b = 0; b < g.n; ++b)
    for (int64_t h = 0; h < g.heads; ++h) {
      const int64_t off = b * g.positions * g.channels + h * g.d;
      RowMat p = attention_matrix(q.value().data() + off, k.value().data() + off, g, temperature);
      ConstStridedMap vm(v.value().data() + off, g.positions, g.d, Eigen::OuterStride<>(g.channels));
      StridedMap om(out.data() + off, g.positions, g.d, Eigen::OuterStride<>(g.channels));
      om.noalias() = vm * p.transpose();
      probs.push_back(std::move(p));
    }
  const bool keep = grad_enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
  return Var::from_op(
      std::move(out), {q, k, v},
      [g, temperature, probs = std::move(probs), sq = keep ? q.value() : Tensor(), sk = keep ? k.value() : Tensor(),
       sv = keep ? v.value() : Tensor()](const Tensor& grad, std::vector<Tensor*>& grads) {
        const Eigen::OuterStride<> stride(g.channels);
        for (int64_t b = 0; b < g.n; ++b)
          for (int64_t h = 0; h < g.heads; ++h) {
            const int64_t off = b * g.positions * g.channels + h * g.d;
            const RowMat& p = probs[static_cast<size_t>(b * g.heads + h)];
            ConstStridedMap go(grad.data() + off, g.positions, g.d, stride);
            ConstStridedMap vm(sv.data() + off, g.positions, g.d, stride);
            if (grads[2]) StridedMap(grads[2]->data() + off, g.positions, g.d, stride).noalias() += go * p;
            if (!grads[0] && !grads[1]) continue;
            const RowMat dp = go.transpose() * vm;
            RowMat ds = p.cwiseProduct(dp);
            const Eigen::VectorXd row_dot = ds.rowwise().sum();
            ds = p.cwiseProduct(dp.colwise() - row_dot) / temperature;
            if (grads[0]) {
              ConstStridedMap km(sk.data() + off, g.positions, g.d, stride);
              StridedMap(grads[0]->data() + off, g.positions, g.d, stride).noalias() += km * ds.transpose();
            }
            if (grads[1]) {
              ConstStridedMap qm(sq.data() + off, g.positions, g.d, stride);
              StridedMap(grads[1]->data() + off, g.positions, g.d, stride).noalias() += qm * ds;
            }
          }
      });
}

// --- loss helpers ----------------------------------------------------------

Var mse(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mse");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const auto n = static_cast<double>(x.numel());
  double s = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return Var::from_op(Tensor(Shape{1}, s / n), {a, b}, [x, y, n](const Tensor& g, std::vector<Tensor*>& grads) {
    const double f = 2.0 * g[0] / n;
    for (int64_t i = 0; i < x.numel(); ++i) {
      const double d = f * (x[i] - y[i]);
      if (grads[0]) (*grads[0])[i] += d;
      if (grads[1]) (*grads[1])[i] -= d;
    }
  });
}

Var l1_mean(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "l1_mean");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const auto n = static_cast<double>(x.numel());
  double s = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) s += std::abs(x[i] - y[i]);
  return Var::from_op(Tensor(Shape{1}, s / n), {a, b}, [x, y, n](const Tensor& g, std::vector<Tensor*>& grads) {
    const double f = g[0] / n;
    for (int64_t i = 0; i < x.numel(); ++i) {
      const double d = x[i] - y[i];
      const double sgn = d > 0.0 ? f : (d < 0.0 ? -f : 0.0);
      if (grads[0]) (*grads[0])[i] += sgn;
      if (grads[1]) (*grads[1])[i] -= sgn;
    }
  });
}

Var gram_cross(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_nhwc(x, "gram_cross");
  require_same_shape(x, y, "gram_cross");
  const int64_t n = x.batch(), p = x.height() * x.width(), c = x.channels();
  const auto inv = 1.0 / static_cast<double>(p);
  Tensor out(Shape{n, c, c});
  for (int64_t s = 0; s < n; ++s) {
    ConstMapMat xm(x.data() + s * p * c, p, c);
    ConstMapMat ym(y.data() + s * p * c, p, c);
    MapMat(out.data() + s * c * c, c, c).noalias() = inv * (xm.transpose() * ym);
  }
  const bool keep = grad_enabled() && (a.requires_grad() || b.requires_grad());
  return Var::from_op(std::move(out), {a, b},
                      [n, p, c, inv, sx = keep ? x : Tensor(), sy = keep ? y : Tensor()](const Tensor& g,
                                                                                        std::vector<Tensor*>& grads) {
                        for (int64_t s = 0; s < n; ++s) {
                          ConstMapMat gm(g.data() + s * c * c, c, c);
                          if (grads[0])
                            MapMat(grads[0]->data() + s * p * c, p, c).noalias() +=
                                inv * (ConstMapMat(sy.data() + s * p * c, p, c) * gm.transpose());
                          if (grads[1])
                            MapMat(grads[1]->data() + s * p * c, p, c).noalias() +=
                                inv * (ConstMapMat(sx.data() + s * p * c, p, c) * gm);
                        }
                      });
}

}  // namespace recnet::ops
