#include <algorithm>
#include <limits>
#include <vector>

#include "mi2a/ops.hpp"
#include "ops_internal.hpp"

namespace mi2a::ops {

using detail::as_matrix;
using detail::require;
using detail::require_rank;

namespace {

// Geometry of a strided cross-correlation from a (B, H, W, C) "wide" tensor down to a
// (B, OH, OW, .) "narrow" one. 1-D ops use H = KH = SH = 1. Transposed convolutions use
// the same geometry with the roles of input and output swapped.
struct Geometry {
  std::size_t batch, h, w, c;
  std::size_t kh, kw;
  std::size_t sh, sw;
  std::size_t oh, ow;
  std::ptrdiff_t pad_top, pad_left;

  std::size_t rows() const { return batch * oh * ow; }
  std::size_t patch() const { return kh * kw * c; }
};

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

void axis_geometry(const char* op, std::size_t in, std::size_t k, std::size_t s, Padding padding,
                   std::size_t& out, std::ptrdiff_t& pad_before) {
  require(s >= 1, std::string(op) + ": stride must be >= 1");
  if (padding == Padding::Same) {
    out = ceil_div(in, s);
    const std::size_t needed = (out - 1) * s + k;
    const std::size_t total = needed > in ? needed - in : 0;
    pad_before = static_cast<std::ptrdiff_t>(total / 2);
  } else {
    require(k <= in, std::string(op) + ": kernel " + std::to_string(k) + " longer than input " + std::to_string(in));
    out = (in - k) / s + 1;
    pad_before = 0;
  }
}

Geometry make_geometry(const char* op, std::size_t batch, std::size_t h, std::size_t w, std::size_t c,
                       std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw, Padding padding) {
  Geometry g{batch, h, w, c, kh, kw, sh, sw, 0, 0, 0, 0};
  axis_geometry(op, h, kh, sh, padding, g.oh, g.pad_top);
  axis_geometry(op, w, kw, sw, padding, g.ow, g.pad_left);
  return g;
}

// cols[(b,oy,ox), (ky,kx,ci)] = x[b, oy*sh+ky-pt, ox*sw+kx-pl, ci] (zero outside).
void im2col(const Geometry& g, const double* x, double* cols) {
  const std::size_t patch = g.patch();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        double* row = cols + ((b * g.oh + oy) * g.ow + ox) * patch;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.sh + ky) - g.pad_top;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.sw + kx) - g.pad_left;
            double* dst = row + (ky * g.kw + kx) * g.c;
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) || ix >= static_cast<std::ptrdiff_t>(g.w)) {
              std::fill_n(dst, g.c, 0.0);
            } else {
              std::copy_n(x + ((b * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)) * g.c, g.c, dst);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add patch rows back into x.
void col2im_add(const Geometry& g, const double* cols, double* x) {
  const std::size_t patch = g.patch();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        const double* row = cols + ((b * g.oh + oy) * g.ow + ox) * patch;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.sh + ky) - g.pad_top;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.sw + kx) - g.pad_left;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            const double* src = row + (ky * g.kw + kx) * g.c;
            double* dst = x + ((b * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)) * g.c;
            for (std::size_t ci = 0; ci < g.c; ++ci) dst[ci] += src[ci];
          }
        }
      }
    }
  }
}

// x is (B, H, W, Cin); kernel is (KH, KW, Cin, Cout).
Var conv_core(const char* op, Var x, Var kernel, Var bias, std::size_t sh, std::size_t sw, Padding padding,
              bool one_d) {
  const Shape xs = x.shape();
  const Shape ks = kernel.shape();
  const std::size_t cout = ks[3];
  require(ks[2] == xs[3], std::string(op) + ": input channels " + std::to_string(xs[3]) + " vs kernel " +
                              shape_string(ks));
  require(bias.shape() == Shape{cout}, std::string(op) + ": bias " + shape_string(bias.shape()) + " vs " +
                                           std::to_string(cout) + " filters");
  const Geometry geo = make_geometry(op, xs[0], xs[1], xs[2], xs[3], ks[0], ks[1], sh, sw, padding);

  Tensor cols = Tensor::uninitialized({geo.rows(), geo.patch()});
  im2col(geo, x.value().raw(), cols.raw());

  Tensor out = Tensor::uninitialized({geo.rows(), cout});
  auto y = as_matrix(out, geo.rows(), cout);
  y.noalias() = as_matrix(cols, geo.rows(), geo.patch()) * as_matrix(kernel.value(), geo.patch(), cout);
  y.rowwise() += detail::ConstVecMap(bias.value().raw(), static_cast<Eigen::Index>(cout)).transpose();

  out = std::move(out).reshaped(one_d ? Shape{geo.batch, geo.ow, cout} : Shape{geo.batch, geo.oh, geo.ow, cout});
  return x.graph()->record(std::move(out), {x, kernel, bias},
                           [x, kernel, bias, geo, cout, cols = std::move(cols)](Graph& g, const Tensor& go) {
    const auto dy = as_matrix(go, geo.rows(), cout);
    if (g.needs_grad(kernel)) {
      as_matrix(g.grad_of(kernel), geo.patch(), cout).noalias() +=
          as_matrix(cols, geo.rows(), geo.patch()).transpose() * dy;
    }
    if (g.needs_grad(bias)) {
      detail::VecMap(g.grad_of(bias).raw(), static_cast<Eigen::Index>(cout)) += dy.colwise().sum().transpose();
    }
    if (g.needs_grad(x)) {
      Tensor dcols = Tensor::uninitialized({geo.rows(), geo.patch()});
      as_matrix(dcols, geo.rows(), geo.patch()).noalias() =
          dy * as_matrix(g.value(kernel), geo.patch(), cout).transpose();
      col2im_add(geo, dcols.raw(), g.grad_of(x).raw());
    }
  });
}

// x is (B, H, W, Cin); kernel is (KH, KW, Cout, Cin). The output is the wide side of `geo`.
Var conv_transpose_core(const char* op, Var x, Var kernel, Var bias, std::size_t sh, std::size_t sw,
                        Padding padding, bool one_d) {
  const Shape xs = x.shape();
  const Shape ks = kernel.shape();
  const std::size_t cin = xs[3], cout = ks[2];
  require(ks[3] == cin, std::string(op) + ": input channels " + std::to_string(cin) + " vs kernel " +
                            shape_string(ks));
  require(bias.shape() == Shape{cout}, std::string(op) + ": bias " + shape_string(bias.shape()) + " vs " +
                                           std::to_string(cout) + " filters");
  require(sh >= 1 && sw >= 1, std::string(op) + ": stride must be >= 1");

  auto wide = [&](std::size_t in, std::size_t k, std::size_t s) {
    return padding == Padding::Same ? in * s : (in - 1) * s + k;
  };
  const std::size_t out_h = one_d ? 1 : wide(xs[1], ks[0], sh);
  const std::size_t out_w = wide(xs[2], ks[1], sw);
  const Geometry geo = make_geometry(op, xs[0], out_h, out_w, cout, ks[0], ks[1], sh, sw, padding);
  require(geo.oh == xs[1] && geo.ow == xs[2], std::string(op) + ": inconsistent transpose geometry");

  const std::size_t rows = geo.rows();
  Tensor cols = Tensor::uninitialized({rows, geo.patch()});
  as_matrix(cols, rows, geo.patch()).noalias() =
      as_matrix(x.value(), rows, cin) * as_matrix(kernel.value(), geo.patch(), cin).transpose();

  Tensor out(one_d ? Shape{geo.batch, out_w, cout} : Shape{geo.batch, out_h, out_w, cout});
  col2im_add(geo, cols.raw(), out.raw());
  const std::size_t positions = out.size() / cout;
  {
    auto y = as_matrix(out, positions, cout);
    y.rowwise() += detail::ConstVecMap(bias.value().raw(), static_cast<Eigen::Index>(cout)).transpose();
  }

  return x.graph()->record(std::move(out), {x, kernel, bias},
                           [x, kernel, bias, geo, cin, cout, rows, positions](Graph& g, const Tensor& go) {
    if (g.needs_grad(bias)) {
      detail::VecMap(g.grad_of(bias).raw(), static_cast<Eigen::Index>(cout)) +=
          as_matrix(go, positions, cout).colwise().sum().transpose();
    }
    if (!g.needs_grad(x) && !g.needs_grad(kernel)) return;
    Tensor dcols({rows, geo.patch()});
    im2col(geo, go.raw(), dcols.raw());
    const auto dc = as_matrix(dcols, rows, geo.patch());
    if (g.needs_grad(x)) {
      as_matrix(g.grad_of(x), rows, cin).noalias() += dc * as_matrix(g.value(kernel), geo.patch(), cin);
    }
    if (g.needs_grad(kernel)) {
      as_matrix(g.grad_of(kernel), geo.patch(), cin).noalias() += dc.transpose() * as_matrix(g.value(x), rows, cin);
    }
  });
}

Var maxpool_core(const char* op, Var x, std::size_t wh, std::size_t ww, bool one_d) {
  require(wh >= 1 && ww >= 1, std::string(op) + ": window must be >= 1");
  const Shape s = x.shape();
  const std::size_t batch = s[0];
  const std::size_t h = one_d ? 1 : s[1];
  const std::size_t w = one_d ? s[1] : s[2];
  const std::size_t c = s.back();
  const std::size_t oh = ceil_div(h, wh), ow = ceil_div(w, ww);
  Tensor out = Tensor::uninitialized(one_d ? Shape{batch, ow, c} : Shape{batch, oh, ow, c});
  std::vector<std::size_t> argmax(out.size());
  const double* xv = x.value().raw();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t o = ((b * oh + oy) * ow + ox) * c;
        double* best = out.raw() + o;
        std::size_t* best_idx = argmax.data() + o;
        bool first = true;
        // Channels innermost keeps every read contiguous.
        for (std::size_t y = oy * wh; y < std::min(h, (oy + 1) * wh); ++y) {
          for (std::size_t xx = ox * ww; xx < std::min(w, (ox + 1) * ww); ++xx) {
            const std::size_t base = ((b * h + y) * w + xx) * c;
            for (std::size_t ci = 0; ci < c; ++ci) {
              const double v = xv[base + ci];
              if (first || v > best[ci]) {
                best[ci] = v;
                best_idx[ci] = base + ci;
              }
            }
            first = false;
          }
        }
      }
    }
  }
  return x.graph()->record(std::move(out), {x}, [x, argmax = std::move(argmax)](Graph& g, const Tensor& go) {
    Tensor& gx = g.grad_of(x);
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += go[o];
  });
}

Var upsample_core(Var x, std::size_t fh, std::size_t fw, bool one_d) {
  const Shape s = x.shape();
  const std::size_t batch = s[0];
  const std::size_t h = one_d ? 1 : s[1];
  const std::size_t w = one_d ? s[1] : s[2];
  const std::size_t c = s.back();
  const std::size_t oh = h * fh, ow = w * fw;
  Tensor out = Tensor::uninitialized(one_d ? Shape{batch, ow, c} : Shape{batch, oh, ow, c});
  const Tensor& xv = x.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        std::copy_n(xv.raw() + ((b * h + y / fh) * w + xx / fw) * c, c, out.raw() + ((b * oh + y) * ow + xx) * c);
  return x.graph()->record(std::move(out), {x}, [x, batch, h, w, c, fh, fw, oh, ow](Graph& g, const Tensor& go) {
    Tensor& gx = g.grad_of(x);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const double* src = go.raw() + ((b * oh + y) * ow + xx) * c;
          double* dst = gx.raw() + ((b * h + y / fh) * w + xx / fw) * c;
          for (std::size_t ci = 0; ci < c; ++ci) dst[ci] += src[ci];
        }
  });
}

}  // namespace

Var conv1d(Var x, Var kernel, Var bias, std::size_t stride, Padding padding) {
  require_rank("conv1d", x, 3);
  require_rank("conv1d", kernel, 3);
  require(stride >= 1, "conv1d: stride must be >= 1");
  const Shape xs = x.shape();
  const Shape ks = kernel.shape();
  Var x4 = reshape(x, {xs[0], 1, xs[1], xs[2]});
  Var k4 = reshape(kernel, {1, ks[0], ks[1], ks[2]});
  return conv_core("conv1d", x4, k4, bias, 1, stride, padding, true);
}

Var conv2d(Var x, Var kernel, Var bias, std::size_t stride, Padding padding) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", kernel, 4);
  return conv_core("conv2d", x, kernel, bias, stride, stride, padding, false);
}

Var conv1d_transpose(Var x, Var kernel, Var bias, std::size_t stride, Padding padding) {
  require_rank("conv1d_transpose", x, 3);
  require_rank("conv1d_transpose", kernel, 3);
  const Shape xs = x.shape();
  const Shape ks = kernel.shape();
  Var x4 = reshape(x, {xs[0], 1, xs[1], xs[2]});
  Var k4 = reshape(kernel, {1, ks[0], ks[1], ks[2]});
  return conv_transpose_core("conv1d_transpose", x4, k4, bias, 1, stride, padding, true);
}

Var conv2d_transpose(Var x, Var kernel, Var bias, std::size_t stride, Padding padding) {
  require_rank("conv2d_transpose", x, 4);
  require_rank("conv2d_transpose", kernel, 4);
  return conv_transpose_core("conv2d_transpose", x, kernel, bias, stride, stride, padding, false);
}

Var maxpool1d(Var x, std::size_t window) {
  require_rank("maxpool1d", x, 3);
  return maxpool_core("maxpool1d", x, 1, window, true);
}

Var maxpool2d(Var x, std::size_t window) {
  require_rank("maxpool2d", x, 4);
  return maxpool_core("maxpool2d", x, window, window, false);
}

Var upsample1d(Var x, std::size_t factor) {
  require_rank("upsample1d", x, 3);
  require(factor >= 1, "upsample1d: factor must be >= 1");
  return upsample_core(x, 1, factor, true);
}

Var upsample2d(Var x, std::size_t factor) {
  require_rank("upsample2d", x, 4);
  require(factor >= 1, "upsample2d: factor must be >= 1");
  return upsample_core(x, factor, factor, false);
}

}  // namespace mi2a::ops
