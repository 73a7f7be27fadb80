#include <algorithm>
#include <cmath>
#include <limits>

#include "mi2a/ops.hpp"
#include "ops_internal.hpp"

namespace mi2a::ops {

using detail::accumulate;
using detail::as_matrix;
using detail::require;
using detail::require_rank;
using detail::require_same_shape;

namespace {

template <typename F>
Tensor map_values(const Tensor& a, F&& f) {
  Tensor out = Tensor::uninitialized(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  accumulate(out, b.value());
  return a.graph()->record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& go) {
    if (g.needs_grad(a)) g.accumulate_grad(a, go);
    if (g.needs_grad(b)) g.accumulate_grad(b, go);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.graph()->record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& go) {
    if (g.needs_grad(a)) g.accumulate_grad(a, go);
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad_of(b);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.graph()->record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& go) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    if (g.needs_grad(a)) {
      Tensor& ga = g.grad_of(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
    }
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad_of(b);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = map_values(a.value(), [s](double v) { return v * s; });
  return a.graph()->record(std::move(out), {a}, [a, s](Graph& g, const Tensor& go) {
    Tensor& ga = g.grad_of(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += s * go[i];
  });
}

Var add_scalar(Var a, double s) {
  Tensor out = map_values(a.value(), [s](double v) { return v + s; });
  return a.graph()->record(std::move(out), {a},
                           [a](Graph& g, const Tensor& go) { g.accumulate_grad(a, go); });
}

Var square(Var a) {
  Tensor out = map_values(a.value(), [](double v) { return v * v; });
  return a.graph()->record(std::move(out), {a}, [a](Graph& g, const Tensor& go) {
    const Tensor& av = g.value(a);
    Tensor& ga = g.grad_of(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += 2.0 * av[i] * go[i];
  });
}

Var relu(Var a) {
  Tensor out = map_values(a.value(), [](double v) { return v < 0.0 ? 0.0 : v; });
  return a.graph()->record(std::move(out), {a}, [a](Graph& g, const Tensor& go) {
    const Tensor& av = g.value(a);
    Tensor& ga = g.grad_of(a);
    // Branch-free so random sign patterns do not stall the pipeline.
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += av[i] > 0.0 ? go[i] : 0.0;
  });
}

Var sigmoid(Var a) {
  Tensor out = map_values(a.value(), [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  Graph* graph = a.graph();
  const std::size_t self = graph->node_count();
  return graph->record(std::move(out), {a}, [a, self](Graph& g, const Tensor& go) {
    const Tensor& y = g.value(self);
    Tensor& ga = g.grad_of(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh(Var a) {
  Tensor out = map_values(a.value(), [](double v) { return std::tanh(v); });
  Graph* graph = a.graph();
  const std::size_t self = graph->node_count();
  return graph->record(std::move(out), {a}, [a, self](Graph& g, const Tensor& go) {
    const Tensor& y = g.value(self);
    Tensor& ga = g.grad_of(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (1.0 - y[i] * y[i]);
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph()->record(Tensor::scalar(s), {a}, [a](Graph& g, const Tensor& go) {
    Tensor& ga = g.grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[0];
  });
}

Var mean(Var a) {
  require(a.value().size() > 0, "mean: empty tensor");
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph()->record(Tensor::scalar(s / n), {a}, [a, n](Graph& g, const Tensor& go) {
    Tensor& ga = g.grad_of(a);
    const double d = go[0] / n;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += d;
  });
}

Var mse(Var a, Var b) {
  require_same_shape("mse", a, b);
  require(a.value().size() > 0, "mse: empty tensor");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const double n = static_cast<double>(av.size());
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  return a.graph()->record(Tensor::scalar(s / n), {a, b}, [a, b, n](Graph& g, const Tensor& go) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    const double k = 2.0 * go[0] / n;
    if (g.needs_grad(a)) {
      Tensor& ga = g.grad_of(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += k * (av[i] - bv[i]);
    }
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad_of(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= k * (av[i] - bv[i]);
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.graph()->record(std::move(out), {a},
                           [a](Graph& g, const Tensor& go) { g.accumulate_grad(a, go); });
}

Var concat_last(Var a, Var b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  require(!sa.empty() && sa.size() == sb.size() && std::equal(sa.begin(), sa.end() - 1, sb.begin()),
          "concat_last: " + shape_string(sa) + " vs " + shape_string(sb));
  const std::size_t fa = sa.back();
  const std::size_t fb = sb.back();
  const std::size_t rows = a.value().size() / fa;
  Shape so = sa;
  so.back() = fa + fb;
  Tensor out = Tensor::uninitialized(so);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.value().raw() + r * fa, fa, out.raw() + r * (fa + fb));
    std::copy_n(b.value().raw() + r * fb, fb, out.raw() + r * (fa + fb) + fa);
  }
  return a.graph()->record(std::move(out), {a, b}, [a, b, fa, fb, rows](Graph& g, const Tensor& go) {
    if (g.needs_grad(a)) {
      Tensor& ga = g.grad_of(a);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < fa; ++j) ga[r * fa + j] += go[r * (fa + fb) + j];
    }
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad_of(b);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < fb; ++j) gb[r * fb + j] += go[r * (fa + fb) + fa + j];
    }
  });
}

Var slice_last(Var a, std::size_t start, std::size_t length) {
  const Shape sa = a.shape();
  require(!sa.empty() && start + length <= sa.back() && length > 0,
          "slice_last: [" + std::to_string(start) + "," + std::to_string(start + length) + ") of " +
              shape_string(sa));
  const std::size_t f = sa.back();
  const std::size_t rows = a.value().size() / f;
  Shape so = sa;
  so.back() = length;
  Tensor out = Tensor::uninitialized(so);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(a.value().raw() + r * f + start, length, out.raw() + r * length);
  return a.graph()->record(std::move(out), {a}, [a, f, rows, start, length](Graph& g, const Tensor& go) {
    Tensor& ga = g.grad_of(a);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < length; ++j) ga[r * f + start + j] += go[r * length + j];
  });
}

Var crop(Var x, const Shape& start, const Shape& size) {
  const Shape sx = x.shape();
  require(start.size() == sx.size() && size.size() == sx.size(), "crop: rank mismatch for " + shape_string(sx));
  for (std::size_t a = 0; a < sx.size(); ++a) {
    require(size[a] > 0 && start[a] + size[a] <= sx[a],
            "crop: window " + shape_string(start) + "+" + shape_string(size) + " exceeds " + shape_string(sx));
  }
  // Source offset of every output element, computed once and shared with backward.
  std::vector<std::size_t> src(shape_size(size));
  std::vector<std::size_t> idx(sx.size(), 0);
  for (std::size_t n = 0; n < src.size(); ++n) {
    std::size_t off = 0;
    for (std::size_t a = 0; a < sx.size(); ++a) off = off * sx[a] + start[a] + idx[a];
    src[n] = off;
    for (std::size_t a = sx.size(); a-- > 0;) {
      if (++idx[a] < size[a]) break;
      idx[a] = 0;
    }
  }
  Tensor out = Tensor::uninitialized(size);
  for (std::size_t n = 0; n < src.size(); ++n) out[n] = x.value()[src[n]];
  return x.graph()->record(std::move(out), {x}, [x, src = std::move(src)](Graph& g, const Tensor& go) {
    Tensor& gx = g.grad_of(x);
    for (std::size_t n = 0; n < src.size(); ++n) gx[src[n]] += go[n];
  });
}

Var select_time(Var x, std::size_t t) {
  require_rank("select_time", x, 3);
  const std::size_t b = x.dim(0), steps = x.dim(1), f = x.dim(2);
  require(t < steps, "select_time: step " + std::to_string(t) + " out of " + std::to_string(steps));
  Tensor out = Tensor::uninitialized({b, f});
  for (std::size_t i = 0; i < b; ++i) std::copy_n(x.value().raw() + (i * steps + t) * f, f, out.raw() + i * f);
  return x.graph()->record(std::move(out), {x}, [x, b, steps, f, t](Graph& g, const Tensor& go) {
    Tensor& gx = g.grad_of(x);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < f; ++j) gx[(i * steps + t) * f + j] += go[i * f + j];
  });
}

Var stack_time(const std::vector<Var>& steps) {
  require(!steps.empty(), "stack_time: no steps");
  const Shape s0 = steps.front().shape();
  require(s0.size() == 2, "stack_time: steps must be (B, F), got " + shape_string(s0));
  for (const Var& v : steps) require(v.shape() == s0, "stack_time: ragged steps");
  const std::size_t b = s0[0], f = s0[1], n = steps.size();
  Tensor out = Tensor::uninitialized({b, n, f});
  for (std::size_t t = 0; t < n; ++t) {
    const Tensor& v = steps[t].value();
    for (std::size_t i = 0; i < b; ++i) std::copy_n(v.raw() + i * f, f, out.raw() + (i * n + t) * f);
  }
  return steps.front().graph()->record(std::move(out), steps, [steps, b, f, n](Graph& g, const Tensor& go) {
    for (std::size_t t = 0; t < n; ++t) {
      if (!g.needs_grad(steps[t])) continue;
      Tensor& gs = g.grad_of(steps[t]);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < f; ++j) gs[i * f + j] += go[(i * n + t) * f + j];
    }
  });
}

Var repeat_time(Var x, std::size_t steps) {
  require_rank("repeat_time", x, 2);
  require(steps > 0, "repeat_time: zero steps");
  const std::size_t b = x.dim(0), f = x.dim(1);
  Tensor out = Tensor::uninitialized({b, steps, f});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t t = 0; t < steps; ++t) std::copy_n(x.value().raw() + i * f, f, out.raw() + (i * steps + t) * f);
  return x.graph()->record(std::move(out), {x}, [x, b, steps, f](Graph& g, const Tensor& go) {
    Tensor& gx = g.grad_of(x);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t j = 0; j < f; ++j) gx[i * f + j] += go[(i * steps + t) * f + j];
  });
}

Var dense(Var x, Var weight, Var bias) {
  require_rank("dense", x, 2);
  require_rank("dense", weight, 2);
  require_rank("dense", bias, 1);
  const std::size_t m = x.dim(0), in = x.dim(1), out_dim = weight.dim(1);
  require(weight.dim(0) == in, "dense: input width " + std::to_string(in) + " vs weight " +
                                   shape_string(weight.shape()));
  require(bias.dim(0) == out_dim, "dense: bias " + shape_string(bias.shape()) + " vs " + std::to_string(out_dim));

  Tensor out = Tensor::uninitialized({m, out_dim});
  auto y = as_matrix(out, m, out_dim);
  y.noalias() = as_matrix(x.value(), m, in) * as_matrix(weight.value(), in, out_dim);
  y.rowwise() += detail::ConstVecMap(bias.value().raw(), static_cast<Eigen::Index>(out_dim)).transpose();

  return x.graph()->record(std::move(out), {x, weight, bias},
                           [x, weight, bias, m, in, out_dim](Graph& g, const Tensor& go) {
    const auto dy = as_matrix(go, m, out_dim);
    if (g.needs_grad(x)) {
      as_matrix(g.grad_of(x), m, in).noalias() += dy * as_matrix(g.value(weight), in, out_dim).transpose();
    }
    if (g.needs_grad(weight)) {
      as_matrix(g.grad_of(weight), in, out_dim).noalias() += as_matrix(g.value(x), m, in).transpose() * dy;
    }
    if (g.needs_grad(bias)) {
      detail::VecMap(g.grad_of(bias).raw(), static_cast<Eigen::Index>(out_dim)) += dy.colwise().sum().transpose();
    }
  });
}

Var matmul(Var a, Var b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  Tensor out = Tensor::uninitialized({m, n});
  as_matrix(out, m, n).noalias() = as_matrix(a.value(), m, k) * as_matrix(b.value(), k, n);
  return a.graph()->record(std::move(out), {a, b}, [a, b, m, k, n](Graph& g, const Tensor& go) {
    const auto dy = as_matrix(go, m, n);
    if (g.needs_grad(a)) as_matrix(g.grad_of(a), m, k).noalias() += dy * as_matrix(g.value(b), k, n).transpose();
    if (g.needs_grad(b)) as_matrix(g.grad_of(b), k, n).noalias() += as_matrix(g.value(a), m, k).transpose() * dy;
  });
}

Var batched_matmul(Var a, Var b, bool transpose_b) {
  require_rank("batched_matmul", a, 3);
  require_rank("batched_matmul", b, 3);
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t kb = transpose_b ? b.dim(2) : b.dim(1);
  require(b.dim(0) == batch && kb == k,
          "batched_matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) +
              (transpose_b ? "^T" : ""));
  const std::size_t b_rows = transpose_b ? n : k;
  const std::size_t b_cols = transpose_b ? k : n;

  Tensor out = Tensor::uninitialized({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    detail::ConstMatMap am(a.value().raw() + i * m * k, m, k);
    detail::ConstMatMap bm(b.value().raw() + i * b_rows * b_cols, b_rows, b_cols);
    detail::MatMap ym(out.raw() + i * m * n, m, n);
    if (transpose_b) {
      ym.noalias() = am * bm.transpose();
    } else {
      ym.noalias() = am * bm;
    }
  }
  return a.graph()->record(std::move(out), {a, b},
                           [a, b, batch, m, k, n, b_rows, b_cols, transpose_b](Graph& g, const Tensor& go) {
    const bool ga_needed = g.needs_grad(a);
    const bool gb_needed = g.needs_grad(b);
    Tensor* ga = ga_needed ? &g.grad_of(a) : nullptr;
    Tensor* gb = gb_needed ? &g.grad_of(b) : nullptr;
    for (std::size_t i = 0; i < batch; ++i) {
      detail::ConstMatMap dy(go.raw() + i * m * n, m, n);
      detail::ConstMatMap am(g.value(a).raw() + i * m * k, m, k);
      detail::ConstMatMap bm(g.value(b).raw() + i * b_rows * b_cols, b_rows, b_cols);
      if (ga) {
        detail::MatMap gam(ga->raw() + i * m * k, m, k);
        if (transpose_b) {
          gam.noalias() += dy * bm;
        } else {
          gam.noalias() += dy * bm.transpose();
        }
      }
      if (gb) {
        detail::MatMap gbm(gb->raw() + i * b_rows * b_cols, b_rows, b_cols);
        if (transpose_b) {
          gbm.noalias() += dy.transpose() * am;
        } else {
          gbm.noalias() += am.transpose() * dy;
        }
      }
    }
  });
}

Var softmax(Var x, std::size_t axis) {
  const Shape s = x.shape();
  require(axis < s.size(), "softmax: axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  require(s[axis] >= 1, "softmax: empty axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];

  const Tensor& xv = x.value();
  Tensor out = Tensor::uninitialized(s);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  }
  Graph* graph = x.graph();
  const std::size_t self = graph->node_count();
  return graph->record(std::move(out), {x}, [x, self, outer, inner, n](Graph& g, const Tensor& go) {
    const Tensor& y = g.value(self);
    Tensor& gx = g.grad_of(x);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += go[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = base + j * inner;
          gx[idx] += y[idx] * (go[idx] - dot);
        }
      }
    }
  });
}

std::pair<Var, Var> lstm_step(Var x, Var h, Var c, const LstmWeights& w) {
  require_rank("lstm_step", x, 2);
  require_rank("lstm_step", h, 2);
  require_same_shape("lstm_step(h,c)", h, c);
  const std::size_t in = x.dim(1), p = h.dim(1);
  require(x.dim(0) == h.dim(0), "lstm_step: batch mismatch " + shape_string(x.shape()) + " vs " + shape_string(h.shape()));
  require(w.weight.shape() == Shape{in + p, 4 * p},
          "lstm_step: weight " + shape_string(w.weight.shape()) + ", expected " + shape_string({in + p, 4 * p}));
  require(w.bias.shape() == Shape{4 * p}, "lstm_step: bias " + shape_string(w.bias.shape()));

  Var z = dense(concat_last(x, h), w.weight, w.bias);
  Var input_gate = sigmoid(slice_last(z, 0, p));
  Var forget_gate = sigmoid(slice_last(z, p, p));
  Var candidate = tanh(slice_last(z, 2 * p, p));
  Var output_gate = sigmoid(slice_last(z, 3 * p, p));
  Var c_next = add(mul(forget_gate, c), mul(input_gate, candidate));
  Var h_next = mul(output_gate, tanh(c_next));
  return {h_next, c_next};
}

}  // namespace mi2a::ops
