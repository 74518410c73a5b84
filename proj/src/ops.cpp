#include "dafc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dafc/kernels.hpp"

namespace dafc::ops {

namespace {

Tape& tape_of(const Var& v) {
  if (!v.valid()) throw std::invalid_argument("op applied to an unbound Var");
  return *v.tape();
}

void require_same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("op arguments live on different tapes");
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Spatial view of a rank-3 (C,H,W) or rank-4 (B,C,H,W) tensor.
struct Spatial {
  std::size_t batch, channels, h, w;
};

Spatial spatial_of(const char* op, const Shape& s) {
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  throw ShapeError(std::string(op) + ": expected C×H×W or B×C×H×W input, got " + shape_str(s));
}

Shape spatial_shape(const Shape& like, std::size_t c, std::size_t h, std::size_t w) {
  if (like.size() == 3) return {c, h, w};
  return {like[0], c, h, w};
}

void check_window(const char* op, const Spatial& s, std::size_t kernel, std::size_t stride) {
  if (kernel == 0 || stride == 0) throw std::invalid_argument(std::string(op) + ": kernel and stride must be positive");
  if (s.h < kernel || s.w < kernel)
    throw std::invalid_argument(std::string(op) + ": window " + std::to_string(kernel) + " exceeds input " +
                                std::to_string(s.h) + "x" + std::to_string(s.w));
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
    throw ShapeError("matmul: shape mismatch " + shape_str(as) + " x " + shape_str(bs));
  const std::size_t M = as[0], K = as[1], N = bs[1];
  Tensor out({M, N});
  kernels::matmul(a.value().data(), b.value().data(), out.data(), M, K, N);
  const auto ia = a.id(), ib = b.id();
  return tape_of(a).record("matmul", std::move(out), {a, b}, [=](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      Tensor da({M, K});
      kernels::matmul_a_bt(g.data(), t.value(ib).data(), da.data(), M, N, K);
      add_into(t.grad_buffer(ia), da);
    }
    if (t.requires_grad(b)) {
      Tensor db({K, N});
      kernels::matmul_at_b(t.value(ia).data(), g.data(), db.data(), M, K, N);
      add_into(t.grad_buffer(ib), db);
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_same_tape(x, w);
  require_same_tape(x, b);
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0])
    throw ShapeError("linear: shape mismatch " + shape_str(xs) + " x " + shape_str(ws));
  const std::size_t B = xs[0], I = xs[1], O = ws[1];
  if (b.shape() != Shape{O}) throw ShapeError("linear: bias shape " + shape_str(b.shape()) + " for width " + std::to_string(O));
  Tensor out({B, O});
  kernels::matmul(x.value().data(), w.value().data(), out.data(), B, I, O);
  const Tensor& bv = b.value();
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t c = 0; c < O; ++c) out[r * O + c] += bv[c];
  const auto ix = x.id(), iw = w.id(), ib = b.id();
  const Var xv = x, wv = w, bvv = b;
  return tape_of(x).record("linear", std::move(out), {x, w, b}, [=](Tape& t, const Tensor& g) {
    if (t.requires_grad(xv)) {
      Tensor dx({B, I});
      kernels::matmul_a_bt(g.data(), t.value(iw).data(), dx.data(), B, O, I);
      add_into(t.grad_buffer(ix), dx);
    }
    if (t.requires_grad(wv)) {
      Tensor dw({I, O});
      kernels::matmul_at_b(t.value(ix).data(), g.data(), dw.data(), B, I, O);
      add_into(t.grad_buffer(iw), dw);
    }
    if (t.requires_grad(bvv)) {
      Tensor& db = t.grad_buffer(ib);
      for (std::size_t r = 0; r < B; ++r)
        for (std::size_t c = 0; c < O; ++c) db[c] += g[r * O + c];
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape("add", a, b);
  Tensor out = a.value();
  add_into(out, b.value());
  const auto ia = a.id(), ib = b.id();
  const Var av = a, bv = b;
  return tape_of(a).record("add", std::move(out), {a, b}, [=](Tape& t, const Tensor& g) {
    if (t.requires_grad(av)) add_into(t.grad_buffer(ia), g);
    if (t.requires_grad(bv)) add_into(t.grad_buffer(ib), g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const auto ia = a.id(), ib = b.id();
  const Var av = a, bv = b;
  return tape_of(a).record("sub", std::move(out), {a, b}, [=](Tape& t, const Tensor& g) {
    if (t.requires_grad(av)) add_into(t.grad_buffer(ia), g);
    if (t.requires_grad(bv)) {
      Tensor& db = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const auto ia = a.id(), ib = b.id();
  const Var av = a, bv = b;
  return tape_of(a).record("mul", std::move(out), {a, b}, [=](Tape& t, const Tensor& g) {
    if (t.requires_grad(av)) {
      Tensor& da = t.grad_buffer(ia);
      const Tensor& y = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i];
    }
    if (t.requires_grad(bv)) {
      Tensor& db = t.grad_buffer(ib);
      const Tensor& x = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * x[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= s;
  const auto ia = a.id();
  return tape_of(a).record("scale", std::move(out), {a}, [=](Tape& t, const Tensor& g) {
    Tensor& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += s * g[i];
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const auto ia = a.id();
  return tape_of(a).record("sum", Tensor::scalar(s), {a}, [=](Tape& t, const Tensor& g) {
    Tensor& da = t.grad_buffer(ia);
    for (auto& v : da.data()) v += g[0];
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_squares(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v * v;
  const auto ia = a.id();
  return tape_of(a).record("sum_squares", Tensor::scalar(s), {a}, [=](Tape& t, const Tensor& g) {
    Tensor& da = t.grad_buffer(ia);
    const Tensor& x = t.value(ia);
    for (std::size_t i = 0; i < x.size(); ++i) da[i] += 2.0 * x[i] * g[0];
  });
}

Var weighted_sum(const Var& a, const Tensor& weights) {
  if (weights.shape() != a.shape())
    throw ShapeError("weighted_sum: weights " + shape_str(weights.shape()) + " vs " + shape_str(a.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * a.value()[i];
  const auto ia = a.id();
  return tape_of(a).record("weighted_sum", Tensor::scalar(s), {a}, [=](Tape& t, const Tensor& g) {
    Tensor& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < weights.size(); ++i) da[i] += weights[i] * g[0];
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  const auto ix = x.id();
  return tape_of(x).record("relu", std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    Tensor& dx = t.grad_buffer(ix);
    const Tensor& in = t.value(ix);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in[i] > 0.0) dx[i] += g[i];
  });
}

Var softmax_rows(const Var& x) {
  if (x.shape().size() != 2) throw ShapeError("softmax_rows: expected rank 2, got " + shape_str(x.shape()));
  const std::size_t R = x.shape()[0], C = x.shape()[1];
  Tensor out = x.value();
  for (std::size_t r = 0; r < R; ++r) {
    double* row = out.ptr() + r * C;
    const double mx = *std::max_element(row, row + C);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += (row[c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < C; ++c) row[c] /= z;
  }
  const auto ix = x.id();
  Tape& tape = tape_of(x);
  const std::size_t iy = tape.size();  // id this op will receive
  return tape.record("softmax_rows", std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(iy);
    Tensor& dx = t.grad_buffer(ix);
    for (std::size_t r = 0; r < R; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += g[r * C + c] * y[r * C + c];
      for (std::size_t c = 0; c < C; ++c) dx[r * C + c] += y[r * C + c] * (g[r * C + c] - dot);
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const auto ix = x.id();
  return tape_of(x).record("reshape", std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    Tensor& dx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, std::size_t stride, std::size_t padding) {
  require_same_tape(x, w);
  const Spatial s = spatial_of("conv2d", x.shape());
  const auto& ws = w.shape();
  if (ws.size() != 4 || ws[1] != s.channels)
    throw ShapeError("conv2d: kernel shape " + shape_str(ws) + " incompatible with input " + shape_str(x.shape()));
  const bool has_bias = b.valid();
  if (has_bias) {
    require_same_tape(x, b);
    if (b.shape() != Shape{ws[0]}) throw ShapeError("conv2d: bias shape " + shape_str(b.shape()));
  }
  const auto g = kernels::make_conv_geom(s.batch, s.channels, s.h, s.w, ws[0], ws[2], ws[3], stride, padding);
  Tensor out(spatial_shape(x.shape(), g.out_c, g.out_h, g.out_w));
  kernels::conv2d_forward(g, x.value().data(), w.value().data(),
                          has_bias ? b.value().data() : std::span<const double>{}, out.data());
  const auto ix = x.id(), iw = w.id(), ib = has_bias ? b.id() : 0;
  const Var xv = x, wv = w, bv = b;
  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return tape_of(x).record("conv2d", std::move(out), inputs, [=](Tape& t, const Tensor& dy) {
    if (t.requires_grad(xv)) {
      Tensor dx(t.value(ix).shape());
      kernels::conv2d_backward_input(g, dy.data(), t.value(iw).data(), dx.data());
      add_into(t.grad_buffer(ix), dx);
    }
    if (t.requires_grad(wv)) {
      Tensor dw(t.value(iw).shape());
      kernels::conv2d_backward_weight(g, dy.data(), t.value(ix).data(), dw.data());
      add_into(t.grad_buffer(iw), dw);
    }
    if (has_bias && t.requires_grad(bv)) {
      Tensor& db = t.grad_buffer(ib);
      const std::size_t plane = g.out_h * g.out_w;
      for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t c = 0; c < g.out_c; ++c) {
          const double* p = dy.ptr() + (n * g.out_c + c) * plane;
          double acc = 0.0;
          for (std::size_t k = 0; k < plane; ++k) acc += p[k];
          db[c] += acc;
        }
    }
  });
}

Var maxpool2d(const Var& x, std::size_t kernel, std::size_t stride) {
  const Spatial s = spatial_of("maxpool2d", x.shape());
  check_window("maxpool2d", s, kernel, stride);
  const std::size_t oh = (s.h - kernel) / stride + 1, ow = (s.w - kernel) / stride + 1;
  Tensor out(spatial_shape(x.shape(), s.channels, oh, ow));
  std::vector<std::size_t> argmax(out.size());
  const Tensor& in = x.value();
  for (std::size_t p = 0; p < s.batch * s.channels; ++p)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = p * s.h * s.w + (i * stride) * s.w + j * stride;
        for (std::size_t di = 0; di < kernel; ++di)
          for (std::size_t dj = 0; dj < kernel; ++dj) {
            const std::size_t k = p * s.h * s.w + (i * stride + di) * s.w + (j * stride + dj);
            if (in[k] > in[best]) best = k;  // strict: first maximum wins ties
          }
        const std::size_t o = (p * oh + i) * ow + j;
        out[o] = in[best];
        argmax[o] = best;
      }
  const auto ix = x.id();
  return tape_of(x).record("maxpool2d", std::move(out), {x},
                           [ix, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
                             Tensor& dx = t.grad_buffer(ix);
                             for (std::size_t o = 0; o < g.size(); ++o) dx[argmax[o]] += g[o];
                           });
}

Var avgpool2d(const Var& x, std::size_t kernel, std::size_t stride) {
  const Spatial s = spatial_of("avgpool2d", x.shape());
  check_window("avgpool2d", s, kernel, stride);
  const std::size_t oh = (s.h - kernel) / stride + 1, ow = (s.w - kernel) / stride + 1;
  const double inv = 1.0 / static_cast<double>(kernel * kernel);
  Tensor out(spatial_shape(x.shape(), s.channels, oh, ow));
  const Tensor& in = x.value();
  for (std::size_t p = 0; p < s.batch * s.channels; ++p)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t di = 0; di < kernel; ++di)
          for (std::size_t dj = 0; dj < kernel; ++dj)
            acc += in[p * s.h * s.w + (i * stride + di) * s.w + (j * stride + dj)];
        out[(p * oh + i) * ow + j] = acc * inv;
      }
  const auto ix = x.id();
  return tape_of(x).record("avgpool2d", std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    Tensor& dx = t.grad_buffer(ix);
    for (std::size_t p = 0; p < s.batch * s.channels; ++p)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          const double gv = g[(p * oh + i) * ow + j] * inv;
          for (std::size_t di = 0; di < kernel; ++di)
            for (std::size_t dj = 0; dj < kernel; ++dj)
              dx[p * s.h * s.w + (i * stride + di) * s.w + (j * stride + dj)] += gv;
        }
  });
}

Var upsample_nearest(const Var& x, std::size_t out_h, std::size_t out_w) {
  const Spatial s = spatial_of("upsample_nearest", x.shape());
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("upsample_nearest: target size must be positive");
  Tensor out(spatial_shape(x.shape(), s.channels, out_h, out_w));
  std::vector<std::size_t> src(out.size());
  for (std::size_t p = 0; p < s.batch * s.channels; ++p)
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j) {
        const std::size_t si = i * s.h / out_h, sj = j * s.w / out_w;
        const std::size_t o = (p * out_h + i) * out_w + j;
        src[o] = p * s.h * s.w + si * s.w + sj;
        out[o] = x.value()[src[o]];
      }
  const auto ix = x.id();
  return tape_of(x).record("upsample_nearest", std::move(out), {x},
                           [ix, src = std::move(src)](Tape& t, const Tensor& g) {
                             Tensor& dx = t.grad_buffer(ix);
                             for (std::size_t o = 0; o < g.size(); ++o) dx[src[o]] += g[o];
                           });
}

Var batchnorm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean, Tensor& running_var,
              Mode mode, const BatchNormConfig& cfg) {
  require_same_tape(x, gamma);
  require_same_tape(x, beta);
  const auto& xs = x.shape();
  if (xs.size() != 2 && xs.size() != 4)
    throw ShapeError("batchnorm: expected B×C or B×C×H×W, got " + shape_str(xs));
  const std::size_t B = xs[0], C = xs[1];
  const std::size_t plane = xs.size() == 4 ? xs[2] * xs[3] : 1;
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C} || running_mean.shape() != Shape{C} ||
      running_var.shape() != Shape{C})
    throw ShapeError("batchnorm: per-channel parameters must have shape [" + std::to_string(C) + "]");
  if (mode == Mode::train && B < 2) throw std::invalid_argument("batchnorm: batch size must be >= 2 in train mode");

  const Tensor& in = x.value();
  const double n = static_cast<double>(B * plane);
  std::vector<double> mu(C), inv_std(C);
  if (mode == Mode::train) {
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < plane; ++k) s += in[(b * C + c) * plane + k];
      mu[c] = s / n;
      double v = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < plane; ++k) {
          const double d = in[(b * C + c) * plane + k] - mu[c];
          v += d * d;
        }
      v /= n;
      inv_std[c] = 1.0 / std::sqrt(v + cfg.eps);
      running_mean[c] = (1.0 - cfg.momentum) * running_mean[c] + cfg.momentum * mu[c];
      running_var[c] = (1.0 - cfg.momentum) * running_var[c] + cfg.momentum * v * n / (n - 1.0);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(running_var[c] + cfg.eps);
    }
  }

  Tensor xhat(xs);
  Tensor out(xs);
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < plane; ++k) {
        const std::size_t i = (b * C + c) * plane + k;
        xhat[i] = (in[i] - mu[c]) * inv_std[c];
        out[i] = gv[c] * xhat[i] + bv[c];
      }

  const auto ix = x.id(), ig = gamma.id(), ib = beta.id();
  const Var xv = x, gvv = gamma, bvv = beta;
  const bool batch_stats = mode == Mode::train;
  return tape_of(x).record(
      "batchnorm", std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
        const Tensor& gam = t.value(ig);
        if (t.requires_grad(gvv) || t.requires_grad(bvv)) {
          Tensor& dg = t.grad_buffer(ig);
          Tensor& db = t.grad_buffer(ib);
          for (std::size_t c = 0; c < C; ++c) {
            double sg = 0.0, sb = 0.0;
            for (std::size_t b = 0; b < B; ++b)
              for (std::size_t k = 0; k < plane; ++k) {
                const std::size_t i = (b * C + c) * plane + k;
                sg += g[i] * xhat[i];
                sb += g[i];
              }
            if (t.requires_grad(gvv)) dg[c] += sg;
            if (t.requires_grad(bvv)) db[c] += sb;
          }
        }
        if (!t.requires_grad(xv)) return;
        Tensor& dx = t.grad_buffer(ix);
        for (std::size_t c = 0; c < C; ++c) {
          if (!batch_stats) {
            for (std::size_t b = 0; b < B; ++b)
              for (std::size_t k = 0; k < plane; ++k) {
                const std::size_t i = (b * C + c) * plane + k;
                dx[i] += g[i] * gam[c] * inv_std[c];
              }
            continue;
          }
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t k = 0; k < plane; ++k) {
              const std::size_t i = (b * C + c) * plane + k;
              const double d = g[i] * gam[c];
              sum_d += d;
              sum_dx += d * xhat[i];
            }
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t k = 0; k < plane; ++k) {
              const std::size_t i = (b * C + c) * plane + k;
              const double d = g[i] * gam[c];
              dx[i] += inv_std[c] / n * (n * d - sum_d - xhat[i] * sum_dx);
            }
        }
      });
}

Var dropout(const Var& x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: rate must lie in [0,1), got " + std::to_string(p));
  if (mode == Mode::eval || p == 0.0) return x;
  const double keep = 1.0 / (1.0 - p);
  std::vector<double> mask(x.value().size());
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep;
    out[i] *= mask[i];
  }
  const auto ix = x.id();
  return tape_of(x).record("dropout", std::move(out), {x}, [ix, mask = std::move(mask)](Tape& t, const Tensor& g) {
    Tensor& dx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mask[i];
  });
}

Var pairwise_sq_dist(const Var& a, const Var& b) {
  require_same_tape(a, b);
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[1])
    throw ShapeError("pairwise_sq_dist: shape mismatch " + shape_str(as) + " vs " + shape_str(bs));
  const std::size_t M = as[0], K = bs[0], D = as[1];
  Tensor out({M, K});
  kernels::pairwise_sq_dist(a.value().data(), b.value().data(), out.data(), M, K, D);
  const auto ia = a.id(), ib = b.id();
  const Var av = a, bv = b;
  return tape_of(a).record("pairwise_sq_dist", std::move(out), {a, b}, [=](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    if (t.requires_grad(av)) {
      Tensor& da = t.grad_buffer(ia);
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) {
          const double gk = 2.0 * g[i * K + k];
          for (std::size_t d = 0; d < D; ++d) da[i * D + d] += gk * (x[i * D + d] - y[k * D + d]);
        }
    }
    if (t.requires_grad(bv)) {
      Tensor& db = t.grad_buffer(ib);
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t i = 0; i < M; ++i) {
          const double gk = 2.0 * g[i * K + k];
          for (std::size_t d = 0; d < D; ++d) db[k * D + d] -= gk * (x[i * D + d] - y[k * D + d]);
        }
    }
  });
}

}  // namespace dafc::ops
