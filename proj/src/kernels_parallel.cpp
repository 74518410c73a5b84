#include <algorithm>
#include <vector>

#include "dafc/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dafc::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

namespace parallel {

using idx = long long;  // OpenMP loop counters must be signed

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t M, std::size_t K, std::size_t N) {
#pragma omp parallel for schedule(static)
  for (idx ii = 0; ii < static_cast<idx>(M); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* ci = c.data() + i * N;
    std::fill(ci, ci + N, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const double aik = a[i * K + k];
      const double* bk = b.data() + k * N;
      for (std::size_t j = 0; j < N; ++j) ci[j] += aik * bk[j];
    }
  }
}

void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t M, std::size_t K, std::size_t N) {
#pragma omp parallel for schedule(static)
  for (idx kk = 0; kk < static_cast<idx>(K); ++kk) {
    const auto k = static_cast<std::size_t>(kk);
    double* ck = c.data() + k * N;
    std::fill(ck, ck + N, 0.0);
    for (std::size_t i = 0; i < M; ++i) {
      const double aik = a[i * K + k];
      const double* bi = b.data() + i * N;
      for (std::size_t j = 0; j < N; ++j) ck[j] += aik * bi[j];
    }
  }
}

void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t M, std::size_t N, std::size_t K) {
#pragma omp parallel for schedule(static)
  for (idx ii = 0; ii < static_cast<idx>(M); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* ai = a.data() + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const double* bk = b.data() + k * N;
      double acc = 0.0;
      for (std::size_t j = 0; j < N; ++j) acc += ai[j] * bk[j];
      c[i * K + k] = acc;
    }
  }
}

namespace {
// Output rows [lo, hi) whose input row oh*stride + k - pad lies inside [0, in).
inline void valid_range(std::size_t k, std::size_t pad, std::size_t stride, std::size_t in,
                        std::size_t out, std::size_t& lo, std::size_t& hi) {
  lo = k >= pad ? 0 : (pad - k + stride - 1) / stride;
  const long last = static_cast<long>(in) - 1 + static_cast<long>(pad) - static_cast<long>(k);
  hi = last < 0 ? 0 : std::min(out, static_cast<std::size_t>(last) / stride + 1);
  if (lo > hi) lo = hi;
}
}  // namespace

namespace {

// Stride is a template parameter so the unit-stride loops vectorize.
template <bool Unit>
void conv_forward_plane(const ConvGeom& g, const double* x, const double* w, double* yp, std::size_t b,
                        std::size_t co) {
  const std::size_t s = Unit ? 1 : g.stride;
  const std::size_t plane_in = g.in_h * g.in_w;
  for (std::size_t ci = 0; ci < g.in_c; ++ci) {
    const double* xp = x + (b * g.in_c + ci) * plane_in;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      std::size_t oh_lo, oh_hi;
      valid_range(ki, g.pad, s, g.in_h, g.out_h, oh_lo, oh_hi);
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        std::size_t ow_lo, ow_hi;
        valid_range(kj, g.pad, s, g.in_w, g.out_w, ow_lo, ow_hi);
        const double wv = w[((co * g.in_c + ci) * g.kh + ki) * g.kw + kj];
        for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
          const double* xrow = xp + (oh * s + ki - g.pad) * g.in_w + kj - g.pad;
          double* yrow = yp + oh * g.out_w;
          for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) yrow[ow] += wv * xrow[ow * s];
        }
      }
    }
  }
}

template <bool Unit>
void conv_backward_input_plane(const ConvGeom& g, const double* dy, const double* w, double* xp, std::size_t b,
                               std::size_t ci) {
  const std::size_t s = Unit ? 1 : g.stride;
  const std::size_t plane_out = g.out_h * g.out_w;
  for (std::size_t co = 0; co < g.out_c; ++co) {
    const double* yp = dy + (b * g.out_c + co) * plane_out;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      std::size_t oh_lo, oh_hi;
      valid_range(ki, g.pad, s, g.in_h, g.out_h, oh_lo, oh_hi);
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        std::size_t ow_lo, ow_hi;
        valid_range(kj, g.pad, s, g.in_w, g.out_w, ow_lo, ow_hi);
        const double wv = w[((co * g.in_c + ci) * g.kh + ki) * g.kw + kj];
        for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
          double* xrow = xp + (oh * s + ki - g.pad) * g.in_w + kj - g.pad;
          const double* yrow = yp + oh * g.out_w;
          for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) xrow[ow * s] += wv * yrow[ow];
        }
      }
    }
  }
}

}  // namespace

void conv2d_forward(const ConvGeom& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  const std::size_t plane_out = g.out_h * g.out_w;
#pragma omp parallel for schedule(static)
  for (idx task = 0; task < static_cast<idx>(g.batch * g.out_c); ++task) {
    const auto b = static_cast<std::size_t>(task) / g.out_c;
    const auto co = static_cast<std::size_t>(task) % g.out_c;
    double* yp = y.data() + (b * g.out_c + co) * plane_out;
    std::fill(yp, yp + plane_out, bias.empty() ? 0.0 : bias[co]);
    if (g.stride == 1)
      conv_forward_plane<true>(g, x.data(), w.data(), yp, b, co);
    else
      conv_forward_plane<false>(g, x.data(), w.data(), yp, b, co);
  }
}

void conv2d_backward_input(const ConvGeom& g, std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx) {
  const std::size_t plane_in = g.in_h * g.in_w;
#pragma omp parallel for schedule(static)
  for (idx task = 0; task < static_cast<idx>(g.batch * g.in_c); ++task) {
    const auto b = static_cast<std::size_t>(task) / g.in_c;
    const auto ci = static_cast<std::size_t>(task) % g.in_c;
    double* xp = dx.data() + (b * g.in_c + ci) * plane_in;
    std::fill(xp, xp + plane_in, 0.0);
    if (g.stride == 1)
      conv_backward_input_plane<true>(g, dy.data(), w.data(), xp, b, ci);
    else
      conv_backward_input_plane<false>(g, dy.data(), w.data(), xp, b, ci);
  }
}

void conv2d_backward_weight(const ConvGeom& g, std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw) {
  const std::size_t plane_out = g.out_h * g.out_w;
  const std::size_t plane_in = g.in_h * g.in_w;
  const std::size_t taps = g.kh * g.kw;
  // One task per kernel tap.  Within a task every (co, ci) pair keeps its own
  // accumulator, summed in the reference's batch/row/column order; the
  // independent chains are what let the loop overlap its additions.
#pragma omp parallel for schedule(static)
  for (idx tt = 0; tt < static_cast<idx>(taps); ++tt) {
    const auto ki = static_cast<std::size_t>(tt) / g.kw;
    const auto kj = static_cast<std::size_t>(tt) % g.kw;
    std::size_t oh_lo, oh_hi, ow_lo, ow_hi;
    valid_range(ki, g.pad, g.stride, g.in_h, g.out_h, oh_lo, oh_hi);
    valid_range(kj, g.pad, g.stride, g.in_w, g.out_w, ow_lo, ow_hi);
    std::vector<double> acc(g.out_c * g.in_c, 0.0);
    std::vector<double> dyv(g.out_c), xv(g.in_c);
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
        const std::size_t ih = oh * g.stride + ki - g.pad;
        for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) {
          const std::size_t iw = ow * g.stride + kj - g.pad;
          for (std::size_t co = 0; co < g.out_c; ++co)
            dyv[co] = dy[(b * g.out_c + co) * plane_out + oh * g.out_w + ow];
          for (std::size_t ci = 0; ci < g.in_c; ++ci) xv[ci] = x[(b * g.in_c + ci) * plane_in + ih * g.in_w + iw];
          for (std::size_t co = 0; co < g.out_c; ++co) {
            double* a = acc.data() + co * g.in_c;
            const double d = dyv[co];
            for (std::size_t ci = 0; ci < g.in_c; ++ci) a[ci] += d * xv[ci];
          }
        }
      }
    for (std::size_t co = 0; co < g.out_c; ++co)
      for (std::size_t ci = 0; ci < g.in_c; ++ci) dw[((co * g.in_c + ci) * g.kh + ki) * g.kw + kj] = acc[co * g.in_c + ci];
  }
}

void pairwise_sq_dist(std::span<const double> a, std::span<const double> b, std::span<double> out,
                      std::size_t M, std::size_t K, std::size_t D) {
#pragma omp parallel for schedule(static)
  for (idx ii = 0; ii < static_cast<idx>(M); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t k = 0; k < K; ++k) {
      double acc = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = a[i * D + d] - b[k * D + d];
        acc += diff * diff;
      }
      out[i * K + k] = acc;
    }
  }
}

}  // namespace parallel
}  // namespace dafc::kernels
