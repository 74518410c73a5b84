// Reference kernels: one output element at a time, straight from the
// definitions.  Slow, but the accumulation order here is the contract the
// parallel kernels must reproduce.

#include <algorithm>
#include <stdexcept>
#include <string>

#include "dafc/kernels.hpp"

namespace dafc::kernels {

ConvGeom make_conv_geom(std::size_t batch, std::size_t in_c, std::size_t in_h, std::size_t in_w,
                        std::size_t out_c, std::size_t kh, std::size_t kw, std::size_t stride,
                        std::size_t pad) {
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  if (in_h + 2 * pad < kh || in_w + 2 * pad < kw)
    throw std::invalid_argument("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                                " larger than padded input " + std::to_string(in_h + 2 * pad) + "x" +
                                std::to_string(in_w + 2 * pad));
  ConvGeom g{batch, in_c, in_h, in_w, out_c, kh, kw, stride, pad, 0, 0};
  g.out_h = (in_h + 2 * pad - kh) / stride + 1;
  g.out_w = (in_w + 2 * pad - kw) / stride + 1;
  return g;
}

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t M, std::size_t K, std::size_t N) {
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k) acc += a[i * K + k] * b[k * N + j];
      c[i * N + j] = acc;
    }
}

void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t M, std::size_t K, std::size_t N) {
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < N; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < M; ++i) acc += a[i * K + k] * b[i * N + j];
      c[k * N + j] = acc;
    }
}

void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t M, std::size_t N, std::size_t K) {
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t k = 0; k < K; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < N; ++j) acc += a[i * N + j] * b[k * N + j];
      c[i * K + k] = acc;
    }
}

void conv2d_forward(const ConvGeom& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.out_c; ++co)
      for (std::size_t oh = 0; oh < g.out_h; ++oh)
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (std::size_t ci = 0; ci < g.in_c; ++ci)
            for (std::size_t ki = 0; ki < g.kh; ++ki)
              for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
                const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(g.in_h) || iw >= static_cast<long>(g.in_w))
                  continue;
                acc += w[((co * g.in_c + ci) * g.kh + ki) * g.kw + kj] *
                       x[((b * g.in_c + ci) * g.in_h + ih) * g.in_w + iw];
              }
          y[((b * g.out_c + co) * g.out_h + oh) * g.out_w + ow] = acc;
        }
}

void conv2d_backward_input(const ConvGeom& g, std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx) {
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t ci = 0; ci < g.in_c; ++ci)
      for (std::size_t ih = 0; ih < g.in_h; ++ih)
        for (std::size_t iw = 0; iw < g.in_w; ++iw) {
          double acc = 0.0;
          for (std::size_t co = 0; co < g.out_c; ++co)
            for (std::size_t ki = 0; ki < g.kh; ++ki)
              for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const long th = static_cast<long>(ih + g.pad) - static_cast<long>(ki);
                const long tw = static_cast<long>(iw + g.pad) - static_cast<long>(kj);
                if (th < 0 || tw < 0 || th % static_cast<long>(g.stride) || tw % static_cast<long>(g.stride))
                  continue;
                const auto oh = static_cast<std::size_t>(th) / g.stride;
                const auto ow = static_cast<std::size_t>(tw) / g.stride;
                if (oh >= g.out_h || ow >= g.out_w) continue;
                acc += w[((co * g.in_c + ci) * g.kh + ki) * g.kw + kj] *
                       dy[((b * g.out_c + co) * g.out_h + oh) * g.out_w + ow];
              }
          dx[((b * g.in_c + ci) * g.in_h + ih) * g.in_w + iw] = acc;
        }
}

void conv2d_backward_weight(const ConvGeom& g, std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw) {
  for (std::size_t co = 0; co < g.out_c; ++co)
    for (std::size_t ci = 0; ci < g.in_c; ++ci)
      for (std::size_t ki = 0; ki < g.kh; ++ki)
        for (std::size_t kj = 0; kj < g.kw; ++kj) {
          double acc = 0.0;
          for (std::size_t b = 0; b < g.batch; ++b)
            for (std::size_t oh = 0; oh < g.out_h; ++oh)
              for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
                const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(g.in_h) || iw >= static_cast<long>(g.in_w))
                  continue;
                acc += dy[((b * g.out_c + co) * g.out_h + oh) * g.out_w + ow] *
                       x[((b * g.in_c + ci) * g.in_h + ih) * g.in_w + iw];
              }
          dw[((co * g.in_c + ci) * g.kh + ki) * g.kw + kj] = acc;
        }
}

void pairwise_sq_dist(std::span<const double> a, std::span<const double> b, std::span<double> out,
                      std::size_t M, std::size_t K, std::size_t D) {
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t k = 0; k < K; ++k) {
      double acc = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = a[i * D + d] - b[k * D + d];
        acc += diff * diff;
      }
      out[i * K + k] = acc;
    }
}

}  // namespace serial
}  // namespace dafc::kernels
