#pragma once

// Dense compute kernels behind the differentiable ops.
//
// Each kernel exists twice: a plain serial reference in kernels::serial and an
// OpenMP version in kernels::parallel.  The parallel versions split work over
// independent output elements only and accumulate each element in the same
// order as the reference, so the two agree bit-for-bit for any thread count.
// The unqualified kernels::* entry points dispatch to the parallel versions.

#include <cstddef>
#include <span>

namespace dafc::kernels {

struct ConvGeom {
  std::size_t batch, in_c, in_h, in_w;
  std::size_t out_c, kh, kw, stride, pad;
  std::size_t out_h, out_w;
};

/// Fill out_h/out_w from the other fields; throws if the kernel does not fit.
ConvGeom make_conv_geom(std::size_t batch, std::size_t in_c, std::size_t in_h, std::size_t in_w,
                        std::size_t out_c, std::size_t kh, std::size_t kw, std::size_t stride,
                        std::size_t pad);

#define DAFC_KERNEL_DECLS                                                                        \
  /* c[M,N] = a[M,K] * b[K,N] */                                                                 \
  void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,         \
              std::size_t M, std::size_t K, std::size_t N);                                      \
  /* c[K,N] = a[M,K]^T * b[M,N] */                                                               \
  void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,    \
                   std::size_t M, std::size_t K, std::size_t N);                                 \
  /* c[M,K] = a[M,N] * b[K,N]^T */                                                               \
  void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,    \
                   std::size_t M, std::size_t N, std::size_t K);                                 \
  void conv2d_forward(const ConvGeom& g, std::span<const double> x, std::span<const double> w,   \
                      std::span<const double> bias, std::span<double> y);                        \
  void conv2d_backward_input(const ConvGeom& g, std::span<const double> dy,                      \
                             std::span<const double> w, std::span<double> dx);                   \
  void conv2d_backward_weight(const ConvGeom& g, std::span<const double> dy,                     \
                              std::span<const double> x, std::span<double> dw);                  \
  /* out[M,K] = squared euclidean distance between rows of a[M,D] and b[K,D] */                  \
  void pairwise_sq_dist(std::span<const double> a, std::span<const double> b,                    \
                        std::span<double> out, std::size_t M, std::size_t K, std::size_t D);

namespace serial {
DAFC_KERNEL_DECLS
}

namespace parallel {
DAFC_KERNEL_DECLS
}

#undef DAFC_KERNEL_DECLS

using parallel::conv2d_backward_input;
using parallel::conv2d_backward_weight;
using parallel::conv2d_forward;
using parallel::matmul;
using parallel::matmul_a_bt;
using parallel::matmul_at_b;
using parallel::pairwise_sq_dist;

/// Threads the parallel kernels will use (1 without OpenMP).
int max_threads();
void set_threads(int n);

}  // namespace dafc::kernels
