#include "freqadv/kernels.hpp"

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include <algorithm>
#include <string>
#include <vector>

#include "freqadv/errors.hpp"
#include "freqadv/parallel.hpp"

namespace freqadv::kernels {

Conv1dShape Conv1dShape::make(std::size_t batch, std::size_t in_channels, std::size_t out_channels,
                              std::size_t length, std::size_t kernel, Padding padding) {
  if (kernel == 0) throw ConfigError("conv1d kernel size must be positive");
  Conv1dShape g;
  g.batch = batch;
  g.in_channels = in_channels;
  g.out_channels = out_channels;
  g.length = length;
  g.kernel = kernel;
  if (padding == Padding::valid) {
    if (kernel > length) {
      throw ConfigError("conv1d kernel of size " + std::to_string(kernel) + " exceeds input length " +
                        std::to_string(length) + " with valid padding");
    }
    g.pad_left = 0;
    g.out_length = length - kernel + 1;
  } else {
    // The odd zero of an even deficit goes on the right.
    g.pad_left = (kernel - 1) / 2;
    g.out_length = length;
  }
  return g;
}

namespace {

template <class T>
void axpy(std::size_t n, T a, const T* x, T* y) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
T dot(std::size_t n, const T* x, const T* y) {
  T acc{0};
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unrolls one batch item into col[(c*k + j), t] = x[c, t + j - pad_left],
// zero outside the input. col has `stride` columns starting at column `at`.
template <class T>
void im2col(const Conv1dShape& g, const T* x, T* col, std::size_t stride, std::size_t at) {
  const auto len = static_cast<std::ptrdiff_t>(g.length);
  const auto out_len = static_cast<std::ptrdiff_t>(g.out_length);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const T* xc = x + c * g.length;
    for (std::size_t j = 0; j < g.kernel; ++j) {
      T* row = col + (c * g.kernel + j) * stride + at;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pad_left);
      const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(-shift, 0, out_len);
      const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(len - shift, lo, out_len);
      std::fill(row, row + lo, T{0});
      std::copy(xc + lo + shift, xc + hi + shift, row + lo);
      std::fill(row + hi, row + out_len, T{0});
    }
  }
}

}  // namespace

// Convolutions run as one GEMM per batch item over an im2col buffer, so an
// item's result never depends on which other items share the batch.

template <class T>
void conv1d_forward(const Conv1dShape& g, std::span<const T> x, std::span<const T> w, std::span<const T> b,
                    std::span<T> y) {
  const auto rows = static_cast<Eigen::Index>(g.in_channels * g.kernel);
  const auto out_len = static_cast<Eigen::Index>(g.out_length);
  const Eigen::Map<const RowMatrix<T>> W(w.data(), static_cast<Eigen::Index>(g.out_channels), rows);
  parallel_for_static(static_cast<std::ptrdiff_t>(g.batch), [&](std::ptrdiff_t n) {
    RowMatrix<T> col(rows, out_len);
    im2col(g, x.data() + n * g.in_channels * g.length, col.data(), g.out_length, 0);
    Eigen::Map<RowMatrix<T>> Y(y.data() + n * g.out_channels * g.out_length,
                               static_cast<Eigen::Index>(g.out_channels), out_len);
    Y.noalias() = W * col;
    for (std::size_t o = 0; o < g.out_channels; ++o) Y.row(static_cast<Eigen::Index>(o)).array() += b[o];
  });
}

template <class T>
void conv1d_backward_input(const Conv1dShape& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx) {
  const auto rows = static_cast<Eigen::Index>(g.in_channels * g.kernel);
  const auto out_len = static_cast<Eigen::Index>(g.out_length);
  const Eigen::Map<const RowMatrix<T>> W(w.data(), static_cast<Eigen::Index>(g.out_channels), rows);
  const auto len = static_cast<std::ptrdiff_t>(g.length);
  parallel_for_static(static_cast<std::ptrdiff_t>(g.batch), [&](std::ptrdiff_t n) {
    const Eigen::Map<const RowMatrix<T>> DY(dy.data() + n * g.out_channels * g.out_length,
                                            static_cast<Eigen::Index>(g.out_channels), out_len);
    RowMatrix<T> dcol(rows, out_len);
    dcol.noalias() = W.transpose() * DY;
    // col2im
    T* dxn = dx.data() + n * g.in_channels * g.length;
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      T* dc = dxn + c * g.length;
      for (std::size_t j = 0; j < g.kernel; ++j) {
        const T* row = dcol.data() + (c * g.kernel + j) * g.out_length;
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pad_left);
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(g.out_length), len - shift);
        for (std::ptrdiff_t t = lo; t < hi; ++t) dc[t + shift] += row[t];
      }
    }
  });
}

template <class T>
void conv1d_backward_params(const Conv1dShape& g, std::span<const T> dy, std::span<const T> x, std::span<T> dw,
                            std::span<T> db) {
  const auto rows = static_cast<Eigen::Index>(g.in_channels * g.kernel);
  const std::size_t cols = g.batch * g.out_length;
  RowMatrix<T> col(rows, static_cast<Eigen::Index>(cols));
  RowMatrix<T> DY(static_cast<Eigen::Index>(g.out_channels), static_cast<Eigen::Index>(cols));
  parallel_for_static(static_cast<std::ptrdiff_t>(g.batch), [&](std::ptrdiff_t n) {
    im2col(g, x.data() + n * g.in_channels * g.length, col.data(), cols, n * g.out_length);
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      const T* src = dy.data() + (n * g.out_channels + o) * g.out_length;
      std::copy(src, src + g.out_length, DY.data() + o * cols + n * g.out_length);
    }
  });
  Eigen::Map<RowMatrix<T>> DW(dw.data(), static_cast<Eigen::Index>(g.out_channels), rows);
  DW.noalias() += DY * col.transpose();
  for (std::size_t o = 0; o < g.out_channels; ++o) db[o] += DY.row(static_cast<Eigen::Index>(o)).sum();
}

template <class T>
void dense_forward(const DenseShape& g, std::span<const T> x, std::span<const T> w, std::span<const T> b,
                   std::span<T> y) {
  parallel_for_static(static_cast<std::ptrdiff_t>(g.batch), [&](std::ptrdiff_t n) {
    const T* xn = x.data() + n * g.in_features;
    for (std::size_t o = 0; o < g.out_features; ++o) {
      y[n * g.out_features + o] = b[o] + dot(g.in_features, w.data() + o * g.in_features, xn);
    }
  });
}

template <class T>
void dense_backward_input(const DenseShape& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx) {
  parallel_for_static(static_cast<std::ptrdiff_t>(g.batch), [&](std::ptrdiff_t n) {
    T* dxn = dx.data() + n * g.in_features;
    for (std::size_t o = 0; o < g.out_features; ++o) {
      axpy(g.in_features, dy[n * g.out_features + o], w.data() + o * g.in_features, dxn);
    }
  });
}

template <class T>
void dense_backward_params(const DenseShape& g, std::span<const T> dy, std::span<const T> x, std::span<T> dw,
                           std::span<T> db) {
  parallel_for_static(static_cast<std::ptrdiff_t>(g.out_features), [&](std::ptrdiff_t o) {
    T* wo = dw.data() + o * g.in_features;
    T bias_acc{0};
    for (std::size_t n = 0; n < g.batch; ++n) {
      const T d = dy[n * g.out_features + o];
      bias_acc += d;
      axpy(g.in_features, d, x.data() + n * g.in_features, wo);
    }
    db[o] += bias_acc;
  });
}

namespace reference {

template <class T>
void conv1d_forward(const Conv1dShape& g, std::span<const T> x, std::span<const T> w, std::span<const T> b,
                    std::span<T> y) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t t = 0; t < g.out_length; ++t) {
        T acc = b[o];
        for (std::size_t c = 0; c < g.in_channels; ++c)
          for (std::size_t j = 0; j < g.kernel; ++j) {
            const auto pos = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(g.length)) continue;
            acc += w[(o * g.in_channels + c) * g.kernel + j] * x[(n * g.in_channels + c) * g.length + pos];
          }
        y[(n * g.out_channels + o) * g.out_length + t] = acc;
      }
}

template <class T>
void conv1d_backward_input(const Conv1dShape& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t t = 0; t < g.out_length; ++t) {
        const T d = dy[(n * g.out_channels + o) * g.out_length + t];
        for (std::size_t c = 0; c < g.in_channels; ++c)
          for (std::size_t j = 0; j < g.kernel; ++j) {
            const auto pos = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(g.length)) continue;
            dx[(n * g.in_channels + c) * g.length + pos] += d * w[(o * g.in_channels + c) * g.kernel + j];
          }
      }
}

template <class T>
void conv1d_backward_params(const Conv1dShape& g, std::span<const T> dy, std::span<const T> x, std::span<T> dw,
                            std::span<T> db) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t t = 0; t < g.out_length; ++t) {
        const T d = dy[(n * g.out_channels + o) * g.out_length + t];
        db[o] += d;
        for (std::size_t c = 0; c < g.in_channels; ++c)
          for (std::size_t j = 0; j < g.kernel; ++j) {
            const auto pos = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(g.length)) continue;
            dw[(o * g.in_channels + c) * g.kernel + j] += d * x[(n * g.in_channels + c) * g.length + pos];
          }
      }
}

template <class T>
void dense_forward(const DenseShape& g, std::span<const T> x, std::span<const T> w, std::span<const T> b,
                   std::span<T> y) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_features; ++o) {
      T acc = b[o];
      for (std::size_t i = 0; i < g.in_features; ++i) acc += w[o * g.in_features + i] * x[n * g.in_features + i];
      y[n * g.out_features + o] = acc;
    }
}

template <class T>
void dense_backward_input(const DenseShape& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t i = 0; i < g.in_features; ++i) {
      T acc{0};
      for (std::size_t o = 0; o < g.out_features; ++o) acc += dy[n * g.out_features + o] * w[o * g.in_features + i];
      dx[n * g.in_features + i] += acc;
    }
}

template <class T>
void dense_backward_params(const DenseShape& g, std::span<const T> dy, std::span<const T> x, std::span<T> dw,
                           std::span<T> db) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_features; ++o) {
      const T d = dy[n * g.out_features + o];
      db[o] += d;
      for (std::size_t i = 0; i < g.in_features; ++i) dw[o * g.in_features + i] += d * x[n * g.in_features + i];
    }
}

}  // namespace reference

#define FREQADV_INSTANTIATE_KERNELS(NS, T)                                                                      \
  template void NS::conv1d_forward<T>(const Conv1dShape&, std::span<const T>, std::span<const T>,            \
                                      std::span<const T>, std::span<T>);                                       \
  template void NS::conv1d_backward_input<T>(const Conv1dShape&, std::span<const T>, std::span<const T>,     \
                                             std::span<T>);                                                    \
  template void NS::conv1d_backward_params<T>(const Conv1dShape&, std::span<const T>, std::span<const T>,    \
                                              std::span<T>, std::span<T>);                                     \
  template void NS::dense_forward<T>(const DenseShape&, std::span<const T>, std::span<const T>,              \
                                     std::span<const T>, std::span<T>);                                        \
  template void NS::dense_backward_input<T>(const DenseShape&, std::span<const T>, std::span<const T>,       \
                                            std::span<T>);                                                     \
  template void NS::dense_backward_params<T>(const DenseShape&, std::span<const T>, std::span<const T>,      \
                                             std::span<T>, std::span<T>);

FREQADV_INSTANTIATE_KERNELS(kernels, float)
FREQADV_INSTANTIATE_KERNELS(kernels, double)
FREQADV_INSTANTIATE_KERNELS(kernels::reference, float)
FREQADV_INSTANTIATE_KERNELS(kernels::reference, double)

#undef FREQADV_INSTANTIATE_KERNELS

}  // namespace freqadv::kernels
