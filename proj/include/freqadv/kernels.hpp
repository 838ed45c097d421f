#pragma once

#include <cstddef>
#include <span>

namespace freqadv::kernels {

enum class Padding { valid, same };

/// Geometry of a batched 1-D cross-correlation. Inputs are [batch, in, length],
/// weights [out, in, kernel], outputs [batch, out, out_length].
struct Conv1dShape {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t length = 1;
  std::size_t kernel = 1;
  std::size_t pad_left = 0;
  std::size_t out_length = 1;

  /// Throws ConfigError when a valid-padded kernel is longer than the input.
  static Conv1dShape make(std::size_t batch, std::size_t in_channels, std::size_t out_channels,
                          std::size_t length, std::size_t kernel, Padding padding);
};

struct DenseShape {
  std::size_t batch = 1;
  std::size_t in_features = 1;
  std::size_t out_features = 1;
};

// Parallel kernels. Work is split over independent outputs only, so results
// are bitwise identical for any thread count. Backward kernels accumulate
// into their outputs.

template <class T>
void conv1d_forward(const Conv1dShape& g, std::span<const T> x, std::span<const T> w, std::span<const T> b,
                    std::span<T> y);
template <class T>
void conv1d_backward_input(const Conv1dShape& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx);
template <class T>
void conv1d_backward_params(const Conv1dShape& g, std::span<const T> dy, std::span<const T> x, std::span<T> dw,
                            std::span<T> db);

template <class T>
void dense_forward(const DenseShape& g, std::span<const T> x, std::span<const T> w, std::span<const T> b,
                   std::span<T> y);
template <class T>
void dense_backward_input(const DenseShape& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx);
template <class T>
void dense_backward_params(const DenseShape& g, std::span<const T> dy, std::span<const T> x, std::span<T> dw,
                           std::span<T> db);

/// Straightforward serial loops, kept as the oracle for the kernels above.
namespace reference {

template <class T>
void conv1d_forward(const Conv1dShape& g, std::span<const T> x, std::span<const T> w, std::span<const T> b,
                    std::span<T> y);
template <class T>
void conv1d_backward_input(const Conv1dShape& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx);
template <class T>
void conv1d_backward_params(const Conv1dShape& g, std::span<const T> dy, std::span<const T> x, std::span<T> dw,
                            std::span<T> db);

template <class T>
void dense_forward(const DenseShape& g, std::span<const T> x, std::span<const T> w, std::span<const T> b,
                   std::span<T> y);
template <class T>
void dense_backward_input(const DenseShape& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx);
template <class T>
void dense_backward_params(const DenseShape& g, std::span<const T> dy, std::span<const T> x, std::span<T> dw,
                           std::span<T> db);

}  // namespace reference

}  // namespace freqadv::kernels
