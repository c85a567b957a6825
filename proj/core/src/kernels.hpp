#pragma once

#include <algorithm>
#include <cstddef>

// Inner loops for the network math. Dot products use independent partial
// sums so the compiler can vectorize without reassociating a serial chain.

namespace cpt::detail {

template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t W = 16;  // one AVX-512 lane set; splits cleanly below
  T acc[W] = {};
  std::size_t i = 0;
  for (; i + W <= n; i += W)
    for (std::size_t k = 0; k < W; ++k) acc[k] += a[i + k] * b[i + k];
  for (; i < n; ++i) acc[i - n + W] += a[i] * b[i];
  T total = T(0);
  for (std::size_t k = 0; k < W; ++k) total += acc[k];
  return total;
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// y = W x + b, with W row-major [n_out x n_in].
template <typename T>
inline void linear_forward(const T* w, const T* b, const T* x, T* y,
                           std::size_t n_out, std::size_t n_in) {
  for (std::size_t o = 0; o < n_out; ++o) y[o] = dot(w + o * n_in, x, n_in) + b[o];
}

// dx += W^T dy; dW += dy x^T; db += dy.
template <typename T>
inline void linear_backward(const T* w, const T* x, const T* dy, T* dx, T* dw,
                            T* db, std::size_t n_out, std::size_t n_in) {
  for (std::size_t o = 0; o < n_out; ++o) {
    const T g = dy[o];
    if (dx) axpy(g, w + o * n_in, dx, n_in);
    axpy(g, x, dw + o * n_in, n_in);
    db[o] += g;
  }
}

// Sequence-level variants: Y[L x n_out] = X[L x n_in] W^T + b. Rows are
// processed in chunks with the weight row held hot, so large weight
// matrices are streamed once per chunk instead of once per position.
inline constexpr std::size_t kRowChunk = 32;

template <typename T>
inline void linear_forward_seq(const T* w, const T* b, const T* x, T* y,
                               std::size_t rows, std::size_t n_out,
                               std::size_t n_in) {
  for (std::size_t l0 = 0; l0 < rows; l0 += kRowChunk) {
    const std::size_t l1 = std::min(rows, l0 + kRowChunk);
    for (std::size_t o = 0; o < n_out; ++o) {
      const T* wrow = w + o * n_in;
      const T bias = b[o];
      for (std::size_t l = l0; l < l1; ++l)
        y[l * n_out + o] = dot(wrow, x + l * n_in, n_in) + bias;
    }
  }
}

template <typename T>
inline void linear_backward_seq(const T* w, const T* x, const T* dy, T* dx,
                                T* dw, T* db, std::size_t rows,
                                std::size_t n_out, std::size_t n_in) {
  for (std::size_t l0 = 0; l0 < rows; l0 += kRowChunk) {
    const std::size_t l1 = std::min(rows, l0 + kRowChunk);
    for (std::size_t o = 0; o < n_out; ++o) {
      const T* wrow = w + o * n_in;
      T* dwrow = dw + o * n_in;
      T db_acc = 0;
      for (std::size_t l = l0; l < l1; ++l) {
        const T g = dy[l * n_out + o];
        if (g == T(0)) continue;
        if (dx) axpy(g, wrow, dx + l * n_in, n_in);
        axpy(g, x + l * n_in, dwrow, n_in);
        db_acc += g;
      }
      db[o] += db_acc;
    }
  }
}

}  // namespace cpt::detail
