#pragma once

#include <cstddef>
#include <vector>

namespace edr {

// Dense row-major matrix. Vectors are n x 1 (or 1 x n for biases).
template <class S>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<S> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, S(0)) {}

  S* data() { return v.data(); }
  const S* data() const { return v.data(); }
  S& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  S at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return v.size(); }
  void zero() { std::fill(v.begin(), v.end(), S(0)); }
};

// C (n x m) += A (n x k) * B (k x m)
template <class S>
void gemm_acc(const S* a, const S* b, S* c, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const S* ai = a + static_cast<size_t>(i) * k;
    S* ci = c + static_cast<size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      S av = ai[p];
      const S* bp = b + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

// C (n x k) += A (n x m) * B^T, with B given as (k x m)
template <class S>
void gemm_acc_nt(const S* a, const S* b, S* c, int n, int m, int k) {
  for (int i = 0; i < n; ++i) {
    const S* ai = a + static_cast<size_t>(i) * m;
    S* ci = c + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const S* bp = b + static_cast<size_t>(p) * m;
      S acc = 0;
      for (int j = 0; j < m; ++j) acc += ai[j] * bp[j];
      ci[p] += acc;
    }
  }
}

// C (k x m) += A^T * B, with A given as (n x k), B as (n x m)
template <class S>
void gemm_acc_tn(const S* a, const S* b, S* c, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const S* ai = a + static_cast<size_t>(i) * k;
    const S* bi = b + static_cast<size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      S av = ai[p];
      S* cp = c + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace edr
