#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace edr {

// Eager reverse-mode tape over Mat<S>. Ops compute their value immediately and
// register a closure that pushes gradients to their inputs. Point coordinates
// and neighbor indices enter as constants; only parameters carry gradients, so
// the op set stays small.
template <class S>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int constant(Mat<S> m) { return push(std::move(m), false); }

  // Leaf whose value lives elsewhere (a parameter). Gradients accumulate into
  // *grad_sink, which must outlive the tape and match the value's shape.
  int leaf(const Mat<S>* value, Mat<S>* grad_sink) {
    Node n;
    n.external_val = value;
    n.needs_grad = grad_sink != nullptr;
    n.grad = n.needs_grad ? Mat<S>(value->rows, value->cols) : Mat<S>();
    n.external_grad = grad_sink;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Mat<S>& val(int id) const {
    const Node& n = nodes_[id];
    return n.external_val ? *n.external_val : n.val;
  }
  Mat<S>& grad(int id) { return nodes_[id].grad; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  int matmul(int a, int b) {
    const Mat<S>&A = val(a), &B = val(b);
    if (A.cols != B.rows) throw std::invalid_argument("matmul shape mismatch");
    Mat<S> out(A.rows, B.cols);
    gemm_acc(A.data(), B.data(), out.data(), A.rows, A.cols, B.cols);
    return push(std::move(out), any_grad({a, b}), [this, a, b](int id) {
      const Mat<S>& g = nodes_[id].grad;
      const Mat<S>&A = val(a), &B = val(b);
      if (nodes_[a].needs_grad)
        gemm_acc_nt(g.data(), B.data(), nodes_[a].grad.data(), g.rows, g.cols, A.cols);
      if (nodes_[b].needs_grad)
        gemm_acc_tn(A.data(), g.data(), nodes_[b].grad.data(), A.rows, A.cols, g.cols);
    });
  }

  // a (n x m) + bias (1 x m), broadcast over rows
  int add_bias(int a, int bias) {
    const Mat<S>&A = val(a), &B = val(bias);
    if (B.rows != 1 || B.cols != A.cols) throw std::invalid_argument("bias shape mismatch");
    Mat<S> out = A;
    for (int i = 0; i < out.rows; ++i)
      for (int j = 0; j < out.cols; ++j) out.at(i, j) += B.at(0, j);
    return push(std::move(out), any_grad({a, bias}), [this, a, bias](int id) {
      const Mat<S>& g = nodes_[id].grad;
      if (nodes_[a].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) nodes_[a].grad.v[i] += g.v[i];
      if (nodes_[bias].needs_grad) {
        Mat<S>& gb = nodes_[bias].grad;
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) gb.at(0, j) += g.at(i, j);
      }
    });
  }

  int add(int a, int b) {
    const Mat<S>&A = val(a), &B = val(b);
    if (A.rows != B.rows || A.cols != B.cols) throw std::invalid_argument("add shape mismatch");
    Mat<S> out = A;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] += B.v[i];
    return push(std::move(out), any_grad({a, b}), [this, a, b](int id) {
      const Mat<S>& g = nodes_[id].grad;
      for (int src : {a, b})
        if (nodes_[src].needs_grad)
          for (size_t i = 0; i < g.size(); ++i) nodes_[src].grad.v[i] += g.v[i];
    });
  }

  int mul(int a, int b) {
    const Mat<S>&A = val(a), &B = val(b);
    if (A.rows != B.rows || A.cols != B.cols) throw std::invalid_argument("mul shape mismatch");
    Mat<S> out = A;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] *= B.v[i];
    return push(std::move(out), any_grad({a, b}), [this, a, b](int id) {
      const Mat<S>& g = nodes_[id].grad;
      const Mat<S>&A = val(a), &B = val(b);
      if (nodes_[a].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) nodes_[a].grad.v[i] += g.v[i] * B.v[i];
      if (nodes_[b].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) nodes_[b].grad.v[i] += g.v[i] * A.v[i];
    });
  }

  int scale(int a, S s) {
    Mat<S> out = val(a);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] *= s;
    return push(std::move(out), any_grad({a}), [this, a, s](int id) {
      const Mat<S>& g = nodes_[id].grad;
      if (nodes_[a].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) nodes_[a].grad.v[i] += g.v[i] * s;
    });
  }

  int leaky_relu(int a, S slope) {
    Mat<S> out = val(a);
    for (size_t i = 0; i < out.size(); ++i)
      if (out.v[i] < 0) out.v[i] *= slope;
    return push(std::move(out), any_grad({a}), [this, a, slope](int id) {
      const Mat<S>& g = nodes_[id].grad;
      const Mat<S>& A = val(a);
      if (nodes_[a].needs_grad)
        for (size_t i = 0; i < g.size(); ++i)
          nodes_[a].grad.v[i] += g.v[i] * (A.v[i] > 0 ? S(1) : slope);
    });
  }

  // clamp with pass-through gradient inside the interval
  int clamp(int a, S lo, S hi) {
    Mat<S> out = val(a);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = std::clamp(out.v[i], lo, hi);
    return push(std::move(out), any_grad({a}), [this, a, lo, hi](int id) {
      const Mat<S>& g = nodes_[id].grad;
      const Mat<S>& A = val(a);
      if (nodes_[a].needs_grad)
        for (size_t i = 0; i < g.size(); ++i)
          if (A.v[i] > lo && A.v[i] < hi) nodes_[a].grad.v[i] += g.v[i];
    });
  }

  int sigmoid(int a) {
    Mat<S> out = val(a);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = S(1) / (S(1) + std::exp(-out.v[i]));
    return push(std::move(out), any_grad({a}), [this, a](int id) {
      const Mat<S>& g = nodes_[id].grad;
      const Mat<S>& y = nodes_[id].val;
      if (nodes_[a].needs_grad)
        for (size_t i = 0; i < g.size(); ++i)
          nodes_[a].grad.v[i] += g.v[i] * y.v[i] * (S(1) - y.v[i]);
    });
  }

  int concat_cols(int a, int b) {
    const Mat<S>&A = val(a), &B = val(b);
    if (A.rows != B.rows) throw std::invalid_argument("concat_cols row mismatch");
    Mat<S> out(A.rows, A.cols + B.cols);
    for (int i = 0; i < A.rows; ++i) {
      for (int j = 0; j < A.cols; ++j) out.at(i, j) = A.at(i, j);
      for (int j = 0; j < B.cols; ++j) out.at(i, A.cols + j) = B.at(i, j);
    }
    return push(std::move(out), any_grad({a, b}), [this, a, b](int id) {
      const Mat<S>& g = nodes_[id].grad;
      int ac = val(a).cols;
      if (nodes_[a].needs_grad) {
        Mat<S>& ga = nodes_[a].grad;
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < ac; ++j) ga.at(i, j) += g.at(i, j);
      }
      if (nodes_[b].needs_grad) {
        Mat<S>& gb = nodes_[b].grad;
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < gb.cols; ++j) gb.at(i, j) += g.at(i, ac + j);
      }
    });
  }

  int slice_cols(int a, int from, int to) {
    const Mat<S>& A = val(a);
    if (from < 0 || to > A.cols || from >= to) throw std::invalid_argument("slice_cols range");
    Mat<S> out(A.rows, to - from);
    for (int i = 0; i < A.rows; ++i)
      for (int j = from; j < to; ++j) out.at(i, j - from) = A.at(i, j);
    return push(std::move(out), any_grad({a}), [this, a, from](int id) {
      const Mat<S>& g = nodes_[id].grad;
      if (!nodes_[a].needs_grad) return;
      Mat<S>& ga = nodes_[a].grad;
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j) ga.at(i, from + j) += g.at(i, j);
    });
  }

  int gather_rows(int a, std::vector<int> idx) {
    const Mat<S>& A = val(a);
    Mat<S> out(static_cast<int>(idx.size()), A.cols);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < A.cols; ++j) out.at(static_cast<int>(i), j) = A.at(idx[i], j);
    return push(std::move(out), any_grad({a}),
                [this, a, idx = std::move(idx)](int id) {
                  const Mat<S>& g = nodes_[id].grad;
                  if (!nodes_[a].needs_grad) return;
                  Mat<S>& ga = nodes_[a].grad;
                  for (size_t i = 0; i < idx.size(); ++i)
                    for (int j = 0; j < g.cols; ++j)
                      ga.at(idx[i], j) += g.at(static_cast<int>(i), j);
                });
  }

  // softmax of an n x 1 score column within each [offsets[s], offsets[s+1]) segment
  int segment_softmax(int scores, std::vector<int> offsets) {
    const Mat<S>& A = val(scores);
    if (A.cols != 1) throw std::invalid_argument("segment_softmax expects a column");
    Mat<S> out(A.rows, 1);
    for (size_t s = 0; s + 1 < offsets.size(); ++s) {
      int lo = offsets[s], hi = offsets[s + 1];
      S mx = A.v[lo];
      for (int i = lo + 1; i < hi; ++i) mx = std::max(mx, A.v[i]);
      S sum = 0;
      for (int i = lo; i < hi; ++i) {
        out.v[i] = std::exp(A.v[i] - mx);
        sum += out.v[i];
      }
      for (int i = lo; i < hi; ++i) out.v[i] /= sum;
    }
    return push(std::move(out), any_grad({scores}),
                [this, scores, offsets = std::move(offsets)](int id) {
                  if (!nodes_[scores].needs_grad) return;
                  const Mat<S>& g = nodes_[id].grad;
                  const Mat<S>& y = nodes_[id].val;
                  Mat<S>& gs = nodes_[scores].grad;
                  for (size_t s = 0; s + 1 < offsets.size(); ++s) {
                    int lo = offsets[s], hi = offsets[s + 1];
                    S dot = 0;
                    for (int i = lo; i < hi; ++i) dot += y.v[i] * g.v[i];
                    for (int i = lo; i < hi; ++i) gs.v[i] += y.v[i] * (g.v[i] - dot);
                  }
                });
  }

  // per-segment weighted sum of feature rows: out[s] = sum_i w[i] * feats[i]
  int segment_weighted_sum(int feats, int weights, std::vector<int> offsets) {
    const Mat<S>&F = val(feats), &W = val(weights);
    if (W.cols != 1 || W.rows != F.rows)
      throw std::invalid_argument("segment_weighted_sum shape mismatch");
    int nseg = static_cast<int>(offsets.size()) - 1;
    Mat<S> out(nseg, F.cols);
    for (int s = 0; s < nseg; ++s)
      for (int i = offsets[s]; i < offsets[s + 1]; ++i)
        for (int j = 0; j < F.cols; ++j) out.at(s, j) += W.v[i] * F.at(i, j);
    return push(std::move(out), any_grad({feats, weights}),
                [this, feats, weights, offsets = std::move(offsets)](int id) {
                  const Mat<S>& g = nodes_[id].grad;
                  const Mat<S>&F = val(feats), &W = val(weights);
                  int nseg = g.rows;
                  for (int s = 0; s < nseg; ++s)
                    for (int i = offsets[s]; i < offsets[s + 1]; ++i) {
                      if (nodes_[feats].needs_grad)
                        for (int j = 0; j < F.cols; ++j)
                          nodes_[feats].grad.at(i, j) += W.v[i] * g.at(s, j);
                      if (nodes_[weights].needs_grad) {
                        S acc = 0;
                        for (int j = 0; j < F.cols; ++j) acc += F.at(i, j) * g.at(s, j);
                        nodes_[weights].grad.v[i] += acc;
                      }
                    }
                });
  }

  // fixed-weight row interpolation: out[i] = sum_k w[i*k0+k] * feats[idx[i*k0+k]]
  int interp_rows(int feats, std::vector<int> idx, std::vector<S> w, int k0) {
    const Mat<S>& F = val(feats);
    int n = static_cast<int>(idx.size()) / k0;
    Mat<S> out(n, F.cols);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < k0; ++k) {
        S wk = w[static_cast<size_t>(i) * k0 + k];
        const S* src = F.data() + static_cast<size_t>(idx[static_cast<size_t>(i) * k0 + k]) * F.cols;
        S* dst = out.data() + static_cast<size_t>(i) * F.cols;
        for (int j = 0; j < F.cols; ++j) dst[j] += wk * src[j];
      }
    return push(std::move(out), any_grad({feats}),
                [this, feats, idx = std::move(idx), w = std::move(w), k0](int id) {
                  if (!nodes_[feats].needs_grad) return;
                  const Mat<S>& g = nodes_[id].grad;
                  Mat<S>& gf = nodes_[feats].grad;
                  int n = g.rows;
                  for (int i = 0; i < n; ++i)
                    for (int k = 0; k < k0; ++k) {
                      S wk = w[static_cast<size_t>(i) * k0 + k];
                      S* dst = gf.data() +
                               static_cast<size_t>(idx[static_cast<size_t>(i) * k0 + k]) * g.cols;
                      const S* src = g.data() + static_cast<size_t>(i) * g.cols;
                      for (int j = 0; j < g.cols; ++j) dst[j] += wk * src[j];
                    }
                });
  }

  // mean over all entries of (a - target)^2 -> 1x1
  int mse_against(int a, Mat<S> target) {
    const Mat<S>& A = val(a);
    if (A.rows != target.rows || A.cols != target.cols)
      throw std::invalid_argument("mse target shape mismatch");
    S acc = 0;
    for (size_t i = 0; i < A.size(); ++i) {
      S d = A.v[i] - target.v[i];
      acc += d * d;
    }
    Mat<S> out(1, 1);
    out.v[0] = acc / static_cast<S>(A.size());
    return push(std::move(out), any_grad({a}),
                [this, a, target = std::move(target)](int id) {
                  if (!nodes_[a].needs_grad) return;
                  const Mat<S>& A = val(a);
                  S g = nodes_[id].grad.v[0] * S(2) / static_cast<S>(A.size());
                  for (size_t i = 0; i < A.size(); ++i)
                    nodes_[a].grad.v[i] += g * (A.v[i] - target.v[i]);
                });
  }

  // mean binary cross-entropy of logits against {0,1} targets -> 1x1
  int bce_logits_against(int a, Mat<S> target01) {
    const Mat<S>& A = val(a);
    if (A.rows != target01.rows || A.cols != target01.cols)
      throw std::invalid_argument("bce target shape mismatch");
    S acc = 0;
    for (size_t i = 0; i < A.size(); ++i) {
      S z = A.v[i], y = target01.v[i];
      acc += std::max(z, S(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    Mat<S> out(1, 1);
    out.v[0] = acc / static_cast<S>(A.size());
    return push(std::move(out), any_grad({a}),
                [this, a, target01 = std::move(target01)](int id) {
                  if (!nodes_[a].needs_grad) return;
                  const Mat<S>& A = val(a);
                  S g = nodes_[id].grad.v[0] / static_cast<S>(A.size());
                  for (size_t i = 0; i < A.size(); ++i) {
                    S sig = S(1) / (S(1) + std::exp(-A.v[i]));
                    nodes_[a].grad.v[i] += g * (sig - target01.v[i]);
                  }
                });
  }

  // Seed the root gradient with ones (scalar roots) and sweep the tape.
  void backward(int root) {
    Mat<S> seed(val(root).rows, val(root).cols);
    std::fill(seed.v.begin(), seed.v.end(), S(1));
    backward_from(root, seed);
  }

  // Sweep with an externally supplied upstream gradient for `root`.
  void backward_from(int root, const Mat<S>& seed) {
    Node& r = nodes_[root];
    if (!r.needs_grad) return;
    if (seed.rows != r.grad.rows || seed.cols != r.grad.cols)
      throw std::invalid_argument("backward seed shape mismatch");
    for (size_t i = 0; i < seed.size(); ++i) r.grad.v[i] += seed.v[i];
    for (int id = root; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.needs_grad && n.back) n.back(id);
      if (n.needs_grad && n.external_grad)
        for (size_t i = 0; i < n.grad.size(); ++i) n.external_grad->v[i] += n.grad.v[i];
    }
  }

 private:
  struct Node {
    Mat<S> val;
    Mat<S> grad;
    const Mat<S>* external_val = nullptr;
    Mat<S>* external_grad = nullptr;
    bool needs_grad = false;
    std::function<void(int)> back;
  };

  bool any_grad(std::initializer_list<int> ids) const {
    for (int id : ids)
      if (nodes_[id].needs_grad) return true;
    return false;
  }

  int push(Mat<S> m, bool needs_grad, std::function<void(int)> back = nullptr) {
    Node n;
    n.grad = needs_grad ? Mat<S>(m.rows, m.cols) : Mat<S>();
    n.val = std::move(m);
    n.needs_grad = needs_grad;
    n.back = needs_grad ? std::move(back) : nullptr;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
};

}  // namespace edr
