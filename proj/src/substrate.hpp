#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace edr {

inline constexpr double kLeakySlope = 0.1;

// Named flat parameter tensors in creation order. Creation order is the
// checkpoint order, so it must be deterministic across runs.
template <class S>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Mat<S> value;
  };

  Mat<S>& add(const std::string& name, int rows, int cols) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_[name] = static_cast<int>(entries_.size());
    entries_.push_back({name, Mat<S>(rows, cols)});
    return entries_.back().value;
  }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }

  Mat<S>& value(int i) { return entries_[i].value; }
  const Mat<S>& value(int i) const { return entries_[i].value; }
  const std::string& name(int i) const { return entries_[i].name; }
  int count() const { return static_cast<int>(entries_.size()); }

  size_t total_params() const {
    size_t n = 0;
    for (const Entry& e : entries_) n += e.value.size();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

// Gradient buffers aligned with a ParamStore.
template <class S>
class GradStore {
 public:
  explicit GradStore(const ParamStore<S>& ps) {
    grads_.reserve(ps.count());
    for (int i = 0; i < ps.count(); ++i)
      grads_.emplace_back(ps.value(i).rows, ps.value(i).cols);
  }

  Mat<S>& at(int i) { return grads_[i]; }
  const Mat<S>& at(int i) const { return grads_[i]; }
  int count() const { return static_cast<int>(grads_.size()); }

  void zero() {
    for (Mat<S>& g : grads_) g.zero();
  }

  void accumulate(const GradStore& other) {
    for (size_t i = 0; i < grads_.size(); ++i)
      for (size_t j = 0; j < grads_[i].size(); ++j) grads_[i].v[j] += other.grads_[i].v[j];
  }

 private:
  std::vector<Mat<S>> grads_;
};

// Uniform fan-in init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)). Heads that must
// start as the identity map (noise or displacement outputs) use zeros.
template <class S>
void init_fan_in(Mat<S>& w, int fan_in, Rng& rng) {
  double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (size_t i = 0; i < w.size(); ++i)
    w.v[i] = static_cast<S>((rng.uniform() * 2.0 - 1.0) * s);
}

// Adam with bias correction.
template <class S>
class AdamState {
 public:
  AdamState(const ParamStore<S>& ps, double lr, double beta1 = 0.9, double beta2 = 0.999,
            double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (int i = 0; i < ps.count(); ++i) {
      m_.emplace_back(ps.value(i).rows, ps.value(i).cols);
      v_.emplace_back(ps.value(i).rows, ps.value(i).cols);
    }
  }

  int64_t step() const { return step_; }
  double lr() const { return lr_; }

  void apply(ParamStore<S>& ps, const GradStore<S>& grads) {
    for (int i = 0; i < ps.count(); ++i)
      for (size_t j = 0; j < grads.at(i).size(); ++j)
        if (!std::isfinite(static_cast<double>(grads.at(i).v[j])))
          throw NumericError("non-finite gradient in tensor " + ps.name(i));
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (int i = 0; i < ps.count(); ++i) {
      Mat<S>& w = ps.value(i);
      Mat<S>& m = m_[i];
      Mat<S>& v = v_[i];
      const Mat<S>& g = grads.at(i);
      for (size_t j = 0; j < w.size(); ++j) {
        m.v[j] = static_cast<S>(beta1_ * m.v[j] + (1.0 - beta1_) * g.v[j]);
        v.v[j] = static_cast<S>(beta2_ * v.v[j] + (1.0 - beta2_) * g.v[j] * g.v[j]);
        double mhat = m.v[j] / bc1;
        double vhat = v.v[j] / bc2;
        w.v[j] -= static_cast<S>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t step_ = 0;
  std::vector<Mat<S>> m_, v_;
};

// Interleaved sin/cos at geometrically spaced frequencies, values in [-1,1].
template <class S>
Mat<S> sinusoidal_step_embedding(int t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("embedding width must be even");
  Mat<S> out(1, dim);
  int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    out.v[2 * i] = static_cast<S>(std::sin(t * freq));
    out.v[2 * i + 1] = static_cast<S>(std::cos(t * freq));
  }
  return out;
}

// -- tape helpers -------------------------------------------------------------

// y = act(x W + b). Parameters are leaves; pass grads = nullptr for
// inference-only passes.
template <class S>
struct DenseParams {
  int w = -1;
  int b = -1;
};

template <class S>
DenseParams<S> bind_dense(Tape<S>& tape, ParamStore<S>& ps, GradStore<S>* grads,
                          const std::string& name) {
  int wi = ps.find(name + ".w");
  int bi = ps.find(name + ".b");
  if (wi < 0 || bi < 0) throw std::invalid_argument("unknown dense parameter " + name);
  DenseParams<S> d;
  d.w = tape.leaf(&ps.value(wi), grads ? &grads->at(wi) : nullptr);
  d.b = tape.leaf(&ps.value(bi), grads ? &grads->at(bi) : nullptr);
  return d;
}

template <class S>
int dense(Tape<S>& tape, int x, const DenseParams<S>& p, bool activate = true) {
  int y = tape.add_bias(tape.matmul(x, p.w), p.b);
  return activate ? tape.leaky_relu(y, static_cast<S>(kLeakySlope)) : y;
}

// Softmax-attention aggregation over CSR segments: learned scalar score per
// row, softmax within the segment, weighted feature sum. Weights sum to 1 per
// segment, so a singleton group passes its feature through unchanged.
template <class S>
int attention_aggregate(Tape<S>& tape, int feats, const DenseParams<S>& score,
                        const std::vector<int>& offsets) {
  int scores = tape.add_bias(tape.matmul(feats, score.w), score.b);
  int soft = tape.segment_softmax(scores, offsets);
  return tape.segment_weighted_sum(feats, soft, offsets);
}

// -- checkpoint io ------------------------------------------------------------
// magic 'EDR1'; u32 tensor count; per tensor: u16 name length, name bytes,
// u8 rank, u64 dims, f32 data little-endian. Matrices are stored rank 2.

template <class S>
void save_checkpoint(const ParamStore<S>& ps, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  const char magic[4] = {'E', 'D', 'R', '1'};
  write_bytes(os, magic, 4);
  write_u32(os, static_cast<uint32_t>(ps.count()));
  for (int i = 0; i < ps.count(); ++i) {
    const std::string& name = ps.name(i);
    const Mat<S>& m = ps.value(i);
    write_u16(os, static_cast<uint16_t>(name.size()));
    write_bytes(os, name.data(), name.size());
    write_u8(os, 2);
    write_u64(os, static_cast<uint64_t>(m.rows));
    write_u64(os, static_cast<uint64_t>(m.cols));
    for (size_t j = 0; j < m.size(); ++j) write_f32(os, static_cast<float>(m.v[j]));
  }
  if (!os) throw DataError("failed writing checkpoint: " + path);
}

// Loads into an existing store; names, order and shapes must match exactly.
template <class S>
void load_checkpoint(ParamStore<S>& ps, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  read_bytes(is, magic, 4, "checkpoint magic");
  if (magic[0] != 'E' || magic[1] != 'D' || magic[2] != 'R' || magic[3] != '1')
    throw FormatError("bad checkpoint magic", 0);
  uint32_t count = read_u32(is, "tensor count");
  if (static_cast<int>(count) != ps.count())
    throw DataError("checkpoint tensor count " + std::to_string(count) +
                    " does not match model (" + std::to_string(ps.count()) + ")");
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t len = read_u16(is, "tensor name length");
    std::string name(len, '\0');
    read_bytes(is, name.data(), len, "tensor name");
    uint8_t rank = read_u8(is, "tensor rank");
    if (rank != 2) throw DataError("unsupported tensor rank in checkpoint: " + name);
    uint64_t rows = read_u64(is, "tensor rows");
    uint64_t cols = read_u64(is, "tensor cols");
    if (name != ps.name(i)) throw DataError("checkpoint tensor order mismatch at " + name);
    Mat<S>& m = ps.value(static_cast<int>(i));
    if (rows != static_cast<uint64_t>(m.rows) || cols != static_cast<uint64_t>(m.cols))
      throw DataError("checkpoint tensor shape mismatch at " + name);
    for (size_t j = 0; j < m.size(); ++j) m.v[j] = static_cast<S>(read_f32(is, "tensor data"));
  }
}

}  // namespace edr
