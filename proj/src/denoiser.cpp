#include "denoiser.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>

namespace edr {

void NetworkConfig::check() const {
  if (levels < 1) throw std::invalid_argument("network needs at least one level");
  if (static_cast<int>(widths.size()) != levels ||
      static_cast<int>(sa_points.size()) != levels ||
      static_cast<int>(cond_sa_points.size()) != levels)
    throw std::invalid_argument("widths/sa_points/cond_sa_points must have one entry per level");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("feature widths must be positive");
  for (int i = 0; i < levels; ++i) {
    if (sa_points[i] < 1 || cond_sa_points[i] < 1)
      throw std::invalid_argument("subsample counts must be positive");
    if (i > 0 && (sa_points[i] >= sa_points[i - 1] || cond_sa_points[i] >= cond_sa_points[i - 1]))
      throw std::invalid_argument("subsample counts must be strictly decreasing");
  }
  if (!(radius > 0.0) || !(t_scale > 0.0) || max_k < 1)
    throw std::invalid_argument("invalid neighbor query settings");
  if (step_embed_dim < 2 || step_embed_dim % 2 != 0)
    throw std::invalid_argument("step_embed_dim must be even and >= 2");
}

namespace {

// width bookkeeping shared by create_params and the builders; level arguments
// are 0-based, parameter names 1-based
struct Widths {
  const NetworkConfig& cfg;

  int sa_in(int level, bool cond_branch) const {
    if (level == 0) return 1;  // polarity feature
    return cond_branch ? cfg.widths[level - 1] : 2 * cfg.widths[level - 1];
  }
  int sa_out(int level) const { return cfg.widths[level]; }
  int ft_out(int level) const { return cfg.widths[level]; }
  int fused(int level) const { return 2 * cfg.widths[level]; }  // post-FT width

  int fp_out(int step) const { return cfg.widths[std::max(step - 1, 0)]; }
  int fp_coarse(int step) const {
    return step == cfg.levels - 1 ? fused(cfg.levels - 1) : fp_out(step + 1);
  }
  int fp_skip(int step) const { return step == 0 ? 1 : fused(step - 1); }
};

template <class S>
void add_dense(ParamStore<S>& ps, Rng& rng, const std::string& name, int in, int out,
               bool zero = false) {
  Mat<S>& w = ps.add(name + ".w", in, out);
  ps.add(name + ".b", 1, out);
  if (!zero) init_fan_in(w, in, rng);
}

template <class S>
Mat<S> gather_points(const Mat<S>& pts, const std::vector<int>& idx) {
  Mat<S> out(static_cast<int>(idx.size()), 3);
  for (size_t i = 0; i < idx.size(); ++i)
    for (int j = 0; j < 3; ++j) out.at(static_cast<int>(i), j) = pts.at(idx[i], j);
  return out;
}

}  // namespace

template <class S>
DenoiserNet<S>::DenoiserNet(NetworkConfig cfg, bool with_step, std::string prefix)
    : cfg_(std::move(cfg)), with_step_(with_step), prefix_(std::move(prefix)) {
  cfg_.check();
  if (!prefix_.empty() && prefix_.back() != '.') prefix_ += '.';
}

template <class S>
void DenoiserNet<S>::create_params(ParamStore<S>& ps, Rng& rng) const {
  Widths w{cfg_};
  const int d = cfg_.step_embed_dim;
  if (with_step_) {
    add_dense(ps, rng, prefix_ + "step.fc1", d, d);
    add_dense(ps, rng, prefix_ + "step.fc2", d, d);
  }
  for (int i = 0; i < cfg_.levels; ++i) {
    std::string name = prefix_ + "cond.sa" + std::to_string(i + 1);
    add_dense(ps, rng, name + ".mlp1", 3 + w.sa_in(i, true), w.sa_out(i));
    add_dense(ps, rng, name + ".mlp2", w.sa_out(i), w.sa_out(i));
    add_dense(ps, rng, name + ".attn", w.sa_out(i), 1);
  }
  for (int i = 0; i < cfg_.levels; ++i) {
    std::string name = prefix_ + "sa" + std::to_string(i + 1);
    add_dense(ps, rng, name + ".mlp1", 3 + w.sa_in(i, false), w.sa_out(i));
    add_dense(ps, rng, name + ".mlp2", w.sa_out(i), w.sa_out(i));
    add_dense(ps, rng, name + ".attn", w.sa_out(i), 1);
    if (with_step_) add_dense(ps, rng, name + ".step", d, w.sa_out(i));
  }
  for (int i = 0; i < cfg_.levels; ++i) {
    std::string name = prefix_ + "ft" + std::to_string(i + 1);
    add_dense(ps, rng, name + ".mlp1", 3 + cfg_.widths[i], w.ft_out(i));
    add_dense(ps, rng, name + ".mlp2", w.ft_out(i), w.ft_out(i));
    add_dense(ps, rng, name + ".attn", w.ft_out(i), 1);
  }
  for (int i = 0; i < cfg_.levels; ++i) {
    std::string name = prefix_ + "fp" + std::to_string(i + 1);
    add_dense(ps, rng, name + ".mlp1", w.fp_coarse(i) + w.fp_skip(i), w.fp_out(i));
    add_dense(ps, rng, name + ".mlp2", w.fp_out(i), w.fp_out(i));
    add_dense(ps, rng, name + ".gate", w.fp_out(i), w.fp_out(i));
    if (with_step_) add_dense(ps, rng, name + ".step", d, w.fp_out(i));
  }
  add_dense(ps, rng, prefix_ + "head.fc1", cfg_.widths[0], cfg_.widths[0]);
  add_dense(ps, rng, prefix_ + "head.fc2", cfg_.widths[0], out_dim(), /*zero=*/true);
}

template <class S>
void DenoiserNet<S>::group_neighbors(const Mat<S>& pts, const Mat<S>& centers, int level,
                                     std::vector<int>& idx, std::vector<int>& offsets,
                                     Mat<S>& rel) const {
  CuboidSpec spec = cfg_.level_spec(level);
  idx.clear();
  offsets.assign(1, 0);
  for (int c = 0; c < centers.rows; ++c) {
    const S* center = centers.data() + static_cast<size_t>(c) * 3;
    std::vector<int> nbrs =
        cfg_.use_ball_query
            ? ball_query_t(pts.data(), pts.rows, center, spec.r, spec.max_k)
            : cuboid_query_t(pts.data(), pts.rows, center, spec.r, spec.t_scale, spec.max_k);
    idx.insert(idx.end(), nbrs.begin(), nbrs.end());
    offsets.push_back(static_cast<int>(idx.size()));
  }
  rel = Mat<S>(static_cast<int>(idx.size()), 3);
  for (int c = 0; c < centers.rows; ++c)
    for (int i = offsets[c]; i < offsets[c + 1]; ++i)
      for (int j = 0; j < 3; ++j) rel.at(i, j) = pts.at(idx[i], j) - centers.at(c, j);
}

template <class S>
int DenoiserNet<S>::build_step_embed(Tape<S>& tape, ParamStore<S>& ps, GradStore<S>* grads,
                                     int step) const {
  int se = tape.constant(sinusoidal_step_embedding<S>(step, cfg_.step_embed_dim));
  int h = dense(tape, se, bind_dense(tape, ps, grads, prefix_ + "step.fc1"));
  return dense(tape, h, bind_dense(tape, ps, grads, prefix_ + "step.fc2"), /*activate=*/false);
}

template <class S>
int DenoiserNet<S>::build_sa(Tape<S>& tape, ParamStore<S>& ps, GradStore<S>* grads,
                             const Mat<S>& pts_in, int feat_node, int level, bool cond_branch,
                             int step_node, Mat<S>& centers_out) const {
  int m = cond_branch ? cfg_.cond_sa_points[level] : cfg_.sa_points[level];
  if (m > pts_in.rows)
    throw std::invalid_argument("set abstraction target exceeds available points");
  int start = centroid_nearest_t(pts_in.data(), pts_in.rows);
  std::vector<int> sel = fps_t(pts_in.data(), pts_in.rows, m, start);
  centers_out = gather_points(pts_in, sel);

  std::vector<int> idx, offsets;
  Mat<S> rel;
  group_neighbors(pts_in, centers_out, level, idx, offsets, rel);

  std::string name =
      prefix_ + (cond_branch ? "cond.sa" : "sa") + std::to_string(level + 1);
  int h = tape.concat_cols(tape.constant(std::move(rel)), tape.gather_rows(feat_node, idx));
  h = dense(tape, h, bind_dense(tape, ps, grads, name + ".mlp1"));
  h = dense(tape, h, bind_dense(tape, ps, grads, name + ".mlp2"));
  int agg = attention_aggregate(tape, h, bind_dense(tape, ps, grads, name + ".attn"), offsets);
  if (step_node >= 0) {
    int proj = dense(tape, step_node, bind_dense(tape, ps, grads, name + ".step"), false);
    agg = tape.add_bias(agg, proj);
  }
  return agg;
}

template <class S>
int DenoiserNet<S>::build_ft(Tape<S>& tape, ParamStore<S>& ps, GradStore<S>* grads,
                             const Mat<S>& noisy_pts, int noisy_feat, const Mat<S>& cond_pts,
                             int cond_feat, int level) const {
  if (cond_pts.rows < 1) throw std::invalid_argument("feature transfer needs a condition branch");
  std::vector<int> idx, offsets;
  Mat<S> rel;
  group_neighbors(cond_pts, noisy_pts, level, idx, offsets, rel);

  std::string name = prefix_ + "ft" + std::to_string(level + 1);
  int h = tape.concat_cols(tape.constant(std::move(rel)), tape.gather_rows(cond_feat, idx));
  h = dense(tape, h, bind_dense(tape, ps, grads, name + ".mlp1"));
  h = dense(tape, h, bind_dense(tape, ps, grads, name + ".mlp2"));
  int fusion = attention_aggregate(tape, h, bind_dense(tape, ps, grads, name + ".attn"), offsets);
  return tape.concat_cols(noisy_feat, fusion);
}

template <class S>
int DenoiserNet<S>::build_fp(Tape<S>& tape, ParamStore<S>& ps, GradStore<S>* grads,
                             const Mat<S>& coarse_pts, int coarse_feat, const Mat<S>& fine_pts,
                             int skip_feat, int level, int step_node) const {
  if (coarse_pts.rows < 1) throw std::invalid_argument("feature propagation needs coarse points");
  const int k = std::min(3, coarse_pts.rows);
  std::vector<int> idx(static_cast<size_t>(fine_pts.rows) * k);
  std::vector<S> w(idx.size());
  for (int i = 0; i < fine_pts.rows; ++i) {
    auto nn = knn_t(coarse_pts.data(), coarse_pts.rows, fine_pts.data() + static_cast<size_t>(i) * 3, k);
    S total = 0;
    for (int j = 0; j < k; ++j) {
      idx[static_cast<size_t>(i) * k + j] = nn[j].first;
      S wij = S(1) / (nn[j].second + static_cast<S>(1e-8));
      w[static_cast<size_t>(i) * k + j] = wij;
      total += wij;
    }
    for (int j = 0; j < k; ++j) w[static_cast<size_t>(i) * k + j] /= total;
  }

  std::string name = prefix_ + "fp" + std::to_string(level + 1);
  int interp = tape.interp_rows(coarse_feat, std::move(idx), std::move(w), k);
  int h = tape.concat_cols(interp, skip_feat);
  h = dense(tape, h, bind_dense(tape, ps, grads, name + ".mlp1"));
  h = dense(tape, h, bind_dense(tape, ps, grads, name + ".mlp2"));
  DenseParams<S> gate = bind_dense(tape, ps, grads, name + ".gate");
  int g = tape.sigmoid(tape.add_bias(tape.matmul(h, gate.w), gate.b));
  h = tape.mul(h, g);
  if (step_node >= 0) {
    int proj = dense(tape, step_node, bind_dense(tape, ps, grads, name + ".step"), false);
    h = tape.add_bias(h, proj);
  }
  return h;
}

template <class S>
int DenoiserNet<S>::build_head(Tape<S>& tape, ParamStore<S>& ps, GradStore<S>* grads,
                               int feat) const {
  int h = dense(tape, feat, bind_dense(tape, ps, grads, prefix_ + "head.fc1"));
  return dense(tape, h, bind_dense(tape, ps, grads, prefix_ + "head.fc2"), /*activate=*/false);
}

template <class S>
int DenoiserNet<S>::build(Tape<S>& tape, ParamStore<S>& ps, GradStore<S>* grads,
                          const Mat<S>& noisy_pts, const Mat<S>& noisy_feat,
                          const Mat<S>& cond_pts, const Mat<S>& cond_feat, int step,
                          const CondCache<S>* cache) const {
  const int L = cfg_.levels;
  int step_node = with_step_ ? build_step_embed(tape, ps, grads, step) : -1;

  // condition branch: either replayed from the cache or encoded on this tape
  std::vector<Mat<S>> cond_level_pts(L + 1);
  std::vector<int> cond_level_feat(L + 1, -1);
  if (cache) {
    for (int l = 0; l <= L; ++l) {
      cond_level_pts[l] = cache->points[l];
      cond_level_feat[l] = tape.constant(cache->feats[l]);
    }
  } else {
    cond_level_pts[0] = cond_pts;
    cond_level_feat[0] = tape.constant(cond_feat);
    for (int i = 0; i < L; ++i) {
      Mat<S> centers;
      cond_level_feat[i + 1] = build_sa(tape, ps, grads, cond_level_pts[i], cond_level_feat[i], i,
                                        /*cond_branch=*/true, -1, centers);
      cond_level_pts[i + 1] = std::move(centers);
    }
  }

  // noisy-branch encoder with per-level fusion
  std::vector<Mat<S>> pts(L + 1);
  std::vector<int> feat(L + 1, -1);
  pts[0] = noisy_pts;
  feat[0] = tape.constant(noisy_feat);
  for (int i = 0; i < L; ++i) {
    Mat<S> centers;
    int sa = build_sa(tape, ps, grads, pts[i], feat[i], i, /*cond_branch=*/false, step_node,
                      centers);
    feat[i + 1] = build_ft(tape, ps, grads, centers, sa, cond_level_pts[i + 1],
                           cond_level_feat[i + 1], i);
    pts[i + 1] = std::move(centers);
  }

  // decoder back to full resolution
  int cur = feat[L];
  for (int i = L - 1; i >= 0; --i)
    cur = build_fp(tape, ps, grads, pts[i + 1], cur, pts[i], feat[i], i, step_node);
  return build_head(tape, ps, grads, cur);
}

template <class S>
CondCache<S> DenoiserNet<S>::encode_condition(ParamStore<S>& ps, const Mat<S>& cond_pts,
                                              const Mat<S>& cond_feat) const {
  Tape<S> tape;
  CondCache<S> cache;
  cache.points.resize(cfg_.levels + 1);
  cache.feats.resize(cfg_.levels + 1);
  cache.points[0] = cond_pts;
  cache.feats[0] = cond_feat;
  int f = tape.constant(cond_feat);
  for (int i = 0; i < cfg_.levels; ++i) {
    Mat<S> centers;
    f = build_sa(tape, ps, nullptr, cache.points[i], f, i, /*cond_branch=*/true, -1, centers);
    cache.points[i + 1] = std::move(centers);
    cache.feats[i + 1] = tape.val(f);
  }
  return cache;
}

template <class S>
DenoiserOutput<S> DenoiserNet<S>::forward(ParamStore<S>& ps, const Mat<S>& noisy_pts,
                                          const Mat<S>& noisy_feat, const CondCache<S>& cache,
                                          int step) const {
  Tape<S> tape;
  Mat<S> unused;
  int out = build(tape, ps, nullptr, noisy_pts, noisy_feat, unused, unused, step, &cache);
  const Mat<S>& o = tape.val(out);
  DenoiserOutput<S> res;
  res.noise = Mat<S>(o.rows, 3);
  for (int i = 0; i < o.rows; ++i)
    for (int j = 0; j < 3; ++j) res.noise.at(i, j) = o.at(i, j);
  if (with_step_) {
    res.logit.resize(o.rows);
    for (int i = 0; i < o.rows; ++i) res.logit[i] = o.at(i, 3);
  }
  return res;
}

template class DenoiserNet<float>;
template class DenoiserNet<double>;

}  // namespace edr
