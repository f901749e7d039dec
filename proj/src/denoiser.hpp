#pragma once

#include <string>
#include <vector>

#include "geometry.hpp"
#include "substrate.hpp"

namespace edr {

// Architecture settings shared by EDN and ERN. The per-level neighbor box
// doubles its half-extent each level to follow the thinning point density.
struct NetworkConfig {
  int levels = 3;
  std::vector<int> widths = {32, 64, 128};  // SA output width per level
  std::vector<int> sa_points;               // noisy-branch point counts per level
  std::vector<int> cond_sa_points;          // condition-branch point counts per level
  double radius = 0.25;                     // level-0 half-extent in normalized units
  double t_scale = 1.2;                     // temporal stretch of the cuboid query
  int max_k = 16;
  int step_embed_dim = 64;
  bool use_ball_query = false;

  CuboidSpec level_spec(int level) const {
    CuboidSpec s;
    s.r = radius * static_cast<double>(1 << level);
    s.t_scale = t_scale;
    s.max_k = max_k;
    return s;
  }

  static NetworkConfig defaults(int n_dense, int n_sparse) {
    NetworkConfig cfg;
    cfg.sa_points = {n_dense / 2, n_dense / 4, n_dense / 8};
    cfg.cond_sa_points = {n_sparse / 2, n_sparse / 4, n_sparse / 8};
    return cfg;
  }

  void check() const;
};

// Condition-branch encoding, reusable across reverse steps: the sparse input
// does not change along the chain, so samplers encode it once.
template <class S>
struct CondCache {
  std::vector<Mat<S>> points;  // per level 0..levels, level 0 = input
  std::vector<Mat<S>> feats;
};

template <class S>
struct DenoiserOutput {
  Mat<S> noise;            // n x 3
  std::vector<S> logit;    // n (EDN only)
};

// One backbone: SA encoder on the noisy branch with per-level FT fusion from
// the condition branch, FP decoder back to full resolution, dense head.
// EDN (with_step) outputs 3 noise channels + 1 polarity logit; ERN outputs a
// 3-channel displacement.
template <class S>
class DenoiserNet {
 public:
  DenoiserNet(NetworkConfig cfg, bool with_step, std::string prefix);

  void create_params(ParamStore<S>& ps, Rng& rng) const;

  const NetworkConfig& config() const { return cfg_; }
  bool with_step() const { return with_step_; }
  int out_dim() const { return with_step_ ? 4 : 3; }

  // Full forward on one tape. `grads` may be null for inference. `cache`
  // replaces the condition branch with precomputed constants.
  int build(Tape<S>& tape, ParamStore<S>& ps, GradStore<S>* grads, const Mat<S>& noisy_pts,
            const Mat<S>& noisy_feat, const Mat<S>& cond_pts, const Mat<S>& cond_feat, int step,
            const CondCache<S>* cache = nullptr) const;

  CondCache<S> encode_condition(ParamStore<S>& ps, const Mat<S>& cond_pts,
                                const Mat<S>& cond_feat) const;

  // Convenience inference pass.
  DenoiserOutput<S> forward(ParamStore<S>& ps, const Mat<S>& noisy_pts, const Mat<S>& noisy_feat,
                            const CondCache<S>& cache, int step) const;

  // Individual blocks, exposed for gradient checking. Level is 0-based.
  int build_step_embed(Tape<S>& tape, ParamStore<S>& ps, GradStore<S>* grads, int step) const;
  int build_sa(Tape<S>& tape, ParamStore<S>& ps, GradStore<S>* grads, const Mat<S>& pts_in,
               int feat_node, int level, bool cond_branch, int step_node,
               Mat<S>& centers_out) const;
  int build_ft(Tape<S>& tape, ParamStore<S>& ps, GradStore<S>* grads, const Mat<S>& noisy_pts,
               int noisy_feat, const Mat<S>& cond_pts, int cond_feat, int level) const;
  int build_fp(Tape<S>& tape, ParamStore<S>& ps, GradStore<S>* grads, const Mat<S>& coarse_pts,
               int coarse_feat, const Mat<S>& fine_pts, int skip_feat, int level,
               int step_node) const;
  int build_head(Tape<S>& tape, ParamStore<S>& ps, GradStore<S>* grads, int feat) const;

 private:
  void group_neighbors(const Mat<S>& pts, const Mat<S>& centers, int level, std::vector<int>& idx,
                       std::vector<int>& offsets, Mat<S>& rel) const;

  NetworkConfig cfg_;
  bool with_step_;
  std::string prefix_;
};

extern template class DenoiserNet<float>;
extern template class DenoiserNet<double>;

// Refinement pass: the net predicts per-point displacements which are added
// to the coarse coordinates and clamped to the cube. Polarity passes through
// from the coarse cloud untouched.
template <class S>
Mat<S> ern_refine(const DenoiserNet<S>& net, ParamStore<S>& ps, const Mat<S>& coarse_coords,
                  const std::vector<S>& coarse_pol, const CondCache<S>& cond) {
  Mat<S> pol(static_cast<int>(coarse_pol.size()), 1);
  for (size_t i = 0; i < coarse_pol.size(); ++i) pol.v[i] = coarse_pol[i];
  DenoiserOutput<S> out = net.forward(ps, coarse_coords, pol, cond, /*step=*/0);
  Mat<S> refined = coarse_coords;
  for (size_t i = 0; i < refined.size(); ++i) {
    refined.v[i] += out.noise.v[i];
    refined.v[i] = std::clamp(refined.v[i], S(-1), S(1));
  }
  return refined;
}

}  // namespace edr
