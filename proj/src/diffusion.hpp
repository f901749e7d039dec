#pragma once

#include <vector>

#include "denoiser.hpp"

namespace edr {

// Per-step noise schedule. Arrays are indexed by t-1 for t in 1..T;
// alpha_bar(0) is defined as 1 for the variance recurrence.
struct DiffusionSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma2;

  double alpha_bar_at(int t) const { return t == 0 ? 1.0 : alpha_bar[t - 1]; }
};

// Linear beta ramp from beta_start to beta_end over T steps.
DiffusionSchedule make_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02);

// e_t = sqrt(abar_t) e0 + sqrt(1 - abar_t) eps
template <class S>
Mat<S> q_sample(const Mat<S>& e0, int t, const Mat<S>& eps, const DiffusionSchedule& sched);

template <class S>
struct LossResult {
  double loss = 0;
  double coord_loss = 0;
  double polarity_loss = 0;
  int t = 0;
};

// Single-sample denoising objective with frozen draws, for gradient checks
// and deterministic replay. polarity entries of e0/cond are +-1 features;
// noisy_pol is the random polarity feature fed alongside e_t.
template <class S>
LossResult<S> training_loss_frozen(const DenoiserNet<S>& net, ParamStore<S>& ps,
                                   GradStore<S>* grads, const Mat<S>& e0,
                                   const std::vector<S>& e0_pol, const Mat<S>& cond,
                                   const std::vector<S>& cond_pol, int t, const Mat<S>& eps,
                                   const std::vector<S>& noisy_pol,
                                   const DiffusionSchedule& sched, double polarity_weight);

// Draws t ~ U{1..T}, eps ~ N(0,1) and a random noisy polarity feature, then
// evaluates the frozen objective.
template <class S>
LossResult<S> training_loss(const DenoiserNet<S>& net, ParamStore<S>& ps, GradStore<S>* grads,
                            const Mat<S>& e0, const std::vector<S>& e0_pol, const Mat<S>& cond,
                            const std::vector<S>& cond_pol, const DiffusionSchedule& sched,
                            Rng& rng, double polarity_weight);

// One ancestral reverse step e_t -> e_{t-1}. The injected noise is zero at
// t == 1. logit_out receives the polarity logits of this evaluation.
template <class S>
Mat<S> p_sample_step(const DenoiserNet<S>& net, ParamStore<S>& ps, const Mat<S>& e_t,
                     const Mat<S>& pol_feat, const CondCache<S>& cond, int t,
                     const DiffusionSchedule& sched, Rng& rng, std::vector<S>* logit_out);

template <class S>
struct SampleResult {
  Mat<S> coords;           // n x 3, clamped to [-1,1]
  std::vector<S> polarity; // n entries, +-1
  int denoiser_evals = 0;
};

// Full T-step stochastic chain from Gaussian noise.
template <class S>
SampleResult<S> ancestral_sample(const DenoiserNet<S>& net, ParamStore<S>& ps,
                                 const CondCache<S>& cond, int n_out,
                                 const DiffusionSchedule& sched, Rng& rng);

// Deterministic second-order exponential-integrator sampler over a strictly
// decreasing grid of `steps` schedule times; at most 2*steps denoiser calls.
// Only the initial noise draw consumes randomness.
template <class S>
SampleResult<S> fast_sample(const DenoiserNet<S>& net, ParamStore<S>& ps,
                            const CondCache<S>& cond, int n_out, const DiffusionSchedule& sched,
                            int steps, Rng& rng);

#define EDR_DIFFUSION_DECL(S)                                                                  \
  extern template Mat<S> q_sample<S>(const Mat<S>&, int, const Mat<S>&,                        \
                                     const DiffusionSchedule&);                                \
  extern template LossResult<S> training_loss_frozen<S>(                                       \
      const DenoiserNet<S>&, ParamStore<S>&, GradStore<S>*, const Mat<S>&,                     \
      const std::vector<S>&, const Mat<S>&, const std::vector<S>&, int, const Mat<S>&,         \
      const std::vector<S>&, const DiffusionSchedule&, double);                                \
  extern template LossResult<S> training_loss<S>(                                              \
      const DenoiserNet<S>&, ParamStore<S>&, GradStore<S>*, const Mat<S>&,                     \
      const std::vector<S>&, const Mat<S>&, const std::vector<S>&, const DiffusionSchedule&,   \
      Rng&, double);                                                                           \
  extern template Mat<S> p_sample_step<S>(const DenoiserNet<S>&, ParamStore<S>&, const Mat<S>&, \
                                          const Mat<S>&, const CondCache<S>&, int,             \
                                          const DiffusionSchedule&, Rng&, std::vector<S>*);    \
  extern template SampleResult<S> ancestral_sample<S>(const DenoiserNet<S>&, ParamStore<S>&,   \
                                                      const CondCache<S>&, int,                \
                                                      const DiffusionSchedule&, Rng&);         \
  extern template SampleResult<S> fast_sample<S>(const DenoiserNet<S>&, ParamStore<S>&,        \
                                                 const CondCache<S>&, int,                     \
                                                 const DiffusionSchedule&, int, Rng&);

EDR_DIFFUSION_DECL(float)
EDR_DIFFUSION_DECL(double)
#undef EDR_DIFFUSION_DECL

}  // namespace edr
