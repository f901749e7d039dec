#include "diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace edr {

DiffusionSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("schedule needs at least one step");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw std::invalid_argument("betas must satisfy 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.steps = T;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  s.sigma2.resize(T);
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    double frac = T == 1 ? 0.0 : static_cast<double>(i) / (T - 1);
    s.beta[i] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[i] = 1.0 - s.beta[i];
    double abar_prev = prod;
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
    s.sigma2[i] = (1.0 - abar_prev) / (1.0 - s.alpha_bar[i]) * s.beta[i];
  }
  return s;
}

namespace {

void check_t(int t, const DiffusionSchedule& sched) {
  if (t < 1 || t > sched.steps) throw std::invalid_argument("diffusion step out of range");
}

template <class S>
Mat<S> column(const std::vector<S>& v) {
  Mat<S> m(static_cast<int>(v.size()), 1);
  m.v = v;
  return m;
}

template <class S>
Mat<S> randn_mat(int rows, int cols, Rng& rng) {
  Mat<S> m(rows, cols);
  for (size_t i = 0; i < m.size(); ++i) m.v[i] = static_cast<S>(rng.normal());
  return m;
}

template <class S>
std::vector<S> random_polarity(int n, Rng& rng) {
  std::vector<S> p(n);
  for (int i = 0; i < n; ++i) p[i] = rng.below(2) ? S(1) : S(-1);
  return p;
}

}  // namespace

template <class S>
Mat<S> q_sample(const Mat<S>& e0, int t, const Mat<S>& eps, const DiffusionSchedule& sched) {
  check_t(t, sched);
  if (eps.rows != e0.rows || eps.cols != e0.cols)
    throw std::invalid_argument("q_sample noise shape mismatch");
  const S a = static_cast<S>(std::sqrt(sched.alpha_bar[t - 1]));
  const S b = static_cast<S>(std::sqrt(1.0 - sched.alpha_bar[t - 1]));
  Mat<S> out(e0.rows, e0.cols);
  for (size_t i = 0; i < out.size(); ++i) out.v[i] = a * e0.v[i] + b * eps.v[i];
  return out;
}

template <class S>
LossResult<S> training_loss_frozen(const DenoiserNet<S>& net, ParamStore<S>& ps,
                                   GradStore<S>* grads, const Mat<S>& e0,
                                   const std::vector<S>& e0_pol, const Mat<S>& cond,
                                   const std::vector<S>& cond_pol, int t, const Mat<S>& eps,
                                   const std::vector<S>& noisy_pol,
                                   const DiffusionSchedule& sched, double polarity_weight) {
  check_t(t, sched);
  Mat<S> e_t = q_sample(e0, t, eps, sched);

  Tape<S> tape;
  int out = net.build(tape, ps, grads, e_t, column(noisy_pol), cond, column(cond_pol), t);
  int noise_pred = tape.slice_cols(out, 0, 3);
  int mse = tape.mse_against(noise_pred, eps);

  Mat<S> targets(static_cast<int>(e0_pol.size()), 1);
  for (size_t i = 0; i < e0_pol.size(); ++i) targets.v[i] = e0_pol[i] > 0 ? S(1) : S(0);
  int logit = tape.slice_cols(out, 3, 4);
  int bce = tape.bce_logits_against(logit, std::move(targets));

  int loss = tape.add(mse, tape.scale(bce, static_cast<S>(polarity_weight)));
  if (grads) tape.backward(loss);

  LossResult<S> r;
  r.loss = static_cast<double>(tape.val(loss).v[0]);
  r.coord_loss = static_cast<double>(tape.val(mse).v[0]);
  r.polarity_loss = static_cast<double>(tape.val(bce).v[0]);
  r.t = t;
  if (!std::isfinite(r.loss)) throw NumericError("non-finite diffusion training loss");
  return r;
}

template <class S>
LossResult<S> training_loss(const DenoiserNet<S>& net, ParamStore<S>& ps, GradStore<S>* grads,
                            const Mat<S>& e0, const std::vector<S>& e0_pol, const Mat<S>& cond,
                            const std::vector<S>& cond_pol, const DiffusionSchedule& sched,
                            Rng& rng, double polarity_weight) {
  int t = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(sched.steps)));
  Mat<S> eps = randn_mat<S>(e0.rows, 3, rng);
  std::vector<S> noisy_pol = random_polarity<S>(e0.rows, rng);
  return training_loss_frozen(net, ps, grads, e0, e0_pol, cond, cond_pol, t, eps, noisy_pol,
                              sched, polarity_weight);
}

template <class S>
Mat<S> p_sample_step(const DenoiserNet<S>& net, ParamStore<S>& ps, const Mat<S>& e_t,
                     const Mat<S>& pol_feat, const CondCache<S>& cond, int t,
                     const DiffusionSchedule& sched, Rng& rng, std::vector<S>* logit_out) {
  check_t(t, sched);
  DenoiserOutput<S> out = net.forward(ps, e_t, pol_feat, cond, t);
  if (logit_out) *logit_out = out.logit;

  const double abar = sched.alpha_bar[t - 1];
  const S inv_sqrt_alpha = static_cast<S>(1.0 / std::sqrt(sched.alpha[t - 1]));
  const S noise_coef = static_cast<S>(sched.beta[t - 1] / std::sqrt(1.0 - abar));
  const S sigma = static_cast<S>(std::sqrt(sched.sigma2[t - 1]));

  Mat<S> prev(e_t.rows, e_t.cols);
  for (size_t i = 0; i < prev.size(); ++i)
    prev.v[i] = inv_sqrt_alpha * (e_t.v[i] - noise_coef * out.noise.v[i]);
  if (t > 1)
    for (size_t i = 0; i < prev.size(); ++i) prev.v[i] += sigma * static_cast<S>(rng.normal());
  return prev;
}

namespace {

template <class S>
void finalize_sample(SampleResult<S>& res, const std::vector<S>& logits) {
  for (size_t i = 0; i < res.coords.size(); ++i)
    res.coords.v[i] = std::clamp(res.coords.v[i], S(-1), S(1));
  res.polarity.resize(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) res.polarity[i] = logits[i] >= 0 ? S(1) : S(-1);
}

}  // namespace

template <class S>
SampleResult<S> ancestral_sample(const DenoiserNet<S>& net, ParamStore<S>& ps,
                                 const CondCache<S>& cond, int n_out,
                                 const DiffusionSchedule& sched, Rng& rng) {
  if (n_out < 1) throw std::invalid_argument("sample size must be positive");
  SampleResult<S> res;
  res.coords = randn_mat<S>(n_out, 3, rng);
  Mat<S> pol_feat = column(random_polarity<S>(n_out, rng));
  std::vector<S> logits;
  for (int t = sched.steps; t >= 1; --t) {
    res.coords = p_sample_step(net, ps, res.coords, pol_feat, cond, t, sched, rng, &logits);
    ++res.denoiser_evals;
  }
  finalize_sample(res, logits);
  return res;
}

namespace {

// half log-SNR; strictly decreasing in t
inline double lambda_of(const DiffusionSchedule& sched, int t) {
  double abar = sched.alpha_bar[t - 1];
  return 0.5 * std::log(abar / (1.0 - abar));
}

// integer schedule time whose lambda is closest to the target, searched
// within [lo, hi]
inline int nearest_time_for_lambda(const DiffusionSchedule& sched, double target, int lo,
                                   int hi) {
  int best = lo;
  double best_d = std::abs(lambda_of(sched, lo) - target);
  for (int t = lo + 1; t <= hi; ++t) {
    double d = std::abs(lambda_of(sched, t) - target);
    if (d < best_d) {
      best_d = d;
      best = t;
    }
  }
  return best;
}

// deterministic exponential-integrator update s -> t with a fixed noise estimate
template <class S>
void ddim_update(Mat<S>& x, const Mat<S>& eps_hat, const DiffusionSchedule& sched, int s, int t) {
  double as = std::sqrt(sched.alpha_bar[s - 1]), ss = std::sqrt(1.0 - sched.alpha_bar[s - 1]);
  double at = std::sqrt(sched.alpha_bar[t - 1]), st = std::sqrt(1.0 - sched.alpha_bar[t - 1]);
  const S ca = static_cast<S>(at / as);
  const S cb = static_cast<S>(st - at / as * ss);
  for (size_t i = 0; i < x.size(); ++i) x.v[i] = ca * x.v[i] + cb * eps_hat.v[i];
}

}  // namespace

template <class S>
SampleResult<S> fast_sample(const DenoiserNet<S>& net, ParamStore<S>& ps,
                            const CondCache<S>& cond, int n_out, const DiffusionSchedule& sched,
                            int steps, Rng& rng) {
  if (n_out < 1) throw std::invalid_argument("sample size must be positive");
  if (steps < 1 || steps > sched.steps)
    throw std::invalid_argument("fast sampler steps must satisfy 1 <= steps <= T");

  // strictly decreasing integer grid from T down to 1
  std::vector<int> grid;
  for (int j = 0; j < steps; ++j) {
    double f = steps == 1 ? 0.0 : static_cast<double>(j) / (steps - 1);
    int t = static_cast<int>(std::lround(sched.steps - f * (sched.steps - 1)));
    if (grid.empty() || t < grid.back()) grid.push_back(t);
  }

  SampleResult<S> res;
  res.coords = randn_mat<S>(n_out, 3, rng);
  Mat<S> pol_feat = column(random_polarity<S>(n_out, rng));

  for (size_t j = 0; j + 1 < grid.size(); ++j) {
    int s = grid[j], t = grid[j + 1];
    DenoiserOutput<S> out_s = net.forward(ps, res.coords, pol_feat, cond, s);
    ++res.denoiser_evals;
    int m = nearest_time_for_lambda(sched, 0.5 * (lambda_of(sched, s) + lambda_of(sched, t)), t, s);
    if (m == s || m == t) {
      // degenerate midpoint (adjacent grid times): plain first-order update
      ddim_update(res.coords, out_s.noise, sched, s, t);
      continue;
    }
    Mat<S> x_mid = res.coords;
    ddim_update(x_mid, out_s.noise, sched, s, m);
    DenoiserOutput<S> out_m = net.forward(ps, x_mid, pol_feat, cond, m);
    ++res.denoiser_evals;
    ddim_update(res.coords, out_m.noise, sched, s, t);
  }

  // final projection to the clean state from the last grid time
  int tau = grid.back();
  DenoiserOutput<S> out_last = net.forward(ps, res.coords, pol_feat, cond, tau);
  ++res.denoiser_evals;
  double a = std::sqrt(sched.alpha_bar[tau - 1]), b = std::sqrt(1.0 - sched.alpha_bar[tau - 1]);
  for (size_t i = 0; i < res.coords.size(); ++i)
    res.coords.v[i] = static_cast<S>((res.coords.v[i] - static_cast<S>(b) * out_last.noise.v[i]) /
                                     static_cast<S>(a));
  finalize_sample(res, out_last.logit);
  return res;
}

#define EDR_DIFFUSION_IMPL(S)                                                                  \
  template Mat<S> q_sample<S>(const Mat<S>&, int, const Mat<S>&, const DiffusionSchedule&);    \
  template LossResult<S> training_loss_frozen<S>(                                              \
      const DenoiserNet<S>&, ParamStore<S>&, GradStore<S>*, const Mat<S>&,                     \
      const std::vector<S>&, const Mat<S>&, const std::vector<S>&, int, const Mat<S>&,         \
      const std::vector<S>&, const DiffusionSchedule&, double);                                \
  template LossResult<S> training_loss<S>(                                                     \
      const DenoiserNet<S>&, ParamStore<S>&, GradStore<S>*, const Mat<S>&,                     \
      const std::vector<S>&, const Mat<S>&, const std::vector<S>&, const DiffusionSchedule&,   \
      Rng&, double);                                                                           \
  template Mat<S> p_sample_step<S>(const DenoiserNet<S>&, ParamStore<S>&, const Mat<S>&,       \
                                   const Mat<S>&, const CondCache<S>&, int,                    \
                                   const DiffusionSchedule&, Rng&, std::vector<S>*);           \
  template SampleResult<S> ancestral_sample<S>(const DenoiserNet<S>&, ParamStore<S>&,          \
                                               const CondCache<S>&, int,                       \
                                               const DiffusionSchedule&, Rng&);                \
  template SampleResult<S> fast_sample<S>(const DenoiserNet<S>&, ParamStore<S>&,               \
                                          const CondCache<S>&, int, const DiffusionSchedule&,  \
                                          int, Rng&);

EDR_DIFFUSION_IMPL(float)
EDR_DIFFUSION_IMPL(double)
#undef EDR_DIFFUSION_IMPL

}  // namespace edr
