#pragma once

#include <vector>

#include "event_model.hpp"

namespace edr {

// Distances operate on 3D coordinates only; polarity never enters the cost.

// Symmetric mean of squared nearest-neighbor distances.
double chamfer(const EventCloud& x, const EventCloud& e);

// Exact gradient of chamfer w.r.t. the coordinates of x, holding the
// nearest-neighbor assignment fixed (lowest-index ties). Returns |x| * 3.
std::vector<double> chamfer_gradient(const EventCloud& x, const EventCloud& e);

// Mean-normalized minimal bijection transport cost (Euclidean), solved
// exactly as an assignment problem. Sizes must match and stay within cap.
double emd_exact(const EventCloud& x, const EventCloud& e, int cap = 512);

// Auction estimate of emd_exact with epsilon scaling. Runs at most `iters`
// phases, each shrinking epsilon by 5x from a cost-scaled start, stopping at
// `epsilon`. Returns the best assignment found, so the result is monotone
// non-increasing in `iters` and lies in [emd_exact, emd_exact + eps_final],
// where eps_final is the last phase's epsilon (mean form).
double emd_approx(const EventCloud& x, const EventCloud& e, double epsilon = 1e-6,
                  int iters = 12);

// -- raw-buffer cores (n*3 row-major) ----------------------------------------

template <class S>
S chamfer_raw(const S* x, int nx, const S* e, int ne);

// grad_x must hold nx*3 entries; it is overwritten. Returns the loss.
template <class S>
S chamfer_gradient_raw(const S* x, int nx, const S* e, int ne, S* grad_x);

// Minimum-cost assignment on a dense square cost matrix (row-major n*n).
// Returns the total cost and fills row_to_col.
double solve_assignment(const std::vector<double>& cost, int n, std::vector<int>& row_to_col);

extern template float chamfer_raw<float>(const float*, int, const float*, int);
extern template double chamfer_raw<double>(const double*, int, const double*, int);
extern template float chamfer_gradient_raw<float>(const float*, int, const float*, int, float*);
extern template double chamfer_gradient_raw<double>(const double*, int, const double*, int,
                                                    double*);

}  // namespace edr
