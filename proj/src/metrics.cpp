#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace edr {

namespace {

template <class S>
inline S sqdist(const S* a, const S* b) {
  S dx = a[0] - b[0], dy = a[1] - b[1], dt = a[2] - b[2];
  return dx * dx + dy * dy + dt * dt;
}

// nearest index in e for point a, lowest index on ties
template <class S>
inline int nearest(const S* a, const S* e, int ne, S* d_out) {
  int best = 0;
  S best_d = sqdist(a, e);
  for (int j = 1; j < ne; ++j) {
    S d = sqdist(a, e + 3 * j);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  *d_out = best_d;
  return best;
}

}  // namespace

template <class S>
S chamfer_raw(const S* x, int nx, const S* e, int ne) {
  S acc_x = 0;
  for (int i = 0; i < nx; ++i) {
    S d;
    nearest(x + 3 * i, e, ne, &d);
    acc_x += d;
  }
  S acc_e = 0;
  for (int j = 0; j < ne; ++j) {
    S d;
    nearest(e + 3 * j, x, nx, &d);
    acc_e += d;
  }
  return acc_x / nx + acc_e / ne;
}

template <class S>
S chamfer_gradient_raw(const S* x, int nx, const S* e, int ne, S* grad_x) {
  std::fill(grad_x, grad_x + 3 * nx, S(0));
  S acc = 0;
  for (int i = 0; i < nx; ++i) {
    S d;
    int j = nearest(x + 3 * i, e, ne, &d);
    acc += d / nx;
    for (int k = 0; k < 3; ++k)
      grad_x[3 * i + k] += S(2) / nx * (x[3 * i + k] - e[3 * j + k]);
  }
  for (int j = 0; j < ne; ++j) {
    S d;
    int i = nearest(e + 3 * j, x, nx, &d);
    acc += d / ne;
    for (int k = 0; k < 3; ++k)
      grad_x[3 * i + k] += S(2) / ne * (x[3 * i + k] - e[3 * j + k]);
  }
  return acc;
}

template float chamfer_raw<float>(const float*, int, const float*, int);
template double chamfer_raw<double>(const double*, int, const double*, int);
template float chamfer_gradient_raw<float>(const float*, int, const float*, int, float*);
template double chamfer_gradient_raw<double>(const double*, int, const double*, int, double*);

double chamfer(const EventCloud& x, const EventCloud& e) {
  if (x.n < 1 || e.n < 1) throw std::invalid_argument("chamfer requires non-empty clouds");
  return chamfer_raw(x.coords.data(), x.n, e.coords.data(), e.n);
}

std::vector<double> chamfer_gradient(const EventCloud& x, const EventCloud& e) {
  if (x.n < 1 || e.n < 1) throw std::invalid_argument("chamfer requires non-empty clouds");
  std::vector<double> grad(static_cast<size_t>(x.n) * 3);
  chamfer_gradient_raw(x.coords.data(), x.n, e.coords.data(), e.n, grad.data());
  return grad;
}

// Shortest-augmenting-path Kuhn-Munkres with potentials, O(n^3).
double solve_assignment(const std::vector<double>& cost, int n, std::vector<int>& row_to_col) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  row_to_col.assign(n, -1);
  double total = 0.0;
  for (int j = 1; j <= n; ++j) {
    if (p[j] == 0) continue;
    row_to_col[p[j] - 1] = j - 1;
    total += cost[(p[j] - 1) * n + (j - 1)];
  }
  return total;
}

namespace {

double euclid(const EventCloud& x, int i, const EventCloud& e, int j) {
  double dx = x.coords[3 * i] - e.coords[3 * j];
  double dy = x.coords[3 * i + 1] - e.coords[3 * j + 1];
  double dt = x.coords[3 * i + 2] - e.coords[3 * j + 2];
  return std::sqrt(dx * dx + dy * dy + dt * dt);
}

}  // namespace

double emd_exact(const EventCloud& x, const EventCloud& e, int cap) {
  if (x.n < 1 || e.n < 1) throw std::invalid_argument("emd requires non-empty clouds");
  if (x.n != e.n) throw std::invalid_argument("emd requires equal-size clouds");
  if (x.n > cap)
    throw std::invalid_argument("emd_exact size " + std::to_string(x.n) + " exceeds cap " +
                                std::to_string(cap) + "; use emd_approx");
  const int n = x.n;
  std::vector<double> cost(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost[i * n + j] = euclid(x, i, e, j);
  std::vector<int> assign;
  return solve_assignment(cost, n, assign) / n;
}

double emd_approx(const EventCloud& x, const EventCloud& e, double epsilon, int iters) {
  if (x.n < 1 || e.n < 1) throw std::invalid_argument("emd requires non-empty clouds");
  if (x.n != e.n) throw std::invalid_argument("emd requires equal-size clouds");
  if (iters < 1) throw std::invalid_argument("emd_approx requires iters >= 1");
  const int n = x.n;

  double max_cost = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) max_cost = std::max(max_cost, euclid(x, i, e, j));
  if (max_cost == 0.0) return 0.0;

  std::vector<double> price(n, 0.0);
  std::vector<int> owner(n), assign(n);
  double best = std::numeric_limits<double>::infinity();
  double eps = max_cost / 4.0;
  for (int phase = 0; phase < iters; ++phase) {
    eps = std::max(eps, epsilon);
    std::fill(owner.begin(), owner.end(), -1);
    std::fill(assign.begin(), assign.end(), -1);
    std::vector<int> queue(n);
    for (int i = 0; i < n; ++i) queue[i] = i;
    while (!queue.empty()) {
      int i = queue.back();
      queue.pop_back();
      // best and second-best net value over all objects
      int j1 = -1;
      double w1 = std::numeric_limits<double>::infinity();
      double w2 = std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j) {
        double c = euclid(x, i, e, j) + price[j];
        if (c < w1) {
          w2 = w1;
          w1 = c;
          j1 = j;
        } else if (c < w2) {
          w2 = c;
        }
      }
      double bump = (n == 1 ? 0.0 : w2 - w1) + eps;
      price[j1] += bump;
      if (owner[j1] >= 0) {
        assign[owner[j1]] = -1;
        queue.push_back(owner[j1]);
      }
      owner[j1] = i;
      assign[i] = j1;
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += euclid(x, i, e, assign[i]);
    best = std::min(best, total);
    if (eps <= epsilon) break;
    eps /= 5.0;
  }
  return best / n;
}

}  // namespace edr
