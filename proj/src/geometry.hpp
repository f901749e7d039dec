#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "event_model.hpp"

namespace edr {

// Axis-aligned neighbor box: half-extent r along x and y, r * t_scale along t.
struct CuboidSpec {
  double r = 0.1;
  double t_scale = 1.0;
  int max_k = 16;
};

inline void validate(const CuboidSpec& s) {
  if (!(s.r > 0.0) || !(s.t_scale > 0.0) || s.max_k < 1)
    throw std::invalid_argument("cuboid spec requires r > 0, t_scale > 0, max_k >= 1");
}

// Points are n*3 row-major throughout. All queries are linear scans in
// ascending index order, which doubles as the truncation and tie rule.

template <class S>
std::vector<int> cuboid_query_t(const S* pts, int n, const S* center, double r,
                                double t_scale, int max_k) {
  std::vector<int> out;
  const S rx = static_cast<S>(r);
  const S rt = static_cast<S>(r * t_scale);
  for (int i = 0; i < n && static_cast<int>(out.size()) < max_k; ++i) {
    const S* p = pts + 3 * i;
    if (std::abs(p[0] - center[0]) <= rx && std::abs(p[1] - center[1]) <= rx &&
        std::abs(p[2] - center[2]) <= rt)
      out.push_back(i);
  }
  if (!out.empty()) return out;
  // nothing inside the box: fall back to the single nearest point under the
  // box-scaled metric so callers always have something to aggregate
  int best = 0;
  S best_d = std::numeric_limits<S>::infinity();
  for (int i = 0; i < n; ++i) {
    const S* p = pts + 3 * i;
    S dx = (p[0] - center[0]) / rx;
    S dy = (p[1] - center[1]) / rx;
    S dt = (p[2] - center[2]) / rt;
    S d = dx * dx + dy * dy + dt * dt;
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  out.push_back(best);
  return out;
}

template <class S>
std::vector<int> ball_query_t(const S* pts, int n, const S* center, double radius, int max_k) {
  std::vector<int> out;
  const S r2 = static_cast<S>(radius) * static_cast<S>(radius);
  for (int i = 0; i < n && static_cast<int>(out.size()) < max_k; ++i) {
    const S* p = pts + 3 * i;
    S dx = p[0] - center[0], dy = p[1] - center[1], dt = p[2] - center[2];
    if (dx * dx + dy * dy + dt * dt <= r2) out.push_back(i);
  }
  if (!out.empty()) return out;
  int best = 0;
  S best_d = std::numeric_limits<S>::infinity();
  for (int i = 0; i < n; ++i) {
    const S* p = pts + 3 * i;
    S dx = p[0] - center[0], dy = p[1] - center[1], dt = p[2] - center[2];
    S d = dx * dx + dy * dy + dt * dt;
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  out.push_back(best);
  return out;
}

// Greedy farthest point sampling in selection order. Ties pick the lowest
// index; m == n yields a permutation of all indices.
template <class S>
std::vector<int> fps_t(const S* pts, int n, int m, int start) {
  if (m < 1 || m > n) throw std::invalid_argument("fps requires 1 <= m <= n");
  if (start < 0 || start >= n) throw std::invalid_argument("fps start index out of range");
  std::vector<int> picked;
  picked.reserve(m);
  std::vector<S> min_d(n, std::numeric_limits<S>::infinity());
  int cur = start;
  for (int round = 0; round < m; ++round) {
    picked.push_back(cur);
    const S* c = pts + 3 * cur;
    int next = -1;
    S far_d = -1;
    for (int i = 0; i < n; ++i) {
      const S* p = pts + 3 * i;
      S dx = p[0] - c[0], dy = p[1] - c[1], dt = p[2] - c[2];
      S d = dx * dx + dy * dy + dt * dt;
      if (d < min_d[i]) min_d[i] = d;
      if (min_d[i] > far_d) {
        far_d = min_d[i];
        next = i;
      }
    }
    cur = next;
  }
  return picked;
}

// k nearest neighbors by Euclidean distance, ascending distance, ties by
// lowest index. Returns (index, distance) pairs.
template <class S>
std::vector<std::pair<int, S>> knn_t(const S* pts, int n, const S* query, int k) {
  if (k < 1 || k > n) throw std::invalid_argument("knn requires 1 <= k <= n");
  std::vector<std::pair<S, int>> d2(n);
  for (int i = 0; i < n; ++i) {
    const S* p = pts + 3 * i;
    S dx = p[0] - query[0], dy = p[1] - query[1], dt = p[2] - query[2];
    d2[i] = {dx * dx + dy * dy + dt * dt, i};
  }
  std::partial_sort(d2.begin(), d2.begin() + k, d2.end());
  std::vector<std::pair<int, S>> out(k);
  for (int i = 0; i < k; ++i) out[i] = {d2[i].second, std::sqrt(d2[i].first)};
  return out;
}

// index of the point nearest the centroid (used to pin the fps start)
template <class S>
int centroid_nearest_t(const S* pts, int n) {
  S cx = 0, cy = 0, ct = 0;
  for (int i = 0; i < n; ++i) {
    cx += pts[3 * i];
    cy += pts[3 * i + 1];
    ct += pts[3 * i + 2];
  }
  cx /= n;
  cy /= n;
  ct /= n;
  int best = 0;
  S best_d = std::numeric_limits<S>::infinity();
  for (int i = 0; i < n; ++i) {
    S dx = pts[3 * i] - cx, dy = pts[3 * i + 1] - cy, dt = pts[3 * i + 2] - ct;
    S d = dx * dx + dy * dy + dt * dt;
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

// -- EventCloud-facing wrappers ----------------------------------------------

std::vector<int> cuboid_query(const EventCloud& cloud, const double center[3],
                              const CuboidSpec& spec);
std::vector<int> ball_query(const EventCloud& cloud, const double center[3], double radius,
                            int max_k);
std::vector<int> farthest_point_sample(const EventCloud& cloud, int m, int start = 0);
std::vector<std::pair<int, double>> knn(const EventCloud& cloud, const double query[3], int k);

}  // namespace edr
