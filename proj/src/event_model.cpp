#include "event_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "common.hpp"

namespace edr {

void validate(const SensorGeometry& g) {
  if (g.width < 2 || g.height < 2)
    throw std::invalid_argument("sensor geometry must be at least 2x2, got " +
                                std::to_string(g.width) + "x" + std::to_string(g.height));
}

void validate(const RawEventSlice& s) {
  validate(s.geometry);
  if (s.events.size() < 2) throw std::invalid_argument("slice needs at least 2 events");
  int64_t prev = s.events.front().t;
  for (const RawEvent& e : s.events) {
    if (e.x >= s.geometry.width || e.y >= s.geometry.height)
      throw std::invalid_argument("event coordinates outside sensor");
    if (e.p > 1) throw std::invalid_argument("polarity bit must be 0 or 1");
    if (e.t < prev) throw std::invalid_argument("events not sorted by timestamp");
    prev = e.t;
  }
  if (s.events.back().t <= s.events.front().t)
    throw std::invalid_argument("slice spans zero duration");
}

void validate(const EventCloud& c) {
  if (c.n < 1) throw std::invalid_argument("event cloud must contain at least one point");
  if (c.coords.size() != static_cast<size_t>(c.n) * 3 ||
      c.polarity.size() != static_cast<size_t>(c.n))
    throw std::invalid_argument("event cloud buffer sizes disagree with n");
  for (double v : c.coords)
    if (!(std::fabs(v) <= 1.0)) throw std::invalid_argument("cloud coordinate outside [-1,1]");
  for (double p : c.polarity)
    if (p != 1.0 && p != -1.0) throw std::invalid_argument("polarity feature must be -1 or +1");
}

std::vector<RawEventSlice> slice_stream(const std::vector<RawEvent>& events,
                                        const SensorGeometry& geometry, int n) {
  if (n < 2) throw std::invalid_argument("slice length must be >= 2");
  validate(geometry);
  std::vector<RawEventSlice> out;
  size_t full = events.size() / static_cast<size_t>(n);
  out.reserve(full);
  for (size_t s = 0; s < full; ++s) {
    RawEventSlice slice;
    slice.geometry = geometry;
    slice.events.assign(events.begin() + s * n, events.begin() + (s + 1) * n);
    if (slice.events.back().t <= slice.events.front().t) continue;  // degenerate, drop
    out.push_back(std::move(slice));
  }
  return out;
}

std::pair<EventCloud, TimeAnchor> normalize(const RawEventSlice& slice) {
  validate(slice);
  const int n = static_cast<int>(slice.events.size());
  const double wm1 = slice.geometry.width - 1;
  const double hm1 = slice.geometry.height - 1;
  TimeAnchor anchor{slice.events.front().t, slice.events.back().t};
  const double span = static_cast<double>(anchor.tn - anchor.t0);

  EventCloud cloud;
  cloud.n = n;
  cloud.coords.resize(static_cast<size_t>(n) * 3);
  cloud.polarity.resize(n);
  for (int i = 0; i < n; ++i) {
    const RawEvent& e = slice.events[i];
    cloud.coords[3 * i] = (e.x / wm1 - 0.5) * 2.0;
    cloud.coords[3 * i + 1] = (e.y / hm1 - 0.5) * 2.0;
    cloud.coords[3 * i + 2] = ((e.t - anchor.t0) / span - 0.5) * 2.0;
    cloud.polarity[i] = (e.p - 0.5) * 2.0;
  }
  return {std::move(cloud), anchor};
}

EventCloud normalize_with(const RawEventSlice& slice, const TimeAnchor& anchor) {
  validate(slice.geometry);
  if (anchor.tn <= anchor.t0) throw std::invalid_argument("anchor spans zero duration");
  if (slice.events.empty()) throw std::invalid_argument("cannot normalize an empty slice");
  const int n = static_cast<int>(slice.events.size());
  const double wm1 = slice.geometry.width - 1;
  const double hm1 = slice.geometry.height - 1;
  const double span = static_cast<double>(anchor.tn - anchor.t0);

  EventCloud cloud;
  cloud.n = n;
  cloud.coords.resize(static_cast<size_t>(n) * 3);
  cloud.polarity.resize(n);
  for (int i = 0; i < n; ++i) {
    const RawEvent& e = slice.events[i];
    if (e.x >= slice.geometry.width || e.y >= slice.geometry.height || e.p > 1 ||
        e.t < anchor.t0 || e.t > anchor.tn)
      throw std::invalid_argument("event outside sensor or anchor span");
    cloud.coords[3 * i] = (e.x / wm1 - 0.5) * 2.0;
    cloud.coords[3 * i + 1] = (e.y / hm1 - 0.5) * 2.0;
    cloud.coords[3 * i + 2] = ((e.t - anchor.t0) / span - 0.5) * 2.0;
    cloud.polarity[i] = (e.p - 0.5) * 2.0;
  }
  return cloud;
}

namespace {

int64_t round_clamped(double v, int64_t lo, int64_t hi) {
  int64_t r = std::llround(v);
  return std::clamp(r, lo, hi);
}

}  // namespace

RawEventSlice denormalize(const EventCloud& cloud, const SensorGeometry& geometry,
                          const TimeAnchor& anchor) {
  validate(cloud);
  validate(geometry);
  if (anchor.tn <= anchor.t0) throw std::invalid_argument("anchor spans zero duration");

  const double wm1 = geometry.width - 1;
  const double hm1 = geometry.height - 1;
  const double span = static_cast<double>(anchor.tn - anchor.t0);

  RawEventSlice out;
  out.geometry = geometry;
  out.events.resize(cloud.n);
  for (int i = 0; i < cloud.n; ++i) {
    RawEvent& e = out.events[i];
    e.x = static_cast<uint16_t>(round_clamped((cloud.x(i) / 2.0 + 0.5) * wm1, 0, geometry.width - 1));
    e.y = static_cast<uint16_t>(round_clamped((cloud.y(i) / 2.0 + 0.5) * hm1, 0, geometry.height - 1));
    e.t = anchor.t0 + std::llround((cloud.t(i) / 2.0 + 0.5) * span);
    e.p = cloud.polarity[i] > 0.0 ? 1 : 0;
  }
  std::sort(out.events.begin(), out.events.end(), [](const RawEvent& a, const RawEvent& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.p < b.p;
  });
  return out;
}

std::vector<int> subsample_indices(int n, int m, uint64_t seed) {
  if (m < 1 || m > n) throw std::invalid_argument("subsample target must satisfy 1 <= m <= n");
  // partial Fisher-Yates: the first m entries are a uniform m-subset
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (int i = 0; i < m; ++i) {
    int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

EventCloud subsample(const EventCloud& cloud, int m, uint64_t seed) {
  validate(cloud);
  std::vector<int> keep = subsample_indices(cloud.n, m, seed);
  EventCloud out;
  out.n = m;
  out.coords.resize(static_cast<size_t>(m) * 3);
  out.polarity.resize(m);
  for (int i = 0; i < m; ++i) {
    out.coords[3 * i] = cloud.coords[3 * keep[i]];
    out.coords[3 * i + 1] = cloud.coords[3 * keep[i] + 1];
    out.coords[3 * i + 2] = cloud.coords[3 * keep[i] + 2];
    out.polarity[i] = cloud.polarity[keep[i]];
  }
  return out;
}

}  // namespace edr
