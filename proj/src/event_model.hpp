#pragma once

#include <cstdint>
#include <vector>

namespace edr {

// One sensor event: pixel location, microsecond timestamp, polarity bit.
struct RawEvent {
  uint16_t x = 0;
  uint16_t y = 0;
  int64_t t = 0;  // microseconds
  uint8_t p = 0;  // 0 or 1

  bool operator==(const RawEvent&) const = default;
};

struct SensorGeometry {
  int width = 0;
  int height = 0;

  bool operator==(const SensorGeometry&) const = default;
};

// A fixed-length run of events, sorted by timestamp, spanning a nonzero
// duration. This is the unit the rest of the pipeline operates on.
struct RawEventSlice {
  std::vector<RawEvent> events;
  SensorGeometry geometry;
};

// First/last timestamp of the slice a cloud was normalized from. Needed to
// map generated clouds back to integer event tuples.
struct TimeAnchor {
  int64_t t0 = 0;
  int64_t tn = 0;
};

// N points in [-1,1]^3 with a +-1 polarity feature per point.
struct EventCloud {
  int n = 0;
  std::vector<double> coords;    // n*3 row-major: x, y, t
  std::vector<double> polarity;  // n entries, each exactly -1 or +1

  double x(int i) const { return coords[3 * i]; }
  double y(int i) const { return coords[3 * i + 1]; }
  double t(int i) const { return coords[3 * i + 2]; }
};

// Throw std::invalid_argument if the type invariants do not hold.
void validate(const SensorGeometry& g);
void validate(const RawEventSlice& s);
void validate(const EventCloud& c);

// Cut a sorted event stream into consecutive slices of exactly n events.
// A trailing remainder shorter than n is dropped; slices whose events all
// share one timestamp are discarded.
std::vector<RawEventSlice> slice_stream(const std::vector<RawEvent>& events,
                                        const SensorGeometry& geometry, int n);

// Map a slice onto the normalized cube: x,y by pixel count, t by duration,
// polarity {0,1} -> {-1,+1}.
std::pair<EventCloud, TimeAnchor> normalize(const RawEventSlice& slice);

// Inverse of normalize. Coordinates are rounded to the nearest lattice point
// (clamped to the sensor), timestamps to the nearest microsecond within the
// anchor span. Output is sorted by t with ties broken by (y, x, p).
RawEventSlice denormalize(const EventCloud& cloud, const SensorGeometry& geometry,
                          const TimeAnchor& anchor);

// Normalization against an externally supplied anchor, for events that came
// out of denormalize() with that anchor (cached coarse slices). Unlike
// normalize(), the slice may span less than the anchor and may have any
// length >= 1; every timestamp must lie within the anchor span.
EventCloud normalize_with(const RawEventSlice& slice, const TimeAnchor& anchor);

// Keep m points chosen uniformly at random without replacement, preserving
// relative order.
EventCloud subsample(const EventCloud& cloud, int m, uint64_t seed);

// Index form of subsample, for callers that need the selection itself.
std::vector<int> subsample_indices(int n, int m, uint64_t seed);

}  // namespace edr
