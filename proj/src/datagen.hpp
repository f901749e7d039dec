#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "event_model.hpp"

namespace edr {

// Moving scene primitives rendered as a smooth log-brightness field. Events
// fire where the field sweeps past pixels.
struct SceneObject {
  enum class Kind { TranslatingBar, RotatingBar, ExpandingDisk, Stroke };
  Kind kind = Kind::TranslatingBar;
  double contrast = 0.8;  // log-brightness amplitude
  double x0 = 0, y0 = 0;  // center at t=0 (pixels)
  double vx = 0, vy = 0;  // translation velocity (px/us)
  double half_len = 8;    // bar half-length / disk radius at t=0
  double half_wid = 1.5;  // bar half-width / ring half-thickness
  double angle0 = 0;      // initial orientation (rad)
  double omega = 0;       // angular velocity (rad/us)
  double growth = 0;      // disk radial velocity (px/us)
  std::vector<double> poly;  // stroke polyline, (x,y) pairs relative to center
};

struct SceneSpec {
  SensorGeometry geometry;
  int64_t duration_us = 0;
  double background = 0.0;
  std::vector<SceneObject> objects;
};

struct CaptureSpec {
  double threshold = 0.2;      // log-brightness units
  int64_t refractory_us = 100; // per-pixel dead time
  int64_t frame_dt_us = 500;   // simulation step
};

void validate(const SceneSpec& s);
void validate(const CaptureSpec& c);

// Threshold-crossing event simulation. Per pixel the reference level steps by
// +-threshold per emitted event; a jump of k thresholds within one step emits
// k events with linearly interpolated timestamps. Events landing inside the
// refractory window are dropped but still advance the reference level.
// The seed is reserved for stochastic capture settings; the current model is
// deterministic.
std::vector<RawEvent> simulate_events(const SceneSpec& scene, const CaptureSpec& capture,
                                      uint64_t seed);

// Seeded scene with 1-3 random moving primitives sized for the sensor.
SceneSpec random_scene(const SensorGeometry& geometry, int64_t duration_us, uint64_t seed);

// -- training pairs -----------------------------------------------------------

struct CloudPair {
  EventCloud sparse;
  EventCloud dense;
  TimeAnchor anchor;
};

// slice at n_dense, normalize, subsample each slice to n_sparse. The per-slice
// subsample seed is derive_seed(seed, slice_index).
std::vector<CloudPair> build_pairs(const std::vector<RawEvent>& events,
                                   const SensorGeometry& geometry, int n_dense, int n_sparse,
                                   uint64_t seed);

// On-disk dataset: raw dense slices plus the sparse selection, so pairs
// rebuild bit-exactly.
struct PairRecord {
  uint64_t id = 0;
  RawEventSlice dense;
  std::vector<uint32_t> sparse_idx;  // ascending indices into dense
};

struct PairDataset {
  SensorGeometry geometry;
  int n_dense = 0;
  int n_sparse = 0;
  std::vector<PairRecord> records;
};

CloudPair to_clouds(const PairRecord& rec);

void write_pairs(const PairDataset& ds, const std::string& path);
PairDataset read_pairs(const std::string& path);

// -- event container formats --------------------------------------------------

// EVCL: 'EVCL', u16 W, u16 H, u64 count, then u16 x, u16 y, i64 t, u8 p per
// event, all little-endian.
void write_evcl(std::ostream& os, const std::vector<RawEvent>& events,
                const SensorGeometry& geometry);
void write_evcl_file(const std::string& path, const std::vector<RawEvent>& events,
                     const SensorGeometry& geometry);
std::vector<RawEvent> read_evcl(std::istream& is, SensorGeometry& geometry);
std::vector<RawEvent> read_evcl_file(const std::string& path, SensorGeometry& geometry);

// CSV: header line "# W=<w> H=<h>", then "t,x,y,p" per line.
void write_csv_file(const std::string& path, const std::vector<RawEvent>& events,
                    const SensorGeometry& geometry);
std::vector<RawEvent> read_csv_file(const std::string& path, SensorGeometry& geometry);

// N-MNIST 5-byte records: x, y, polarity bit 7 of byte 2, 23-bit microsecond
// timestamp. Geometry is fixed at 34x34.
std::vector<RawEvent> read_nmnist_bin(const std::string& path, SensorGeometry& geometry);

// Reads any of the supported event containers, picking the decoder by file
// extension (.evcl, .csv, .bin).
std::vector<RawEvent> read_events_auto(const std::string& path, SensorGeometry& geometry);

// -- coarse sample cache -------------------------------------------------------
// One EVCL block per sample appended to a single container, with a text
// sidecar "<path>.idx" listing "<sample id> <byte offset>" per line.

class CoarseCacheWriter {
 public:
  explicit CoarseCacheWriter(const std::string& path);
  ~CoarseCacheWriter();
  void append(uint64_t id, const std::vector<RawEvent>& events, const SensorGeometry& geometry);
  void close();

 private:
  std::string path_;
  std::string index_;
  void* os_ = nullptr;  // std::ofstream, kept opaque to the header
};

class CoarseCache {
 public:
  explicit CoarseCache(const std::string& path);
  bool has(uint64_t id) const;
  std::vector<uint64_t> ids() const;
  std::vector<RawEvent> load(uint64_t id, SensorGeometry& geometry) const;

 private:
  std::string path_;
  std::vector<std::pair<uint64_t, uint64_t>> entries_;  // id -> offset
};

}  // namespace edr
