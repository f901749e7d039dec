#include "datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "common.hpp"

namespace edr {

void validate(const SceneSpec& s) {
  validate(s.geometry);
  if (s.duration_us <= 0) throw std::invalid_argument("scene duration must be positive");
  if (s.objects.empty()) throw std::invalid_argument("scene needs at least one object");
  for (const SceneObject& o : s.objects) {
    if (!std::isfinite(o.vx) || !std::isfinite(o.vy) || !std::isfinite(o.omega) ||
        !std::isfinite(o.growth))
      throw std::invalid_argument("object velocities must be finite");
    if (o.kind == SceneObject::Kind::Stroke && (o.poly.size() < 4 || o.poly.size() % 2 != 0))
      throw std::invalid_argument("stroke polyline needs at least two (x,y) points");
  }
}

void validate(const CaptureSpec& c) {
  if (!(c.threshold > 0.0)) throw std::invalid_argument("capture threshold must be positive");
  if (c.frame_dt_us < 1) throw std::invalid_argument("frame_dt must be at least 1 us");
  if (c.refractory_us < 0) throw std::invalid_argument("refractory period cannot be negative");
}

namespace {

constexpr double kEdgeWidth = 1.5;  // soft edge extent in pixels

struct ObjectState {
  const SceneObject* obj;
  double cx, cy;        // center at this instant
  double cosr, sinr;    // orientation
  double radius;        // disk radius at this instant
  double lox, loy, hix, hiy;  // padded bounding box
};

ObjectState object_at(const SceneObject& o, double t_us) {
  ObjectState s;
  s.obj = &o;
  s.cx = o.x0 + o.vx * t_us;
  s.cy = o.y0 + o.vy * t_us;
  double ang = o.angle0 + o.omega * t_us;
  s.cosr = std::cos(ang);
  s.sinr = std::sin(ang);
  s.radius = o.half_len + o.growth * t_us;

  double reach = 0;
  switch (o.kind) {
    case SceneObject::Kind::TranslatingBar:
    case SceneObject::Kind::RotatingBar:
      reach = std::hypot(o.half_len, o.half_wid);
      break;
    case SceneObject::Kind::ExpandingDisk:
      reach = std::abs(s.radius) + o.half_wid;
      break;
    case SceneObject::Kind::Stroke: {
      for (size_t i = 0; i + 1 < o.poly.size(); i += 2)
        reach = std::max(reach, std::hypot(o.poly[i], o.poly[i + 1]) + o.half_wid);
      break;
    }
  }
  double pad = reach + 2.0 * kEdgeWidth + 1.0;
  s.lox = s.cx - pad;
  s.hix = s.cx + pad;
  s.loy = s.cy - pad;
  s.hiy = s.cy + pad;
  return s;
}

double point_segment_dist(double px, double py, double ax, double ay, double bx, double by) {
  double abx = bx - ax, aby = by - ay;
  double len2 = abx * abx + aby * aby;
  double t = len2 > 0 ? ((px - ax) * abx + (py - ay) * aby) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (ax + t * abx), py - (ay + t * aby));
}

double object_sdf(const ObjectState& s, double px, double py) {
  const SceneObject& o = *s.obj;
  double dx = px - s.cx, dy = py - s.cy;
  switch (o.kind) {
    case SceneObject::Kind::TranslatingBar:
    case SceneObject::Kind::RotatingBar: {
      double u = s.cosr * dx + s.sinr * dy;
      double v = -s.sinr * dx + s.cosr * dy;
      return std::max(std::abs(u) - o.half_len, std::abs(v) - o.half_wid);
    }
    case SceneObject::Kind::ExpandingDisk:
      return std::abs(std::hypot(dx, dy) - s.radius) - o.half_wid;
    case SceneObject::Kind::Stroke: {
      double best = std::numeric_limits<double>::infinity();
      for (size_t i = 0; i + 3 < o.poly.size(); i += 2)
        best = std::min(best, point_segment_dist(dx, dy, o.poly[i], o.poly[i + 1],
                                                 o.poly[i + 2], o.poly[i + 3]));
      return best - o.half_wid;
    }
  }
  return std::numeric_limits<double>::infinity();
}

double brightness_at(const SceneSpec& scene, const std::vector<ObjectState>& states, int x,
                     int y) {
  double level = scene.background;
  for (const ObjectState& s : states) {
    if (x < s.lox || x > s.hix || y < s.loy || y > s.hiy) continue;
    double cov = std::clamp(0.5 - object_sdf(s, x, y) / kEdgeWidth, 0.0, 1.0);
    level += s.obj->contrast * cov;
  }
  return level;
}

}  // namespace

std::vector<RawEvent> simulate_events(const SceneSpec& scene, const CaptureSpec& capture,
                                      uint64_t seed) {
  (void)seed;
  validate(scene);
  validate(capture);
  const int w = scene.geometry.width, h = scene.geometry.height;
  const double T = capture.threshold;

  std::vector<double> ref(static_cast<size_t>(w) * h);
  std::vector<double> prev(static_cast<size_t>(w) * h);
  std::vector<int64_t> last_emit(static_cast<size_t>(w) * h,
                                 std::numeric_limits<int64_t>::min() / 2);

  std::vector<ObjectState> states;
  states.reserve(scene.objects.size());
  auto refresh_states = [&](double t_us) {
    states.clear();
    for (const SceneObject& o : scene.objects) states.push_back(object_at(o, t_us));
  };

  refresh_states(0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double level = brightness_at(scene, states, x, y);
      ref[static_cast<size_t>(y) * w + x] = level;
      prev[static_cast<size_t>(y) * w + x] = level;
    }

  std::vector<RawEvent> events;
  for (int64_t t1 = capture.frame_dt_us; t1 <= scene.duration_us; t1 += capture.frame_dt_us) {
    const int64_t t0 = t1 - capture.frame_dt_us;
    refresh_states(static_cast<double>(t1));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const size_t px = static_cast<size_t>(y) * w + x;
        double l1 = brightness_at(scene, states, x, y);
        double l0 = prev[px];
        prev[px] = l1;
        double dl = l1 - ref[px];
        if (std::abs(dl) < T) continue;
        int n = static_cast<int>(std::abs(dl) / T);
        double sign = dl > 0 ? 1.0 : -1.0;
        for (int k = 1; k <= n; ++k) {
          double level = ref[px] + sign * k * T;
          double f = (level - l0) / (l1 - l0);
          f = std::clamp(f, 0.0, 1.0);
          int64_t te = t0 + std::llround(f * capture.frame_dt_us);
          if (te - last_emit[px] >= capture.refractory_us) {
            events.push_back({static_cast<uint16_t>(x), static_cast<uint16_t>(y), te,
                              static_cast<uint8_t>(sign > 0 ? 1 : 0)});
            last_emit[px] = te;
          }
        }
        ref[px] += sign * n * T;
      }
    }
  }

  std::sort(events.begin(), events.end(), [](const RawEvent& a, const RawEvent& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.p < b.p;
  });
  return events;
}

SceneSpec random_scene(const SensorGeometry& geometry, int64_t duration_us, uint64_t seed) {
  validate(geometry);
  Rng rng(seed);
  SceneSpec scene;
  scene.geometry = geometry;
  scene.duration_us = duration_us;
  scene.background = 0.0;

  const double w = geometry.width, h = geometry.height;
  const double dur = static_cast<double>(duration_us);
  int count = 1 + static_cast<int>(rng.below(3));
  for (int i = 0; i < count; ++i) {
    SceneObject o;
    o.contrast = 0.5 + 0.5 * rng.uniform();
    o.x0 = w * (0.25 + 0.5 * rng.uniform());
    o.y0 = h * (0.25 + 0.5 * rng.uniform());
    double speed = std::max(w, h) / (dur * (0.4 + 0.8 * rng.uniform()));
    double dir = rng.uniform() * 6.283185307179586;
    o.vx = speed * std::cos(dir);
    o.vy = speed * std::sin(dir);
    switch (rng.below(4)) {
      case 0:
        o.kind = SceneObject::Kind::TranslatingBar;
        o.half_len = 4.0 + 8.0 * rng.uniform();
        o.half_wid = 1.0 + 1.0 * rng.uniform();
        o.angle0 = rng.uniform() * 3.141592653589793;
        break;
      case 1:
        o.kind = SceneObject::Kind::RotatingBar;
        o.half_len = 6.0 + 8.0 * rng.uniform();
        o.half_wid = 1.0 + 1.0 * rng.uniform();
        o.angle0 = rng.uniform() * 3.141592653589793;
        o.omega = (rng.below(2) ? 1.0 : -1.0) * (0.5 + rng.uniform()) * 6.283185307179586 / dur;
        o.vx *= 0.3;  // rotation dominates
        o.vy *= 0.3;
        break;
      case 2:
        o.kind = SceneObject::Kind::ExpandingDisk;
        o.half_len = 2.0 + 3.0 * rng.uniform();  // initial radius
        o.half_wid = 1.0 + 0.8 * rng.uniform();
        o.growth = std::min(w, h) * (0.25 + 0.25 * rng.uniform()) / dur;
        o.vx *= 0.2;
        o.vy *= 0.2;
        break;
      default: {
        o.kind = SceneObject::Kind::Stroke;
        o.half_wid = 1.0 + 0.6 * rng.uniform();
        int segs = 2 + static_cast<int>(rng.below(3));
        double px = -8.0 - 4.0 * rng.uniform(), py = 8.0 * (rng.uniform() - 0.5);
        o.poly = {px, py};
        for (int s = 0; s < segs; ++s) {
          px += 5.0 + 6.0 * rng.uniform();
          py = 10.0 * (rng.uniform() - 0.5);
          o.poly.push_back(px);
          o.poly.push_back(py);
        }
        break;
      }
    }
    scene.objects.push_back(std::move(o));
  }
  return scene;
}

std::vector<CloudPair> build_pairs(const std::vector<RawEvent>& events,
                                   const SensorGeometry& geometry, int n_dense, int n_sparse,
                                   uint64_t seed) {
  if (n_sparse < 1 || n_sparse >= n_dense)
    throw std::invalid_argument("build_pairs requires 1 <= n_sparse < n_dense");
  std::vector<CloudPair> out;
  std::vector<RawEventSlice> slices = slice_stream(events, geometry, n_dense);
  out.reserve(slices.size());
  for (size_t i = 0; i < slices.size(); ++i) {
    auto [dense, anchor] = normalize(slices[i]);
    CloudPair pair;
    pair.sparse = subsample(dense, n_sparse, derive_seed(seed, i));
    pair.dense = std::move(dense);
    pair.anchor = anchor;
    out.push_back(std::move(pair));
  }
  return out;
}

CloudPair to_clouds(const PairRecord& rec) {
  auto [dense, anchor] = normalize(rec.dense);
  CloudPair pair;
  pair.anchor = anchor;
  pair.sparse.n = static_cast<int>(rec.sparse_idx.size());
  pair.sparse.coords.resize(rec.sparse_idx.size() * 3);
  pair.sparse.polarity.resize(rec.sparse_idx.size());
  for (size_t i = 0; i < rec.sparse_idx.size(); ++i) {
    uint32_t j = rec.sparse_idx[i];
    for (int d = 0; d < 3; ++d) pair.sparse.coords[3 * i + d] = dense.coords[3 * j + d];
    pair.sparse.polarity[i] = dense.polarity[j];
  }
  pair.dense = std::move(dense);
  return pair;
}

// -- EVCL ----------------------------------------------------------------------

void write_evcl(std::ostream& os, const std::vector<RawEvent>& events,
                const SensorGeometry& geometry) {
  const char magic[4] = {'E', 'V', 'C', 'L'};
  write_bytes(os, magic, 4);
  write_u16(os, static_cast<uint16_t>(geometry.width));
  write_u16(os, static_cast<uint16_t>(geometry.height));
  write_u64(os, events.size());
  for (const RawEvent& e : events) {
    write_u16(os, e.x);
    write_u16(os, e.y);
    write_i64(os, e.t);
    write_u8(os, e.p);
  }
}

void write_evcl_file(const std::string& path, const std::vector<RawEvent>& events,
                     const SensorGeometry& geometry) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  write_evcl(os, events, geometry);
  if (!os) throw DataError("failed writing " + path);
}

std::vector<RawEvent> read_evcl(std::istream& is, SensorGeometry& geometry) {
  char magic[4];
  uint64_t base = static_cast<uint64_t>(is.tellg());
  read_bytes(is, magic, 4, "EVCL magic");
  if (magic[0] != 'E' || magic[1] != 'V' || magic[2] != 'C' || magic[3] != 'L')
    throw FormatError("bad EVCL magic", base);
  geometry.width = read_u16(is, "sensor width");
  geometry.height = read_u16(is, "sensor height");
  validate(geometry);
  uint64_t count = read_u64(is, "event count");
  std::vector<RawEvent> events(count);
  for (uint64_t i = 0; i < count; ++i) {
    uint64_t at = static_cast<uint64_t>(is.tellg());
    RawEvent& e = events[i];
    e.x = read_u16(is, "event x");
    e.y = read_u16(is, "event y");
    e.t = read_i64(is, "event t");
    e.p = read_u8(is, "event p");
    if (e.x >= geometry.width || e.y >= geometry.height)
      throw FormatError("event coordinates outside sensor", at);
    if (e.p > 1) throw FormatError("polarity byte must be 0 or 1", at);
  }
  return events;
}

std::vector<RawEvent> read_evcl_file(const std::string& path, SensorGeometry& geometry) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  return read_evcl(is, geometry);
}

// -- CSV -----------------------------------------------------------------------

void write_csv_file(const std::string& path, const std::vector<RawEvent>& events,
                    const SensorGeometry& geometry) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << "# W=" << geometry.width << " H=" << geometry.height << "\n";
  for (const RawEvent& e : events)
    os << e.t << ',' << e.x << ',' << e.y << ',' << static_cast<int>(e.p) << "\n";
  if (!os) throw DataError("failed writing " + path);
}

std::vector<RawEvent> read_csv_file(const std::string& path, SensorGeometry& geometry) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line) ||
      std::sscanf(line.c_str(), "# W=%d H=%d", &geometry.width, &geometry.height) != 2)
    throw DataError("missing CSV header '# W=<w> H=<h>' in " + path);
  validate(geometry);
  std::vector<RawEvent> events;
  size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    long long t;
    int x, y, p;
    if (std::sscanf(line.c_str(), "%lld,%d,%d,%d", &t, &x, &y, &p) != 4)
      throw DataError("malformed CSV line " + std::to_string(lineno) + " in " + path);
    if (x < 0 || x >= geometry.width || y < 0 || y >= geometry.height || (p != 0 && p != 1))
      throw DataError("CSV event out of range at line " + std::to_string(lineno) + " in " + path);
    events.push_back({static_cast<uint16_t>(x), static_cast<uint16_t>(y), t,
                      static_cast<uint8_t>(p)});
  }
  return events;
}

// -- N-MNIST -------------------------------------------------------------------

std::vector<RawEvent> read_nmnist_bin(const std::string& path, SensorGeometry& geometry) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  geometry = {34, 34};
  std::vector<RawEvent> events;
  uint64_t offset = 0;
  int64_t prev_t = -1;
  while (true) {
    uint8_t rec[5];
    is.read(reinterpret_cast<char*>(rec), 5);
    std::streamsize got = is.gcount();
    if (got == 0) break;
    if (got != 5) throw FormatError("truncated N-MNIST record", offset);
    RawEvent e;
    e.x = rec[0];
    e.y = rec[1];
    e.p = (rec[2] >> 7) & 1;
    e.t = (static_cast<int64_t>(rec[2] & 0x7f) << 16) | (static_cast<int64_t>(rec[3]) << 8) |
          rec[4];
    if (e.x > 33 || e.y > 33) throw FormatError("N-MNIST coordinate outside 34x34", offset);
    if (e.t < prev_t) throw FormatError("N-MNIST timestamps not monotone", offset);
    prev_t = e.t;
    events.push_back(e);
    offset += 5;
  }
  return events;
}

std::vector<RawEvent> read_events_auto(const std::string& path, SensorGeometry& geometry) {
  std::string ext = std::filesystem::path(path).extension().string();
  if (ext == ".evcl") return read_evcl_file(path, geometry);
  if (ext == ".csv") return read_csv_file(path, geometry);
  if (ext == ".bin") return read_nmnist_bin(path, geometry);
  throw DataError("unknown event file extension '" + ext + "' for " + path);
}

// -- pairs dataset ---------------------------------------------------------------

void write_pairs(const PairDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  const char magic[4] = {'E', 'D', 'R', 'P'};
  write_bytes(os, magic, 4);
  write_u16(os, static_cast<uint16_t>(ds.geometry.width));
  write_u16(os, static_cast<uint16_t>(ds.geometry.height));
  write_u32(os, static_cast<uint32_t>(ds.n_dense));
  write_u32(os, static_cast<uint32_t>(ds.n_sparse));
  write_u64(os, ds.records.size());
  for (const PairRecord& rec : ds.records) {
    write_u64(os, rec.id);
    for (const RawEvent& e : rec.dense.events) {
      write_u16(os, e.x);
      write_u16(os, e.y);
      write_i64(os, e.t);
      write_u8(os, e.p);
    }
    for (uint32_t idx : rec.sparse_idx) write_u32(os, idx);
  }
  if (!os) throw DataError("failed writing " + path);
}

PairDataset read_pairs(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  char magic[4];
  read_bytes(is, magic, 4, "pairs magic");
  if (magic[0] != 'E' || magic[1] != 'D' || magic[2] != 'R' || magic[3] != 'P')
    throw FormatError("bad pairs magic", 0);
  PairDataset ds;
  ds.geometry.width = read_u16(is, "sensor width");
  ds.geometry.height = read_u16(is, "sensor height");
  validate(ds.geometry);
  ds.n_dense = static_cast<int>(read_u32(is, "n_dense"));
  ds.n_sparse = static_cast<int>(read_u32(is, "n_sparse"));
  if (ds.n_dense < 2 || ds.n_sparse < 1 || ds.n_sparse >= ds.n_dense)
    throw FormatError("invalid pair sizes", 8);
  uint64_t count = read_u64(is, "pair count");
  ds.records.resize(count);
  for (uint64_t r = 0; r < count; ++r) {
    PairRecord& rec = ds.records[r];
    rec.id = read_u64(is, "pair id");
    rec.dense.geometry = ds.geometry;
    rec.dense.events.resize(ds.n_dense);
    for (int i = 0; i < ds.n_dense; ++i) {
      uint64_t at = static_cast<uint64_t>(is.tellg());
      RawEvent& e = rec.dense.events[i];
      e.x = read_u16(is, "event x");
      e.y = read_u16(is, "event y");
      e.t = read_i64(is, "event t");
      e.p = read_u8(is, "event p");
      if (e.x >= ds.geometry.width || e.y >= ds.geometry.height || e.p > 1)
        throw FormatError("pair event out of range", at);
    }
    rec.sparse_idx.resize(ds.n_sparse);
    for (int i = 0; i < ds.n_sparse; ++i) {
      rec.sparse_idx[i] = read_u32(is, "sparse index");
      if (rec.sparse_idx[i] >= static_cast<uint32_t>(ds.n_dense))
        throw FormatError("sparse index out of range", static_cast<uint64_t>(is.tellg()) - 4);
    }
    validate(rec.dense);
  }
  return ds;
}

// -- coarse cache ----------------------------------------------------------------

CoarseCacheWriter::CoarseCacheWriter(const std::string& path)
    : path_(path), index_(path + ".idx") {
  auto* os = new std::ofstream(path, std::ios::binary | std::ios::trunc);
  if (!*os) {
    delete os;
    throw DataError("cannot open for writing: " + path);
  }
  os_ = os;
  std::ofstream idx(index_, std::ios::trunc);
  if (!idx) throw DataError("cannot open for writing: " + index_);
}

CoarseCacheWriter::~CoarseCacheWriter() { close(); }

void CoarseCacheWriter::append(uint64_t id, const std::vector<RawEvent>& events,
                               const SensorGeometry& geometry) {
  auto* os = static_cast<std::ofstream*>(os_);
  if (!os) throw DataError("coarse cache writer already closed");
  uint64_t offset = static_cast<uint64_t>(os->tellp());
  write_evcl(*os, events, geometry);
  std::ofstream idx(index_, std::ios::app);
  idx << id << ' ' << offset << '\n';
  if (!*os || !idx) throw DataError("failed writing coarse cache " + path_);
}

void CoarseCacheWriter::close() {
  auto* os = static_cast<std::ofstream*>(os_);
  if (os) {
    os->close();
    delete os;
    os_ = nullptr;
  }
}

CoarseCache::CoarseCache(const std::string& path) : path_(path) {
  std::ifstream idx(path + ".idx");
  if (!idx) throw DataError("cannot open coarse cache index: " + path + ".idx");
  uint64_t id, offset;
  while (idx >> id >> offset) entries_.emplace_back(id, offset);
}

bool CoarseCache::has(uint64_t id) const {
  for (const auto& [eid, off] : entries_)
    if (eid == id) return true;
  return false;
}

std::vector<uint64_t> CoarseCache::ids() const {
  std::vector<uint64_t> out;
  out.reserve(entries_.size());
  for (const auto& [id, off] : entries_) out.push_back(id);
  return out;
}

std::vector<RawEvent> CoarseCache::load(uint64_t id, SensorGeometry& geometry) const {
  for (const auto& [eid, off] : entries_) {
    if (eid != id) continue;
    std::ifstream is(path_, std::ios::binary);
    if (!is) throw DataError("cannot open coarse cache: " + path_);
    is.seekg(static_cast<std::streamoff>(off));
    return read_evcl(is, geometry);
  }
  throw DataError("coarse cache has no sample " + std::to_string(id));
}

}  // namespace edr
