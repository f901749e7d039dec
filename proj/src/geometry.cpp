#include "geometry.hpp"

namespace edr {

std::vector<int> cuboid_query(const EventCloud& cloud, const double center[3],
                              const CuboidSpec& spec) {
  validate(spec);
  if (cloud.n < 1) throw std::invalid_argument("cuboid_query on empty cloud");
  for (int d = 0; d < 3; ++d)
    if (!std::isfinite(center[d])) throw std::invalid_argument("query center must be finite");
  return cuboid_query_t(cloud.coords.data(), cloud.n, center, spec.r, spec.t_scale, spec.max_k);
}

std::vector<int> ball_query(const EventCloud& cloud, const double center[3], double radius,
                            int max_k) {
  if (cloud.n < 1) throw std::invalid_argument("ball_query on empty cloud");
  if (radius < 0.0 || max_k < 1)
    throw std::invalid_argument("ball_query requires radius >= 0 and max_k >= 1");
  for (int d = 0; d < 3; ++d)
    if (!std::isfinite(center[d])) throw std::invalid_argument("query center must be finite");
  return ball_query_t(cloud.coords.data(), cloud.n, center, radius, max_k);
}

std::vector<int> farthest_point_sample(const EventCloud& cloud, int m, int start) {
  return fps_t(cloud.coords.data(), cloud.n, m, start);
}

std::vector<std::pair<int, double>> knn(const EventCloud& cloud, const double query[3], int k) {
  return knn_t(cloud.coords.data(), cloud.n, query, k);
}

}  // namespace edr
