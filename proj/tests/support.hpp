#pragma once

// Shared fixtures for the module suites.

#include <initializer_list>
#include <string>
#include <vector>

#include "skewalg/models.hpp"

namespace skewalg::test {

inline Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

inline std::vector<Vec> base_points(const SkewAlgebroid& a, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec> out;
  for (int i = 0; i < count; ++i) out.push_back(a.sample_point(rng));
  return out;
}

/// (q, p) with p uniform in [-1, 1]^n.
inline std::vector<Vec> dual_points(const SkewAlgebroid& a, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec> out;
  for (int i = 0; i < count; ++i) {
    Vec x(a.base_dim() + a.rank());
    x << a.sample_point(rng), rng.uniform_vec(a.rank(), -1.0, 1.0);
    out.push_back(x);
  }
  return out;
}

inline ScalarFn coordinate(int i) {
  return [i](const Vec& x) { return x(i); };
}

inline const std::vector<std::string>& all_models() {
  static const std::vector<std::string> names = {
      "standard_tq_r2", "r2_counterexample", "beanie_reduced", "beanie_full",
      "carriage",       "carriage_ambient",  "snakeboard_reduced", "snakeboard_atiyah"};
  return names;
}

}  // namespace skewalg::test
