#pragma once

// Small dense linear algebra and finite-difference helpers shared by every
// module. Matrices here are at most a few dozen entries wide.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>

namespace skewalg {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

using ScalarFn = std::function<double(const Vec&)>;
using VectorFn = std::function<Vec(const Vec&)>;

/// Number of singular values above rel_cutoff * sigma_max.
int numeric_rank(const Mat& a, double rel_cutoff);

/// Orthonormal basis (columns) of ker(a) under the same cutoff.
Mat nullspace(const Mat& a, double rel_cutoff);

/// span(a) == span(b), decided by rank(a) = rank(b) = rank([a|b]).
bool same_span(const Mat& a, const Mat& b, double rel_cutoff);

/// Central-difference step h = rel * max(1, |x|).
inline double fd_step(double x, double rel) { return rel * std::max(1.0, std::abs(x)); }

enum class Stencil { Central2, Central4 };

struct FdOptions {
  double rel_step = 1e-6;
  Stencil stencil = Stencil::Central2;
};

Vec fd_gradient(const ScalarFn& f, const Vec& x, FdOptions opt = {});

/// Rows index outputs, columns index inputs.
Mat fd_jacobian(const VectorFn& f, const Vec& x, FdOptions opt = {});

/// Derivative of f along direction v at x (one central difference, step
/// scaled by |x| and |v|).
Vec fd_directional(const VectorFn& f, const Vec& x, const Vec& v, FdOptions opt = {});

/// Deterministic random source. Uniform doubles are built from the top 53
/// bits of mt19937_64 so sequences match across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int index(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }
  Vec uniform_vec(int size, double lo, double hi);

 private:
  std::mt19937_64 engine_;
};

double max_abs(const Mat& a);

}  // namespace skewalg
