#include "skewalg/linalg.hpp"

#include <cmath>

namespace skewalg {

namespace {

Eigen::JacobiSVD<Mat> svd_of(const Mat& a, bool full_v) {
  return Eigen::JacobiSVD<Mat>(a, full_v ? Eigen::ComputeFullV : 0);
}

int count_above(const Vec& sigma, double rel_cutoff) {
  if (sigma.size() == 0 || sigma(0) == 0.0) return 0;
  const double cut = rel_cutoff * sigma(0);
  int r = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i)
    if (sigma(i) > cut) ++r;
  return r;
}

}  // namespace

int numeric_rank(const Mat& a, double rel_cutoff) {
  if (a.size() == 0) return 0;
  return count_above(svd_of(a, false).singularValues(), rel_cutoff);
}

Mat nullspace(const Mat& a, double rel_cutoff) {
  const auto cols = a.cols();
  if (a.rows() == 0) return Mat::Identity(cols, cols);
  const auto svd = svd_of(a, true);
  const int r = count_above(svd.singularValues(), rel_cutoff);
  return svd.matrixV().rightCols(cols - r);
}

bool same_span(const Mat& a, const Mat& b, double rel_cutoff) {
  Mat ab(a.rows(), a.cols() + b.cols());
  ab << a, b;
  const int ra = numeric_rank(a, rel_cutoff);
  return ra == numeric_rank(b, rel_cutoff) && ra == numeric_rank(ab, rel_cutoff);
}

Vec fd_gradient(const ScalarFn& f, const Vec& x, FdOptions opt) {
  Vec g(x.size());
  Vec y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = fd_step(x(i), opt.rel_step);
    auto at = [&](double dx) {
      y(i) = x(i) + dx;
      return f(y);
    };
    if (opt.stencil == Stencil::Central2) {
      g(i) = (at(h) - at(-h)) / (2 * h);
    } else {
      g(i) = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
    }
    y(i) = x(i);
  }
  return g;
}

Mat fd_jacobian(const VectorFn& f, const Vec& x, FdOptions opt) {
  Mat jac;
  Vec y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = fd_step(x(i), opt.rel_step);
    auto at = [&](double dx) {
      y(i) = x(i) + dx;
      return f(y);
    };
    Vec col;
    if (opt.stencil == Stencil::Central2) {
      col = (at(h) - at(-h)) / (2 * h);
    } else {
      col = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
    }
    y(i) = x(i);
    if (i == 0) jac.resize(col.size(), x.size());
    jac.col(i) = col;
  }
  return jac;
}

Vec fd_directional(const VectorFn& f, const Vec& x, const Vec& v, FdOptions opt) {
  const double vn = v.lpNorm<Eigen::Infinity>();
  if (vn == 0.0) return Vec::Zero(f(x).size());
  const double scale = std::max(1.0, x.lpNorm<Eigen::Infinity>()) / vn;
  const double h = opt.rel_step * scale;
  if (opt.stencil == Stencil::Central2) return (f(x + h * v) - f(x - h * v)) / (2 * h);
  return (-f(x + 2 * h * v) + 8 * f(x + h * v) - 8 * f(x - h * v) + f(x - 2 * h * v)) / (12 * h);
}

Vec Rng::uniform_vec(int size, double lo, double hi) {
  Vec v(size);
  for (int i = 0; i < size; ++i) v(i) = uniform(lo, hi);
  return v;
}

double max_abs(const Mat& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

}  // namespace skewalg
