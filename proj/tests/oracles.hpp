#pragma once

// Independent reference computations used by the tests. None of these call
// into the library's solvers.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

/// Golden-section minimization of a unimodal function on [a, b].
inline double golden_min(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - r * (b - a);
  double d = a + r * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < 500 && (b - a) > tol * (1.0 + std::abs(a) + std::abs(b)); ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

/// Golden-section minimization that first narrows the bracket on a grid.
inline double grid_golden_min(const std::function<double(double)>& f, double lo, double hi, int grid = 400) {
  double best = lo;
  double fbest = std::numeric_limits<double>::infinity();
  const double h = (hi - lo) / grid;
  for (int i = 0; i <= grid; ++i) {
    const double x = lo + h * i;
    const double v = f(x);
    if (v < fbest) {
      fbest = v;
      best = x;
    }
  }
  return golden_min(f, std::max(lo, best - h), std::min(hi, best + h));
}

inline double lasso_obj(const Eigen::VectorXd& z, const Eigen::MatrixXd& theta, double lambda, const Eigen::VectorXd& h) {
  return (z - theta * h).squaredNorm() + lambda * h.cwiseAbs().sum();
}

/// Exact lasso min_h ||z - theta h||^2 + lambda ||h||_1 by enumerating the
/// 3^K sign patterns and solving each reduced least-squares system.
inline Eigen::VectorXd lasso_enumerate(const Eigen::VectorXd& z, const Eigen::MatrixXd& theta, double lambda) {
  const int k = static_cast<int>(theta.cols());
  int total = 1;
  for (int i = 0; i < k; ++i) total *= 3;
  Eigen::VectorXd best = Eigen::VectorXd::Zero(k);
  double fbest = lasso_obj(z, theta, lambda, best);
  for (int code = 0; code < total; ++code) {
    std::vector<int> active;
    std::vector<double> sign;
    int c = code;
    for (int i = 0; i < k; ++i) {
      const int digit = c % 3;
      c /= 3;
      if (digit != 0) {
        active.push_back(i);
        sign.push_back(digit == 1 ? 1.0 : -1.0);
      }
    }
    if (active.empty()) continue;
    const int m = static_cast<int>(active.size());
    Eigen::MatrixXd ta(theta.rows(), m);
    Eigen::VectorXd sg(m);
    for (int j = 0; j < m; ++j) {
      ta.col(j) = theta.col(active[j]);
      sg[j] = sign[j];
    }
    const Eigen::MatrixXd g = ta.transpose() * ta;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(g);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd ha = lu.solve(ta.transpose() * z - 0.5 * lambda * sg);
    bool consistent = true;
    for (int j = 0; j < m; ++j) consistent = consistent && ha[j] * sg[j] > 0.0;
    if (!consistent) continue;
    Eigen::VectorXd h = Eigen::VectorXd::Zero(k);
    for (int j = 0; j < m; ++j) h[active[j]] = ha[j];
    const double f = lasso_obj(z, theta, lambda, h);
    if (f < fbest) {
      fbest = f;
      best = h;
    }
  }
  return best;
}

/// Cyclic Jacobi eigendecomposition in long double, then eigenvalue clipping.
inline Eigen::MatrixXd psd_clip_extended(const Eigen::MatrixXd& a_in) {
  using LD = long double;
  const int n = static_cast<int>(a_in.rows());
  std::vector<LD> a(static_cast<std::size_t>(n * n)), v(static_cast<std::size_t>(n * n), 0.0L);
  auto A = [&](int i, int j) -> LD& { return a[static_cast<std::size_t>(i * n + j)]; };
  auto V = [&](int i, int j) -> LD& { return v[static_cast<std::size_t>(i * n + j)]; };
  for (int i = 0; i < n; ++i) {
    V(i, i) = 1.0L;
    for (int j = 0; j < n; ++j) A(i, j) = 0.5L * (static_cast<LD>(a_in(i, j)) + static_cast<LD>(a_in(j, i)));
  }
  for (int sweep = 0; sweep < 100; ++sweep) {
    LD off = 0.0L;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
    if (off < 1e-40L) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::fabs(A(p, q)) < 1e-300L) continue;
        const LD theta = (A(q, q) - A(p, p)) / (2.0L * A(p, q));
        const LD t = (theta >= 0 ? 1.0L : -1.0L) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0L));
        const LD c = 1.0L / std::sqrt(t * t + 1.0L);
        const LD s = t * c;
        for (int k = 0; k < n; ++k) {
          const LD akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const LD apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const LD vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  Eigen::MatrixXd out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      LD acc = 0.0L;
      for (int k = 0; k < n; ++k) {
        const LD lam = A(k, k) > 0.0L ? A(k, k) : 0.0L;
        acc += V(i, k) * lam * V(j, k);
      }
      out(i, j) = static_cast<double>(acc);
    }
  }
  return out;
}

/// Conjugate gradient on a strongly convex quadratic 1/2 x'Hx - b'x given by
/// its Hessian-vector product.
inline Eigen::VectorXd conjugate_gradient(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& hv,
                                          const Eigen::VectorXd& b, int max_iter = 1000, double tol = 1e-15) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd r = b;
  Eigen::VectorXd p = r;
  double rs = r.squaredNorm();
  for (int it = 0; it < max_iter && std::sqrt(rs) > tol * (1.0 + b.norm()); ++it) {
    const Eigen::VectorXd hp = hv(p);
    const double a = rs / p.dot(hp);
    x += a * p;
    r -= a * hp;
    const double rs_new = r.squaredNorm();
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  return x;
}

}  // namespace oracle
