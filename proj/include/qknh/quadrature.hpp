#ifndef QKNH_QUADRATURE_HPP
#define QKNH_QUADRATURE_HPP

#include <cmath>
#include <stdexcept>

#include "qknh/types.hpp"

namespace qknh {

/// Gauss-Legendre rule on [-1, 1]. Nodes by Newton iteration on P_n.
template <typename Scalar>
struct GaussLegendre {
  ArrayX<Scalar> nodes;
  ArrayX<Scalar> weights;

  explicit GaussLegendre(int n) : nodes(n), weights(n) {
    if (n < 1) throw std::invalid_argument("GaussLegendre: order must be positive");
    using std::abs;
    using std::cos;
    for (int i = 0; i < (n + 1) / 2; ++i) {
      Scalar x = cos(pi_v<Scalar> * (Scalar(i) + Scalar(0.75)) / (Scalar(n) + Scalar(0.5)));
      Scalar dp = 0;
      for (int iter = 0; iter < 100; ++iter) {
        Scalar p0 = 1, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const Scalar p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / Scalar(k);
          p0 = p1;
          p1 = p2;
        }
        if (n == 1) p0 = 1;
        dp = Scalar(n) * (x * p1 - p0) / (x * x - 1);
        const Scalar dx = p1 / dp;
        x -= dx;
        if (abs(dx) < Scalar(4) * std::numeric_limits<Scalar>::epsilon()) break;
      }
      // recompute derivative at the converged node
      Scalar p0 = 1, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const Scalar p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / Scalar(k);
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1;
      dp = Scalar(n) * (x * p1 - p0) / (x * x - 1);
      const Scalar w = Scalar(2) / ((1 - x * x) * dp * dp);
      nodes(i) = -x;
      nodes(n - 1 - i) = x;
      weights(i) = w;
      weights(n - 1 - i) = w;
    }
    if (n % 2 == 1) nodes(n / 2) = 0;
  }

  int order() const { return static_cast<int>(nodes.size()); }

  template <class F>
  Scalar integrate(F&& f, Scalar a, Scalar b) const {
    const Scalar half = (b - a) / 2;
    const Scalar mid = (a + b) / 2;
    Scalar sum = 0;
    for (Eigen::Index i = 0; i < nodes.size(); ++i) sum += weights(i) * f(mid + half * nodes(i));
    return sum * half;
  }
};

/// Panel layout for integrals over [0, U] whose integrand may vary on a small
/// scale near u = 0: panels [U r^{j+1}, U r^j] for j < levels, then [0, U r^levels].
struct QuadratureOptions {
  int order = 16;
  int grading_levels = 14;
  double grading_ratio = 0.25;
};

template <typename Scalar, class F>
Scalar integrate_graded(F&& f, Scalar u_max, const GaussLegendre<Scalar>& rule, int levels,
                        Scalar ratio) {
  Scalar sum = 0;
  Scalar hi = u_max;
  for (int j = 0; j < levels; ++j) {
    const Scalar lo = hi * ratio;
    sum += rule.integrate(f, lo, hi);
    hi = lo;
  }
  sum += rule.integrate(f, Scalar(0), hi);
  return sum;
}

}  // namespace qknh

#endif  // QKNH_QUADRATURE_HPP
