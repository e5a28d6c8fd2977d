#ifndef QKNH_ROOTS_HPP
#define QKNH_ROOTS_HPP

#include <cmath>
#include <limits>
#include <utility>

#include "qknh/error.hpp"

namespace qknh {

template <typename Scalar>
struct RootResult {
  Scalar x;
  Scalar fx;
  int iterations;
};

/// Brent's method on a sign-changing bracket [a, b]. Terminates when the
/// bracket is narrower than xtol (absolute) or f vanishes exactly.
template <typename Scalar, class F>
RootResult<Scalar> brent(F&& f, Scalar a, Scalar b, Scalar fa, Scalar fb, Scalar xtol,
                         int max_iter = 200) {
  using std::abs;
  if (fa == 0) return {a, fa, 0};
  if (fb == 0) return {b, fb, 0};
  if ((fa > 0) == (fb > 0)) throw Error(ErrorCode::NoRoot, "brent: bracket has no sign change");
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  Scalar c = a, fc = fa, d = b - a, e = d;
  for (int iter = 1; iter <= max_iter; ++iter) {
    if ((fb > 0) == (fc > 0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (abs(fc) < abs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    const Scalar tol = 2 * eps * abs(b) + xtol / 2;
    const Scalar m = (c - b) / 2;
    if (abs(m) <= tol || fb == 0) return {b, fb, iter};
    if (abs(e) >= tol && abs(fa) > abs(fb)) {
      Scalar p, q, r;
      const Scalar s = fb / fa;
      if (a == c) {
        p = 2 * m * s;
        q = 1 - s;
      } else {
        q = fa / fc;
        r = fb / fc;
        p = s * (2 * m * q * (q - r) - (b - a) * (r - 1));
        q = (q - 1) * (r - 1) * (s - 1);
      }
      if (p > 0) q = -q; else p = -p;
      if (2 * p < std::min(3 * m * q - abs(tol * q), abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = m;
        e = m;
      }
    } else {
      d = m;
      e = m;
    }
    a = b;
    fa = fb;
    b += (abs(d) > tol) ? d : (m > 0 ? tol : -tol);
    fb = f(b);
  }
  throw Error(ErrorCode::NonConvergence, "brent: iteration limit reached");
}

template <typename Scalar, class F>
RootResult<Scalar> brent(F&& f, Scalar a, Scalar b, Scalar xtol, int max_iter = 200) {
  const Scalar fa = f(a);
  const Scalar fb = f(b);
  return brent(std::forward<F>(f), a, b, fa, fb, xtol, max_iter);
}

}  // namespace qknh

#endif  // QKNH_ROOTS_HPP
