#ifndef QKNH_SPECIAL_HPP
#define QKNH_SPECIAL_HPP

#include <cmath>
#include <complex>

#include "qknh/types.hpp"

namespace qknh {

namespace detail {

// B_{2k} / (2k (2k-1)), k = 1..10
template <typename Scalar>
constexpr Scalar kStirlingCoeffs[] = {
    Scalar(1) / Scalar(12),
    Scalar(-1) / Scalar(360),
    Scalar(1) / Scalar(1260),
    Scalar(-1) / Scalar(1680),
    Scalar(1) / Scalar(1188),
    Scalar(-691) / Scalar(360360),
    Scalar(1) / Scalar(156),
    Scalar(-3617) / Scalar(122400),
    Scalar(43867) / Scalar(244188),
    Scalar(-174611) / Scalar(125400),
};

// B_{2k} / (2k), k = 1..10
template <typename Scalar>
constexpr Scalar kDigammaCoeffs[] = {
    Scalar(1) / Scalar(12),
    Scalar(-1) / Scalar(120),
    Scalar(1) / Scalar(252),
    Scalar(-1) / Scalar(240),
    Scalar(1) / Scalar(132),
    Scalar(-691) / Scalar(32760),
    Scalar(1) / Scalar(12),
    Scalar(-3617) / Scalar(8160),
    Scalar(43867) / Scalar(14364),
    Scalar(-174611) / Scalar(6600),
};

template <typename Scalar>
constexpr Scalar kAsymptoticRadius = Scalar(15);

}  // namespace detail

/// Principal branch of log Gamma(z) for Re z > 0, continuous in z.
/// Upward recurrence to |z| >= 15, then the Stirling series.
template <typename Scalar>
Complex<Scalar> log_gamma(Complex<Scalar> z) {
  using std::abs;
  using std::log;
  Complex<Scalar> shift(0);
  while (abs(z) < detail::kAsymptoticRadius<Scalar>) {
    shift += log(z);
    z += Scalar(1);
  }
  const Complex<Scalar> inv = Scalar(1) / z;
  const Complex<Scalar> inv2 = inv * inv;
  Complex<Scalar> series(0);
  Complex<Scalar> pw = inv;
  for (const Scalar c : detail::kStirlingCoeffs<Scalar>) {
    series += c * pw;
    pw *= inv2;
  }
  const Scalar half_log_2pi = Scalar(0.918938533204672741780329736405617639861);
  return (z - Scalar(0.5)) * log(z) - z + half_log_2pi + series - shift;
}

template <typename Scalar>
Complex<Scalar> digamma(Complex<Scalar> z) {
  using std::abs;
  using std::log;
  Complex<Scalar> shift(0);
  while (abs(z) < detail::kAsymptoticRadius<Scalar>) {
    shift += Scalar(1) / z;
    z += Scalar(1);
  }
  const Complex<Scalar> inv = Scalar(1) / z;
  const Complex<Scalar> inv2 = inv * inv;
  Complex<Scalar> series(0);
  Complex<Scalar> pw = inv2;
  for (const Scalar c : detail::kDigammaCoeffs<Scalar>) {
    series += c * pw;
    pw *= inv2;
  }
  return log(z) - Scalar(0.5) * inv - series - shift;
}

/// Phase correction Phi(y) = arg Gamma(1/2 - i y) + y (ln y - 1), y = T_b / (pi hbar).
template <typename Scalar>
Scalar phase_correction(Scalar y) {
  using std::log;
  if (y <= Scalar(0) || !std::isfinite(y)) return Scalar(0);
  return log_gamma(Complex<Scalar>(Scalar(0.5), -y)).imag() + y * (log(y) - Scalar(1));
}

/// dPhi/dy = -Re psi(1/2 - i y) + ln y; diverges logarithmically at y = 0.
template <typename Scalar>
Scalar phase_correction_derivative(Scalar y) {
  using std::log;
  if (!std::isfinite(y)) return Scalar(0);
  return -digamma(Complex<Scalar>(Scalar(0.5), -y)).real() + log(y);
}

}  // namespace qknh

#endif  // QKNH_SPECIAL_HPP
