#ifndef QKNH_TYPES_HPP
#define QKNH_TYPES_HPP

#include <complex>

#include <Eigen/Dense>

namespace qknh {

template <typename Scalar> using Complex = std::complex<Scalar>;
template <typename Scalar> using Matrix2c = Eigen::Matrix<std::complex<Scalar>, 2, 2>;
template <typename Scalar> using Vector2c = Eigen::Matrix<std::complex<Scalar>, 2, 1>;
template <typename Scalar> using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// The two semiclassical level families: left well (A) and right well (C).
enum class Branch { A, C };

constexpr char branch_char(Branch b) { return b == Branch::A ? 'A' : 'C'; }

template <typename Scalar> constexpr Scalar pi_v = Scalar(3.141592653589793238462643383279502884L);
constexpr double kPi = pi_v<double>;

}  // namespace qknh

#endif  // QKNH_TYPES_HPP
