#pragma once

#include <Eigen/Dense>
#include <complex>

#include "ionsim/constants.hpp"
#include "ionsim/error.hpp"

namespace ionsim {

using Matrix4cd = Eigen::Matrix4cd;
using Matrix2cd = Eigen::Matrix2cd;
using Vector4cd = Eigen::Vector4cd;

/// Ion-photon two-qubit state in the ordered product basis
/// { |D',V>, |D',H>, |D,V>, |D,H> } (ion |up> = |D'>, photon first index V).
struct TwoQubitState {
  Matrix4cd rho = Matrix4cd::Zero();

  /// Hermiticity / trace / positivity checks (post-projection states pass
  /// with tolerance 0).
  void validate(double eig_tolerance = 1e-9) const {
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > 1e-10) {
      throw Error(ErrorCode::InvalidInput, "state is not Hermitian");
    }
    if (std::abs(rho.trace().real() - 1.0) > 1e-10 ||
        std::abs(rho.trace().imag()) > 1e-10) {
      throw Error(ErrorCode::InvalidInput, "state trace is not 1");
    }
    Eigen::SelfAdjointEigenSolver<Matrix4cd> es(rho, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -eig_tolerance) {
      throw Error(ErrorCode::InvalidInput, "state has a negative eigenvalue");
    }
  }
};

inline Matrix2cd pauli(int k) {
  using namespace std::complex_literals;
  Matrix2cd m;
  switch (k) {
    case 0: m << 1, 0, 0, 1; break;
    case 1: m << 0, 1, 1, 0; break;
    case 2: m << 0, -1i, 1i, 0; break;
    case 3: m << 1, 0, 0, -1; break;
    default: throw Error(ErrorCode::InvalidInput, "pauli index out of range");
  }
  return m;
}

inline Matrix4cd kron2(const Matrix2cd& a, const Matrix2cd& b) {
  Matrix4cd out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return out;
}

/// sigma_k on the ion tensor sigma_l on the photon.
inline Matrix4cd pauli_pair(int k, int l) { return kron2(pauli(k), pauli(l)); }

/// |psi(theta)> = (|D',V> + e^{i theta} |D,H>)/sqrt(2).
inline Vector4cd bell_ket(double theta) {
  Vector4cd v = Vector4cd::Zero();
  v(0) = 1.0 / std::sqrt(2.0);
  v(3) = std::polar(1.0 / std::sqrt(2.0), theta);
  return v;
}

inline TwoQubitState bell_state(double theta) {
  const Vector4cd k = bell_ket(theta);
  return TwoQubitState{k * k.adjoint()};
}

/// Z rotation by `angle` on the ion qubit, identity on the photon;
/// maps |psi(theta)> to |psi(theta + angle)>.
inline Matrix4cd ion_z_rotation(double angle) {
  Matrix2cd u = Matrix2cd::Zero();
  u(0, 0) = std::polar(1.0, -0.5 * angle);
  u(1, 1) = std::polar(1.0, 0.5 * angle);
  return kron2(u, Matrix2cd::Identity());
}

/// General single-qubit rotation Rz(a) Ry(b) Rz(c).
inline Matrix2cd one_qubit_unitary(double a, double b, double c) {
  Matrix2cd rza = Matrix2cd::Zero(), rzc = Matrix2cd::Zero(), ryb;
  rza(0, 0) = std::polar(1.0, -0.5 * a);
  rza(1, 1) = std::polar(1.0, 0.5 * a);
  rzc(0, 0) = std::polar(1.0, -0.5 * c);
  rzc(1, 1) = std::polar(1.0, 0.5 * c);
  ryb << std::cos(b / 2), -std::sin(b / 2), std::sin(b / 2), std::cos(b / 2);
  return rza * ryb * rzc;
}

inline double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a <= -kTwoPi / 2) a += kTwoPi;
  if (a > kTwoPi / 2) a -= kTwoPi;
  return a;
}

}  // namespace ionsim
