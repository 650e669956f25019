#pragma once

#include "wbmr/common.hpp"

namespace wbmr {

// ── 6D rotation representation ────────────────────────────────────────────
// decode: Gram-Schmidt the two stored columns into a proper rotation.
// Throws DegenerateRotationError when a column vanishes or the pair is
// (numerically) parallel.
Mat3 rot6d_to_matrix(const Rot6& r);

// encode: first two columns of R.
Rot6 matrix_to_rot6d(const Mat3& R);

// Reverse-mode derivative of rot6d_to_matrix: maps dL/dR to dL/dr.
Rot6 rot6d_to_matrix_backward(const Rot6& r, const Mat3& d_R);

// Canonical 6D encodings used as bias initialization and file defaults.
Rot6 identity_rot6();

// ── axis-angle ────────────────────────────────────────────────────────────
Mat3 expmap(const Vec3& aa);
Vec3 logmap(const Mat3& R);

// ── geodesic distance ─────────────────────────────────────────────────────
// Angle of A^T * B in radians, computed through atan2 of the skew/trace
// parts for stability away from pi.
double geodesic_angle(const Mat3& A, const Mat3& B);

// dL/dA and dL/dB for a scalar gradient d_angle. At zero angle the direction
// of steepest ascent is undefined; the subgradient zero is returned there.
void geodesic_angle_backward(const Mat3& A, const Mat3& B, double d_angle,
                             Mat3* d_A, Mat3* d_B);

// ── misc ──────────────────────────────────────────────────────────────────
bool is_rotation(const Mat3& R, double tol = 1e-8);

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

}  // namespace wbmr
