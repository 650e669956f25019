#include "wbmr/geometry.hpp"

#include <cmath>

#include "wbmr/errors.hpp"

namespace wbmr {

namespace {
constexpr double kDegenerateNorm = 1e-8;

inline Vec3 vee(const Mat3& m) {
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}
}  // namespace

Mat3 rot6d_to_matrix(const Rot6& r) {
  const Vec3 a = r.head<3>();
  const Vec3 b = r.tail<3>();
  const double na = a.norm();
  if (na < kDegenerateNorm) {
    throw DegenerateRotationError("rot6d decode: first basis vector is numerically zero");
  }
  const Vec3 x = a / na;
  const Vec3 u = b - x.dot(b) * x;
  const double nu = u.norm();
  if (nu < kDegenerateNorm) {
    throw DegenerateRotationError("rot6d decode: basis vectors are numerically parallel");
  }
  const Vec3 y = u / nu;
  Mat3 R;
  R.col(0) = x;
  R.col(1) = y;
  R.col(2) = x.cross(y);
  return R;
}

Rot6 matrix_to_rot6d(const Mat3& R) {
  Rot6 r;
  r.head<3>() = R.col(0);
  r.tail<3>() = R.col(1);
  return r;
}

Rot6 rot6d_to_matrix_backward(const Rot6& r, const Mat3& d_R) {
  // Recompute the forward intermediates; cheaper than caching them.
  const Vec3 a = r.head<3>();
  const Vec3 b = r.tail<3>();
  const double na = a.norm();
  const Vec3 x = a / na;
  const double d = x.dot(b);
  const Vec3 u = b - d * x;
  const double nu = u.norm();
  const Vec3 y = u / nu;

  const Vec3 gz = d_R.col(2);
  // z = x cross y
  Vec3 gx = d_R.col(0) + y.cross(gz);
  const Vec3 gy = d_R.col(1) + gz.cross(x);
  // y = u / |u|
  const Vec3 gu = (gy - y * y.dot(gy)) / nu;
  // u = b - (x.b) x
  const Vec3 gb = gu - x * x.dot(gu);
  gx += -b * x.dot(gu) - d * gu;
  // x = a / |a|
  const Vec3 ga = (gx - x * x.dot(gx)) / na;

  Rot6 g;
  g.head<3>() = ga;
  g.tail<3>() = gb;
  return g;
}

Rot6 identity_rot6() {
  Rot6 r;
  r << 1, 0, 0, 0, 1, 0;
  return r;
}

Mat3 expmap(const Vec3& aa) {
  const double theta2 = aa.squaredNorm();
  const double theta = std::sqrt(theta2);
  double c1, c2;  // sin(t)/t and (1-cos(t))/t^2
  if (theta < 1e-8) {
    c1 = 1.0 - theta2 / 6.0;
    c2 = 0.5 - theta2 / 24.0;
  } else {
    c1 = std::sin(theta) / theta;
    c2 = (1.0 - std::cos(theta)) / theta2;
  }
  const Mat3 k = skew(aa);
  return Mat3::Identity() + c1 * k + c2 * (k * k);
}

Vec3 logmap(const Mat3& R) {
  const double c = std::clamp((R.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::acos(c);
  const Vec3 s = vee(R - R.transpose()) * 0.5;  // sin(theta) * axis

  if (theta < 1e-8) {
    return s;  // first-order: R ~ I + skew(w)
  }
  if (theta > M_PI - 1e-4) {
    // Near pi the skew part vanishes; recover the axis from the symmetric
    // part, R ~ 2 n n^T - I, taking the best-conditioned column.
    const Mat3 S = 0.5 * (R + Mat3::Identity());
    int k = 0;
    S.diagonal().maxCoeff(&k);
    Vec3 n = S.col(k) / std::sqrt(std::max(S(k, k), 1e-12));
    n.normalize();
    if (s.dot(n) < 0.0) n = -n;  // keep continuity while sin(theta) > 0
    return theta * n;
  }
  return (theta / std::sin(theta)) * s;
}

double geodesic_angle(const Mat3& A, const Mat3& B) {
  const Mat3 rel = A.transpose() * B;
  const double c = (rel.trace() - 1.0) * 0.5;
  const double s = (vee(rel - rel.transpose()) * 0.5).norm();
  return std::atan2(s, c);
}

void geodesic_angle_backward(const Mat3& A, const Mat3& B, double d_angle,
                             Mat3* d_A, Mat3* d_B) {
  const Mat3 rel = A.transpose() * B;
  const double c = (rel.trace() - 1.0) * 0.5;
  const Vec3 sv = vee(rel - rel.transpose()) * 0.5;
  const double s = sv.norm();
  const double denom = s * s + c * c;

  // theta = atan2(s, c)
  const double dc = d_angle * (-s / denom);
  Mat3 g_rel = (dc * 0.5) * Mat3::Identity();
  if (s > 1e-12) {
    const Vec3 gsv = (d_angle * (c / denom) / s) * sv;
    g_rel(2, 1) += 0.5 * gsv[0];
    g_rel(1, 2) -= 0.5 * gsv[0];
    g_rel(0, 2) += 0.5 * gsv[1];
    g_rel(2, 0) -= 0.5 * gsv[1];
    g_rel(1, 0) += 0.5 * gsv[2];
    g_rel(0, 1) -= 0.5 * gsv[2];
  }
  // rel = A^T B
  if (d_A) *d_A += B * g_rel.transpose();
  if (d_B) *d_B += A * g_rel;
}

bool is_rotation(const Mat3& R, double tol) {
  const Mat3 gram = R.transpose() * R;
  return (gram - Mat3::Identity()).cwiseAbs().maxCoeff() < tol && R.determinant() > 0.0;
}

}  // namespace wbmr
