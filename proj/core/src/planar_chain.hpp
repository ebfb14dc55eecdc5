#pragma once

// Internal helpers for planar (z-axis) kinematic chains. Both manipulators
// operate in the x-y plane with all joint axes along z, so every frame
// transform is a z-rotation plus an in-plane translation.

#include <cmath>

#include "teleop/spatial.hpp"

namespace teleop::planar {

inline Mat3 rot_z(double a) {
  Mat3 R = Mat3::Identity();
  const double c = std::cos(a);
  const double s = std::sin(a);
  R(0, 0) = c;
  R(0, 1) = -s;
  R(1, 0) = s;
  R(1, 1) = c;
  return R;
}

// d/da rot_z(a)
inline Mat3 rot_z_dot(double a) {
  Mat3 R = Mat3::Zero();
  const double c = std::cos(a);
  const double s = std::sin(a);
  R(0, 0) = -s;
  R(0, 1) = -c;
  R(1, 0) = c;
  R(1, 1) = -s;
  return R;
}

// U^T x for U = [[R, 0], [S(r) R, R]] with R = rot_z(angle), r fixed in the
// source frame. Maps velocities from the source frame to the target frame.
inline Vec6 u_transpose_apply(double angle, const Vec3& r, const Vec6& x) {
  const Mat3 Rt = rot_z(angle).transpose();
  Vec6 y;
  y.head<3>() = Rt * (x.head<3>() + x.tail<3>().cross(r));
  y.tail<3>() = Rt * x.tail<3>();
  return y;
}

// Time derivative of u_transpose_apply along angle(t), x(t).
inline Vec6 u_transpose_apply_dot(double angle, double angle_dot, const Vec3& r,
                                  const Vec6& x, const Vec6& xdot) {
  const Mat3 Rt = rot_z(angle).transpose();
  const Mat3 Rt_dot = angle_dot * rot_z_dot(angle).transpose();
  Vec6 y;
  const Vec3 lin = x.head<3>() + x.tail<3>().cross(r);
  const Vec3 lin_dot = xdot.head<3>() + xdot.tail<3>().cross(r);
  y.head<3>() = Rt_dot * lin + Rt * lin_dot;
  y.tail<3>() = Rt_dot * x.tail<3>() + Rt * xdot.tail<3>();
  return y;
}

// U f: maps forces from the target frame back to the source frame.
inline Vec6 u_force_apply(double angle, const Vec3& r, const Vec6& f) {
  const Mat3 R = rot_z(angle);
  Vec6 y;
  y.head<3>() = R * f.head<3>();
  y.tail<3>() = r.cross(Vec3(y.head<3>())) + R * f.tail<3>();
  return y;
}

// U^{-1} f, i.e. the force map of the inverted transform.
inline Vec6 u_force_apply_inverse(double angle, const Vec3& r, const Vec6& f) {
  // Inverse transform has rotation R^T and translation -R^T r.
  const Mat3 Rt = rot_z(angle).transpose();
  Vec6 y;
  y.head<3>() = Rt * f.head<3>();
  y.tail<3>() = (-(Rt * r)).cross(Vec3(y.head<3>())) + Rt * f.tail<3>();
  return y;
}

// Unit angular rate about z as a 6-D spatial vector.
inline Vec6 z_twist() {
  Vec6 z = Vec6::Zero();
  z[5] = 1.0;
  return z;
}

inline Vec2 rot2(double a, const Vec2& v) {
  const double c = std::cos(a);
  const double s = std::sin(a);
  return Vec2(c * v.x() - s * v.y(), s * v.x() + c * v.y());
}

inline Vec2 unit_dir(double a) { return Vec2(std::cos(a), std::sin(a)); }

}  // namespace teleop::planar
