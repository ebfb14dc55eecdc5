#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace teleop {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec13 = Eigen::Matrix<double, 13, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat6x13 = Eigen::Matrix<double, 6, 13>;

// Skew-symmetric matrix S(a) with S(a) b = a x b.
Mat3 skew(const Vec3& a);

enum class SpatialKind { velocity, force };

// 6-D stacked linear/angular velocity or force/moment, tagged with the
// frame it is expressed in. The kind is fixed at construction.
class SpatialVector {
 public:
  static SpatialVector velocity(const Vec3& linear, const Vec3& angular,
                                std::string frame);
  static SpatialVector force(const Vec3& linear, const Vec3& angular,
                             std::string frame);
  static SpatialVector from_vec6(const Vec6& v, SpatialKind kind,
                                 std::string frame);

  const Vec3& linear() const { return linear_; }
  const Vec3& angular() const { return angular_; }
  SpatialKind kind() const { return kind_; }
  const std::string& frame() const { return frame_; }

  Vec6 to_vec6() const;

 private:
  SpatialVector(const Vec3& lin, const Vec3& ang, SpatialKind kind,
                std::string frame);

  Vec3 linear_;
  Vec3 angular_;
  SpatialKind kind_;
  std::string frame_;
};

// Rigid transform between two frames attached to a common body.
// `rotation` holds the axes of `to` expressed in `from`; `translation` is the
// origin of `to` expressed in `from`. The associated 6x6 force/moment
// transformation matrix is U = [[R, 0], [S(r) R, R]]; velocities map with
// U^T, forces with U.
class FrameTransform {
 public:
  FrameTransform(const Mat3& rotation, const Vec3& translation,
                 std::string from, std::string to);

  static FrameTransform identity(const std::string& frame);
  // Pure z-rotation plus translation, the planar special case.
  static FrameTransform planar(double angle, const Vec3& translation,
                               std::string from, std::string to);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  const std::string& from() const { return from_; }
  const std::string& to() const { return to_; }

  Mat6 force_matrix() const;  // the 6x6 U

 private:
  Mat3 rotation_;
  Vec3 translation_;
  std::string from_;
  std::string to_;
};

// 13-element inertial parameter vector with elementwise adaptation bounds.
// Layout: [m, h_x, h_y, h_z, I_xx, I_xy, I_xz, I_yy, I_yz, I_zz, 0, 0, 0]
// where h = m * r_com and I is the rotational inertia about the body frame
// origin. Slots 10..12 are reserved and pinned to zero; the regressor emits
// zero columns for them.
class BodyParams {
 public:
  BodyParams(const Vec13& theta, const Vec13& lower, const Vec13& upper);

  // Convenience constructor from physical quantities; bounds default to the
  // parameters themselves (no adaptation slack).
  static BodyParams from_inertia(double mass, const Vec3& com,
                                 const Mat3& inertia_origin);
  BodyParams with_bound_scale(double lo_scale, double hi_scale,
                              double abs_slack) const;

  const Vec13& theta() const { return theta_; }
  const Vec13& lower() const { return lower_; }
  const Vec13& upper() const { return upper_; }

  double mass() const { return theta_[0]; }
  Vec3 first_moment() const { return theta_.segment<3>(1); }
  Mat3 inertia_origin() const;

 private:
  Vec13 theta_;
  Vec13 lower_;
  Vec13 upper_;
};

// Gravity vector in the inertial base frame.
class GravityField {
 public:
  explicit GravityField(const Vec3& g);
  static GravityField standard();  // (0, -9.81, 0): y is up in the work plane
  static GravityField zero() { return GravityField(Vec3::Zero()); }

  const Vec3& g() const { return g_; }

 private:
  Vec3 g_;
};

// --- Frame-checked operations -------------------------------------------

// ^B V = ^A U_B^T ^A V. Requires v to be expressed in U.from().
SpatialVector transform_velocity(const FrameTransform& U,
                                 const SpatialVector& v);

// ^A F = ^A U_B ^B F. Requires f to be expressed in U.to().
SpatialVector transform_force(const FrameTransform& U, const SpatialVector& f);

// Chain A->B and B->C into A->C.
FrameTransform compose(const FrameTransform& U1, const FrameTransform& U2);
FrameTransform inverse(const FrameTransform& U);

// Net wrench of a freely moving rigid body expressed in its own frame:
// F* = M_A dV/dt + C_A(w) V + G_A. `orientation` is the rotation of the body
// frame relative to the inertial base (used to express gravity in the body
// frame). dV is the body-frame rate of V.
SpatialVector rigid_body_wrench(const BodyParams& p, const SpatialVector& V,
                                const SpatialVector& dV, const GravityField& g,
                                const Mat3& orientation);

// 6x13 regressor Y with Y theta == M_A d/dt(V_r) + C_A(w) V_r + G_A for all
// admissible theta; w is taken from the measured V.
Mat6x13 regressor(const SpatialVector& V, const SpatialVector& V_r,
                  const SpatialVector& dV_r, const GravityField& g,
                  const Mat3& orientation);

// --- Raw kernels on plain Eigen types ------------------------------------
// These avoid the frame bookkeeping for use inside the manipulator models.

// Spatial mass matrix [[m I, -S(h)], [S(h), I_o]].
Mat6 spatial_mass_matrix(const BodyParams& p);

// Coriolis/centrifugal matrix for body angular velocity w, chosen
// skew-symmetric so that x^T C(w) x = 0 for every x:
//   C(w) = [[m S(w), -S(w) S(h)], [S(h) S(w), -S(I_o w)]].
// At the body's own velocity [v; w] it reproduces the Newton-Euler bias
// terms exactly.
Mat6 spatial_coriolis(const BodyParams& p, const Vec3& omega);

// Gravity wrench G_A for gravity already expressed in the body frame.
Vec6 gravity_wrench(const BodyParams& p, const Vec3& g_body);

Mat6x13 regressor_raw(const Vec6& V, const Vec6& V_r, const Vec6& dV_r,
                      const Vec3& g_body);

Vec6 rigid_body_wrench_raw(const BodyParams& p, const Vec6& V, const Vec6& dV,
                           const Vec3& g_body);

}  // namespace teleop
