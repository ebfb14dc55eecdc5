#include "teleop/spatial.hpp"

#include <cmath>

namespace teleop {

namespace {

void require_finite(const Vec6& v, const char* what) {
  if (!v.allFinite()) {
    throw std::invalid_argument(std::string("non-finite ") + what);
  }
}

// Inertia-to-column map L(a) with L(a) * [Ixx,Ixy,Ixz,Iyy,Iyz,Izz]^T = I a.
Eigen::Matrix<double, 3, 6> inertia_map(const Vec3& a) {
  Eigen::Matrix<double, 3, 6> L;
  L << a.x(), a.y(), a.z(), 0.0, 0.0, 0.0,  //
      0.0, a.x(), 0.0, a.y(), a.z(), 0.0,   //
      0.0, 0.0, a.x(), 0.0, a.y(), a.z();
  return L;
}

}  // namespace

Mat3 skew(const Vec3& a) {
  Mat3 s;
  s << 0.0, -a.z(), a.y(),  //
      a.z(), 0.0, -a.x(),   //
      -a.y(), a.x(), 0.0;
  return s;
}

// --- SpatialVector ---------------------------------------------------------

SpatialVector::SpatialVector(const Vec3& lin, const Vec3& ang, SpatialKind kind,
                             std::string frame)
    : linear_(lin), angular_(ang), kind_(kind), frame_(std::move(frame)) {}

SpatialVector SpatialVector::velocity(const Vec3& linear, const Vec3& angular,
                                      std::string frame) {
  return SpatialVector(linear, angular, SpatialKind::velocity,
                       std::move(frame));
}

SpatialVector SpatialVector::force(const Vec3& linear, const Vec3& angular,
                                   std::string frame) {
  return SpatialVector(linear, angular, SpatialKind::force, std::move(frame));
}

SpatialVector SpatialVector::from_vec6(const Vec6& v, SpatialKind kind,
                                       std::string frame) {
  return SpatialVector(v.head<3>(), v.tail<3>(), kind, std::move(frame));
}

Vec6 SpatialVector::to_vec6() const {
  Vec6 v;
  v << linear_, angular_;
  return v;
}

// --- FrameTransform --------------------------------------------------------

FrameTransform::FrameTransform(const Mat3& rotation, const Vec3& translation,
                               std::string from, std::string to)
    : rotation_(rotation),
      translation_(translation),
      from_(std::move(from)),
      to_(std::move(to)) {
  const double ortho =
      (rotation.transpose() * rotation - Mat3::Identity()).norm();
  if (ortho > 1e-10 || std::abs(rotation.determinant() - 1.0) > 1e-10) {
    throw std::invalid_argument("FrameTransform: rotation is not a proper "
                                "orthonormal matrix (from '" +
                                from_ + "' to '" + to_ + "')");
  }
}

FrameTransform FrameTransform::identity(const std::string& frame) {
  return FrameTransform(Mat3::Identity(), Vec3::Zero(), frame, frame);
}

FrameTransform FrameTransform::planar(double angle, const Vec3& translation,
                                      std::string from, std::string to) {
  Mat3 R = Mat3::Identity();
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  R(0, 0) = c;
  R(0, 1) = -s;
  R(1, 0) = s;
  R(1, 1) = c;
  return FrameTransform(R, translation, std::move(from), std::move(to));
}

Mat6 FrameTransform::force_matrix() const {
  Mat6 U = Mat6::Zero();
  U.topLeftCorner<3, 3>() = rotation_;
  U.bottomRightCorner<3, 3>() = rotation_;
  U.bottomLeftCorner<3, 3>() = skew(translation_) * rotation_;
  return U;
}

// --- BodyParams ------------------------------------------------------------

BodyParams::BodyParams(const Vec13& theta, const Vec13& lower,
                       const Vec13& upper)
    : theta_(theta), lower_(lower), upper_(upper) {
  if (theta_[0] <= 0.0) {
    throw std::invalid_argument("BodyParams: mass must be positive");
  }
  for (int i = 0; i < 13; ++i) {
    if (!(lower_[i] <= theta_[i] && theta_[i] <= upper_[i])) {
      throw std::invalid_argument(
          "BodyParams: theta must satisfy lower <= theta <= upper (slot " +
          std::to_string(i) + ")");
    }
  }
  for (int i = 10; i < 13; ++i) {
    if (theta_[i] != 0.0) {
      throw std::invalid_argument("BodyParams: reserved slots 11-13 are zero");
    }
  }
}

BodyParams BodyParams::from_inertia(double mass, const Vec3& com,
                                    const Mat3& inertia_origin) {
  Vec13 theta = Vec13::Zero();
  theta[0] = mass;
  theta.segment<3>(1) = mass * com;
  theta[4] = inertia_origin(0, 0);
  theta[5] = inertia_origin(0, 1);
  theta[6] = inertia_origin(0, 2);
  theta[7] = inertia_origin(1, 1);
  theta[8] = inertia_origin(1, 2);
  theta[9] = inertia_origin(2, 2);
  return BodyParams(theta, theta, theta);
}

BodyParams BodyParams::with_bound_scale(double lo_scale, double hi_scale,
                                        double abs_slack) const {
  Vec13 lo;
  Vec13 hi;
  for (int i = 0; i < 13; ++i) {
    const double a = theta_[i] * lo_scale;
    const double b = theta_[i] * hi_scale;
    lo[i] = std::min(a, b) - abs_slack;
    hi[i] = std::max(a, b) + abs_slack;
  }
  // Keep the mass strictly positive whatever the slack.
  lo[0] = std::max(lo[0], 1e-6);
  for (int i = 10; i < 13; ++i) {
    lo[i] = std::min(lo[i], 0.0);
    hi[i] = std::max(hi[i], 0.0);
  }
  return BodyParams(theta_, lo, hi);
}

Mat3 BodyParams::inertia_origin() const {
  Mat3 I;
  I << theta_[4], theta_[5], theta_[6],  //
      theta_[5], theta_[7], theta_[8],   //
      theta_[6], theta_[8], theta_[9];
  return I;
}

// --- GravityField ----------------------------------------------------------

GravityField::GravityField(const Vec3& g) : g_(g) {
  if (g.norm() > 20.0) {
    throw std::invalid_argument("GravityField: |g| exceeds 20 m/s^2");
  }
}

GravityField GravityField::standard() {
  return GravityField(Vec3(0.0, -9.81, 0.0));
}

// --- Transforms ------------------------------------------------------------

SpatialVector transform_velocity(const FrameTransform& U,
                                 const SpatialVector& v) {
  if (v.kind() != SpatialKind::velocity) {
    throw std::invalid_argument("transform_velocity: argument is not a "
                                "velocity");
  }
  if (v.frame() != U.from()) {
    throw std::invalid_argument("transform_velocity: vector in frame '" +
                                v.frame() + "' but transform maps from '" +
                                U.from() + "'");
  }
  const Mat3& R = U.rotation();
  const Vec3& r = U.translation();
  const Vec3 lin = R.transpose() * (v.linear() + v.angular().cross(r));
  const Vec3 ang = R.transpose() * v.angular();
  return SpatialVector::velocity(lin, ang, U.to());
}

SpatialVector transform_force(const FrameTransform& U, const SpatialVector& f) {
  if (f.kind() != SpatialKind::force) {
    throw std::invalid_argument("transform_force: argument is not a force");
  }
  if (f.frame() != U.to()) {
    throw std::invalid_argument("transform_force: vector in frame '" +
                                f.frame() + "' but transform maps to '" +
                                U.to() + "'");
  }
  const Mat3& R = U.rotation();
  const Vec3& r = U.translation();
  const Vec3 lin = R * f.linear();
  const Vec3 ang = r.cross(lin) + R * f.angular();
  return SpatialVector::force(lin, ang, U.from());
}

FrameTransform compose(const FrameTransform& U1, const FrameTransform& U2) {
  if (U1.to() != U2.from()) {
    throw std::invalid_argument("compose: chain mismatch, '" + U1.to() +
                                "' != '" + U2.from() + "'");
  }
  return FrameTransform(U1.rotation() * U2.rotation(),
                        U1.translation() + U1.rotation() * U2.translation(),
                        U1.from(), U2.to());
}

FrameTransform inverse(const FrameTransform& U) {
  const Mat3 Rt = U.rotation().transpose();
  return FrameTransform(Rt, -(Rt * U.translation()), U.to(), U.from());
}

// --- Rigid-body dynamics kernels -------------------------------------------

Mat6 spatial_mass_matrix(const BodyParams& p) {
  Mat6 M = Mat6::Zero();
  const Mat3 Sh = skew(p.first_moment());
  M.topLeftCorner<3, 3>() = p.mass() * Mat3::Identity();
  M.topRightCorner<3, 3>() = -Sh;
  M.bottomLeftCorner<3, 3>() = Sh;
  M.bottomRightCorner<3, 3>() = p.inertia_origin();
  return M;
}

Mat6 spatial_coriolis(const BodyParams& p, const Vec3& omega) {
  Mat6 C = Mat6::Zero();
  const Mat3 Sw = skew(omega);
  const Mat3 Sh = skew(p.first_moment());
  C.topLeftCorner<3, 3>() = p.mass() * Sw;
  C.topRightCorner<3, 3>() = -Sw * Sh;
  C.bottomLeftCorner<3, 3>() = Sh * Sw;
  C.bottomRightCorner<3, 3>() = -skew(p.inertia_origin() * omega);
  return C;
}

Vec6 gravity_wrench(const BodyParams& p, const Vec3& g_body) {
  Vec6 G;
  G.head<3>() = -p.mass() * g_body;
  G.tail<3>() = -p.first_moment().cross(g_body);
  return G;
}

Vec6 rigid_body_wrench_raw(const BodyParams& p, const Vec6& V, const Vec6& dV,
                           const Vec3& g_body) {
  return spatial_mass_matrix(p) * dV +
         spatial_coriolis(p, V.tail<3>()) * V + gravity_wrench(p, g_body);
}

Mat6x13 regressor_raw(const Vec6& V, const Vec6& V_r, const Vec6& dV_r,
                      const Vec3& g_body) {
  const Vec3 w = V.tail<3>();
  const Vec3 v_r = V_r.head<3>();
  const Vec3 w_r = V_r.tail<3>();
  const Vec3 a_r = dV_r.head<3>();
  const Vec3 al_r = dV_r.tail<3>();

  Mat6x13 Y = Mat6x13::Zero();

  // Mass column.
  Y.block<3, 1>(0, 0) = a_r + w.cross(v_r) - g_body;

  // First-moment columns h = m r_com.
  Y.block<3, 3>(0, 1) = skew(al_r) + skew(w) * skew(w_r);
  Y.block<3, 3>(3, 1) = -skew(a_r) - skew(w.cross(v_r)) + skew(g_body);

  // Inertia columns [Ixx, Ixy, Ixz, Iyy, Iyz, Izz].
  Y.block<3, 6>(3, 4) = inertia_map(al_r) + skew(w_r) * inertia_map(w);

  // Columns 10..12 stay zero (reserved parameter slots).
  return Y;
}

SpatialVector rigid_body_wrench(const BodyParams& p, const SpatialVector& V,
                                const SpatialVector& dV, const GravityField& g,
                                const Mat3& orientation) {
  if (V.frame() != dV.frame()) {
    throw std::invalid_argument("rigid_body_wrench: V in '" + V.frame() +
                                "' but dV in '" + dV.frame() + "'");
  }
  require_finite(V.to_vec6(), "velocity");
  require_finite(dV.to_vec6(), "velocity rate");
  const Vec3 g_body = orientation.transpose() * g.g();
  const Vec6 F = rigid_body_wrench_raw(p, V.to_vec6(), dV.to_vec6(), g_body);
  return SpatialVector::from_vec6(F, SpatialKind::force, V.frame());
}

Mat6x13 regressor(const SpatialVector& V, const SpatialVector& V_r,
                  const SpatialVector& dV_r, const GravityField& g,
                  const Mat3& orientation) {
  if (V.frame() != V_r.frame() || V.frame() != dV_r.frame()) {
    throw std::invalid_argument("regressor: V, V_r, dV_r must share a frame");
  }
  require_finite(V.to_vec6(), "velocity");
  require_finite(V_r.to_vec6(), "required velocity");
  require_finite(dV_r.to_vec6(), "required velocity rate");
  const Vec3 g_body = orientation.transpose() * g.g();
  return regressor_raw(V.to_vec6(), V_r.to_vec6(), dV_r.to_vec6(), g_body);
}

}  // namespace teleop
