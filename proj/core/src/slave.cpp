#include "teleop/slave.hpp"

#include <cmath>

#include "planar_chain.hpp"

namespace teleop {

using planar::rot_z;
using planar::u_force_apply;
using planar::u_force_apply_inverse;
using planar::u_transpose_apply;
using planar::u_transpose_apply_dot;
using planar::unit_dir;
using planar::z_twist;

namespace {

void check_spsd(const Mat2& m, const char* name) {
  if ((m - m.transpose()).norm() > 1e-12 * (1.0 + m.norm())) {
    throw std::invalid_argument(std::string(name) + " must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat2> es(m);
  if (es.eigenvalues().minCoeff() <= 0.0) {
    throw std::invalid_argument(std::string(name) +
                                " must be positive definite");
  }
}

double condition_number(const Mat2& J) {
  if (!J.allFinite()) return std::numeric_limits<double>::infinity();
  Eigen::JacobiSVD<Mat2> svd(J);
  const double smin = svd.singularValues()(1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return svd.singularValues()(0) / smin;
}

}  // namespace

// --- Environment -----------------------------------------------------------------

void EnvironmentModel::validate() const {
  check_spsd(M_e, "M_e");
  check_spsd(D_e, "D_e");
  check_spsd(K_e, "K_e");
  if (std::abs(wall.normal.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("wall normal must be a unit vector");
  }
  if (wall.hysteresis < 0.0) {
    throw std::invalid_argument("hysteresis band must be non-negative");
  }
}

ContactSwitch contact_switch_update(const ContactSwitch& cs, const Vec2& tip,
                                    const WallDescription& wall) {
  const double sep = wall.separation(tip);
  ContactSwitch out = cs;
  if (cs.sigma_f == 0.0) {
    if (sep < 0.0) out.sigma_f = 1.0;
  } else {
    if (sep > wall.hysteresis) out.sigma_f = 0.0;
  }
  return out;
}

Vec2 environment_force(const EnvironmentModel& env, const Vec2& tip_pos,
                       const Vec2& tip_vel, const Vec2& tip_acc,
                       double sigma_f) {
  if (sigma_f == 0.0) return Vec2::Zero();
  const Vec2 n = env.wall.normal;
  const Vec2 x = n * env.wall.separation(tip_pos);
  const Vec2 v = n * n.dot(tip_vel);
  const Vec2 a = n * n.dot(tip_acc);
  return sigma_f * (env.M_e * a + env.D_e * v + env.K_e * x);
}

// --- Kinematics ---------------------------------------------------------------------

SlaveKinematics::SlaveKinematics(const Params& params) : params_(params) {
  if (params_.l1 <= 0.0 || params_.l2 <= 0.0) {
    throw std::invalid_argument("SlaveKinematics: link lengths must be "
                                "positive");
  }
  if (params_.d_o2 < 0.0 || params_.d_o2 > params_.l2) {
    throw std::invalid_argument("SlaveKinematics: d_o2 must lie on link 2");
  }
}

Mat12x2 SlaveKinematics::theta(const Vec2& q) const {
  const Vec3 r_elbow(params_.l1, 0.0, 0.0);
  const Vec3 r_o2(params_.d_o2, 0.0, 0.0);
  const Vec6 z = z_twist();

  Mat12x2 Th = Mat12x2::Zero();
  Th.block<6, 1>(0, 0) = z;  // link 1 spins about the base joint
  // Object 2: base-joint rotation transported through the elbow, plus the
  // elbow joint's own rotation.
  const Vec6 col0_to2 = u_transpose_apply(q[1], r_elbow, z);
  Th.block<6, 1>(6, 0) = u_transpose_apply(0.0, r_o2, col0_to2);
  Th.block<6, 1>(6, 1) = u_transpose_apply(0.0, r_o2, z);
  return Th;
}

Mat12x2 SlaveKinematics::theta_dot(const Vec2& q, const Vec2& dq) const {
  const Vec3 r_elbow(params_.l1, 0.0, 0.0);
  const Vec3 r_o2(params_.d_o2, 0.0, 0.0);
  const Vec6 z = z_twist();

  Mat12x2 Td = Mat12x2::Zero();
  const Vec6 col0_to2_dot =
      u_transpose_apply_dot(q[1], dq[1], r_elbow, z, Vec6::Zero());
  Td.block<6, 1>(6, 0) = u_transpose_apply(0.0, r_o2, col0_to2_dot);
  return Td;
}

Mat2 SlaveKinematics::jacobian(const Vec2& q) const {
  const double a12 = q[0] + q[1];
  const Vec3 r_g(params_.l2 - params_.d_o2, 0.0, 0.0);
  const Mat12x2 Th = theta(q);

  Mat2 J;
  for (int j = 0; j < 2; ++j) {
    // O2 -> G (fixed), then G -> C (pure rotation back to base axes).
    const Vec6 at_g = u_transpose_apply(0.0, r_g, Vec6(Th.block<6, 1>(6, j)));
    const Vec6 at_c = u_transpose_apply(-a12, Vec3::Zero(), at_g);
    J.col(j) = at_c.head<2>();
  }
  if (condition_number(J) > params_.cond_max) {
    throw std::runtime_error("slave jacobian singular: condition number "
                             "exceeds bound");
  }
  return J;
}

Mat2 SlaveKinematics::jacobian_dot(const Vec2& q, const Vec2& dq) const {
  const double a12 = q[0] + q[1];
  const double da12 = dq[0] + dq[1];
  const Vec3 r_g(params_.l2 - params_.d_o2, 0.0, 0.0);
  const Mat12x2 Th = theta(q);
  const Mat12x2 Td = theta_dot(q, dq);

  Mat2 Jd;
  for (int j = 0; j < 2; ++j) {
    const Vec6 at_g = u_transpose_apply(0.0, r_g, Vec6(Th.block<6, 1>(6, j)));
    const Vec6 at_g_dot =
        u_transpose_apply(0.0, r_g, Vec6(Td.block<6, 1>(6, j)));
    const Vec6 at_c =
        u_transpose_apply_dot(-a12, -da12, Vec3::Zero(), at_g, at_g_dot);
    Jd.col(j) = at_c.head<2>();
  }
  return Jd;
}

Vec2 SlaveKinematics::tip_position(const Vec2& q) const {
  return params_.l1 * unit_dir(q[0]) + params_.l2 * unit_dir(q[0] + q[1]);
}

SlaveKinematics::Pose SlaveKinematics::frame_pose(Frame f,
                                                  const Vec2& q) const {
  const double a1 = q[0];
  const double a12 = q[0] + q[1];
  const Vec2 elbow = params_.l1 * unit_dir(a1);
  switch (f) {
    case Frame::L1:
      return {a1, Vec2::Zero()};
    case Frame::TO2:
      return {a12, elbow};
    case Frame::O2:
      return {a12, elbow + params_.d_o2 * unit_dir(a12)};
    case Frame::G:
      return {a12, elbow + params_.l2 * unit_dir(a12)};
    case Frame::C:
      return {0.0, elbow + params_.l2 * unit_dir(a12)};
  }
  throw std::logic_error("unknown frame");
}

std::array<double, 2> SlaveKinematics::link_angles(const Vec2& q) const {
  return {q[0], q[0] + q[1]};
}

bool SlaveKinematics::inside_workspace(const Vec2& q) const {
  return q[0] >= params_.q_min[0] && q[0] <= params_.q_max[0] &&
         q[1] >= params_.q_min[1] && q[1] <= params_.q_max[1];
}

void SlaveKinematics::check_workspace(const Vec2& q) const {
  if (!inside_workspace(q)) {
    throw std::out_of_range("slave joint angles outside the workspace box");
  }
}

void SlaveKinematics::validate(int samples_per_axis) const {
  for (int i = 0; i < samples_per_axis; ++i) {
    for (int j = 0; j < samples_per_axis; ++j) {
      const double u = static_cast<double>(i) / (samples_per_axis - 1);
      const double v = static_cast<double>(j) / (samples_per_axis - 1);
      Vec2 q(params_.q_min[0] + u * (params_.q_max[0] - params_.q_min[0]),
             params_.q_min[1] + v * (params_.q_max[1] - params_.q_min[1]));
      jacobian(q);
    }
  }
}

// --- Required motion -----------------------------------------------------------------

Vec2 required_velocity_slave(const Vec2& v_sd, const Vec2& f_tilde_s,
                             const Mat2& A) {
  return v_sd - A * f_tilde_s;
}

SlaveRequired slave_required_lift(const SlaveKinematics& kin, const Vec2& q,
                                  const Vec2& dq, const Vec2& v_sr,
                                  const Vec2& dv_sr) {
  const auto& prm = kin.params();
  const double a12 = q[0] + q[1];
  const Vec3 r_elbow(prm.l1, 0.0, 0.0);
  const Vec3 r_o2(prm.d_o2, 0.0, 0.0);
  const Vec3 r_g(prm.l2 - prm.d_o2, 0.0, 0.0);
  const Vec6 z = z_twist();

  SlaveRequired req;
  const Mat2 J = kin.jacobian(q);
  const Mat2 Jd = kin.jacobian_dot(q, dq);
  const Mat2 J_inv = J.inverse();
  req.qdot_r = J_inv * v_sr;
  req.qddot_r = J_inv * (dv_sr - Jd * req.qdot_r);

  req.V_to2_r =
      u_transpose_apply(q[1], r_elbow, z) * req.qdot_r[0] + z * req.qdot_r[1];
  req.V_o2_r = u_transpose_apply(0.0, r_o2, req.V_to2_r);
  req.V_g_r = u_transpose_apply(0.0, r_g, req.V_o2_r);
  req.V_c_r = u_transpose_apply(-a12, Vec3::Zero(), req.V_g_r);

  const Mat12x2 Th = kin.theta(q);
  const Mat12x2 Td = kin.theta_dot(q, dq);
  req.dV_o2_r = Th.block<6, 2>(6, 0) * req.qddot_r +
                Td.block<6, 2>(6, 0) * req.qdot_r;
  return req;
}

Vec2 required_contact_force(const EnvironmentModel& env, const Vec2& dv_sr,
                            const Vec2& tip_vel, const Vec2& tip_pos) {
  const Vec2 n = env.wall.normal;
  const Vec2 x = n * env.wall.separation(tip_pos);
  const Vec2 v = n * n.dot(tip_vel);
  const Vec2 a = n * n.dot(dv_sr);
  return env.M_e * a + env.D_e * v + env.K_e * x;
}

Object2Control object2_control(const SlaveKinematics& kin,
                               const GravityField& gravity, const Vec2& q,
                               const Vec2& dq, const SlaveRequired& req,
                               const Vec13& theta_hat, const Vec6& K_o2_diag,
                               const Vec2& f_sr, double sigma_f) {
  const auto& prm = kin.params();
  const double a12 = q[0] + q[1];
  const Vec3 r_o2(prm.d_o2, 0.0, 0.0);
  const Vec3 r_g(prm.l2 - prm.d_o2, 0.0, 0.0);

  const Mat12x2 Th = kin.theta(q);
  const Vec6 V_o2 = Th.block<6, 2>(6, 0) * dq;
  const Vec3 g_body = rot_z(a12).transpose() * gravity.g();

  Object2Control out;
  const Mat6x13 Y = regressor_raw(V_o2, req.V_o2_r, req.dV_o2_r, g_body);
  const Vec6 dV_err = req.V_o2_r - V_o2;
  out.F_star_r = Y * theta_hat + K_o2_diag.asDiagonal() * dV_err;
  out.s_o2 = Y.transpose() * dV_err;

  // ^G F_r: required contact force lifted to G (gated by sigma_f).
  Vec6 f_g_r = Vec6::Zero();
  const Vec2 f_rot = rot_z(a12).transpose().topLeftCorner<2, 2>() * f_sr;
  f_g_r.head<2>() = sigma_f * f_rot;
  out.F_g_r = f_g_r;

  // Force balance: F*_r = ^O2 U_TO2 F_to2_r - sigma ^O2 U_G F_g_r.
  // ^O2 U_TO2 has R = I, r = -r_o2; ^O2 U_G has R = I, r = +r_g.
  const Vec6 rhs =
      out.F_star_r + sigma_f * u_force_apply(0.0, r_g, out.F_g_r);
  out.F_to2_r = u_force_apply_inverse(0.0, Vec3(-r_o2), rhs);
  return out;
}

Vec13 adaptation_step_o2(const Vec13& theta_hat, const Vec13& s_o2,
                         const Vec13& rho, const Vec13& lower,
                         const Vec13& upper, double dt) {
  Vec13 out = theta_hat;
  for (int i = 0; i < 13; ++i) {
    if (lower[i] > upper[i]) {
      throw std::invalid_argument("adaptation_step_o2: bounds out of order");
    }
    double kappa = 1.0;
    if (theta_hat[i] <= lower[i] && s_o2[i] <= 0.0) kappa = 0.0;
    if (theta_hat[i] >= upper[i] && s_o2[i] >= 0.0) kappa = 0.0;
    out[i] += dt * rho[i] * kappa * s_o2[i];
    out[i] = std::clamp(out[i], lower[i], upper[i]);
  }
  return out;
}

double virtual_power_flow_raw(const Vec6& V_r, const Vec6& V, const Vec6& F_r,
                              const Vec6& F) {
  return (V_r - V).dot(F_r - F);
}

double virtual_power_flow(const SpatialVector& V_r, const SpatialVector& V,
                          const SpatialVector& F_r, const SpatialVector& F) {
  if (V_r.frame() != V.frame() || V.frame() != F_r.frame() ||
      F_r.frame() != F.frame()) {
    throw std::invalid_argument("virtual_power_flow: all vectors must share "
                                "one frame");
  }
  return virtual_power_flow_raw(V_r.to_vec6(), V.to_vec6(), F_r.to_vec6(),
                                F.to_vec6());
}

// --- Plant ------------------------------------------------------------------------

namespace {

struct SlaveDyn {
  Mat12x2 Theta;
  Mat12x2 Theta_dot;
  Mat2 J;
  Mat2 J_dot;
  Vec12 V;
  std::array<double, 2> angles;
};

SlaveDyn eval_dyn(const SlaveKinematics& kin, const Vec2& q, const Vec2& dq) {
  SlaveDyn d;
  d.Theta = kin.theta(q);
  d.Theta_dot = kin.theta_dot(q, dq);
  d.J = kin.jacobian(q);
  d.J_dot = kin.jacobian_dot(q, dq);
  d.V = d.Theta * dq;
  d.angles = kin.link_angles(q);
  return d;
}

Mat2 joint_inertia(const SlaveDyn& d, const SlaveBodies& bodies) {
  Mat2 M = Mat2::Zero();
  const std::array<const BodyParams*, 2> list = {&bodies.link1,
                                                 &bodies.object2};
  for (int k = 0; k < 2; ++k) {
    const Mat6x2 blk = d.Theta.block<6, 2>(6 * k, 0);
    M += blk.transpose() * spatial_mass_matrix(*list[k]) * blk;
  }
  return M;
}

Vec2 joint_bias(const SlaveDyn& d, const SlaveBodies& bodies,
                const GravityField& gravity, const Vec2& dq) {
  Vec2 b = Vec2::Zero();
  const std::array<const BodyParams*, 2> list = {&bodies.link1,
                                                 &bodies.object2};
  for (int k = 0; k < 2; ++k) {
    const Mat6x2 blk = d.Theta.block<6, 2>(6 * k, 0);
    const Mat6x2 blk_dot = d.Theta_dot.block<6, 2>(6 * k, 0);
    const Vec6 Vk = d.V.segment<6>(6 * k);
    const Vec3 g_body = rot_z(d.angles[k]).transpose() * gravity.g();
    b += blk.transpose() *
         (spatial_mass_matrix(*list[k]) * (blk_dot * dq) +
          spatial_coriolis(*list[k], Vk.tail<3>()) * (blk * dq) +
          gravity_wrench(*list[k], g_body));
  }
  return b;
}

Vec2 slave_ddq(const SlaveKinematics& kin, const SlaveBodies& bodies,
               const GravityField& gravity, const EnvironmentModel& env,
               const Vec2& q, const Vec2& dq, const Vec2& tau,
               double sigma_f) {
  const SlaveDyn d = eval_dyn(kin, q, dq);
  const Mat2 Mj = joint_inertia(d, bodies);
  const Vec2 bj = joint_bias(d, bodies, gravity, dq);

  Mat2 M_tot = Mj;
  Vec2 rhs = tau - bj;
  if (sigma_f != 0.0) {
    const Vec2 n = env.wall.normal;
    const Mat2 P = env.normal_projector();
    const Vec2 tip = kin.tip_position(q);
    const Vec2 tip_vel = d.J * dq;
    M_tot += sigma_f * d.J.transpose() * env.M_e * P * d.J;
    rhs -= sigma_f * d.J.transpose() *
           (env.M_e * P * (d.J_dot * dq) + env.D_e * (P * tip_vel) +
            env.K_e * (n * env.wall.separation(tip)));
  }
  return M_tot.ldlt().solve(rhs);
}

}  // namespace

SlavePlantEval slave_plant_eval(const SlaveKinematics& kin,
                                const SlaveBodies& bodies,
                                const GravityField& gravity,
                                const EnvironmentModel& env,
                                const SlaveState& state, const Vec2& tau,
                                double sigma_f) {
  const auto& prm = kin.params();
  const SlaveDyn d = eval_dyn(kin, state.q, state.dq);
  SlavePlantEval out;
  out.ddq = slave_ddq(kin, bodies, gravity, env, state.q, state.dq, tau,
                      sigma_f);
  out.tip_vel = d.J * state.dq;
  out.tip_acc = d.J_dot * state.dq + d.J * out.ddq;
  out.f_s = environment_force(env, kin.tip_position(state.q), out.tip_vel,
                              out.tip_acc, sigma_f);

  out.V_o2 = d.Theta.block<6, 2>(6, 0) * state.dq;
  out.dV_o2 = d.Theta.block<6, 2>(6, 0) * out.ddq +
              d.Theta_dot.block<6, 2>(6, 0) * state.dq;
  {
    const Vec3 r_elbow(prm.l1, 0.0, 0.0);
    const Vec6 z = z_twist();
    out.V_to2 = u_transpose_apply(state.q[1], r_elbow, z) * state.dq[0] +
                z * state.dq[1];
    out.V_g = u_transpose_apply(0.0, Vec3(prm.l2 - prm.d_o2, 0.0, 0.0),
                                out.V_o2);
  }
  const double a12 = state.q[0] + state.q[1];
  const Vec3 g_body = rot_z(a12).transpose() * gravity.g();
  out.F_star = spatial_mass_matrix(bodies.object2) * out.dV_o2 +
               spatial_coriolis(bodies.object2, out.V_o2.tail<3>()) * out.V_o2 +
               gravity_wrench(bodies.object2, g_body);

  Vec6 f_g = Vec6::Zero();
  f_g.head<2>() = rot_z(a12).transpose().topLeftCorner<2, 2>() * out.f_s;
  out.F_g = f_g;

  const Vec3 r_o2(prm.d_o2, 0.0, 0.0);
  const Vec3 r_g(prm.l2 - prm.d_o2, 0.0, 0.0);
  const Vec6 rhs = out.F_star + sigma_f * u_force_apply(0.0, r_g, out.F_g);
  out.F_to2 = u_force_apply_inverse(0.0, Vec3(-r_o2), rhs);
  return out;
}

SlaveState slave_plant_step(const SlaveKinematics& kin,
                            const SlaveBodies& bodies,
                            const GravityField& gravity,
                            const EnvironmentModel& env,
                            const SlaveState& state, const Vec2& tau,
                            double sigma_f, double dt) {
  if (dt <= 0.0) {
    throw std::invalid_argument("slave_plant_step: dt must be positive");
  }
  if (!state.q.allFinite() || !state.dq.allFinite()) {
    throw std::invalid_argument("slave_plant_step: non-finite state");
  }

  using Y = Eigen::Matrix<double, 4, 1>;
  Y y;
  y << state.q, state.dq;

  auto deriv = [&](const Y& yy) -> Y {
    const Vec2 q = yy.segment<2>(0);
    const Vec2 dq = yy.segment<2>(2);
    Y dy;
    dy << dq, slave_ddq(kin, bodies, gravity, env, q, dq, tau, sigma_f);
    return dy;
  };

  const Y k1 = deriv(y);
  const Y k2 = deriv(y + 0.5 * dt * k1);
  const Y k3 = deriv(y + 0.5 * dt * k2);
  const Y k4 = deriv(y + dt * k3);
  const Y y1 = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

  SlaveState next = state;
  next.q = y1.segment<2>(0);
  next.dq = y1.segment<2>(2);
  return next;
}

Vec2 slave_gravity_torque(const SlaveKinematics& kin, const SlaveBodies& bodies,
                          const GravityField& gravity, const Vec2& q) {
  const SlaveDyn d = eval_dyn(kin, q, Vec2::Zero());
  Vec2 tau = Vec2::Zero();
  const std::array<const BodyParams*, 2> list = {&bodies.link1,
                                                 &bodies.object2};
  for (int k = 0; k < 2; ++k) {
    const Vec3 g_body = rot_z(d.angles[k]).transpose() * gravity.g();
    tau += d.Theta.block<6, 2>(6 * k, 0).transpose() *
           gravity_wrench(*list[k], g_body);
  }
  return tau;
}

// --- Controller --------------------------------------------------------------------

SlaveController::SlaveController(const SlaveKinematics& kin,
                                 const SlaveBodies& bodies,
                                 const GravityField& gravity,
                                 const EnvironmentModel& env,
                                 const Gains& gains, double dt,
                                 const Vec13& theta_hat0, const Vec13& rho_o2)
    : kin_(kin),
      bodies_(bodies),
      gravity_(gravity),
      env_(env),
      gains_(gains),
      dt_(dt),
      theta_hat_(theta_hat0),
      rho_o2_(rho_o2) {
  if (dt <= 0.0) {
    throw std::invalid_argument("SlaveController: dt must be positive");
  }
  env_.validate();
  for (int i = 0; i < 13; ++i) {
    if (!(bodies_.object2.lower()[i] <= theta_hat0[i] &&
          theta_hat0[i] <= bodies_.object2.upper()[i])) {
      throw std::invalid_argument("SlaveController: theta_hat0 outside the "
                                  "adaptation bounds");
    }
    if (rho_o2[i] <= 0.0) {
      throw std::invalid_argument("SlaveController: rho_o2 must be positive");
    }
  }
}

void SlaveController::filter_force(const Vec2& f_hat_s) {
  // First-order filter on the reconstructed contact force, exact ZOH.
  const Vec2 c_diag(gains_.C(0, 0), gains_.C(1, 1));
  if (!f_tilde_init_) {
    f_tilde_ = f_hat_s;
    f_tilde_init_ = true;
  } else {
    const Vec2 alpha = (-c_diag * dt_).array().exp();
    f_tilde_ = alpha.cwiseProduct(f_tilde_) +
               (Vec2::Ones() - alpha).cwiseProduct(f_hat_s);
  }
  df_tilde_ = c_diag.cwiseProduct(f_hat_s - f_tilde_);
}

SlaveController::Output SlaveController::control(double t, const Vec2& q,
                                                 const Vec2& dq,
                                                 double sigma_f,
                                                 const Vec2& v_sd,
                                                 const Vec2& dv_sd) {
  (void)t;
  const Vec2 v_sr = required_velocity_slave(v_sd, f_tilde_, gains_.A);
  const Vec2 dv_sr = dv_sd - gains_.A * df_tilde_;

  const SlaveRequired req = slave_required_lift(kin_, q, dq, v_sr, dv_sr);

  const Vec2 tip = kin_.tip_position(q);
  const Mat2 J = kin_.jacobian(q);
  const Vec2 tip_vel = J * dq;
  const Vec2 f_sr = required_contact_force(env_, dv_sr, tip_vel, tip);

  // Adaptation first (s_O2 does not depend on theta_hat), then the control
  // wrench with the updated estimate.
  const Object2Control probe =
      object2_control(kin_, gravity_, q, dq, req, theta_hat_,
                      gains_.K_o2, f_sr, sigma_f);
  theta_hat_ = adaptation_step_o2(theta_hat_, probe.s_o2, rho_o2_,
                                  bodies_.object2.lower(),
                                  bodies_.object2.upper(), dt_);
  const Object2Control o2 =
      object2_control(kin_, gravity_, q, dq, req, theta_hat_,
                      gains_.K_o2, f_sr, sigma_f);

  // Link-1 subsystem (the idealized remaining system): exact model-based
  // wrench plus velocity feedback, then the cut force from Object 2.
  const auto& prm = kin_.params();
  const Vec6 z = z_twist();
  const Vec6 V_1 = z * dq[0];
  const Vec6 V_1r = z * req.qdot_r[0];
  const Vec6 dV_1r = z * req.qddot_r[0];
  const Vec3 g_body1 = rot_z(q[0]).transpose() * gravity_.g();
  const Vec6 F1_star_r =
      spatial_mass_matrix(bodies_.link1) * dV_1r +
      spatial_coriolis(bodies_.link1, V_1.tail<3>()) * V_1r +
      gravity_wrench(bodies_.link1, g_body1) +
      gains_.K_link1.asDiagonal() * (V_1r - V_1);
  const Vec3 r_elbow(prm.l1, 0.0, 0.0);
  const Vec6 F_1r = F1_star_r + u_force_apply(q[1], r_elbow, o2.F_to2_r);

  Output out;
  out.tau = Vec2(F_1r[5], o2.F_to2_r[5]);
  out.v_sr = v_sr;
  out.dv_sr = dv_sr;
  out.f_sr = f_sr;
  out.V_to2_r = req.V_to2_r;
  out.V_o2_r = req.V_o2_r;
  out.V_g_r = req.V_g_r;
  out.dV_o2_r = req.dV_o2_r;
  out.F_to2_r = o2.F_to2_r;
  out.F_g_r = o2.F_g_r;

  const Mat12x2 Th = kin_.theta(q);
  const Vec6 V_o2 = Th.block<6, 2>(6, 0) * dq;
  const Vec6 err = req.V_o2_r - V_o2;
  double nu = 0.5 * err.dot(spatial_mass_matrix(bodies_.object2) * err);
  for (int i = 0; i < 13; ++i) {
    const double e = bodies_.object2.theta()[i] - theta_hat_[i];
    nu += 0.5 * e * e / rho_o2_[i];
  }
  out.nu_o2 = nu;
  out.nu_bound = -err.dot(gains_.K_o2.asDiagonal() * err);
  return out;
}

}  // namespace teleop
