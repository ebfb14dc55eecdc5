#include "teleop/master.hpp"

#include <cmath>

#include "planar_chain.hpp"

namespace teleop {

using planar::rot_z;
using planar::u_transpose_apply;
using planar::u_transpose_apply_dot;
using planar::unit_dir;
using planar::z_twist;

namespace {

double smoothstep5(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

void check_spd(const Mat2& m, const char* name) {
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
  const double smax = svd.singularValues()(0);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

}  // namespace

// --- Basis -------------------------------------------------------------------

double BasisComponent::scalar(double t) const {
  switch (kind) {
    case Kind::constant:
      return 1.0;
    case Kind::sine:
      return std::sin(2.0 * M_PI * freq_hz * t);
    case Kind::cosine:
      return std::cos(2.0 * M_PI * freq_hz * t);
    case Kind::trapezoid: {
      if (t <= t0 || t >= t3) return 0.0;
      if (t < t1) return smoothstep5((t - t0) / (t1 - t0));
      if (t <= t2) return 1.0;
      return smoothstep5((t3 - t) / (t3 - t2));
    }
  }
  return 0.0;
}

ExogenousBasis::ExogenousBasis(std::vector<BasisComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) {
    throw std::invalid_argument("ExogenousBasis: needs at least one component");
  }
  for (const auto& c : components_) {
    if (c.kind == BasisComponent::Kind::trapezoid &&
        !(c.t0 < c.t1 && c.t1 <= c.t2 && c.t2 < c.t3)) {
      throw std::invalid_argument("ExogenousBasis: trapezoid knots must be "
                                  "ordered t0 < t1 <= t2 < t3");
    }
  }
}

ExogenousBasis ExogenousBasis::constant() {
  return ExogenousBasis({BasisComponent{}});
}

ExogenousBasis ExogenousBasis::harmonic(double freq_hz) {
  BasisComponent c0{};
  BasisComponent s{};
  s.kind = BasisComponent::Kind::sine;
  s.freq_hz = freq_hz;
  BasisComponent c{};
  c.kind = BasisComponent::Kind::cosine;
  c.freq_hz = freq_hz;
  return ExogenousBasis({c0, s, c});
}

MatPsi ExogenousBasis::psi(double t) const {
  MatPsi m(2, dim());
  for (size_t k = 0; k < components_.size(); ++k) {
    const double phi = components_[k].scalar(t);
    m.block<2, 2>(0, static_cast<int>(2 * k)) = phi * Mat2::Identity();
  }
  return m;
}

Vec2 exogenous_force(const ExogenousBasis& basis, double t, const VecX& p) {
  if (p.size() != basis.dim()) {
    throw std::invalid_argument("exogenous_force: parameter size mismatch");
  }
  return basis.psi(t) * p;
}

VecX adaptation_step(const VecX& p_hat, const Vec2& s,
                     const ExogenousBasis& basis, double t, const VecX& rho,
                     const VecX& lower, const VecX& upper, double dt) {
  const int n = basis.dim();
  if (p_hat.size() != n || rho.size() != n || lower.size() != n ||
      upper.size() != n) {
    throw std::invalid_argument("adaptation_step: size mismatch");
  }
  for (int i = 0; i < n; ++i) {
    if (lower[i] > upper[i]) {
      throw std::invalid_argument("adaptation_step: bounds out of order");
    }
  }
  const MatPsi psi = basis.psi(t);
  VecX out = p_hat;
  for (int i = 0; i < n; ++i) {
    const double u = psi.col(i).dot(s);
    double kappa = 1.0;
    if (p_hat[i] <= lower[i] && u <= 0.0) kappa = 0.0;
    if (p_hat[i] >= upper[i] && u >= 0.0) kappa = 0.0;
    out[i] += dt * rho[i] * kappa * u;
    out[i] = std::clamp(out[i], lower[i], upper[i]);
  }
  return out;
}

void OperatorModel::validate() const {
  check_spd(M_h, "M_h");
  check_spd(D_h, "D_h");
  check_spd(K_h, "K_h");
  const int n = basis.dim();
  if (p_true.size() != n || p_lower.size() != n || p_upper.size() != n ||
      rho.size() != n) {
    throw std::invalid_argument("OperatorModel: parameter sizes must match "
                                "the basis dimension");
  }
  for (int i = 0; i < n; ++i) {
    if (!(p_lower[i] <= p_true[i] && p_true[i] <= p_upper[i])) {
      throw std::invalid_argument("OperatorModel: p_true must lie within "
                                  "[p_lower, p_upper]");
    }
    if (rho[i] <= 0.0) {
      throw std::invalid_argument("OperatorModel: adaptation gains must be "
                                  "positive");
    }
  }
}

// --- Kinematics ----------------------------------------------------------------

MasterKinematics::MasterKinematics(const Params& params) : params_(params) {
  if (params_.l_upper <= 0.0 || params_.l_tip <= 0.0 || params_.crank <= 0.0) {
    throw std::invalid_argument("MasterKinematics: link lengths must be "
                                "positive");
  }
  if (!(params_.q_min.x() < params_.q_max.x() &&
        params_.q_min.y() < params_.q_max.y())) {
    throw std::invalid_argument("MasterKinematics: empty workspace box");
  }
}

Mat30x2 MasterKinematics::theta(const Vec2& q) const {
  const double a3 = q[1] + params_.q3_offset;
  const double alpha = a3 - q[0];         // B11 -> B12 relative angle
  const Vec3 r_elbow(params_.l_upper, 0.0, 0.0);
  const Vec3 r_crank(params_.crank, 0.0, 0.0);
  const Vec3 r_o1(params_.d_o1, 0.0, 0.0);
  const Vec6 z = z_twist();

  Mat30x2 Th = Mat30x2::Zero();
  // B11: driven by q2 about the base axis.
  Th.block<6, 1>(0, 0) = z;
  // B12: carried by the link-1 tip, oriented by q3.
  Th.block<6, 1>(6, 0) = u_transpose_apply(alpha, r_elbow, z) - z;
  Th.block<6, 1>(6, 1) = z;
  // B21: driven by q3 about the base axis.
  Th.block<6, 1>(12, 1) = z;
  // B22: carried by the crank tip, oriented by q2.
  Th.block<6, 1>(18, 0) = z;
  Th.block<6, 1>(18, 1) = u_transpose_apply(-alpha, r_crank, z) - z;
  // O1: rigid extension of B12 (virtual cut at Tcc).
  Th.block<6, 1>(24, 0) = u_transpose_apply(0.0, r_o1, Vec6(Th.block<6, 1>(6, 0)));
  Th.block<6, 1>(24, 1) = u_transpose_apply(0.0, r_o1, z);
  return Th;
}

Mat30x2 MasterKinematics::theta_dot(const Vec2& q, const Vec2& dq) const {
  const double a3 = q[1] + params_.q3_offset;
  const double alpha = a3 - q[0];
  const double dalpha = dq[1] - dq[0];
  const Vec3 r_elbow(params_.l_upper, 0.0, 0.0);
  const Vec3 r_crank(params_.crank, 0.0, 0.0);
  const Vec3 r_o1(params_.d_o1, 0.0, 0.0);
  const Vec6 z = z_twist();
  const Vec6 zero = Vec6::Zero();

  Mat30x2 Td = Mat30x2::Zero();
  Td.block<6, 1>(6, 0) = u_transpose_apply_dot(alpha, dalpha, r_elbow, z, zero);
  Td.block<6, 1>(18, 1) =
      u_transpose_apply_dot(-alpha, -dalpha, r_crank, z, zero);
  Td.block<6, 1>(24, 0) =
      u_transpose_apply(0.0, r_o1, Vec6(Td.block<6, 1>(6, 0)));
  return Td;
}

Mat2 MasterKinematics::jacobian(const Vec2& q) const {
  const double a3 = q[1] + params_.q3_offset;
  const Vec3 r_tip(params_.l_tip - params_.d_o1, 0.0, 0.0);
  const Mat30x2 Th = theta(q);

  Mat2 J;
  for (int j = 0; j < 2; ++j) {
    const Vec6 col =
        u_transpose_apply(-a3, r_tip, Vec6(Th.block<6, 1>(24, j)));
    J.col(j) = col.head<2>();
  }
  if (condition_number(J) > params_.cond_max) {
    throw std::runtime_error("master jacobian singular: condition number "
                             "exceeds bound");
  }
  return J;
}

Mat2 MasterKinematics::jacobian_dot(const Vec2& q, const Vec2& dq) const {
  const double a3 = q[1] + params_.q3_offset;
  const Vec3 r_tip(params_.l_tip - params_.d_o1, 0.0, 0.0);
  const Mat30x2 Th = theta(q);
  const Mat30x2 Td = theta_dot(q, dq);

  Mat2 Jd;
  for (int j = 0; j < 2; ++j) {
    const Vec6 col = u_transpose_apply_dot(-a3, -dq[1], r_tip,
                                           Vec6(Th.block<6, 1>(24, j)),
                                           Vec6(Td.block<6, 1>(24, j)));
    Jd.col(j) = col.head<2>();
  }
  return Jd;
}

std::array<double, 5> MasterKinematics::link_angles(const Vec2& q) const {
  const double a2 = q[0];
  const double a3 = q[1] + params_.q3_offset;
  // order: B11, B12, B21, B22, O1
  return {a2, a3, a3, a2, a3};
}

Vec2 MasterKinematics::tip_position(const Vec2& q) const {
  const double a3 = q[1] + params_.q3_offset;
  return params_.l_upper * unit_dir(q[0]) + params_.l_tip * unit_dir(a3);
}

MasterKinematics::Pose MasterKinematics::frame_pose(Frame f,
                                                    const Vec2& q) const {
  const double a2 = q[0];
  const double a3 = q[1] + params_.q3_offset;
  const Vec2 elbow = params_.l_upper * unit_dir(a2);
  switch (f) {
    case Frame::B11:
      return {a2, Vec2::Zero()};
    case Frame::B12:
      return {a3, elbow};
    case Frame::B21:
      return {a3, Vec2::Zero()};
    case Frame::B22:
      return {a2, params_.crank * unit_dir(a3)};
    case Frame::O1:
      return {a3, elbow + params_.d_o1 * unit_dir(a3)};
    case Frame::Tcc:
      return {a3, elbow + params_.d_cc * unit_dir(a3)};
    case Frame::Stcp:
      return {0.0, elbow + params_.l_tip * unit_dir(a3)};
  }
  throw std::logic_error("unknown frame");
}

bool MasterKinematics::inside_workspace(const Vec2& q) const {
  return q[0] >= params_.q_min[0] && q[0] <= params_.q_max[0] &&
         q[1] >= params_.q_min[1] && q[1] <= params_.q_max[1];
}

void MasterKinematics::check_workspace(const Vec2& q) const {
  if (!inside_workspace(q)) {
    throw std::out_of_range("master joint angles outside the workspace box");
  }
}

void MasterKinematics::validate(int samples_per_axis) const {
  for (int i = 0; i < samples_per_axis; ++i) {
    for (int j = 0; j < samples_per_axis; ++j) {
      const double u = static_cast<double>(i) / (samples_per_axis - 1);
      const double v = static_cast<double>(j) / (samples_per_axis - 1);
      Vec2 q(params_.q_min[0] + u * (params_.q_max[0] - params_.q_min[0]),
             params_.q_min[1] + v * (params_.q_max[1] - params_.q_min[1]));
      jacobian(q);  // throws on conditioning failure
    }
  }
}

// --- Shared dynamics evaluation ----------------------------------------------

namespace {

struct MasterDyn {
  Mat30x2 Theta;
  Mat30x2 Theta_dot;
  Mat2 J;
  Mat2 J_dot;
  Mat2 J_inv;
  std::array<double, 5> angles;
  Vec30 V;  // measured stacked link velocities
};

MasterDyn eval_dyn(const MasterKinematics& kin, const Vec2& q, const Vec2& dq) {
  MasterDyn d;
  d.Theta = kin.theta(q);
  d.Theta_dot = kin.theta_dot(q, dq);
  d.J = kin.jacobian(q);
  d.J_dot = kin.jacobian_dot(q, dq);
  d.J_inv = d.J.inverse();
  d.angles = kin.link_angles(q);
  d.V = d.Theta * dq;
  return d;
}

// Joint-space inertia Theta^T M* Theta.
Mat2 joint_inertia(const MasterDyn& d, const MasterBodies& bodies) {
  Mat2 M = Mat2::Zero();
  const auto list = bodies.list();
  for (int k = 0; k < 5; ++k) {
    const Eigen::Matrix<double, 6, 2> blk = d.Theta.block<6, 2>(6 * k, 0);
    M += blk.transpose() * spatial_mass_matrix(*list[k]) * blk;
  }
  return M;
}

// Theta^T (M* Theta_dot + C*(w) Theta) qd + Theta^T G*, with C* built from
// the measured link angular velocities.
Vec2 joint_bias(const MasterDyn& d, const MasterBodies& bodies,
                const GravityField& gravity, const Vec2& dq) {
  Vec2 b = Vec2::Zero();
  const auto list = bodies.list();
  for (int k = 0; k < 5; ++k) {
    const Eigen::Matrix<double, 6, 2> blk = d.Theta.block<6, 2>(6 * k, 0);
    const Eigen::Matrix<double, 6, 2> blk_dot =
        d.Theta_dot.block<6, 2>(6 * k, 0);
    const Vec6 Vk = d.V.segment<6>(6 * k);
    const Vec3 g_body = rot_z(d.angles[k]).transpose() * gravity.g();
    const Vec6 wrench = spatial_mass_matrix(*list[k]) * (blk_dot * dq) +
                        spatial_coriolis(*list[k], Vk.tail<3>()) * (blk * dq) +
                        gravity_wrench(*list[k], g_body);
    b += blk.transpose() * wrench;
  }
  return b;
}

}  // namespace

// --- Operations -----------------------------------------------------------------

Mat30x2 mapping_theta(const MasterKinematics& kin, const Vec2& q) {
  kin.check_workspace(q);
  return kin.theta(q);
}

Mat2 jacobian(const MasterKinematics& kin, const Vec2& q) {
  kin.check_workspace(q);
  return kin.jacobian(q);
}

Vec2 required_velocity(const Vec2& v_md, const Vec2& f_tilde_m, const Mat2& A) {
  return v_md - A * f_tilde_m;
}

RequiredLift master_required_lift(const MasterKinematics& kin, const Vec2& q,
                                  const Vec2& v_mr) {
  RequiredLift lift;
  lift.qdot_r = kin.jacobian(q).inverse() * v_mr;
  lift.V_r = kin.theta(q) * lift.qdot_r;
  return lift;
}

Vec2 control_torque(const MasterKinematics& kin, const MasterBodies& bodies,
                    const OperatorModel& op, const GravityField& gravity,
                    double t, const Vec2& q, const Vec2& dq, const Vec2& x_h,
                    const Vec2& v_mr, const Vec2& dv_mr, const VecX& p_hat,
                    const Mat2& K_m) {
  if (!dv_mr.allFinite()) {
    throw std::invalid_argument("control_torque: non-finite dv_mr");
  }
  const MasterDyn d = eval_dyn(kin, q, dq);

  const Vec2 qdot_r = d.J_inv * v_mr;
  const Vec2 qddot_r = d.J_inv * (dv_mr - d.J_dot * qdot_r);
  const Vec30 V_r = d.Theta * qdot_r;
  const Vec30 dV_r = d.Theta_dot * qdot_r + d.Theta * qddot_r;

  // Phi^T Y_m theta_m: required rigid-body dynamics of every link, mapped
  // down through Phi = Theta J^{-1}.
  Vec2 ff = Vec2::Zero();
  const auto list = bodies.list();
  for (int k = 0; k < 5; ++k) {
    const Vec6 Vk = d.V.segment<6>(6 * k);
    const Vec6 Vrk = V_r.segment<6>(6 * k);
    const Vec6 dVrk = dV_r.segment<6>(6 * k);
    const Vec3 g_body = rot_z(d.angles[k]).transpose() * gravity.g();
    const Vec6 wrench = spatial_mass_matrix(*list[k]) * dVrk +
                        spatial_coriolis(*list[k], Vk.tail<3>()) * Vrk +
                        gravity_wrench(*list[k], g_body);
    ff += d.Theta.block<6, 2>(6 * k, 0).transpose() * wrench;
  }
  ff = d.J_inv.transpose() * ff;

  const Vec2 v_m = d.J * dq;
  const Vec2 y_h = op.M_h * dv_mr + op.D_h * v_m + op.K_h * x_h;
  const Vec2 f_hat_exo = exogenous_force(op.basis, t, p_hat);

  const Vec2 force = ff + y_h + f_hat_exo + K_m * (v_mr - v_m);
  return d.J.transpose() * force;
}

Vec2 master_measured_torque(const MasterKinematics& kin,
                            const MasterBodies& bodies,
                            const GravityField& gravity, const Vec2& q,
                            const Vec2& dq_hat, const Vec2& ddq_hat) {
  const MasterDyn d = eval_dyn(kin, q, dq_hat);
  Vec2 tau = Vec2::Zero();
  const auto list = bodies.list();
  for (int k = 0; k < 5; ++k) {
    const Eigen::Matrix<double, 6, 2> blk = d.Theta.block<6, 2>(6 * k, 0);
    const Eigen::Matrix<double, 6, 2> blk_dot =
        d.Theta_dot.block<6, 2>(6 * k, 0);
    const Vec6 Vk = blk * dq_hat;
    const Vec3 g_body = rot_z(d.angles[k]).transpose() * gravity.g();
    const Vec6 wrench =
        spatial_mass_matrix(*list[k]) * (blk * ddq_hat + blk_dot * dq_hat) +
        spatial_coriolis(*list[k], Vk.tail<3>()) * Vk +
        gravity_wrench(*list[k], g_body);
    tau += blk.transpose() * wrench;
  }
  return tau;
}

Vec2 estimate_force(const MasterKinematics& kin, const MasterBodies& bodies,
                    const GravityField& gravity, const Vec2& q,
                    const Vec2& tau_m, const Vec2& ddq_hat,
                    const Vec2& dq_hat) {
  const Vec2 tau_mm =
      master_measured_torque(kin, bodies, gravity, q, dq_hat, ddq_hat);
  const Mat2 J = kin.jacobian(q);
  return J.transpose().inverse() * (tau_m - tau_mm);
}

double loop_spectral_norm(const LoopMatrices& lm, const Mat2& C,
                          const Mat2& A) {
  Eigen::JacobiSVD<Mat2> svd(lm.contraction(C, A));
  return svd.singularValues()(0);
}

Vec2 solve_loop(const LoopMatrices& lm, const Mat2& C, const Mat2& A) {
  const Mat2 M = lm.contraction(C, A);
  Eigen::JacobiSVD<Mat2> svd(M);
  const double sigma = svd.singularValues()(0);
  if (sigma >= 1.0) {
    throw std::runtime_error(
        "algebraic loop contraction violated: sigma_max(C A2 A) = " +
        std::to_string(sigma) + " >= 1; C and A must be restricted");
  }
  const Vec2 df = (Mat2::Identity() - M).inverse() * lm.B3;
  const double residual = (df - (M * df + lm.B3)).norm();
  if (residual > 1e-10 * std::max(1.0, lm.B3.norm())) {
    throw std::logic_error("solve_loop: residual exceeds tolerance");
  }
  return df;
}

// --- Plant -----------------------------------------------------------------------

namespace {

struct MasterRhs {
  Vec2 ddq;
  Vec2 v_m;
};

MasterRhs master_rhs(const MasterKinematics& kin, const MasterBodies& bodies,
                     const OperatorModel& op, const GravityField& gravity,
                     const Vec2& q, const Vec2& dq, const Vec2& x_h,
                     const Vec2& tau, const Vec2& f_ext, double t) {
  const MasterDyn d = eval_dyn(kin, q, dq);
  const Mat2 Mj = joint_inertia(d, bodies);
  const Vec2 bj = joint_bias(d, bodies, gravity, dq);
  const Vec2 v_m = d.J * dq;
  const Vec2 f_star = exogenous_force(op.basis, t, op.p_true);

  const Mat2 M_tot = Mj + d.J.transpose() * op.M_h * d.J;
  const Vec2 rhs = tau - bj -
                   d.J.transpose() * (op.M_h * (d.J_dot * dq) + op.D_h * v_m +
                                      op.K_h * x_h + f_star + f_ext);
  MasterRhs out;
  out.ddq = M_tot.ldlt().solve(rhs);
  out.v_m = v_m;
  return out;
}

}  // namespace

MasterPlantEval master_plant_eval(const MasterKinematics& kin,
                                  const MasterBodies& bodies,
                                  const OperatorModel& op,
                                  const GravityField& gravity,
                                  const MasterState& state, const Vec2& tau_m,
                                  const Vec2& f_ext, double t) {
  const MasterRhs r = master_rhs(kin, bodies, op, gravity, state.q, state.dq,
                                 state.x_h, tau_m, f_ext, t);
  const Mat2 J = kin.jacobian(state.q);
  const Mat2 Jd = kin.jacobian_dot(state.q, state.dq);
  MasterPlantEval out;
  out.ddq = r.ddq;
  out.v_m = r.v_m;
  out.dv_m = Jd * state.dq + J * r.ddq;
  out.f_m = op.M_h * out.dv_m + op.D_h * r.v_m + op.K_h * state.x_h +
            exogenous_force(op.basis, t, op.p_true);
  return out;
}

MasterState master_plant_step(const MasterKinematics& kin,
                              const MasterBodies& bodies,
                              const OperatorModel& op,
                              const GravityField& gravity,
                              const MasterState& state, const Vec2& tau_m,
                              const Vec2& f_ext, double t, double dt) {
  if (dt <= 0.0) {
    throw std::invalid_argument("master_plant_step: dt must be positive");
  }
  if (!state.q.allFinite() || !state.dq.allFinite() || !state.x_h.allFinite()) {
    throw std::invalid_argument("master_plant_step: non-finite state");
  }

  using Y = Eigen::Matrix<double, 6, 1>;
  Y y;
  y << state.q, state.dq, state.x_h;

  auto deriv = [&](const Y& yy, double tt) -> Y {
    const Vec2 q = yy.segment<2>(0);
    const Vec2 dq = yy.segment<2>(2);
    const Vec2 xh = yy.segment<2>(4);
    const MasterRhs r =
        master_rhs(kin, bodies, op, gravity, q, dq, xh, tau_m, f_ext, tt);
    Y dy;
    dy << dq, r.ddq, r.v_m;
    return dy;
  };

  const Y k1 = deriv(y, t);
  const Y k2 = deriv(y + 0.5 * dt * k1, t + 0.5 * dt);
  const Y k3 = deriv(y + 0.5 * dt * k2, t + 0.5 * dt);
  const Y k4 = deriv(y + dt * k3, t + dt);
  const Y y1 = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

  MasterState next = state;
  next.q = y1.segment<2>(0);
  next.dq = y1.segment<2>(2);
  next.x_h = y1.segment<2>(4);
  return next;
}

Vec2 master_gravity_torque(const MasterKinematics& kin,
                           const MasterBodies& bodies,
                           const GravityField& gravity, const Vec2& q) {
  const MasterDyn d = eval_dyn(kin, q, Vec2::Zero());
  Vec2 tau = Vec2::Zero();
  const auto list = bodies.list();
  for (int k = 0; k < 5; ++k) {
    const Vec3 g_body = rot_z(d.angles[k]).transpose() * gravity.g();
    tau += d.Theta.block<6, 2>(6 * k, 0).transpose() *
           gravity_wrench(*list[k], g_body);
  }
  return tau;
}

AccompanyingSample accompanying_function(const MasterKinematics& kin,
                                         const MasterBodies& bodies,
                                         const OperatorModel& op,
                                         const Vec2& q, const Vec2& dq,
                                         const Vec2& v_mr, const VecX& p_hat,
                                         const Mat2& K_m) {
  const MasterDyn d = eval_dyn(kin, q, dq);
  const Mat2 Mj = joint_inertia(d, bodies);
  const Mat2 M_x = d.J_inv.transpose() * Mj * d.J_inv;
  const Vec2 s = v_mr - d.J * dq;

  double nu = 0.5 * s.dot((M_x + op.M_h) * s);
  for (int i = 0; i < op.basis.dim(); ++i) {
    const double e = op.p_true[i] - p_hat[i];
    nu += 0.5 * e * e / op.rho[i];
  }
  AccompanyingSample out;
  out.nu = nu;
  out.decrease_bound = -s.dot(K_m * s);
  return out;
}

// --- Controller -------------------------------------------------------------------

MasterController::MasterController(const MasterKinematics& kin,
                                   const MasterBodies& bodies,
                                   const OperatorModel& op,
                                   const GravityField& gravity,
                                   const Gains& gains, double dt,
                                   const VecX& p_hat0)
    : kin_(kin),
      bodies_(bodies),
      op_(op),
      gravity_(gravity),
      gains_(gains),
      dt_(dt),
      p_hat_(p_hat0) {
  if (dt <= 0.0) {
    throw std::invalid_argument("MasterController: dt must be positive");
  }
  if (p_hat0.size() != op.basis.dim()) {
    throw std::invalid_argument("MasterController: p_hat0 size mismatch");
  }
  op_.validate();
}

MasterController::Output MasterController::step(double t, const Vec2& q,
                                                const Vec2& dq,
                                                const Vec2& x_h,
                                                const ChannelFeed& feed) {
  // Joint-signal estimates: backward differences through the C filter.
  const Vec2 c_diag(gains_.C(0, 0), gains_.C(1, 1));
  const Vec2 alpha = (-c_diag * dt_).array().exp();
  if (!started_) {
    started_ = true;
    q_prev_ = q;
    dq_hat_ = Vec2::Zero();
    ddq_hat_ = Vec2::Zero();
  } else {
    const Vec2 dq_raw = (q - q_prev_) / dt_;
    const Vec2 dq_hat_new =
        alpha.cwiseProduct(dq_hat_) +
        (Vec2::Ones() - alpha).cwiseProduct(dq_raw);
    const Vec2 ddq_raw = (dq_hat_new - dq_hat_) / dt_;
    ddq_hat_ = alpha.cwiseProduct(ddq_hat_) +
               (Vec2::Ones() - alpha).cwiseProduct(ddq_raw);
    dq_hat_ = dq_hat_new;
    q_prev_ = q;
  }

  const MasterDyn d = eval_dyn(kin_, q, dq);
  const Mat2 Mj = joint_inertia(d, bodies_);
  const Mat2 M_xr = d.J_inv.transpose() * Mj * d.J_inv + op_.M_h;
  const Vec2 tau_mm =
      master_measured_torque(kin_, bodies_, gravity_, q, dq_hat_, ddq_hat_);

  // Loop matrices at the current f_tilde. dv_mr = A1 df_tilde + B1 with the
  // channel's own df_tilde coupling folded into A1, so the instantaneous
  // loop is resolved exactly. The force estimate depends on dv_mr through
  // the effective Cartesian inertia: f_hat = M_xr dv_mr + ..., hence
  // A2 A = M_xr A1.
  LoopMatrices lm;
  lm.A1 = feed.f_m_coupling - gains_.A;
  lm.B1 = feed.dv_md_base;
  lm.A2 = M_xr * lm.A1 * gains_.A.inverse();
  const Vec2 v_md_pre = feed.v_md_base + feed.f_m_coupling * f_tilde_;
  const Vec2 v_mr_pre = v_md_pre - gains_.A * f_tilde_;
  const Vec2 tau0 = control_torque(kin_, bodies_, op_, gravity_, t, q, dq, x_h,
                                   v_mr_pre, lm.B1, p_hat_, gains_.K_m);
  lm.B2 = d.J_inv.transpose() * (tau0 - tau_mm);
  lm.B3 = gains_.C * (lm.B2 - f_tilde_);

  const double sigma = loop_spectral_norm(lm, gains_.C, gains_.A);
  const Vec2 df = solve_loop(lm, gains_.C, gains_.A);

  // Integrate the filtered estimate, then form the required quantities.
  f_tilde_ += dt_ * df;
  const Vec2 v_md = feed.v_md_base + feed.f_m_coupling * f_tilde_;
  const Vec2 v_mr = v_md - gains_.A * f_tilde_;
  const Vec2 dv_mr = lm.B1 + lm.A1 * df;

  const Vec2 v_m = d.J * dq;
  const Vec2 s = v_mr - v_m;
  p_hat_ = adaptation_step(p_hat_, s, op_.basis, t, op_.rho, op_.p_lower,
                           op_.p_upper, dt_);

  const Vec2 tau = control_torque(kin_, bodies_, op_, gravity_, t, q, dq, x_h,
                                  v_mr, dv_mr, p_hat_, gains_.K_m);
  const Vec2 f_hat = d.J_inv.transpose() * (tau - tau_mm);

  const AccompanyingSample acc = accompanying_function(
      kin_, bodies_, op_, q, dq, v_mr, p_hat_, gains_.K_m);

  Output out;
  out.tau_m = tau;
  out.f_hat_m = f_hat;
  out.f_tilde_m = f_tilde_;
  out.df_tilde_m = df;
  out.v_md = v_md;
  out.v_mr = v_mr;
  out.dv_mr = dv_mr;
  out.s = s;
  out.sigma_loop = sigma;
  out.nu_m = acc.nu;
  out.nu_bound = acc.decrease_bound;
  return out;
}

}  // namespace teleop
