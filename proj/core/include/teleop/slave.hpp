#pragma once

// The 2-DOF slave manipulator: Object-2 VDC control against a flexible
// environment, contact switching with hysteresis, 13-parameter adaptation,
// and an ideal-torque rigid plant standing in for the hydraulic subsystem.

#include <array>

#include "teleop/spatial.hpp"

namespace teleop {

using Mat12x2 = Eigen::Matrix<double, 12, 2>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat6x2 = Eigen::Matrix<double, 6, 2>;

// --- Environment ------------------------------------------------------------

// Flat wall { p : n^T p = offset }, free space on the side n points to.
struct WallDescription {
  Vec2 normal = Vec2(0.0, 1.0);  // unit, pointing into free space
  double offset = 0.0;           // n^T p on the undeformed surface
  double hysteresis = 5e-4;      // release band [m]

  double separation(const Vec2& p) const { return normal.dot(p) - offset; }
};

// Second-order LTI environment felt along the wall normal. Deformations are
// measured from the undeformed surface and projected onto the normal, so the
// tangential direction stays force-free for diagonal parameter matrices.
struct EnvironmentModel {
  Mat2 M_e = 10.0 * Mat2::Identity();
  Mat2 D_e = 1e3 * Mat2::Identity();
  Mat2 K_e = 1e5 * Mat2::Identity();
  WallDescription wall;

  void validate() const;
  Mat2 normal_projector() const {
    return wall.normal * wall.normal.transpose();
  }
};

struct ContactSwitch {
  double sigma_f = 0.0;  // 0 approach, 1 constrained
};

// sigma_f flips 0->1 on penetration, 1->0 once separation exceeds the band.
ContactSwitch contact_switch_update(const ContactSwitch& cs, const Vec2& tip,
                                    const WallDescription& wall);

// f_s = M_e x_s" + D_e x_s' + K_e x_s gated by sigma_f, with the tip state
// projected onto the wall normal. Inputs are raw tip position, velocity and
// acceleration in the base frame.
Vec2 environment_force(const EnvironmentModel& env, const Vec2& tip_pos,
                       const Vec2& tip_vel, const Vec2& tip_acc,
                       double sigma_f);

// --- Kinematics ----------------------------------------------------------------

// Serial 2-link planar arm in the same x-y work plane as the master.
// q = (q1, q2) with q2 the relative elbow angle. Frames: L1 on link 1 at the
// base joint; T_O2 at the elbow fixed to link 2 (the driven cut of Object 2);
// O2 on link 2 at d_o2 from the elbow; G at the tip with O2's orientation;
// C at the tip aligned with the base.
class SlaveKinematics {
 public:
  struct Params {
    double l1 = 1.6;
    double l2 = 1.6;
    double d_o2 = 0.8;
    Vec2 q_min = Vec2(-0.52359878, -2.0943951);  // [-30 deg, -120 deg]
    Vec2 q_max = Vec2(1.0471976, -0.52359878);   // [ 60 deg, -30 deg]
    double cond_max = 1e6;
  };

  enum class Frame { L1, TO2, O2, G, C };
  struct Pose {
    double angle;
    Vec2 origin;
  };

  explicit SlaveKinematics(const Params& params);
  const Params& params() const { return params_; }

  // Body mapping: [L1 block; O2 block] with V = Theta(q) qdot.
  Mat12x2 theta(const Vec2& q) const;
  Mat12x2 theta_dot(const Vec2& q, const Vec2& dq) const;

  Mat2 jacobian(const Vec2& q) const;  // task Jacobian J_x
  Mat2 jacobian_dot(const Vec2& q, const Vec2& dq) const;

  Vec2 tip_position(const Vec2& q) const;
  Pose frame_pose(Frame f, const Vec2& q) const;
  std::array<double, 2> link_angles(const Vec2& q) const;  // L1, O2 world

  bool inside_workspace(const Vec2& q) const;
  void check_workspace(const Vec2& q) const;
  void validate(int samples_per_axis = 64) const;

 private:
  Params params_;
};

// Link-1 body plus Object 2 (last link with payload), in Theta order.
struct SlaveBodies {
  BodyParams link1;
  BodyParams object2;
};

struct SlaveState {
  Vec2 q = Vec2::Zero();
  Vec2 dq = Vec2::Zero();
  Vec2 f_tilde_s = Vec2::Zero();  // filtered contact-force estimate
  Vec13 theta_hat_o2 = Vec13::Zero();
};

// --- Required-motion pipeline ----------------------------------------------------

Vec2 required_velocity_slave(const Vec2& v_sd, const Vec2& f_tilde_s,
                             const Mat2& A);

// Lifts V_sr through the chain: required joint rates and the required
// spatial velocities at T_O2, O2, G and C.
struct SlaveRequired {
  Vec2 qdot_r = Vec2::Zero();
  Vec2 qddot_r = Vec2::Zero();
  Vec6 V_to2_r = Vec6::Zero();
  Vec6 V_o2_r = Vec6::Zero();
  Vec6 V_g_r = Vec6::Zero();
  Vec6 V_c_r = Vec6::Zero();
  Vec6 dV_o2_r = Vec6::Zero();
};
SlaveRequired slave_required_lift(const SlaveKinematics& kin, const Vec2& q,
                                  const Vec2& dq, const Vec2& v_sr,
                                  const Vec2& dv_sr);

// f_sr = M_e dv_sr + D_e x_s' + K_e x_s (all projected onto the wall normal).
Vec2 required_contact_force(const EnvironmentModel& env, const Vec2& dv_sr,
                            const Vec2& tip_vel, const Vec2& tip_pos);

// Object-2 control: returns the required wrench at the driven cut T_O2 that
// balances the model-based feedforward, velocity feedback and the gated
// required contact force.
struct Object2Control {
  Vec6 F_star_r = Vec6::Zero();  // required net wrench at O2
  Vec6 F_to2_r = Vec6::Zero();   // required wrench at the driven cut
  Vec6 F_g_r = Vec6::Zero();     // required environment wrench at G
  Vec13 s_o2 = Vec13::Zero();    // regressor-weighted velocity error
};
Object2Control object2_control(const SlaveKinematics& kin,
                               const GravityField& gravity, const Vec2& q,
                               const Vec2& dq, const SlaveRequired& req,
                               const Vec13& theta_hat, const Vec6& K_o2_diag,
                               const Vec2& f_sr, double sigma_f);

// Elementwise projection update of theta_hat_O2.
Vec13 adaptation_step_o2(const Vec13& theta_hat, const Vec13& s_o2,
                         const Vec13& rho, const Vec13& lower,
                         const Vec13& upper, double dt);

// Virtual power flow p_A = (V_r - V)^T (F_r - F); all four in one frame.
double virtual_power_flow(const SpatialVector& V_r, const SpatialVector& V,
                          const SpatialVector& F_r, const SpatialVector& F);
double virtual_power_flow_raw(const Vec6& V_r, const Vec6& V, const Vec6& F_r,
                              const Vec6& F);

// --- Plant ------------------------------------------------------------------------

// One RK4 step of the rigid 2-link plant with ideal joint torques and the
// environment reaction applied equal-and-opposite at the tip. sigma_f is
// held constant across the step.
SlaveState slave_plant_step(const SlaveKinematics& kin,
                            const SlaveBodies& bodies,
                            const GravityField& gravity,
                            const EnvironmentModel& env,
                            const SlaveState& state, const Vec2& tau,
                            double sigma_f, double dt);

struct SlavePlantEval {
  Vec2 ddq;
  Vec2 tip_vel;
  Vec2 tip_acc;
  Vec2 f_s;       // force exerted on the environment
  Vec6 V_o2;      // measured Object-2 spatial velocity
  Vec6 dV_o2;     // its rate
  Vec6 V_to2;     // measured velocity at the driven cut
  Vec6 V_g;       // measured velocity at G
  Vec6 F_star;    // actual net wrench at O2
  Vec6 F_to2;     // actual wrench at the driven cut
  Vec6 F_g;       // actual environment wrench at G
};
SlavePlantEval slave_plant_eval(const SlaveKinematics& kin,
                                const SlaveBodies& bodies,
                                const GravityField& gravity,
                                const EnvironmentModel& env,
                                const SlaveState& state, const Vec2& tau,
                                double sigma_f);

Vec2 slave_gravity_torque(const SlaveKinematics& kin, const SlaveBodies& bodies,
                          const GravityField& gravity, const Vec2& q);

// --- Controller --------------------------------------------------------------------

// Per-period slave pipeline: contact-force filtering, required velocities,
// Object-2 control, adaptation, and the link-1 subsystem that realizes the
// required cut wrench with ideal joint torques.
class SlaveController {
 public:
  struct Gains {
    Mat2 A = Mat2::Identity();
    Mat2 C = Mat2::Identity();
    Vec6 K_o2 = Vec6::Ones();    // diagonal velocity-feedback at O2
    Vec6 K_link1 = Vec6::Ones(); // diagonal velocity-feedback at link 1
  };

  struct Output {
    Vec2 tau;
    Vec2 v_sr;
    Vec2 dv_sr;
    Vec2 f_sr;
    Vec6 V_to2_r;
    Vec6 V_o2_r;
    Vec6 V_g_r;
    Vec6 dV_o2_r;
    Vec6 F_to2_r;
    Vec6 F_g_r;
    double nu_o2;
    double nu_bound;  // -(V_o2r - V_o2)^T K_O2 (V_o2r - V_o2)
  };

  SlaveController(const SlaveKinematics& kin, const SlaveBodies& bodies,
                  const GravityField& gravity, const EnvironmentModel& env,
                  const Gains& gains, double dt, const Vec13& theta_hat0,
                  const Vec13& rho_o2);

  // Two-phase period: filter the reconstructed contact force first (its
  // value gets published toward the master before the control laws run),
  // then evaluate the control with the channel's desired velocity.
  void filter_force(const Vec2& f_hat_s);
  Output control(double t, const Vec2& q, const Vec2& dq, double sigma_f,
                 const Vec2& v_sd, const Vec2& dv_sd);

  const Vec13& theta_hat() const { return theta_hat_; }
  const Vec2& f_tilde() const { return f_tilde_; }
  const Vec2& df_tilde() const { return df_tilde_; }

 private:
  SlaveKinematics kin_;
  SlaveBodies bodies_;
  GravityField gravity_;
  EnvironmentModel env_;
  Gains gains_;
  double dt_;

  Vec13 theta_hat_;
  Vec13 rho_o2_;
  Vec2 f_tilde_ = Vec2::Zero();
  Vec2 df_tilde_ = Vec2::Zero();
  bool f_tilde_init_ = false;
};

}  // namespace teleop
