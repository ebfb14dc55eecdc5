#pragma once

// The 2-DOF electric master manipulator: closed-chain kinematic mappings,
// coupled master+operator dynamics, exogenous-force adaptation, the control
// law, inverse-dynamics force estimation and the algebraic-loop solver.

#include <array>
#include <vector>

#include "teleop/spatial.hpp"

namespace teleop {

using Mat30x2 = Eigen::Matrix<double, 30, 2>;
using Vec30 = Eigen::Matrix<double, 30, 1>;
using VecX = Eigen::VectorXd;
using MatPsi = Eigen::Matrix<double, 2, Eigen::Dynamic>;

// --- Exogenous-force basis -------------------------------------------------

// One scalar time profile; each component contributes a phi(t) * I_2 block
// to Psi(t), so the parameter vector has two entries (x, y) per component.
struct BasisComponent {
  enum class Kind { constant, sine, cosine, trapezoid };
  Kind kind = Kind::constant;
  double freq_hz = 1.0;  // sine / cosine
  // trapezoid knots: rise over [t0, t1], hold, fall over [t2, t3]; the
  // ramps are quintic smoothsteps so the profile is C2.
  double t0 = 0.0, t1 = 1.0, t2 = 2.0, t3 = 3.0;

  double scalar(double t) const;
};

class ExogenousBasis {
 public:
  explicit ExogenousBasis(std::vector<BasisComponent> components);
  static ExogenousBasis constant();
  // [I, sin(w0 t) I, cos(w0 t) I] blocks.
  static ExogenousBasis harmonic(double freq_hz);

  int dim() const { return static_cast<int>(2 * components_.size()); }
  MatPsi psi(double t) const;
  const std::vector<BasisComponent>& components() const { return components_; }

 private:
  std::vector<BasisComponent> components_;
};

// f_h^* = Psi(t) p
Vec2 exogenous_force(const ExogenousBasis& basis, double t, const VecX& p);

// Projection-type adaptation: p_i += dt * rho_i * kappa * Psi_i(t)^T s, with
// kappa = 0 when the update would push an element past its bound, then a
// clamp to [lower, upper].
VecX adaptation_step(const VecX& p_hat, const Vec2& s,
                     const ExogenousBasis& basis, double t, const VecX& rho,
                     const VecX& lower, const VecX& upper, double dt);

// --- Operator model ----------------------------------------------------------

// Second-order LTI arm model M_h x" + D_h x' + K_h x = f_m - f_h^*, plus the
// basis expansion of the exogenous force. p_true is simulation ground truth.
struct OperatorModel {
  Mat2 M_h = Mat2::Identity();
  Mat2 D_h = Mat2::Identity();
  Mat2 K_h = Mat2::Identity();
  ExogenousBasis basis = ExogenousBasis::constant();
  VecX p_true;
  VecX p_lower;
  VecX p_upper;
  VecX rho;

  void validate() const;
};

// --- Kinematics --------------------------------------------------------------

// Planar parallelogram linkage in the x-y work plane, all joint axes along z.
// q = (q2, q3) are the two motor angles at the base. Link 1 (upper arm,
// frame B11) follows q2; the crank (link 2, B21) follows q3 and drives the
// forearm (link 4, B12) through the rod (link 3, B22), so the forearm
// orientation depends on q3 only. The handle body (link 5, O1) is rigidly
// attached to the forearm past the cut frame Tcc. S_tcp sits at the TCP and
// stays world-aligned (the handle is held horizontal).
class MasterKinematics {
 public:
  struct Params {
    double l_upper = 0.20;   // base -> elbow along link 1 [m]
    double l_tip = 0.27;     // elbow -> TCP along the forearm [m]
    double crank = 0.08;     // base -> crank tip [m]
    double d_cc = 0.13;      // elbow -> Tcc [m]
    double d_o1 = 0.18;      // elbow -> O1 [m]
    double q3_offset = 1.5707963267948966;  // structural forearm offset [rad]
    Vec2 q_min = Vec2(-0.767945, -0.767945);  // +-44 deg workspace box
    Vec2 q_max = Vec2(0.767945, 0.767945);
    double cond_max = 1e6;
  };

  enum class Frame { B11, B12, B21, B22, O1, Tcc, Stcp };
  struct Pose {
    double angle;  // world z-angle
    Vec2 origin;   // world position
  };

  explicit MasterKinematics(const Params& params);

  const Params& params() const { return params_; }

  // Mapping matrix Theta with V_m = Theta(q) qdot, links stacked in the
  // order B11, B12, B21, B22, O1.
  Mat30x2 theta(const Vec2& q) const;
  Mat30x2 theta_dot(const Vec2& q, const Vec2& dq) const;

  Mat2 jacobian(const Vec2& q) const;  // throws when cond exceeds cond_max
  Mat2 jacobian_dot(const Vec2& q, const Vec2& dq) const;

  std::array<double, 5> link_angles(const Vec2& q) const;
  Vec2 tip_position(const Vec2& q) const;
  Pose frame_pose(Frame f, const Vec2& q) const;

  bool inside_workspace(const Vec2& q) const;
  void check_workspace(const Vec2& q) const;
  // Samples the workspace box and verifies the Jacobian stays invertible.
  void validate(int samples_per_axis = 64) const;

 private:
  Params params_;
};

// Inertial parameters of the five master bodies, in Theta stacking order.
struct MasterBodies {
  BodyParams b11;
  BodyParams b12;
  BodyParams b21;
  BodyParams b22;
  BodyParams o1;

  std::array<const BodyParams*, 5> list() const {
    return {&b11, &b12, &b21, &b22, &o1};
  }
};

struct MasterState {
  Vec2 q = Vec2::Zero();
  Vec2 dq = Vec2::Zero();
  Vec2 x_h = Vec2::Zero();        // operator arm position, dx_h/dt = V_m
  Vec2 f_tilde_m = Vec2::Zero();  // filtered force estimate (controller state)
  VecX p_hat;                     // exogenous-parameter estimate
};

// --- Operations ---------------------------------------------------------------

// Workspace-checked mapping matrix.
Mat30x2 mapping_theta(const MasterKinematics& kin, const Vec2& q);
Mat2 jacobian(const MasterKinematics& kin, const Vec2& q);

// V_mr = V_md - A f_tilde_m (local force feedback).
Vec2 required_velocity(const Vec2& v_md, const Vec2& f_tilde_m, const Mat2& A);

struct RequiredLift {
  Vec2 qdot_r;
  Vec30 V_r;
};
RequiredLift master_required_lift(const MasterKinematics& kin, const Vec2& q,
                                  const Vec2& v_mr);

// J^{-T} tau = Phi^T Y_m theta_m + Y_h theta_h + Psi(t) p_hat + K_m (v_mr - v_m)
Vec2 control_torque(const MasterKinematics& kin, const MasterBodies& bodies,
                    const OperatorModel& op, const GravityField& gravity,
                    double t, const Vec2& q, const Vec2& dq, const Vec2& x_h,
                    const Vec2& v_mr, const Vec2& dv_mr, const VecX& p_hat,
                    const Mat2& K_m);

// tau_mm: estimated manipulator dynamics from differentiated joint signals.
Vec2 master_measured_torque(const MasterKinematics& kin,
                            const MasterBodies& bodies,
                            const GravityField& gravity, const Vec2& q,
                            const Vec2& dq_hat, const Vec2& ddq_hat);

// f_hat_m = J^{-T} (tau_m - tau_mm)
Vec2 estimate_force(const MasterKinematics& kin, const MasterBodies& bodies,
                    const GravityField& gravity, const Vec2& q,
                    const Vec2& tau_m, const Vec2& ddq_hat, const Vec2& dq_hat);

// Algebraic loop around actuation and force estimation:
//   dv_mr    = A1 df_tilde + B1
//   f_hat_m  = A2 A df_tilde + B2
//   df_tilde = (C A2 A) df_tilde + B3
struct LoopMatrices {
  Mat2 A1 = Mat2::Zero();
  Vec2 B1 = Vec2::Zero();
  Mat2 A2 = Mat2::Zero();
  Vec2 B2 = Vec2::Zero();
  Vec2 B3 = Vec2::Zero();

  Mat2 contraction(const Mat2& C, const Mat2& A) const { return C * A2 * A; }
};

// Solves df_tilde = (I - C A2 A)^{-1} B3. Throws when the spectral norm of
// C A2 A reaches 1 (misconfigured C, A).
Vec2 solve_loop(const LoopMatrices& lm, const Mat2& C, const Mat2& A);

double loop_spectral_norm(const LoopMatrices& lm, const Mat2& C, const Mat2& A);

// --- Plant ---------------------------------------------------------------------

// One RK4 step of the coupled master+operator ODE under zero-order-hold
// torque. f_ext is an optional extra tip force toward the environment side
// (zero in normal scenarios); the operator force f_h^* = Psi(t) p_true is
// evaluated continuously inside the stages.
MasterState master_plant_step(const MasterKinematics& kin,
                              const MasterBodies& bodies,
                              const OperatorModel& op,
                              const GravityField& gravity,
                              const MasterState& state, const Vec2& tau_m,
                              const Vec2& f_ext, double t, double dt);

struct MasterPlantEval {
  Vec2 ddq;
  Vec2 v_m;
  Vec2 dv_m;  // tip acceleration
  Vec2 f_m;   // net force toward the operator
};
MasterPlantEval master_plant_eval(const MasterKinematics& kin,
                                  const MasterBodies& bodies,
                                  const OperatorModel& op,
                                  const GravityField& gravity,
                                  const MasterState& state, const Vec2& tau_m,
                                  const Vec2& f_ext, double t);

// Exact gravity-holding torque at rest (useful for equilibrium setups).
Vec2 master_gravity_torque(const MasterKinematics& kin,
                           const MasterBodies& bodies,
                           const GravityField& gravity, const Vec2& q);

// --- Stability bookkeeping -----------------------------------------------------

struct AccompanyingSample {
  double nu;              // non-negative accompanying function
  double decrease_bound;  // -(v_mr - v_m)^T K_m (v_mr - v_m)
};
AccompanyingSample accompanying_function(const MasterKinematics& kin,
                                         const MasterBodies& bodies,
                                         const OperatorModel& op,
                                         const Vec2& q, const Vec2& dq,
                                         const Vec2& v_mr, const VecX& p_hat,
                                         const Mat2& K_m);

// --- Discrete controller ---------------------------------------------------------

// Runs the complete per-period master pipeline: joint-signal differentiation,
// loop matrices, loop solve, f_tilde integration, adaptation, control torque
// and force estimate. Order per control period: build LoopMatrices ->
// solve_loop -> integrate f_tilde_m -> form dv_mr -> adaptation -> torque.
class MasterController {
 public:
  struct Gains {
    Mat2 K_m = Mat2::Identity();
    Mat2 A = Mat2::Identity();  // force-feedback gain (channel A)
    Mat2 C = Mat2::Identity();  // filter matrix (channel C)
  };

  // Channel feed for one period. The desired velocity decomposes as
  // v_md = v_md_base + f_m_coupling * f_tilde_m, and likewise for the
  // derivative. The f_m_coupling * df_tilde_m term is part of the algebraic
  // loop: the controller folds it into A1 = f_m_coupling - A, so B1 is the
  // df_tilde-independent part of dv_md and the loop solve stays exact.
  struct ChannelFeed {
    Vec2 v_md_base = Vec2::Zero();
    Vec2 dv_md_base = Vec2::Zero();
    Mat2 f_m_coupling = Mat2::Zero();
  };

  struct Output {
    Vec2 tau_m;
    Vec2 f_hat_m;
    Vec2 f_tilde_m;
    Vec2 df_tilde_m;
    Vec2 v_md;
    Vec2 v_mr;
    Vec2 dv_mr;
    Vec2 s;  // v_mr - v_m
    double sigma_loop;
    double nu_m;
    double nu_bound;
  };

  MasterController(const MasterKinematics& kin, const MasterBodies& bodies,
                   const OperatorModel& op, const GravityField& gravity,
                   const Gains& gains, double dt, const VecX& p_hat0);

  Output step(double t, const Vec2& q, const Vec2& dq, const Vec2& x_h,
              const ChannelFeed& feed);

  const VecX& p_hat() const { return p_hat_; }
  const Vec2& f_tilde() const { return f_tilde_; }

 private:
  MasterKinematics kin_;
  MasterBodies bodies_;
  OperatorModel op_;
  GravityField gravity_;
  Gains gains_;
  double dt_;

  VecX p_hat_;
  Vec2 f_tilde_ = Vec2::Zero();

  // backward-difference + first-order low-pass joint signal estimator
  bool started_ = false;
  Vec2 q_prev_ = Vec2::Zero();
  Vec2 dq_hat_ = Vec2::Zero();
  Vec2 ddq_hat_ = Vec2::Zero();
};

}  // namespace teleop
